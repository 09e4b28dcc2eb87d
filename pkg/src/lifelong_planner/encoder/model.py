"""Scene encoder network: agent LSTM, map point-MLPs, one attention block, unit-norm projection."""
from __future__ import annotations

import torch
from torch import nn

from ..scenario.types import AGENT_CHANNELS, N_CLASSES
from .features import SceneBatch

NEG_INF = float("-inf")


class NonFiniteActivation(FloatingPointError):
    pass


def _mlp(d_in: int, width: int) -> nn.Sequential:
    # GELU keeps the network smooth, so finite differences agree with autograd
    return nn.Sequential(nn.Linear(d_in, width), nn.GELU(), nn.Linear(width, width))


def masked_max(x: torch.Tensor, mask: torch.Tensor, dim: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Max over ``dim`` of entries where ``mask`` holds; rows with nothing valid give 0 and valid=False."""
    filled = x.masked_fill(~mask.unsqueeze(-1), NEG_INF)
    valid = mask.any(dim=dim)
    out = filled.max(dim=dim).values
    return out.masked_fill(~valid.unsqueeze(-1), 0.0), valid


class EncoderModel(nn.Module):
    def __init__(self, hidden: int = 64, d_z: int = 64, heads: int = 4, ff: int = 128, n_classes: int = N_CLASSES,
                 check_finite: bool = True):
        super().__init__()
        self.hidden = hidden
        self.check_finite = check_finite
        self.agent_cell = nn.LSTMCell(AGENT_CHANNELS, hidden)
        self.road_mlp = _mlp(7, hidden)
        self.crosswalk_mlp = _mlp(3, hidden)
        self.route_mlp = _mlp(3, hidden)
        self.ego_embed = nn.Linear(3, hidden)
        self.token_type = nn.Parameter(torch.zeros(3, hidden))  # ego, agent, map
        self.attn = nn.MultiheadAttention(hidden, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(hidden)
        self.ff = nn.Sequential(nn.Linear(hidden, ff), nn.GELU(), nn.Linear(ff, hidden))
        self.norm2 = nn.LayerNorm(hidden)
        self.project = nn.Linear(hidden, d_z)
        self.classifier = nn.Linear(d_z, n_classes)

    def _check(self, name: str, t: torch.Tensor) -> torch.Tensor:
        if self.check_finite and not torch.isfinite(t).all():
            raise NonFiniteActivation(f"non-finite activation in layer '{name}'")
        return t

    def encode_agents(self, agents: torch.Tensor, mask: torch.Tensor):
        B, N, T, C = agents.shape
        x = agents.reshape(B * N, T, C)
        m = mask.reshape(B * N, T)
        h = x.new_zeros(B * N, self.hidden)
        c = x.new_zeros(B * N, self.hidden)
        for t in range(T):
            h_new, c_new = self.agent_cell(x[:, t], (h, c))
            keep = m[:, t].unsqueeze(-1)
            # masked steps leave the state untouched
            h = torch.where(keep, h_new, h)
            c = torch.where(keep, c_new, c)
        return self._check("agent_lstm", h.reshape(B, N, self.hidden)), mask.any(dim=-1)

    def _polyline_max(self, name, mlp, pts, mask):
        # only valid waypoints go through the MLP, then a per-polyline max over them
        B, P, W = mask.shape
        line = torch.arange(B * P).reshape(B, P, 1).expand(B, P, W)[mask]
        feat = self._check(name, mlp(pts[mask]))
        out = feat.new_full((B * P, self.hidden), NEG_INF)
        out = out.scatter_reduce(0, line.unsqueeze(-1).expand_as(feat), feat, "amax", include_self=True)
        valid = mask.any(dim=2)
        return out.reshape(B, P, self.hidden).masked_fill(~valid.unsqueeze(-1), 0.0), valid

    def encode_map(self, batch: SceneBatch):
        pooled, valid = [], []
        for name, mlp, pts, mask in (("road_mlp", self.road_mlp, batch.roads, batch.road_mask),
                                     ("crosswalk_mlp", self.crosswalk_mlp, batch.crosswalks, batch.crosswalk_mask),
                                     ("route_mlp", self.route_mlp, batch.route, batch.route_mask)):
            per_line, line_valid = self._polyline_max(name, mlp, pts, mask)
            pooled.append(per_line)
            valid.append(line_valid)
        lines = torch.cat(pooled, dim=1)
        line_valid = torch.cat(valid, dim=1)
        return masked_max(lines, line_valid, dim=1)          # (B, H), (B,)

    def forward(self, batch: SceneBatch) -> tuple[torch.Tensor, torch.Tensor]:
        agent_tok, agent_valid = self.encode_agents(batch.agents, batch.agent_mask)
        map_tok, map_valid = self.encode_map(batch)
        ego_tok = self._check("ego_embed", self.ego_embed(batch.ego))
        tokens = torch.cat([
            (ego_tok + self.token_type[0]).unsqueeze(1),
            agent_tok + self.token_type[1],
            (map_tok + self.token_type[2]).unsqueeze(1),
        ], dim=1)
        valid = torch.cat([torch.ones_like(map_valid).unsqueeze(1), agent_valid, map_valid.unsqueeze(1)], dim=1)
        attended, _ = self.attn(tokens, tokens, tokens, key_padding_mask=~valid, need_weights=False)
        x = self.norm1(tokens + self._check("attention", attended))
        x = self.norm2(x + self._check("feed_forward", self.ff(x)))
        w = valid.to(x.dtype).unsqueeze(-1)
        pooled = (x * w).sum(dim=1) / w.sum(dim=1)
        z = self._check("projection", self.project(pooled))
        z = z / z.norm(dim=-1, keepdim=True)
        logits = self._check("classifier", self.classifier(z))
        return z, logits
