"""Prototype hinge loss and the combined training objective."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossConfig:
    m_p: float = 0.2
    m_n: float = 0.8
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.m_p < self.m_n <= 2.0:
            raise ValueError(f"need 0 <= m_p < m_n <= 2, got m_p={self.m_p}, m_n={self.m_n}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def cosine_distance(z: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """1 - cos(z, p) along the last axis, broadcasting; in [0, 2]."""
    z = torch.as_tensor(z, dtype=torch.float64) if not torch.is_tensor(z) else z
    p = torch.as_tensor(p, dtype=z.dtype) if not torch.is_tensor(p) else p
    nz, np_ = z.norm(dim=-1), p.norm(dim=-1)
    if (nz == 0).any() or (np_ == 0).any():
        raise ValueError("cosine distance of a zero vector is undefined")
    return 1.0 - (z * p).sum(dim=-1) / (nz * np_)


def prototype_loss(z: torch.Tensor, prototypes: torch.Tensor, labels, cfg: LossConfig = LossConfig(),
                   classes=None) -> torch.Tensor:
    """Sum over prototypes of the pull hinge (own class) and push hinge (other classes).

    ``z``: (B, d) or (d,); ``prototypes``: (K, d); ``labels`` index rows of ``prototypes``
    unless ``classes`` maps class ids to rows. Returns the batch mean.
    """
    single = z.dim() == 1
    z = z.unsqueeze(0) if single else z
    labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    rows = _rows(labels, prototypes.shape[0], classes)
    D = cosine_distance(z.unsqueeze(1), prototypes.unsqueeze(0))           # (B, K)
    y = F.one_hot(rows, prototypes.shape[0]).to(D.dtype)
    per = (y * torch.clamp(D - cfg.m_p, min=0) + (1 - y) * torch.clamp(cfg.m_n - D, min=0)).sum(dim=1)
    return per[0] if single else per.mean()


def classification_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    logits = logits.unsqueeze(0) if logits.dim() == 1 else logits
    return F.cross_entropy(logits, torch.as_tensor(labels, dtype=torch.long).reshape(-1))


def total_loss(z, logits, prototypes, labels, cfg: LossConfig = LossConfig(), classes=None) -> torch.Tensor:
    if logits.shape[-1] < 2:
        raise ValueError("logits need one entry per class")
    return prototype_loss(z, prototypes, labels, cfg, classes) + cfg.lam * classification_loss(logits, labels)


def _rows(labels: torch.Tensor, k: int, classes) -> torch.Tensor:
    if classes is None:
        if (labels < 0).any() or (labels >= k).any():
            raise KeyError(f"label without a prototype: {labels.tolist()}")
        return labels
    lookup = {int(c): i for i, c in enumerate(classes)}
    missing = [int(x) for x in labels if int(x) not in lookup]
    if missing:
        raise KeyError(f"no prototype for class {missing[0]}")
    return torch.tensor([lookup[int(x)] for x in labels], dtype=torch.long)
