"""Trainable scene encoder with a scikit-learn style surface, plus checkpoints."""
from __future__ import annotations

import hashlib
import logging
from pathlib import Path as FsPath

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from ..container import ContainerError, pack, unpack
from .features import SceneBatch, collate
from .losses import LossConfig, total_loss
from .model import EncoderModel

logger = logging.getLogger(__name__)

MAGIC = b"ENC\x00"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class SceneEncoder(TransformerMixin, BaseEstimator):
    """``fit(scenarios)`` trains on their labels; ``transform`` returns unit-norm embeddings
    of shape (n, d_z); ``predict`` returns class ids from the classifier head."""

    def __init__(self, d_z=64, hidden=64, m_p=0.2, m_n=0.8, lam=0.5, lr=1e-2, momentum=0.9, batch_size=8,
                 epochs=200, seed=0):
        self.d_z = d_z
        self.hidden = hidden
        self.m_p = m_p
        self.m_n = m_n
        self.lam = lam
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(self.m_p, self.m_n, self.lam)

    def _build(self):
        torch.manual_seed(self.seed)
        self.model_ = EncoderModel(hidden=self.hidden, d_z=self.d_z).double()

    def _init_prototypes(self, batch: SceneBatch, classes):
        with torch.no_grad():
            z, _ = self.embed_batch(batch)
        protos = torch.stack([z[batch.labels == c].mean(dim=0) for c in classes])
        self.prototypes_ = torch.nn.Parameter(protos)

    def fit(self, X, y=None, callback=None):
        scenarios = list(X)
        batch = collate(scenarios)
        if y is not None:
            batch.labels = torch.as_tensor(np.asarray(y), dtype=torch.long)
        labels = batch.labels.numpy()
        classes, counts = np.unique(labels, return_counts=True)
        if (labels < 0).any():
            raise ValueError("every training scenario needs a label")
        if len(classes) < 2:
            raise ValueError("training needs at least two classes")
        if counts.min() < 2:
            raise ValueError("training needs at least two samples per class")
        self.classes_ = classes
        self._build()
        self._init_prototypes(batch, classes)
        params = list(self.model_.parameters()) + [self.prototypes_]
        opt = torch.optim.SGD(params, lr=self.lr, momentum=self.momentum)
        gen = torch.Generator().manual_seed(self.seed)
        cfg = self.loss_config
        self.history_ = []
        n = len(scenarios)
        for epoch in range(self.epochs):
            order = torch.randperm(n, generator=gen)
            total, seen = 0.0, 0
            for step, start in enumerate(range(0, n, self.batch_size)):
                sub = batch.index(order[start:start + self.batch_size])
                opt.zero_grad()
                z, logits = self.model_(sub)
                loss = total_loss(z, logits, self.prototypes_, sub.labels, cfg, classes=classes)
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(sub)
                seen += len(sub)
            self.history_.append(total / seen)
            if callback is not None:
                callback(epoch, self.history_[-1])
        return self

    def embed_batch(self, batch: SceneBatch):
        return self.model_(batch)

    def transform(self, X, chunk: int = 64) -> np.ndarray:
        scenarios = list(X)
        out = []
        with torch.no_grad():
            for i in range(0, len(scenarios), chunk):
                z, _ = self.model_(collate(scenarios[i:i + chunk]))
                out.append(z.numpy())
        return np.concatenate(out) if out else np.zeros((0, self.d_z))

    def predict(self, X) -> np.ndarray:
        with torch.no_grad():
            _, logits = self.model_(collate(list(X)))
        return logits.argmax(dim=-1).numpy()

    def prototype_matrix(self) -> np.ndarray:
        p = self.prototypes_.detach().numpy()
        return p / np.linalg.norm(p, axis=1, keepdims=True)

    # -- checkpoints
    def to_bytes(self) -> bytes:
        arrays = {f"model.{k}": v.detach().numpy() for k, v in self.model_.state_dict().items()}
        arrays["prototypes"] = self.prototypes_.detach().numpy()
        arrays["classes"] = np.asarray(self.classes_, dtype=np.int64)
        meta = {"params": self.get_params(), "history": list(self.history_)}
        return pack(MAGIC, FORMAT_VERSION, meta, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SceneEncoder":
        meta, arrays = unpack(data, MAGIC, FORMAT_VERSION)
        enc = cls(**meta["params"])
        enc._build()
        state = {k[len("model."):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("model.")}
        try:
            enc.model_.load_state_dict(state)
        except RuntimeError as exc:
            raise ContainerError(f"checkpoint tensors do not match the model: {exc}") from None
        enc.prototypes_ = torch.nn.Parameter(torch.from_numpy(arrays["prototypes"]))
        enc.classes_ = arrays["classes"]
        enc.history_ = meta["history"]
        return enc

    def save(self, path) -> None:
        FsPath(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SceneEncoder":
        return cls.from_bytes(FsPath(path).read_bytes())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def train_encoder(scenarios, cfg: LossConfig = LossConfig(), seed: int = 0, epochs: int = 200, lr: float = 1e-2,
                  batch_size: int = 8, momentum: float = 0.9) -> SceneEncoder:
    return SceneEncoder(m_p=cfg.m_p, m_n=cfg.m_n, lam=cfg.lam, lr=lr, momentum=momentum, batch_size=batch_size,
                        epochs=epochs, seed=seed).fit(scenarios)


class RandomProjectionEncoder(TransformerMixin, BaseEstimator):
    """Ablation stand-in: fixed Gaussian projection of the flattened raw scene tensors."""

    def __init__(self, d_z=64, seed=0):
        self.d_z = d_z
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    @staticmethod
    def _flatten(batch: SceneBatch) -> np.ndarray:
        parts = [batch.agents, batch.roads, batch.crosswalks, batch.route, batch.ego]
        return torch.cat([p.reshape(len(batch), -1) for p in parts], dim=1).numpy()

    def transform(self, X) -> np.ndarray:
        flat = self._flatten(collate(list(X)))
        rng = np.random.default_rng(self.seed)
        W = rng.standard_normal((flat.shape[1], self.d_z))
        z = flat @ W
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        return z / np.where(norm > 0, norm, 1.0)
