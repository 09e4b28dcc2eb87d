"""Intelligent Driver Model and the five-parameter behaviour planner."""
from __future__ import annotations

import itertools
import math
from dataclasses import astuple, dataclass

IDM_DELTA = 4.0
IDM_HEADWAY = 1.5  # s; distinct from the reasoner period


@dataclass(frozen=True, order=True)
class PlannerParams:
    """Behaviour-planner parameters.

    lo   lateral offset magnitude of the candidate set (m)
    s0   minimum gap to the leading agent (m)
    a_m  maximum acceleration (m/s^2)
    b    comfortable / maximum braking deceleration, positive (m/s^2)
    th   time-to-collision braking threshold (s); 0 disables TTC braking
    """

    lo: float = 0.0
    s0: float = 2.0
    a_m: float = 1.5
    b: float = 2.5
    th: float = 1.2

    def __post_init__(self):
        for name in ("lo", "s0", "a_m", "b", "th"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.lo < 0 or self.th < 0:
            raise ValueError(f"lo and th must be >= 0, got lo={self.lo}, th={self.th}")
        if self.s0 <= 0 or self.a_m <= 0 or self.b <= 0:
            raise ValueError(f"s0, a_m and b must be > 0, got {self}")

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "s0": self.s0, "a_m": self.a_m, "b": self.b, "th": self.th}

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerParams":
        return cls(**{k: d[k] for k in ("lo", "s0", "a_m", "b", "th")})


DEFAULT_PARAMS = PlannerParams()


@dataclass(frozen=True)
class IdmContext:
    v: float
    v0: float
    s: float = math.inf
    dv: float = 0.0
    T_h: float = IDM_HEADWAY
    delta: float = IDM_DELTA

    def __post_init__(self):
        if self.v < 0 or self.v0 <= 0 or not self.s > 0:
            raise ValueError(f"invalid IDM context {self}")


def desired_gap(ctx: IdmContext, p: PlannerParams) -> float:
    """s* = s0 + max(0, v*T + v*dv / (2*sqrt(a_m*b)))."""
    if p.a_m * p.b <= 0:
        raise ValueError("a_m * b must be positive")
    dynamic = ctx.v * ctx.T_h + ctx.v * ctx.dv / (2.0 * math.sqrt(p.a_m * p.b))
    return p.s0 + max(0.0, dynamic)


def idm_accel(ctx: IdmContext, p: PlannerParams) -> float:
    free = 1.0 - (ctx.v / ctx.v0) ** ctx.delta
    if math.isinf(ctx.s):
        return p.a_m * free
    return p.a_m * (free - (desired_gap(ctx, p) / ctx.s) ** 2)


class ParamGrid:
    """Ordered, duplicate-free list of candidate planner parameters."""

    def __init__(self, params):
        params = [p if isinstance(p, PlannerParams) else PlannerParams.from_dict(p) for p in params]
        if not params:
            raise ValueError("parameter grid is empty")
        if len(set(params)) != len(params):
            raise ValueError("parameter grid contains duplicates")
        self.params = tuple(params)

    @classmethod
    def product(cls, lo=(0.0, 0.5, 1.0), s0=(1.0, 2.0, 3.0), a_m=(1.0, 1.5, 2.5), b=(1.5, 2.5), th=(0.8, 1.2)):
        return cls(PlannerParams(*v) for v in itertools.product(lo, s0, a_m, b, th))

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def __getitem__(self, i):
        return self.params[i]

    def to_records(self) -> list[dict]:
        return [p.to_dict() for p in self.params]
