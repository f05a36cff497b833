"""
Strictly monotone per-component maps between physical quantities and the
network space (states, parameters, dynamics, time).

Maps accept numpy arrays or float64 torch tensors with the components on the
last axis, so the dynamics inverse can sit inside a differentiable rollout.
μ-dependent scales (e.g. VdP û₂ = u₂/μ) take the raw parameter vector via
`mu`. Every map serializes to a plain dict and back.
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch

from utils.errors import ContractViolation, DomainError


def _xp(x):
    return torch if torch.is_tensor(x) else np


def _const(x, value):
    """value as an array compatible with x (tensor of the same dtype, or ndarray)."""
    if torch.is_tensor(x):
        return torch.as_tensor(np.asarray(value, dtype=float), dtype=x.dtype, device=x.device)
    return np.asarray(value, dtype=float)


def _mu_factor(param_powers: Optional[np.ndarray], mu) -> np.ndarray:
    """prod_j mu_j ** P[k, j] for every component k (1 when no powers are set); batched over leading axes of mu."""
    if param_powers is None:
        return np.ones(1)
    if mu is None:
        raise ContractViolation("This normalizer depends on the parameters: pass mu")
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != param_powers.shape[1]:
        raise ContractViolation(f"Expected {param_powers.shape[1]} parameters, got {mu.shape[-1]}")
    if np.any(mu <= 0):
        raise DomainError("Parameter-dependent scales need positive parameters")
    return np.prod(mu[..., None, :] ** param_powers, axis=-1)


class Normalizer:
    kind = "base"

    def forward(self, x, mu=None):
        raise NotImplementedError

    def inverse(self, y, mu=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class AffineNormalizer(Normalizer):
    """x̂ = (x - shift) / (scale * prod_j mu_j ** P[k, j])."""
    kind = "affine"

    def __init__(self, scale=1.0, shift=0.0, param_powers=None):
        self.scale = np.atleast_1d(np.asarray(scale, dtype=float))
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float))
        self.param_powers = None if param_powers is None else np.atleast_2d(np.asarray(param_powers, dtype=float))
        if np.any(self.scale == 0):
            raise ContractViolation("Affine scale must be non-zero")

    def _scale(self, mu):
        return self.scale * _mu_factor(self.param_powers, mu)

    def forward(self, x, mu=None):
        return (x - _const(x, self.shift)) / _const(x, self._scale(mu))

    def inverse(self, y, mu=None):
        return y * _const(y, self._scale(mu)) + _const(y, self.shift)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scale": self.scale.tolist(),
            "shift": self.shift.tolist(),
            "param_powers": None if self.param_powers is None else self.param_powers.tolist(),
        }


class Log10Normalizer(Normalizer):
    """
    x̂ = log10(max(x, floor) / reference) / scale.

    Without a floor, non-positive input raises DomainError. A negative scale
    gives a strictly decreasing map (ROBER μ̂₁ = -log10 μ₁).
    """
    kind = "log10"

    def __init__(self, scale=1.0, reference=1.0, floor: Optional[float] = None):
        self.scale = np.atleast_1d(np.asarray(scale, dtype=float))
        self.reference = np.atleast_1d(np.asarray(reference, dtype=float))
        self.floor = floor
        if np.any(self.scale == 0) or np.any(self.reference <= 0):
            raise ContractViolation("Log10 scale must be non-zero and reference positive")

    def forward(self, x, mu=None):
        xp = _xp(x)
        if self.floor is not None:
            x = xp.clip(x, self.floor, None) if xp is np else torch.clamp(x, min=self.floor)
        elif bool((x <= 0).any()):
            raise DomainError("log10 normalization of a non-positive value")
        return xp.log10(x / _const(x, self.reference)) / _const(x, self.scale)

    def inverse(self, y, mu=None):
        if torch.is_tensor(y):
            return _const(y, self.reference) * torch.pow(10.0, y * _const(y, self.scale))
        return self.reference * np.power(10.0, y * self.scale)

    def to_dict(self) -> dict:
        return {
            "kind": "log10" if np.all(self.scale == 1.0) else "scaled-log10",
            "scale": self.scale.tolist(),
            "reference": self.reference.tolist(),
            "floor": self.floor,
        }


class PiecewiseSymlogNormalizer(Normalizer):
    """
    Identity inside |x| < a, logarithmic tails outside:
    x̂ = sgn(x) (ln(|x| - a + 1) + a). Continuous with slope 1 at |x| = a.
    """
    kind = "piecewise-symlog"

    def __init__(self, threshold: float = 2.0):
        if threshold <= 0:
            raise ContractViolation("Symlog threshold must be positive")
        self.threshold = float(threshold)

    def forward(self, x, mu=None):
        xp, a = _xp(x), self.threshold
        ax = xp.abs(x)
        inner = ax - a + 1.0
        inner = torch.clamp(inner, min=1.0) if xp is torch else np.maximum(inner, 1.0)
        return xp.where(ax < a, x, xp.sign(x) * (xp.log(inner) + a))

    def inverse(self, y, mu=None):
        xp, a = _xp(y), self.threshold
        ay = xp.abs(y)
        tail = torch.clamp(ay - a, min=0.0) if xp is torch else np.maximum(ay - a, 0.0)
        return xp.where(ay < a, y, xp.sign(y) * (xp.exp(tail) - 1.0 + a))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "threshold": self.threshold}


class ComponentMapNormalizer(Normalizer):
    """
    Applies a separate normalizer to each group of components and concatenates
    the results in group order. Components not covered by any group are
    dropped by `forward` and restored from `fill` by `inverse`.
    numpy input only.
    """
    kind = "component-map"

    def __init__(self, parts: Sequence[Tuple[Sequence[int], Normalizer]], size: int, fill=None):
        self.parts = [(list(map(int, idx)), norm) for idx, norm in parts]
        self.size = int(size)
        covered = [i for idx, _ in self.parts for i in idx]
        if len(set(covered)) != len(covered) or any(i < 0 or i >= self.size for i in covered):
            raise ContractViolation("Component groups must be disjoint and within range")
        self.fill = None if fill is None else np.asarray(fill, dtype=float).reshape(-1)
        if len(covered) < self.size and (self.fill is None or self.fill.size != self.size):
            raise ContractViolation("Dropped components need a full-length fill vector")

    @property
    def output_size(self) -> int:
        return sum(len(idx) for idx, _ in self.parts)

    def forward(self, x, mu=None):
        x = np.asarray(x, dtype=float)
        return np.concatenate([norm.forward(x[..., idx], mu) for idx, norm in self.parts], axis=-1)

    def inverse(self, y, mu=None):
        y = np.asarray(y, dtype=float)
        base = self.fill if self.fill is not None else np.zeros(self.size)
        out = np.broadcast_to(base, y.shape[:-1] + (self.size,)).copy()
        offset = 0
        for idx, norm in self.parts:
            out[..., idx] = norm.inverse(y[..., offset:offset + len(idx)], mu)
            offset += len(idx)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "size": self.size,
            "fill": None if self.fill is None else self.fill.tolist(),
            "parts": [{"indices": idx, "normalizer": norm.to_dict()} for idx, norm in self.parts],
        }


def _affine_from_dict(d: dict) -> AffineNormalizer:
    return AffineNormalizer(d["scale"], d.get("shift", 0.0), d.get("param_powers"))


def _log10_from_dict(d: dict) -> Log10Normalizer:
    return Log10Normalizer(d.get("scale", 1.0), d.get("reference", 1.0), d.get("floor"))


def _symlog_from_dict(d: dict) -> PiecewiseSymlogNormalizer:
    return PiecewiseSymlogNormalizer(d.get("threshold", 2.0))


def _component_map_from_dict(d: dict) -> ComponentMapNormalizer:
    parts = [(p["indices"], normalizer_from_dict(p["normalizer"])) for p in d["parts"]]
    return ComponentMapNormalizer(parts, d["size"], d.get("fill"))


NORMALIZERS_DICT = {
    "affine": _affine_from_dict,
    "log10": _log10_from_dict,
    "scaled-log10": _log10_from_dict,
    "piecewise-symlog": _symlog_from_dict,
    "component-map": _component_map_from_dict,
}


def normalizer_from_dict(d: dict) -> Normalizer:
    builder = NORMALIZERS_DICT.get(d.get("kind"))
    if builder is None:
        raise ContractViolation(f"Unknown normalizer kind '{d.get('kind')}'")
    return builder(d)


def identity(size: int = 1) -> AffineNormalizer:
    return AffineNormalizer(np.ones(size), np.zeros(size))


class NormalizerSet:
    """The four maps a problem needs: state, param, dynamics, time."""
    TARGETS = ("state", "param", "dynamics", "time")

    def __init__(self, state: Normalizer, param: Normalizer, dynamics: Normalizer, time: Normalizer):
        self.state = state
        self.param = param
        self.dynamics = dynamics
        self.time = time

    def get(self, target: str) -> Normalizer:
        if target not in self.TARGETS:
            raise ContractViolation(f"Unknown normalization target '{target}', expected one of {self.TARGETS}")
        return getattr(self, target)

    def to_dict(self) -> Dict[str, dict]:
        return {target: self.get(target).to_dict() for target in self.TARGETS}

    @classmethod
    def from_dict(cls, d: Dict[str, dict]) -> "NormalizerSet":
        return cls(**{target: normalizer_from_dict(d[target]) for target in cls.TARGETS})
