"""
The five parametric stiff benchmarks: Van der Pol, OREGO, ROBER, E5, POLLU.

Each problem bundles its right-hand side, analytic Jacobian, initial state,
parameter space Γ, horizon, test points and the four normalization maps.
Problems are addressed by string id through PROBLEMS_DICT / get_problem.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from utils.errors import ContractViolation, UnknownProblemError
from utils.normalizers import (
    AffineNormalizer, ComponentMapNormalizer, Log10Normalizer,
    NormalizerSet, PiecewiseSymlogNormalizer, identity,
)

POLLU_RATES_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                "config", "pollu_rates_v1.csv")

GRID_ROLES = ("train", "validation", "test")


@dataclass(frozen=True)
class Axis:
    """Discretization of one varying parameter component."""
    kind: str
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.kind not in ("log", "uniform"):
            raise ContractViolation(f"Axis kind must be 'log' or 'uniform', got '{self.kind}'")
        if not (self.hi > self.lo and self.n >= 2):
            raise ContractViolation(f"Axis needs hi > lo and at least 2 points, got {self}")
        if self.kind == "log" and self.lo <= 0:
            raise ContractViolation("Log axis needs a positive lower bound")

    def points(self) -> np.ndarray:
        if self.kind == "log":
            return 10.0 ** np.linspace(math.log10(self.lo), math.log10(self.hi), self.n)
        return np.linspace(self.lo, self.hi, self.n)

    def midpoints(self) -> np.ndarray:
        """Midpoints of consecutive points, taken in the axis coordinate (log10 for log axes)."""
        if self.kind == "log":
            e = np.linspace(math.log10(self.lo), math.log10(self.hi), self.n)
            return 10.0 ** ((e[:-1] + e[1:]) / 2)
        p = self.points()
        return (p[:-1] + p[1:]) / 2

    @classmethod
    def from_dict(cls, d: dict) -> "Axis":
        return cls(kind=d["kind"], lo=float(d["lo"]), hi=float(d["hi"]), n=int(d["n"]))


@dataclass(frozen=True, eq=False)
class ParamGrid:
    role: str
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)


Component = Union[float, Axis]


@dataclass(frozen=True, eq=False)
class ParametricProblem:
    name: str
    n_state: int
    n_param: int
    rhs_fn: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jac_fn: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    u0: Tuple[float, ...]
    horizon_fn: Callable[[np.ndarray], float]
    param_space: Tuple[Component, ...]
    test_points: Tuple[Tuple[float, ...], ...]
    normalizers: NormalizerSet
    test_horizon_fn: Optional[Callable[[np.ndarray], float]] = None
    description: str = ""

    def check_param(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.size != self.n_param:
            raise ContractViolation(f"{self.name}: expected {self.n_param} parameters, got {mu.size}")
        return mu

    def check_state(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n_state:
            raise ContractViolation(f"{self.name}: expected state of size {self.n_state}, got {u.shape[-1]}")
        return u

    def rhs(self, t: float, u, mu) -> np.ndarray:
        return self.rhs_fn(t, self.check_state(u), self.check_param(mu))

    def jacobian(self, t: float, u, mu) -> np.ndarray:
        return self.jac_fn(t, self.check_state(u), self.check_param(mu))

    def bind(self, mu):
        """(f(t, u), jac(t, u)) closures over a fixed parameter vector, as the solvers expect."""
        mu = self.check_param(mu)
        return (lambda t, u: self.rhs_fn(t, u, mu)), (lambda t, u: self.jac_fn(t, u, mu))

    def initial_state(self, mu=None) -> np.ndarray:
        return np.array(self.u0, dtype=float)

    def horizon(self, mu, role: str = "train") -> float:
        mu = self.check_param(mu)
        if role == "test" and self.test_horizon_fn is not None:
            return float(self.test_horizon_fn(mu))
        return float(self.horizon_fn(mu))

    def varying(self) -> List[int]:
        return [i for i, c in enumerate(self.param_space) if isinstance(c, Axis)]

    def in_domain(self, mu) -> bool:
        mu = self.check_param(mu)
        for value, comp in zip(mu, self.param_space):
            if isinstance(comp, Axis):
                if not (comp.lo <= value <= comp.hi):
                    return False
            elif value != comp:
                return False
        return True

    def grid(self, role: str, axes: Optional[Dict[int, Axis]] = None) -> ParamGrid:
        """
        Train grid: cartesian product of the axis points. Validation grid:
        product of the axis midpoints. Test grid: the problem's test values.

        Args:
            axes: optional override {component index (0-based): Axis}.
        """
        if role not in GRID_ROLES:
            raise ContractViolation(f"Grid role must be one of {GRID_ROLES}, got '{role}'")
        if role == "test":
            return ParamGrid(role, np.array(self.test_points, dtype=float))
        space = list(self.param_space)
        for i, axis in (axes or {}).items():
            if not 0 <= int(i) < self.n_param:
                raise ContractViolation(f"{self.name}: grid override for unknown component {i}")
            space[int(i)] = axis
        per_component = []
        for comp in space:
            if isinstance(comp, Axis):
                per_component.append(comp.points() if role == "train" else comp.midpoints())
            else:
                per_component.append(np.array([comp], dtype=float))
        return ParamGrid(role, np.array(list(itertools.product(*per_component)), dtype=float))


# ---------------------------------------------------------------------------
# Van der Pol
# ---------------------------------------------------------------------------

def _vdp_rhs(t, u, mu):
    m = mu[0]
    return np.array([u[1], m * (1 - u[0] ** 2) * u[1] - u[0]])


def _vdp_jac(t, u, mu):
    m = mu[0]
    return np.array([
        [0.0, 1.0],
        [-2 * m * u[0] * u[1] - 1, m * (1 - u[0] ** 2)],
    ])


# ---------------------------------------------------------------------------
# OREGO
# ---------------------------------------------------------------------------

def _orego_rhs(t, u, mu):
    m1, m2, m3 = mu
    return np.array([
        m1 * (u[1] - u[0] * u[1] + u[0] - m3 * u[0] ** 2),
        (-u[1] - u[0] * u[1] + u[2]) / m1,
        m2 * (u[0] - u[2]),
    ])


def _orego_jac(t, u, mu):
    m1, m2, m3 = mu
    return np.array([
        [m1 * (1 - u[1] - 2 * m3 * u[0]), m1 * (1 - u[0]), 0.0],
        [-u[1] / m1, -(1 + u[0]) / m1, 1 / m1],
        [m2, 0.0, -m2],
    ])


# ---------------------------------------------------------------------------
# ROBER
# ---------------------------------------------------------------------------

def _rober_rhs(t, u, mu):
    m1, m2, m3 = mu
    a = m1 * u[0]
    b = m2 * u[1] * u[2]
    c = m3 * u[1] ** 2
    return np.array([-a + b, a - b - c, c])


def _rober_jac(t, u, mu):
    m1, m2, m3 = mu
    return np.array([
        [-m1, m2 * u[2], m2 * u[1]],
        [m1, -m2 * u[2] - 2 * m3 * u[1], -m2 * u[1]],
        [0.0, 2 * m3 * u[1], 0.0],
    ])


# ---------------------------------------------------------------------------
# E5 (u3' evaluated as u2' - u4' to avoid cancellation)
# ---------------------------------------------------------------------------

def _e5_rhs(t, u, mu):
    m1, m2, m3, m4 = mu
    r1 = m1 * u[0]
    r2 = m2 * u[0] * u[2]
    r3 = m3 * m4 * u[1] * u[2]
    r4 = m3 * u[3]
    du2 = r1 - r3
    du4 = r2 - r4
    return np.array([-r1 - r2, du2, du2 - du4, du4])


def _e5_jac(t, u, mu):
    m1, m2, m3, m4 = mu
    row2 = np.array([m1, -m3 * m4 * u[2], -m3 * m4 * u[1], 0.0])
    row4 = np.array([m2 * u[2], 0.0, m2 * u[0], -m3])
    row1 = np.array([-m1 - m2 * u[2], 0.0, -m2 * u[0], 0.0])
    return np.vstack([row1, row2, row2 - row4, row4])


# ---------------------------------------------------------------------------
# POLLU: 20 species, 25 reactions r_k = mu_k * (one or two species)
# ---------------------------------------------------------------------------

def _load_pollu_rates(path: str = POLLU_RATES_PATH):
    table = pd.read_csv(path)
    mu0 = table["rate"].to_numpy(dtype=float)
    first, second = [], []
    for reactants in table["reactants"]:
        idx = [int(s.strip()[1:]) - 1 for s in str(reactants).split("*")]
        first.append(idx[0])
        second.append(idx[1] if len(idx) > 1 else -1)
    return mu0, np.array(first), np.array(second)


POLLU_MU0, _POLLU_FIRST, _POLLU_SECOND = _load_pollu_rates()

# species -> {reaction: coefficient}, 1-based as in the reaction table
_POLLU_BALANCE = [
    {1: -1, 10: -1, 14: -1, 23: -1, 24: -1, 2: 1, 3: 1, 9: 1, 11: 1, 12: 1, 22: 1, 25: 1},
    {2: -1, 3: -1, 9: -1, 12: -1, 1: 1, 21: 1},
    {15: -1, 1: 1, 17: 1, 19: 1, 22: 1},
    {2: -1, 16: -1, 17: -1, 23: -1, 15: 1},
    {3: -1, 4: 2, 6: 1, 7: 1, 13: 1, 20: 1},
    {6: -1, 8: -1, 14: -1, 20: -1, 3: 1, 18: 2},
    {4: -1, 5: -1, 6: -1, 13: 1},
    {4: 1, 5: 1, 6: 1, 7: 1},
    {7: -1, 8: -1},
    {12: -1, 7: 1, 9: 1},
    {9: -1, 10: -1, 8: 1, 11: 1},
    {9: 1},
    {11: -1, 10: 1},
    {13: -1, 12: 1},
    {14: 1},
    {18: -1, 19: -1, 16: 1},
    {20: -1},
    {20: 1},
    {21: -1, 22: -1, 24: -1, 23: 1, 25: 1},
    {25: -1, 24: 1},
]

POLLU_STOICHIOMETRY = np.zeros((20, 25))
for _species, _balance in enumerate(_POLLU_BALANCE):
    for _reaction, _coeff in _balance.items():
        POLLU_STOICHIOMETRY[_species, _reaction - 1] = _coeff


def pollu_rates(u, mu) -> np.ndarray:
    u_ext = np.append(u, 1.0)
    return mu * u_ext[_POLLU_FIRST] * u_ext[_POLLU_SECOND]


def _pollu_rhs(t, u, mu):
    return POLLU_STOICHIOMETRY @ pollu_rates(u, mu)


def _pollu_jac(t, u, mu):
    u_ext = np.append(u, 1.0)
    d_rates = np.zeros((25, 21))
    rows = np.arange(25)
    np.add.at(d_rates, (rows, _POLLU_FIRST), mu * u_ext[_POLLU_SECOND])
    np.add.at(d_rates, (rows, _POLLU_SECOND), mu * u_ext[_POLLU_FIRST])
    return POLLU_STOICHIOMETRY @ d_rates[:, :20]


POLLU_VARYING = (3, 5, 13)


def _pollu_space():
    space = [float(v) for v in POLLU_MU0]
    for i in POLLU_VARYING:
        space[i] = Axis("uniform", POLLU_MU0[i] / 2, 2 * POLLU_MU0[i], 16)
    return tuple(space)


def _pollu_tests():
    out = []
    for factor in (0.525, 1.975):
        mu = [float(v) for v in POLLU_MU0]
        for i in POLLU_VARYING:
            mu[i] = factor * POLLU_MU0[i]
        out.append(tuple(mu))
    return tuple(out)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _product(*values) -> Tuple[Tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in p) for p in itertools.product(*values))


VDP = ParametricProblem(
    name="vdp", n_state=2, n_param=1,
    rhs_fn=_vdp_rhs, jac_fn=_vdp_jac, u0=(2.0, 0.0),
    horizon_fn=lambda mu: 3.5 * mu[0],
    test_horizon_fn=lambda mu: 5.0 * mu[0],
    param_space=(Axis("log", 1e2, 1e4, 51),),
    test_points=_product((10 ** 2.01, 10 ** 2.67, 10 ** 3.33, 10 ** 3.99)),
    normalizers=NormalizerSet(
        state=AffineNormalizer([2.0, 1.0], 0.0, [[0.0], [1.0]]),
        param=Log10Normalizer(),
        dynamics=AffineNormalizer([5.0, 10.0], 0.0, [[1.0], [1.0]]),
        time=AffineNormalizer([1.0], 0.0, [[1.0]]),
    ),
    description="Van der Pol oscillator",
)

OREGO = ParametricProblem(
    name="orego", n_state=3, n_param=3,
    rhs_fn=_orego_rhs, jac_fn=_orego_jac, u0=(1.0, 2.0, 3.0),
    horizon_fn=lambda mu: 1000.0,
    param_space=(Axis("uniform", 50.0, 100.0, 6), Axis("uniform", 0.002, 0.02, 19), Axis("uniform", 1e-6, 1e-4, 21)),
    test_points=_product((52.5, 97.5), (0.025, 0.175), (10 ** -5.975, 10 ** -4.525)),
    normalizers=NormalizerSet(
        state=Log10Normalizer(),
        param=ComponentMapNormalizer(
            [([0], AffineNormalizer(77.27)), ([1], AffineNormalizer(0.161)), ([2], Log10Normalizer(scale=5.0))],
            size=3),
        dynamics=identity(),
        time=identity(),
    ),
    description="Oregonator (Belousov-Zhabotinsky reaction)",
)

ROBER = ParametricProblem(
    name="rober", n_state=3, n_param=3,
    rhs_fn=_rober_rhs, jac_fn=_rober_jac, u0=(1.0, 0.0, 0.0),
    horizon_fn=lambda mu: 1e11,
    param_space=(Axis("uniform", 0.005, 0.05, 16), Axis("log", 1e3, 1e5, 31), 3e7),
    test_points=_product((0.006, 0.049), (10 ** 3.025, 10 ** 4.975), (3e7,)),
    normalizers=NormalizerSet(
        state=AffineNormalizer([1.0, 1.0, 1.0], 0.0, [[0.0, 0.0, 0.0], [-0.5, 0.0, -1 / 14], [0.0, 0.0, 0.0]]),
        param=Log10Normalizer(scale=[-1.0, 4.0, 7.0]),
        dynamics=identity(),
        time=identity(),
    ),
    description="Robertson autocatalytic kinetics",
)

E5 = ParametricProblem(
    name="e5", n_state=4, n_param=4,
    rhs_fn=_e5_rhs, jac_fn=_e5_jac, u0=(1.76e-3, 0.0, 0.0, 0.0),
    horizon_fn=lambda mu: 1e11,
    param_space=(Axis("log", 5e-10, 5e-9, 11), Axis("log", 1e7, 1e8, 11), 1.13e3, 1e6),
    test_points=_product((5 * 10 ** -9.975, 5 * 10 ** -9.025), (10 ** 7.025, 10 ** 7.975), (1.13e3,), (1e6,)),
    normalizers=NormalizerSet(
        state=Log10Normalizer(scale=10.0, floor=1e-30),
        param=Log10Normalizer(),
        dynamics=PiecewiseSymlogNormalizer(2.0),
        time=identity(),
    ),
    description="E5 chemical pyrolysis",
)

POLLU = ParametricProblem(
    name="pollu", n_state=20, n_param=25,
    rhs_fn=_pollu_rhs, jac_fn=_pollu_jac,
    u0=(0, 0.2, 0, 0.04, 0, 0, 0.1, 0.3, 0.01, 0, 0, 0, 0, 0, 0, 0, 0.007, 0, 0, 0),
    horizon_fn=lambda mu: 60.0,
    param_space=_pollu_space(),
    test_points=_pollu_tests(),
    normalizers=NormalizerSet(
        state=AffineNormalizer(0.1),
        param=ComponentMapNormalizer(
            [(list(POLLU_VARYING), Log10Normalizer(scale=math.log10(2.0), reference=POLLU_MU0[list(POLLU_VARYING)]))],
            size=25, fill=POLLU_MU0),
        dynamics=identity(),
        time=identity(),
    ),
    description="Air pollution chemistry (20 species, 25 reactions)",
)

PROBLEMS_DICT: Dict[str, ParametricProblem] = {p.name: p for p in (VDP, OREGO, ROBER, E5, POLLU)}


def get_problem(name: str) -> ParametricProblem:
    problem = PROBLEMS_DICT.get(name)
    if problem is None:
        raise UnknownProblemError(name, PROBLEMS_DICT.keys())
    return problem


def rhs(problem: str, t: float, u, mu) -> np.ndarray:
    return get_problem(problem).rhs(t, u, mu)


def jacobian(problem: str, t: float, u, mu) -> np.ndarray:
    return get_problem(problem).jacobian(t, u, mu)


def initial_state(problem: str, mu=None) -> np.ndarray:
    return get_problem(problem).initial_state(mu)


def param_grid(problem: str, role: str, axes: Optional[Dict[int, Axis]] = None) -> ParamGrid:
    return get_problem(problem).grid(role, axes)


def normalize(problem: str, target: str, x, mu=None):
    return get_problem(problem).normalizers.get(target).forward(x, mu)


def denormalize(problem: str, target: str, y, mu=None):
    return get_problem(problem).normalizers.get(target).inverse(y, mu)
