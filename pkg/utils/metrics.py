"""
Accuracy metrics of a ROM rollout against a reference solution.

All metrics take plain arrays: times (M,) and states (M, N). Series given on
different time grids are compared on the reference samples inside the
overlap of both spans, with the ROM linearly interpolated there.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.signal import argrelmax

from utils.errors import ContractViolation, UndefinedMetricError


def _states(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u.reshape(-1, 1) if u.ndim == 1 else u


def _on_reference_grid(t, u, t_ref, u_ref) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(grid, rom values, reference values) restricted to the overlap of both time spans."""
    t = np.asarray(t, dtype=float)
    t_ref = np.asarray(t_ref, dtype=float)
    u, u_ref = _states(u), _states(u_ref)
    if u.shape[0] != t.size or u_ref.shape[0] != t_ref.size:
        raise ContractViolation("Times and states must have matching lengths")
    if u.shape[1] != u_ref.shape[1]:
        raise ContractViolation(f"Component count differs: {u.shape[1]} vs {u_ref.shape[1]}")
    lo, hi = max(t[0], t_ref[0]), min(t[-1], t_ref[-1])
    mask = (t_ref >= lo) & (t_ref <= hi)
    if hi < lo or not np.any(mask):
        raise ContractViolation(f"Series do not overlap: [{t[0]!r}, {t[-1]!r}] vs [{t_ref[0]!r}, {t_ref[-1]!r}]")
    grid = t_ref[mask]
    rom = np.column_stack([np.interp(grid, t, u[:, j]) for j in range(u.shape[1])])
    return grid, rom, u_ref[mask]


def mse_ts(states, reference_states) -> float:
    """Mean over grid points and components of squared differences; both on the same ts grid."""
    a, b = _states(states), _states(reference_states)
    if a.shape != b.shape:
        raise ContractViolation(f"Rollout and reference grids differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_t(t, u, t_ref, u_ref) -> float:
    """Mean squared difference with the ROM interpolated on the reference times of the overlap."""
    _, rom, ref = _on_reference_grid(t, u, t_ref, u_ref)
    return float(np.mean((rom - ref) ** 2))


def l2(t, u, t_ref, u_ref, components: Optional[Sequence[int]] = None) -> float:
    """
    Relative integral error sqrt(int sum_c (u_c - ref_c)^2 dt / int sum_c ref_c^2 dt),
    integrated with Simpson's rule on the reference times of the overlap.

    Args:
        components: 0-based indices entering the sums, all by default.
    """
    grid, rom, ref = _on_reference_grid(t, u, t_ref, u_ref)
    if components is not None:
        rom, ref = rom[:, list(components)], ref[:, list(components)]
    if grid.size < 2:
        raise ContractViolation("Integral error needs at least two overlapping samples")
    num = simpson(np.sum((rom - ref) ** 2, axis=1), x=grid)
    den = simpson(np.sum(ref ** 2, axis=1), x=grid)
    if not den > 0:
        raise UndefinedMetricError("Reference has zero integral norm on the overlap")
    return float(np.sqrt(max(num, 0.0) / den))


def find_peaks(values) -> np.ndarray:
    """Indices of samples strictly larger than both direct neighbours."""
    return argrelmax(np.asarray(values, dtype=float), order=1)[0]


def d_peak(t, u, t_ref, u_ref) -> float:
    """
    Mean |t_peak - t_peak_ref| over the peaks of one component, pairing the
    k-th ROM peak with the k-th reference peak up to the shorter list.
    """
    t = np.asarray(t, dtype=float)
    t_ref = np.asarray(t_ref, dtype=float)
    peaks = find_peaks(np.asarray(u, dtype=float).reshape(-1))
    peaks_ref = find_peaks(np.asarray(u_ref, dtype=float).reshape(-1))
    if peaks.size == 0 or peaks_ref.size == 0:
        raise UndefinedMetricError(f"No peaks to compare ({peaks.size} ROM, {peaks_ref.size} reference)")
    k = min(peaks.size, peaks_ref.size)
    return float(np.mean(np.abs(t[peaks[:k]] - t_ref[peaks_ref[:k]])))


############################################################################################################
# Dictionary to map metric names to functions - All new metrics must be added here
METRICS_DICT = {
    "mse_ts": mse_ts,
    "mse_t": mse_t,
    "l2": l2,
    "d_peak": d_peak,
}
