import numpy as np

from utils.transformers import ReparamSeries


def _require_series(series):
    if not isinstance(series, ReparamSeries):
        raise TypeError("series must be a ReparamSeries")


def times_strictly_increasing(series, messages, params=None):
    """
    Check that physical time starts at 0 and increases strictly, and that ts is the i/n grid.

    Parameters:
    series (ReparamSeries): The series to check.
    messages (list): List to store validation messages.
    params: Not used in this validator.

    Returns:
    bool: True if both time axes are valid, False otherwise.
    """
    _require_series(series)
    is_valid = True
    if series.t[0] != 0.0:
        messages.append(f"Series {series.tag}: t starts at {series.t[0]!r} instead of 0.")
        is_valid = False
    steps = np.diff(series.t)
    if np.any(steps <= 0):
        first = int(np.argmax(steps <= 0))
        messages.append(f"Series {series.tag}: t not strictly increasing at index {first + 1}.")
        is_valid = False
    expected = np.arange(len(series), dtype=float) / series.n
    if not np.array_equal(series.ts, expected):
        messages.append(f"Series {series.tag}: ts is not the uniform grid i/{series.n}.")
        is_valid = False
    return is_valid


def finite_values(series, messages, params=None):
    """
    Check that every stored quantity (states, fs, tdot) is finite.

    Returns:
    bool: True if no NaN or infinity is found, False otherwise.
    """
    _require_series(series)
    is_valid = True
    for name in ("t", "states", "fs", "tdot"):
        values = getattr(series, name)
        if values is None:
            continue
        bad = ~np.isfinite(values)
        if np.any(bad):
            messages.append(f"Series {series.tag}: {int(bad.sum())} non-finite values in '{name}'.")
            is_valid = False
    return is_valid


def tdot_positive(series, messages, params=None):
    """
    Check that the de-normalized dt/dts is strictly positive.

    tdot is stored as log10, so the check fails on missing or non-finite
    entries and on underflow of 10**tdot to zero.
    """
    _require_series(series)
    if series.tdot is None:
        messages.append(f"Series {series.tag}: tdot missing, derivatives were not estimated.")
        return False
    rate = np.power(10.0, series.tdot)
    if not np.all(np.isfinite(series.tdot)) or np.any(rate <= 0):
        messages.append(f"Series {series.tag}: dt/dts is not strictly positive.")
        return False
    return True


def mass_conservation(series, messages, params):
    """
    Check that the sum of the physical states stays at its initial value.

    Parameters:
    params (dict): Dictionary containing:
        - tolerance: maximum absolute deviation of the sum (default 1e-8)
        - components (optional): 0-based indices entering the sum, all by default

    Returns:
    bool: True if the deviation stays within tolerance, False otherwise.
    """
    _require_series(series)
    params = params or {}
    tolerance = float(params.get("tolerance", 1e-8))
    u = series.physical_states()
    components = params.get("components")
    if components is not None:
        u = u[:, list(components)]
    total = u.sum(axis=1)
    deviation = float(np.max(np.abs(total - total[0])))
    if deviation > tolerance:
        messages.append(f"Series {series.tag}: mass drift {deviation:.3e} exceeds {tolerance:.1e}.")
        return False
    return True


def non_negative_states(series, messages, params=None):
    """
    Flag negative physical concentrations.

    Parameters:
    params (dict): optional 'atol', the magnitude of negative values tolerated (default 0).
    """
    _require_series(series)
    atol = float((params or {}).get("atol", 0.0))
    u = series.physical_states()
    worst = float(u.min())
    if worst < -atol:
        rows, cols = np.nonzero(u < -atol)
        messages.append(f"Series {series.tag}: {rows.size} negative values, first in component "
                        f"{int(cols[0]) + 1} at t={series.t[rows[0]]!r} (min {worst:.3e}).")
        return False
    return True


############################################################################################################
# Dictionary to map validator names to functions - All new validators must be added here
VALIDATORS_DICT = {
    "times_strictly_increasing": times_strictly_increasing,
    "finite_values": finite_values,
    "tdot_positive": tdot_positive,
    "mass_conservation": mass_conservation,
    "non_negative_states": non_negative_states,
}
