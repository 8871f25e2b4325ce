"""Synthetic daily demand profiles for the two peak-shaving studies.

Both are hourly, 24 steps, in MW with load negative. Against a 10 MW
import limit the highest peak needs exactly 7 MW of discharge power and
17.2 MWh of energy to shave, which fixes the minimum storage service
requirement. The one-peak day is a conventional evening peak; the
two-peak day is a duck-curve net load with a smaller morning peak and a
midday solar valley.
"""

from __future__ import annotations

import csv

import numpy as np

GRID_LIMIT_MW = 10.0

# Evening peak: excess over the 10 MW limit is 1.4 + 5.0 + 7.0 + 3.0 +
# 0.8 = 17.2 MWh with a 7.0 MW maximum.
ONE_PEAK_MW = (
    5.6, 5.0, 4.7, 4.5, 4.6, 5.0,
    5.9, 6.8, 7.4, 7.6, 7.5, 7.3,
    7.1, 7.0, 7.2, 7.8, 9.4, 11.4,
    15.0, 17.0, 13.0, 10.8, 8.4, 6.9,
)

# Duck curve: morning excess 1.0 + 4.6 + 3.6 + 1.6 = 10.8 MWh (4.6 MW
# max), midday valley, then the same 17.2 MWh / 7 MW evening peak.
TWO_PEAK_MW = (
    5.4, 4.9, 4.7, 4.6, 4.8, 6.0,
    11.0, 14.6, 13.6, 11.6, 8.0, 5.2,
    3.6, 3.0, 3.4, 5.0, 8.2, 11.4,
    15.0, 17.0, 13.0, 10.8, 8.4, 6.9,
)

# Cycle windows: the one-peak day is a single daily cycle; the duck
# curve splits into (overnight charge + morning peak) and (midday
# charge + evening peak).
ONE_PEAK_WINDOWS = (tuple(range(24)),)
TWO_PEAK_WINDOWS = (tuple(range(0, 12)), tuple(range(12, 24)))


def demand_profile(name: str) -> tuple[float, ...]:
    """Signed demand (load negative) for 'one_peak' or 'two_peak'."""
    table = {"one_peak": ONE_PEAK_MW, "two_peak": TWO_PEAK_MW}
    if name not in table:
        raise KeyError(f"unknown profile {name!r}, have {sorted(table)}")
    return tuple(-v for v in table[name])


def default_windows(name: str) -> tuple[tuple[int, ...], ...]:
    table = {"one_peak": ONE_PEAK_WINDOWS, "two_peak": TWO_PEAK_WINDOWS}
    return table[name]


def write_demand_csv(demand_mw, destination) -> None:
    """Demand CSV: one row per timestep, columns (timestamp, demand_mw)."""
    rows = [("hour", "demand_mw")]
    rows += [(t, repr(float(d))) for t, d in enumerate(demand_mw)]
    if hasattr(destination, "write"):
        csv.writer(destination, lineterminator="\n").writerows(rows)
    else:
        with open(destination, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


def read_demand_csv(source) -> tuple[float, ...]:
    """Load a demand CSV; values must follow the <= 0 load convention."""
    from .errors import ConfigError

    if hasattr(source, "read"):
        fh = source
        rows = list(csv.reader(fh))
    else:
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError("demand CSV is empty")
    start = 1 if rows and not _is_float(rows[0][-1]) else 0
    out = []
    for ln, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        try:
            val = float(row[-1])
        except ValueError as exc:
            raise ConfigError(f"demand CSV row {ln}: {exc}") from exc
        if val > 1e-9:
            raise ConfigError(
                f"demand CSV row {ln}: {val} violates the <=0 load convention"
            )
        out.append(val)
    if not out:
        raise ConfigError("demand CSV has no data rows")
    return tuple(out)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def excess_series(demand_mw, grid_limit_mw: float) -> np.ndarray:
    """Per-step MW of load above the import limit (>= 0)."""
    load = -np.asarray(demand_mw, dtype=float)
    return np.maximum(0.0, load - grid_limit_mw)
