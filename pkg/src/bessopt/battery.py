"""Exact steady-state model of a LiFePO4 storage system.

The cell is represented by a voltage source in series with an internal
resistance (Rint circuit). Open-circuit voltage is linear in state of
charge, resistance is piecewise linear in state of charge and grows
linearly with the number of equivalent full cycles. Permanent capacity
loss is the sum of a cycling term and an idling (calendar) term, both
empirical power laws.

All electrical quantities live at cell scale (volts, ohms, watts). A
system of arbitrary MWh size is treated as a series/parallel array of
identical cells, so system power maps to cell power through the energy
ratio and the efficiency surface depends only on C-rate, state of
charge, and cycle count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import DomainError, InfeasibleDrawError, ParameterError

# Cell used for the shipped calibration: a small cylindrical LiFePO4
# cell, 0.45 Ah at 3.275 V nominal.
CELL_ENERGY_WH = 0.45 * 3.275


@dataclass(frozen=True)
class ResistanceSegment:
    """One linear piece of the resistance-vs-SoC curve.

    The piece covers state of charge up to ``soc_hi`` (its lower edge is
    the previous segment's upper edge, or 0 for the first piece) and
    evaluates to ``a * soc + b`` ohms.
    """

    soc_hi: float
    a: float  # ohm per unit SoC
    b: float  # ohm


@dataclass(frozen=True)
class BatteryParams:
    """Electro-physical constants of the storage system.

    kv, v0            open-circuit voltage line (V per unit SoC, V)
    rin_segments      resistance pieces ordered by soc_hi, covering [0, 1]
    a_fc              resistance growth per equivalent full cycle (ohm)
    ksd               self-discharge fraction per time step
    cell_energy_wh    energy of one cell (Wh); sets the cell/system scale
    system_energy_mwh nominal system energy (MWh); None = cell-level use,
                      terminal powers are then interpreted in watts
    soc_fit_range     SoC range on which the OCV line was fitted
    """

    kv: float = 0.15
    v0: float = 3.2
    rin_segments: tuple[ResistanceSegment, ...] = ()
    a_fc: float = 0.000131
    ksd: float = 0.0
    cell_energy_wh: float = CELL_ENERGY_WH
    system_energy_mwh: float | None = None
    soc_fit_range: tuple[float, float] = (0.10, 0.98)

    def __post_init__(self):
        if self.kv <= 0 or self.v0 <= 0:
            raise ParameterError("OCV fit requires kv > 0 and v0 > 0")
        if self.a_fc < 0:
            raise ParameterError("resistance growth rate must be >= 0")
        if not 0.0 <= self.ksd < 1.0:
            raise ParameterError("self-discharge rate must be in [0, 1)")
        if self.cell_energy_wh <= 0:
            raise ParameterError("cell energy must be positive")
        if self.system_energy_mwh is not None and self.system_energy_mwh <= 0:
            raise ParameterError("system energy must be positive")
        segs = self.rin_segments
        if segs:
            his = [s.soc_hi for s in segs]
            if any(h2 <= h1 for h1, h2 in zip(his, his[1:])):
                raise ParameterError("resistance breakpoints must increase")
            if abs(his[-1] - 1.0) > 1e-9:
                raise ParameterError("resistance segments must cover [0, 1]")

    def for_system(self, energy_mwh: float) -> "BatteryParams":
        """Same cell model bound to a system of the given nominal size."""
        return replace(self, system_energy_mwh=energy_mwh)

    @property
    def cell_count(self) -> float:
        """Number of cells implied by the system energy (1 at cell level)."""
        if self.system_energy_mwh is None:
            return 1.0
        return self.system_energy_mwh * 1e6 / self.cell_energy_wh

    def to_cell_power(self, p_system: float) -> float:
        """Terminal power in system units -> power of one cell (W)."""
        if self.system_energy_mwh is None:
            return p_system
        return p_system * 1e6 / self.cell_count

    def to_system_power(self, p_cell: float) -> float:
        """Power of one cell (W) -> power in system units."""
        if self.system_energy_mwh is None:
            return p_cell
        return p_cell * self.cell_count / 1e6


@dataclass(frozen=True)
class DegradationParams:
    """Coefficients of the two capacity-fade laws and the retirement limit.

    Cycling loss:  cyc_amp * exp(cyc_soc_exp * soc_cyc) * dod**cyc_dod_exp * sqrt(n)
    Idling loss:   idl_amp * exp(idl_soc_exp * soc_idl) * tau_days**idl_tau_exp
    eol:           remaining-capacity fraction at which the battery retires
    """

    cyc_amp: float = 0.00568
    cyc_soc_exp: float = -1.943
    cyc_dod_exp: float = 0.7162
    idl_amp: float = 0.000112
    idl_soc_exp: float = 0.7388
    idl_tau_exp: float = 0.8
    eol: float = 0.75

    def __post_init__(self):
        if self.cyc_amp <= 0 or self.idl_amp <= 0:
            raise ParameterError("fade amplitudes must be positive")
        if not 0.0 < self.eol < 1.0:
            raise ParameterError("end-of-life fraction must be in (0, 1)")


@dataclass(frozen=True)
class OperatingPoint:
    """Terminal power (signed, >0 charge), state of charge, cycle count."""

    p_t: float
    soc: float
    n_fc: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise DomainError(f"soc {self.soc} outside [0, 1]")
        if self.n_fc < 0:
            raise DomainError("equivalent full cycles must be >= 0")


# Default 3-segment resistance fit (ohm at cell scale): elevated at low
# SoC, flat minimum through the mid range, mild rise toward full charge.
# The mid-range level is set so a fresh cell discharging at 1C and 50%
# SoC has a one-way efficiency of 0.90; a_fc adds 20% of the mid-SoC
# fresh value per 1000 equivalent full cycles.
DEFAULT_RIN_SEGMENTS = (
    ResistanceSegment(soc_hi=0.3, a=-0.966667, b=0.95),
    ResistanceSegment(soc_hi=0.7, a=-0.025, b=0.6675),
    ResistanceSegment(soc_hi=1.0, a=0.166667, b=0.533333),
)


def default_battery(system_energy_mwh: float | None = None) -> BatteryParams:
    """Shipped LiFePO4 calibration, optionally bound to a system size."""
    return BatteryParams(
        rin_segments=DEFAULT_RIN_SEGMENTS,
        system_energy_mwh=system_energy_mwh,
    )


def open_circuit_voltage(params: BatteryParams, soc: float) -> float:
    """Open-circuit voltage (V) of one cell at the given state of charge."""
    if not 0.0 <= soc <= 1.0:
        raise DomainError(f"soc {soc} outside [0, 1]")
    return params.kv * soc + params.v0


def internal_resistance(params: BatteryParams, soc: float, n_fc: float = 0.0) -> float:
    """Internal resistance (ohm) of one cell at (soc, cycle count).

    The SoC-dependent part is the line of the segment containing ``soc``
    (values exactly on a breakpoint belong to the lower segment); aging
    adds ``a_fc * n_fc`` on top.
    """
    if not 0.0 <= soc <= 1.0:
        raise DomainError(f"soc {soc} outside [0, 1]")
    if n_fc < 0:
        raise DomainError("equivalent full cycles must be >= 0")
    if not params.rin_segments:
        raise ParameterError("battery has no resistance segments")
    seg = params.rin_segments[-1]
    for cand in params.rin_segments:
        if soc <= cand.soc_hi:
            seg = cand
            break
    r = seg.a * soc + seg.b + params.a_fc * n_fc
    if r <= 0:
        raise ParameterError(f"resistance fit is non-positive at soc={soc}")
    return r


def power_input_cell(v_oc: float, r_in: float, p_t: float) -> float:
    """Power into the cell stack (W) for terminal power ``p_t`` (W).

    Closed form of the Rint circuit. Signed like ``p_t``: positive while
    charging, negative while discharging. The zero-resistance limit is
    the identity.
    """
    if r_in < 0:
        raise ParameterError("internal resistance must be >= 0")
    if r_in == 0.0:
        return p_t
    disc = v_oc * v_oc + 4.0 * p_t * r_in
    if disc < 0:
        raise InfeasibleDrawError(
            f"terminal power {p_t} W exceeds the maximum deliverable "
            f"{-v_oc * v_oc / (4 * r_in):.6g} W"
        )
    return (v_oc * math.sqrt(disc) - v_oc * v_oc) / (2.0 * r_in)


def power_input_derivative(v_oc: float, r_in: float, p_t: float) -> float:
    """d(power input)/d(terminal power) of the Rint closed form."""
    if r_in == 0.0:
        return 1.0
    disc = v_oc * v_oc + 4.0 * p_t * r_in
    if disc <= 0:
        raise InfeasibleDrawError(
            f"terminal power {p_t} W at or beyond the deliverable limit"
        )
    return v_oc / math.sqrt(disc)


def power_input_from_terminal(params: BatteryParams, op: OperatingPoint) -> float:
    """Power into the cells for a terminal operating point, in system units."""
    v = open_circuit_voltage(params, op.soc)
    r = internal_resistance(params, op.soc, op.n_fc)
    p_cell = params.to_cell_power(op.p_t)
    return params.to_system_power(power_input_cell(v, r, p_cell))


def one_way_efficiency(params: BatteryParams, op: OperatingPoint) -> float:
    """Charge efficiency p_b/p_t, or discharge efficiency p_t/p_b.

    Undefined at zero terminal power.
    """
    if op.p_t == 0.0:
        raise DomainError("efficiency is undefined at zero terminal power")
    p_b = power_input_from_terminal(params, op)
    if op.p_t > 0:
        return p_b / op.p_t
    return op.p_t / p_b


def capacity_fade_cycling(
    deg: DegradationParams, soc_cyc: float, dod: float, n: float
) -> float:
    """Capacity fraction lost after ``n`` cycles at (median SoC, DoD)."""
    if not 0.0 <= soc_cyc <= 1.0:
        raise DomainError(f"soc_cyc {soc_cyc} outside [0, 1]")
    if not 0.0 <= dod <= 1.0:
        raise DomainError(f"dod {dod} outside [0, 1]")
    if n < 0:
        raise DomainError("cycle count must be >= 0")
    if n == 0.0 or dod == 0.0:
        return 0.0
    return (
        deg.cyc_amp
        * math.exp(deg.cyc_soc_exp * soc_cyc)
        * dod**deg.cyc_dod_exp
        * math.sqrt(n)
    )


def capacity_fade_idling(deg: DegradationParams, soc_idl: float, tau_days: float) -> float:
    """Capacity fraction lost after ``tau_days`` of rest at the given SoC."""
    if not 0.0 <= soc_idl <= 1.0:
        raise DomainError(f"soc_idl {soc_idl} outside [0, 1]")
    if tau_days < 0:
        raise DomainError("idle time must be >= 0")
    if tau_days == 0.0:
        return 0.0
    return deg.idl_amp * math.exp(deg.idl_soc_exp * soc_idl) * tau_days**deg.idl_tau_exp


def fade_rate_cycling(
    deg: DegradationParams, soc_cyc: float, dod: float, n: float
) -> float:
    """Marginal cycling fade per cycle, d loss / d n, at cycle count n > 0."""
    if n <= 0:
        raise DomainError("cycling fade rate is singular at n = 0")
    return capacity_fade_cycling(deg, soc_cyc, dod, n) / (2.0 * n)


def fade_rate_idling(deg: DegradationParams, soc_idl: float, tau_days: float) -> float:
    """Marginal idling fade per day, d loss / d tau, at tau > 0."""
    if tau_days <= 0:
        raise DomainError("idling fade rate is singular at tau = 0")
    return deg.idl_tau_exp * capacity_fade_idling(deg, soc_idl, tau_days) / tau_days


def equivalent_full_cycles(throughput_abs: float, capacity: float) -> float:
    """Cycle count from total |charge| + |discharge| energy through the cells."""
    if capacity <= 0:
        raise DomainError("capacity must be positive")
    if throughput_abs < 0:
        raise DomainError("throughput must be >= 0")
    return throughput_abs / (2.0 * capacity)


def max_discharge_power(params: BatteryParams, soc: float, n_fc: float = 0.0) -> float:
    """Largest terminal discharge magnitude the cell can sustain, in system units."""
    v = open_circuit_voltage(params, soc)
    r = internal_resistance(params, soc, n_fc)
    return params.to_system_power(v * v / (4.0 * r))
