"""Year-indexed scheduling MILP for a fixed storage size and lifetime.

One representative day per operation year, replicated 365 times. Each
year gets its own dispatch variables, so the operating strategy can
drift as the battery ages. Nonlinear physics enter through segment
grids: terminal powers, momentary SoC, cycle depth, cycle median SoC
and daily average SoC are all split into consecutive-fill segments, and
the exact model's derivatives evaluated at segment midpoints become the
constants of an otherwise linear model.

Degradation state couples the years: capacity fade follows a recursion
whose per-year increment picks the cycling/idling rate of whichever
segments the year actually used, and internal resistance growth enters
the power-conversion coefficients through a per-year cycle count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import battery as bat
from .battery import BatteryParams, DegradationParams
from .errors import ExtractionError, ModelError, ParameterError
from .milp import Model, Solution
from .pwl import SegmentGrid, add_segmented, linearize_binary_product, make_grid

HOURS_PER_DAY = 24.0
DAYS_PER_YEAR = 365.0
FILL_TOL = 1e-6


@dataclass(frozen=True)
class ScenarioSpec:
    """Demand day, prices, grid limit, and cycle windows.

    demand_mw     per-timestep power demand, <= 0 for load
    dt_h          timestep length in hours; len(demand) * dt_h == 24
    grid_limit_mw maximum grid import
    windows       disjoint tuples of 0-based timestep indices, one per
                  daily cycle
    prices        energy $/MWh, capacity $/MWh installed, power $/MW
                  installed, lost load $/MWh
    """

    demand_mw: tuple[float, ...]
    dt_h: float = 1.0
    grid_limit_mw: float = 10.0
    windows: tuple[tuple[int, ...], ...] = ()
    price_energy_usd_per_mwh: float = 80.0
    price_capacity_usd_per_mwh: float = 290_000.0
    price_power_usd_per_mw: float = 90_000.0
    value_lost_load_usd_per_mwh: float = 10_000.0
    year_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.demand_mw:
            raise ParameterError("demand profile is empty")
        if any(d > 1e-9 for d in self.demand_mw):
            raise ParameterError("demand uses the <=0 load convention")
        if abs(len(self.demand_mw) * self.dt_h - HOURS_PER_DAY) > 1e-9:
            raise ParameterError("timesteps must cover exactly 24 h")
        if self.grid_limit_mw <= 0:
            raise ParameterError("grid limit must be positive")
        if not self.windows:
            object.__setattr__(
                self, "windows", (tuple(range(len(self.demand_mw))),)
            )
        seen: set[int] = set()
        for win in self.windows:
            if not win:
                raise ParameterError("empty cycle window")
            for t in win:
                if not 0 <= t < len(self.demand_mw):
                    raise ParameterError(f"window timestep {t} out of range")
                if t in seen:
                    raise ParameterError("cycle windows overlap")
                seen.add(t)

    @property
    def num_steps(self) -> int:
        return len(self.demand_mw)

    @property
    def num_cycles(self) -> int:
        return len(self.windows)

    def weights(self, years: int) -> tuple[float, ...]:
        if self.year_weights is None:
            return (1.0 / years,) * years
        if len(self.year_weights) != years:
            raise ParameterError("year weights do not match the lifetime")
        if abs(sum(self.year_weights) - 1.0) > 1e-9:
            raise ParameterError("year weights must sum to 1")
        return self.year_weights

    def peak_excess(self) -> tuple[float, float]:
        """(max MW, max per-window MWh) of demand above the grid limit."""
        excess = [max(0.0, -d - self.grid_limit_mw) for d in self.demand_mw]
        peak_mw = max(excess)
        win_mwh = max(
            sum(excess[t] for t in win) * self.dt_h for win in self.windows
        )
        return peak_mw, win_mwh

    def total_excess_mwh(self) -> float:
        return sum(
            max(0.0, -d - self.grid_limit_mw) for d in self.demand_mw
        ) * self.dt_h


@dataclass(frozen=True)
class GridSet:
    """The six segment grids of the formulation."""

    charge: SegmentGrid     # terminal charge power, [0, P_bar] MW
    discharge: SegmentGrid  # terminal discharge magnitude, [0, P_bar] MW
    dod: SegmentGrid        # cycle depth of discharge, [0, 1]
    soc_cycle: SegmentGrid  # cycle median SoC, [0, 1]
    soc_idle: SegmentGrid   # daily average SoC, [0, 1]
    soc: SegmentGrid        # momentary SoC, [0, 1]

    @staticmethod
    def uniform(
        p_bar: float,
        n_power: int = 10,
        n_dod: int = 10,
        n_soc_cycle: int = 10,
        n_soc_idle: int = 10,
        n_soc: int = 10,
    ) -> "GridSet":
        return GridSet(
            charge=make_grid(0.0, p_bar, n_power, label="charge"),
            discharge=make_grid(0.0, p_bar, n_power, label="discharge"),
            dod=make_grid(0.0, 1.0, n_dod, label="dod"),
            soc_cycle=make_grid(0.0, 1.0, n_soc_cycle, label="soc_cycle"),
            soc_idle=make_grid(0.0, 1.0, n_soc_idle, label="soc_idle"),
            soc=make_grid(0.0, 1.0, n_soc, label="soc"),
        )


@dataclass(frozen=True)
class DispatchInstance:
    """Fixed size/lifetime candidate plus the physical models."""

    e_bar_mwh: float
    p_bar_mw: float
    lifetime_years: int
    battery: BatteryParams
    degradation: DegradationParams
    grids: GridSet | None = None
    dod_reference: float | None = None  # None = derive from the scenario

    def __post_init__(self):
        if self.e_bar_mwh <= 0 or self.p_bar_mw <= 0:
            raise ParameterError("capacity and power rating must be positive")
        if self.lifetime_years < 1 or self.lifetime_years != int(self.lifetime_years):
            raise ParameterError("lifetime must be a whole number of years >= 1")
        if self.grids is None:
            object.__setattr__(self, "grids", GridSet.uniform(self.p_bar_mw))

    def reference_dod(self, spec: ScenarioSpec) -> float:
        """Average per-cycle depth used for the resistance-growth clock."""
        if self.dod_reference is not None:
            return self.dod_reference
        total = spec.total_excess_mwh() / 0.98 / self.e_bar_mwh
        return min(1.0, total / spec.num_cycles)


@dataclass
class DispatchVarMap:
    """Variable names of one built instance, for solution extraction."""

    e: list[list[str]]
    pch: list[list[str]]
    pdis: list[list[str]]
    pg: list[list[str]]
    pll: list[list[str]]
    pbch: list[list[str]]
    pbdis: list[list[str]]
    fade: list[str]
    seg_charge: list[list[list[str]]]   # [y][t][g]
    seg_discharge: list[list[list[str]]]
    seg_soc: list[list[list[str]]]
    bin_charge: list[list[list[str]]]
    bin_discharge: list[list[list[str]]]
    bin_soc: list[list[list[str]]]
    seg_dod: list[list[list[str]]]      # [y][c][i]
    seg_soc_cycle: list[list[list[str]]]
    bin_dod: list[list[list[str]]]
    bin_soc_cycle: list[list[list[str]]]
    seg_soc_idle: list[list[str]]       # [y][j]
    bin_soc_idle: list[list[str]]
    min_charge: list[list[str]]         # [y][c]


def _cell_midpoint_derivatives(
    battery: BatteryParams, grids: GridSet, n_fc: float
) -> tuple[np.ndarray, np.ndarray]:
    """d(power input)/d(terminal power) per (soc segment, power segment).

    Charging derivatives are < 1, discharging > 1; both evaluated at the
    segment midpoints with the aged resistance.
    """
    k_n = len(grids.soc)
    d_ch = np.empty((k_n, len(grids.charge)))
    d_dis = np.empty((k_n, len(grids.discharge)))
    for k in range(1, k_n + 1):
        soc_mid = grids.soc.midpoint(k)
        v = bat.open_circuit_voltage(battery, soc_mid)
        r = bat.internal_resistance(battery, soc_mid, n_fc)
        for g in range(1, len(grids.charge) + 1):
            p_cell = battery.to_cell_power(grids.charge.midpoint(g))
            d_ch[k - 1, g - 1] = bat.power_input_derivative(v, r, p_cell)
        for h in range(1, len(grids.discharge) + 1):
            p_cell = battery.to_cell_power(-grids.discharge.midpoint(h))
            d_dis[k - 1, h - 1] = bat.power_input_derivative(v, r, p_cell)
    return d_ch, d_dis


def build_dispatch_milp(
    spec: ScenarioSpec, inst: DispatchInstance
) -> tuple[Model, DispatchVarMap]:
    """Assemble the full scheduling MILP for one (size, lifetime) candidate."""
    grids = inst.grids
    e_bar, p_bar = inst.e_bar_mwh, inst.p_bar_mw
    years, steps = inst.lifetime_years, spec.num_steps
    dt, cycles = spec.dt_h, spec.num_cycles
    deg = inst.degradation
    battery = inst.battery.for_system(e_bar)
    weights = spec.weights(years)

    for grid, need_hi, tag in (
        (grids.charge, p_bar, "charge"),
        (grids.discharge, p_bar, "discharge"),
        (grids.dod, 1.0, "dod"),
        (grids.soc_cycle, 1.0, "soc_cycle"),
        (grids.soc_idle, 1.0, "soc_idle"),
        (grids.soc, 1.0, "soc"),
    ):
        if abs(grid.lo) > 1e-12 or abs(grid.hi - need_hi) > 1e-9:
            raise ModelError(
                f"{tag} grid covers [{grid.lo}, {grid.hi}], needs [0, {need_hi}]"
            )

    dod_ref = inst.reference_dod(spec)
    max_load = max(0.0, max(-d for d in spec.demand_mw))

    m = Model(f"dispatch_E{e_bar:g}_T{years}")
    vm = DispatchVarMap(*[[] for _ in range(21)])

    # Amortized investment, as a fixed variable so the solver's relative
    # gap is measured against the full per-diem cost.
    capex = (
        spec.price_capacity_usd_per_mwh * e_bar
        + spec.price_power_usd_per_mw * p_bar
    ) / (DAYS_PER_YEAR * years)
    capex_id = m.add_variable("capex_per_day", lo=capex, hi=capex)
    m.add_objective_term(capex_id, 1.0)

    fade_cap = 1.0 - deg.eol
    fade_ids = []
    for y in range(1, years + 2):
        hi = 0.0 if y == 1 else fade_cap
        fade_ids.append(m.add_variable(f"fade_y{y}", lo=0.0, hi=hi))
        vm.fade.append(f"fade_y{y}")

    # Per-year coefficient tables.
    d_ch_y, d_dis_y, rate_cyc_y, rate_idl_y = [], [], [], []
    for y in range(1, years + 1):
        n_fc_mid = DAYS_PER_YEAR * cycles * (y - 0.5) * dod_ref
        try:
            d_ch, d_dis = _cell_midpoint_derivatives(battery, grids, n_fc_mid)
        except bat.InfeasibleDrawError as exc:
            raise ModelError(
                f"discharge grid exceeds deliverable power in year {y}: {exc}"
            ) from exc
        d_ch_y.append(d_ch)
        d_dis_y.append(d_dis)
        n_cyc_mid = DAYS_PER_YEAR * cycles * (y - 0.5)
        tau_mid = DAYS_PER_YEAR * (y - 0.5)
        rate_cyc_y.append(
            np.array(
                [
                    [
                        bat.fade_rate_cycling(
                            deg,
                            grids.soc_cycle.midpoint(l),
                            grids.dod.midpoint(i),
                            n_cyc_mid,
                        )
                        * DAYS_PER_YEAR
                        for l in range(1, len(grids.soc_cycle) + 1)
                    ]
                    for i in range(1, len(grids.dod) + 1)
                ]
            )
        )
        rate_idl_y.append(
            np.array(
                [
                    bat.fade_rate_idling(deg, grids.soc_idle.midpoint(j), tau_mid)
                    * DAYS_PER_YEAR
                    for j in range(1, len(grids.soc_idle) + 1)
                ]
            )
        )

    c_en = spec.price_energy_usd_per_mwh
    c_ll = spec.value_lost_load_usd_per_mwh

    for y in range(1, years + 1):
        yi = y - 1
        w_y = weights[yi]
        e_ids, pch_ids, pdis_ids, pg_ids, pll_ids = [], [], [], [], []
        pbch_ids, pbdis_ids = [], []
        sel_ch, sel_dis, sel_soc = [], [], []
        qmax_ch = d_ch_y[yi] @ np.array(grids.charge.widths)   # per k
        qmax_dis = d_dis_y[yi] @ np.array(grids.discharge.widths)
        d_ch_lo = d_ch_y[yi].min(axis=0)   # per power segment, over SoC
        d_ch_hi = d_ch_y[yi].max(axis=0)
        d_dis_lo = d_dis_y[yi].min(axis=0)
        d_dis_hi = d_dis_y[yi].max(axis=0)

        for t in range(1, steps + 1):
            tag = f"y{y}_t{t}"
            e_ids.append(m.add_variable(f"chg_{tag}", lo=0.0, hi=e_bar))
            pch_ids.append(m.add_variable(f"Pch_{tag}", lo=0.0, hi=p_bar))
            pdis_ids.append(m.add_variable(f"Pdis_{tag}", lo=-p_bar, hi=0.0))
            pg_ids.append(
                m.add_variable(f"Pg_{tag}", lo=0.0, hi=spec.grid_limit_mw)
            )
            pll_ids.append(m.add_variable(f"Pll_{tag}", lo=0.0, hi=max_load))
            pbch_ids.append(
                m.add_variable(f"PBch_{tag}", lo=0.0, hi=float(qmax_ch.max()))
            )
            pbdis_ids.append(
                m.add_variable(f"PBdis_{tag}", lo=-float(qmax_dis.max()), hi=0.0)
            )
            sel_ch.append(add_segmented(m, grids.charge, f"Pch_{tag}"))
            sel_dis.append(add_segmented(m, grids.discharge, f"Pdis_{tag}"))
            sel_soc.append(add_segmented(m, grids.soc, f"soc_{tag}"))

        vm.e.append([m.var_names[v] for v in e_ids])
        vm.pch.append([m.var_names[v] for v in pch_ids])
        vm.pdis.append([m.var_names[v] for v in pdis_ids])
        vm.pg.append([m.var_names[v] for v in pg_ids])
        vm.pll.append([m.var_names[v] for v in pll_ids])
        vm.pbch.append([m.var_names[v] for v in pbch_ids])
        vm.pbdis.append([m.var_names[v] for v in pbdis_ids])
        vm.seg_charge.append(
            [[m.var_names[v] for v in s.segment_vars] for s in sel_ch]
        )
        vm.seg_discharge.append(
            [[m.var_names[v] for v in s.segment_vars] for s in sel_dis]
        )
        vm.seg_soc.append(
            [[m.var_names[v] for v in s.segment_vars] for s in sel_soc]
        )
        vm.bin_charge.append(
            [[m.var_names[v] for v in s.fill_binaries] for s in sel_ch]
        )
        vm.bin_discharge.append(
            [[m.var_names[v] for v in s.fill_binaries] for s in sel_dis]
        )
        vm.bin_soc.append(
            [[m.var_names[v] for v in s.fill_binaries] for s in sel_soc]
        )

        for t in range(1, steps + 1):
            ti = t - 1
            tag = f"y{y}_t{t}"
            # Power balance: grid + demand - charge - discharge + slack = 0.
            m.add_constraint(
                {
                    pg_ids[ti]: 1.0,
                    pch_ids[ti]: -1.0,
                    pdis_ids[ti]: -1.0,
                    pll_ids[ti]: 1.0,
                },
                "=",
                -spec.demand_mw[ti],
                f"bal_{tag}",
            )
            # Charge continuity with daily wrap-around (net-zero day).
            nxt = e_ids[ti + 1] if t < steps else e_ids[0]
            m.add_constraint(
                {
                    nxt: 1.0,
                    e_ids[ti]: -(1.0 - battery.ksd),
                    pbch_ids[ti]: -dt,
                    pbdis_ids[ti]: -dt,
                },
                "=",
                0.0,
                f"soc_{tag}",
            )
            # Available capacity shrinks with the year's starting fade.
            m.add_constraint(
                {e_ids[ti]: 1.0, fade_ids[yi]: e_bar}, "<=", e_bar, f"cap_{tag}"
            )
            # Aggregates tie to their segment fills.
            coeffs = {pch_ids[ti]: 1.0}
            for s in sel_ch[ti].segment_vars:
                coeffs[s] = -1.0
            m.add_constraint(coeffs, "=", 0.0, f"segch_{tag}")
            coeffs = {pdis_ids[ti]: 1.0}
            for s in sel_dis[ti].segment_vars:
                coeffs[s] = 1.0
            m.add_constraint(coeffs, "=", 0.0, f"segdis_{tag}")
            coeffs = {e_ids[ti]: 1.0}
            for s in sel_soc[ti].segment_vars:
                coeffs[s] = -e_bar
            m.add_constraint(coeffs, "=", 0.0, f"segsoc_{tag}")

            # Internal power, telescoped over SoC segments: the segment-1
            # conversion plus adjacent-segment increments gated by the
            # SoC fill binaries. Exact at integer fills, and the product
            # envelopes only span the small between-segment coefficient
            # differences, which keeps the relaxation honest.
            theta = sel_soc[ti].fill_binaries
            pbch_coeffs = {pbch_ids[ti]: 1.0}
            for g, s in enumerate(sel_ch[ti].segment_vars):
                pbch_coeffs[s] = -float(d_ch_y[yi][0, g])
            pbdis_coeffs = {pbdis_ids[ti]: 1.0}
            for h, s in enumerate(sel_dis[ti].segment_vars):
                pbdis_coeffs[s] = float(d_dis_y[yi][0, h])
            for k in range(2, len(grids.soc) + 1):
                ki = k - 1
                dd_ch = d_ch_y[yi][ki] - d_ch_y[yi][ki - 1]   # per g
                dd_dis = d_dis_y[yi][ki] - d_dis_y[yi][ki - 1]
                for name, dd, segs, agg in (
                    ("zc", dd_ch, sel_ch[ti].segment_vars, pbch_coeffs),
                    ("zd", dd_dis, sel_dis[ti].segment_vars, pbdis_coeffs),
                ):
                    widths = (
                        grids.charge.widths if name == "zc" else grids.discharge.widths
                    )
                    lo = float(sum(min(0.0, d) * w for d, w in zip(dd, widths)))
                    hi = float(sum(max(0.0, d) * w for d, w in zip(dd, widths)))
                    z = m.add_variable(
                        f"{name}_{tag}_k{k}", lo=min(0.0, lo), hi=max(0.0, hi)
                    )
                    agg[z] = -1.0 if name == "zc" else 1.0
                    # z = theta_k * sum_g dd_g seg_g, via a 4-row envelope.
                    m.add_constraint(
                        {z: 1.0, theta[ki]: -hi}, "<=", 0.0, f"{name}a_{tag}_k{k}"
                    )
                    m.add_constraint(
                        {z: 1.0, theta[ki]: -lo}, ">=", 0.0, f"{name}b_{tag}_k{k}"
                    )
                    coeffs = {z: 1.0, theta[ki]: -lo}
                    for dglob, s in zip(dd, segs):
                        coeffs[s] = -float(dglob)
                    m.add_constraint(coeffs, "<=", -lo, f"{name}c_{tag}_k{k}")
                    coeffs = {z: 1.0, theta[ki]: -hi}
                    for dglob, s in zip(dd, segs):
                        coeffs[s] = -float(dglob)
                    m.add_constraint(coeffs, ">=", -hi, f"{name}d_{tag}_k{k}")
            m.add_constraint(pbch_coeffs, "=", 0.0, f"pbch_{tag}")
            m.add_constraint(pbdis_coeffs, "=", 0.0, f"pbdis_{tag}")
            # Valid sandwiches on the conversion: whatever SoC segment is
            # active, its derivative lies between the min and max over
            # segments, so these never cut an integer point. They carry
            # real losses into the relaxation and stop zero-SoC selector
            # states from faking lossless flow.
            coeffs = {pbch_ids[ti]: 1.0}
            for g, s in enumerate(sel_ch[ti].segment_vars):
                coeffs[s] = -float(d_ch_hi[g])
            m.add_constraint(coeffs, "<=", 0.0, f"chub_{tag}")
            coeffs = {pbch_ids[ti]: 1.0}
            for g, s in enumerate(sel_ch[ti].segment_vars):
                coeffs[s] = -float(d_ch_lo[g])
            m.add_constraint(coeffs, ">=", 0.0, f"chlb_{tag}")
            coeffs = {pbdis_ids[ti]: 1.0}
            for h, s in enumerate(sel_dis[ti].segment_vars):
                coeffs[s] = float(d_dis_lo[h])
            m.add_constraint(coeffs, "<=", 0.0, f"disub_{tag}")
            coeffs = {pbdis_ids[ti]: 1.0}
            for h, s in enumerate(sel_dis[ti].segment_vars):
                coeffs[s] = float(d_dis_hi[h])
            m.add_constraint(coeffs, ">=", 0.0, f"dislb_{tag}")

            m.add_objective_term(pch_ids[ti], w_y * dt * c_en)
            m.add_objective_term(pdis_ids[ti], w_y * dt * c_en)
            m.add_objective_term(pll_ids[ti], w_y * dt * c_ll)

        # Cycle windows: depth, median SoC, and the fade recursion.
        fade_coeffs: dict[int, float] = {
            fade_ids[yi + 1]: 1.0,
            fade_ids[yi]: -1.0,
        }
        vm.seg_dod.append([])
        vm.seg_soc_cycle.append([])
        vm.bin_dod.append([])
        vm.bin_soc_cycle.append([])
        vm.min_charge.append([])
        for c, window in enumerate(spec.windows, start=1):
            ctag = f"y{y}_c{c}"
            sel_dod = add_segmented(m, grids.dod, f"dod_{ctag}")
            sel_cyc = add_segmented(m, grids.soc_cycle, f"csoc_{ctag}")
            vm.seg_dod[-1].append([m.var_names[v] for v in sel_dod.segment_vars])
            vm.seg_soc_cycle[-1].append(
                [m.var_names[v] for v in sel_cyc.segment_vars]
            )
            vm.bin_dod[-1].append([m.var_names[v] for v in sel_dod.fill_binaries])
            vm.bin_soc_cycle[-1].append(
                [m.var_names[v] for v in sel_cyc.fill_binaries]
            )
            # Depth = window energy throughput / (2 E_bar).
            coeffs = {}
            for t in window:
                coeffs[pbch_ids[t]] = dt / (2.0 * e_bar)
                coeffs[pbdis_ids[t]] = -dt / (2.0 * e_bar)
            for s in sel_dod.segment_vars:
                coeffs[s] = -1.0
            m.add_constraint(coeffs, "=", 0.0, f"dod_{ctag}")
            # Median SoC = min SoC + depth / 2.
            emin = m.add_variable(f"minchg_{ctag}", lo=0.0, hi=e_bar)
            vm.min_charge[-1].append(f"minchg_{ctag}")
            for t in window:
                m.add_constraint(
                    {emin: 1.0, e_ids[t]: -1.0}, "<=", 0.0, f"emin_{ctag}_t{t + 1}"
                )
            coeffs = {emin: 1.0 / e_bar}
            for s in sel_dod.segment_vars:
                coeffs[s] = 0.5
            for s in sel_cyc.segment_vars:
                coeffs[s] = -1.0
            m.add_constraint(coeffs, "=", 0.0, f"csoc_{ctag}")
            # Selector-product fade contribution for this window.
            gam = sel_dod.fill_binaries
            zet = sel_cyc.fill_binaries
            n_i, n_l = len(grids.dod), len(grids.soc_cycle)
            acc: dict[tuple[int, int], float] = {}
            rates = rate_cyc_y[yi]
            for i in range(1, n_i + 1):
                for l in range(1, n_l + 1):
                    r = float(rates[i - 1, l - 1])
                    for di, dl, s in (
                        (0, 0, +1.0),
                        (0, 1, -1.0),
                        (1, 0, -1.0),
                        (1, 1, +1.0),
                    ):
                        key = (i + di, l + dl)
                        if key[0] <= n_i and key[1] <= n_l:
                            acc[key] = acc.get(key, 0.0) + s * r
            for (i, l), coef in acc.items():
                if coef == 0.0:
                    continue
                u = linearize_binary_product(
                    m, [gam[i - 1], zet[l - 1]], f"u_{ctag}_i{i}_l{l}"
                )
                fade_coeffs[u] = fade_coeffs.get(u, 0.0) - coef

        # Daily average SoC and its idling fade contribution.
        sel_idl = add_segmented(m, grids.soc_idle, f"isoc_y{y}")
        vm.seg_soc_idle.append([m.var_names[v] for v in sel_idl.segment_vars])
        vm.bin_soc_idle.append([m.var_names[v] for v in sel_idl.fill_binaries])
        coeffs = {e: dt / (e_bar * HOURS_PER_DAY) for e in e_ids}
        for s in sel_idl.segment_vars:
            coeffs[s] = -1.0
        m.add_constraint(coeffs, "=", 0.0, f"isoc_y{y}")
        eta = sel_idl.fill_binaries
        rates_idl = rate_idl_y[yi]
        for j in range(1, len(grids.soc_idle) + 1):
            coef = float(rates_idl[j - 1])
            if j > 1:
                coef -= float(rates_idl[j - 2])
            fade_coeffs[eta[j - 1]] = fade_coeffs.get(eta[j - 1], 0.0) - coef
        m.add_constraint(fade_coeffs, "=", 0.0, f"fade_y{y}")

    return m, vm


# -- Schedule extraction ------------------------------------------------


@dataclass
class Schedule:
    """Physical quantities of a solved dispatch, per year and timestep."""

    e_bar_mwh: float
    p_bar_mw: float
    dt_h: float
    windows: tuple[tuple[int, ...], ...]
    e: np.ndarray        # (Y, T) MWh at step start
    pch: np.ndarray      # (Y, T) MW terminal charge, >= 0
    pdis: np.ndarray     # (Y, T) MW terminal discharge, <= 0
    pbch: np.ndarray     # (Y, T) MW internal charge
    pbdis: np.ndarray    # (Y, T) MW internal discharge
    pg: np.ndarray       # (Y, T) MW grid import
    pll: np.ndarray      # (Y, T) MW lost load
    fade: np.ndarray     # (Y+1,) fade before year y (last = end of life)
    dod: np.ndarray      # (Y, C) per-window depth of discharge
    soc_cycle: np.ndarray  # (Y, C) per-window median SoC
    soc_idle: np.ndarray   # (Y,) daily average SoC
    objective: float | None = None

    @property
    def years(self) -> int:
        return self.e.shape[0]

    @property
    def steps(self) -> int:
        return self.e.shape[1]

    def avg_soc(self, y: int) -> float:
        return float(self.e[y].mean() / self.e_bar_mwh)

    def charging_steps(self, y: int, threshold_frac: float = 0.01) -> int:
        return int((self.pch[y] > threshold_frac * self.p_bar_mw).sum())

    def cumulative_full_cycles(self) -> np.ndarray:
        """Equivalent full cycles completed by the end of each year."""
        daily = (self.pbch - self.pbdis).sum(axis=1) * self.dt_h
        per_year = DAYS_PER_YEAR * daily / (2.0 * self.e_bar_mwh)
        return np.cumsum(per_year)


def _grab(sol: Solution, names: list[list[str]]) -> np.ndarray:
    return np.array([[sol.value(n) for n in row] for row in names])


def _check_fill(
    sol: Solution, grid: SegmentGrid, segs: list[str], bins: list[str], where: str
) -> None:
    b = [sol.value(n) for n in bins]
    s = [sol.value(n) for n in segs]
    for i in range(len(b) - 1):
        if b[i + 1] > b[i] + FILL_TOL:
            raise ExtractionError(f"fill binaries increase at {where} segment {i + 1}")
    for i, w in enumerate(grid.widths):
        hi = w * b[i] + FILL_TOL
        lo = (w * b[i + 1] if i + 1 < len(b) else 0.0) - FILL_TOL
        if not lo <= s[i] <= hi:
            raise ExtractionError(f"segment {i + 1} at {where} breaks consecutive fill")


def extract_schedule(
    sol: Solution,
    vm: DispatchVarMap,
    spec: ScenarioSpec,
    inst: DispatchInstance,
) -> Schedule:
    """Rebuild physical quantities from a feasible solution."""
    if not sol.ok:
        raise ExtractionError(f"cannot extract from a {sol.status} solution")
    grids = inst.grids
    years = inst.lifetime_years
    for y in range(years):
        for t in range(spec.num_steps):
            _check_fill(
                sol, grids.charge, vm.seg_charge[y][t], vm.bin_charge[y][t],
                f"charge y{y + 1} t{t + 1}",
            )
            _check_fill(
                sol, grids.discharge, vm.seg_discharge[y][t], vm.bin_discharge[y][t],
                f"discharge y{y + 1} t{t + 1}",
            )
            _check_fill(
                sol, grids.soc, vm.seg_soc[y][t], vm.bin_soc[y][t],
                f"soc y{y + 1} t{t + 1}",
            )
        for c in range(spec.num_cycles):
            _check_fill(
                sol, grids.dod, vm.seg_dod[y][c], vm.bin_dod[y][c],
                f"dod y{y + 1} c{c + 1}",
            )
            _check_fill(
                sol, grids.soc_cycle, vm.seg_soc_cycle[y][c], vm.bin_soc_cycle[y][c],
                f"soc_cycle y{y + 1} c{c + 1}",
            )
        _check_fill(
            sol, grids.soc_idle, vm.seg_soc_idle[y], vm.bin_soc_idle[y],
            f"soc_idle y{y + 1}",
        )

    dod = np.array(
        [
            [sum(sol.value(n) for n in vm.seg_dod[y][c]) for c in range(spec.num_cycles)]
            for y in range(years)
        ]
    )
    soc_idle = np.array(
        [sum(sol.value(n) for n in vm.seg_soc_idle[y]) for y in range(years)]
    )
    # Median cycle SoC is reported from its physical definition
    # (min window SoC + depth/2). The model's segment variables agree
    # whenever fade pressure pins the min-charge variable; with slack
    # end-of-life they may sit lower, which is feasible but not the
    # realized quantity.
    e_vals = _grab(sol, vm.e)
    soc_cycle = np.array(
        [
            [
                min(e_vals[y, t] for t in spec.windows[c]) / inst.e_bar_mwh
                + dod[y, c] / 2.0
                for c in range(spec.num_cycles)
            ]
            for y in range(years)
        ]
    )
    return Schedule(
        e_bar_mwh=inst.e_bar_mwh,
        p_bar_mw=inst.p_bar_mw,
        dt_h=spec.dt_h,
        windows=spec.windows,
        e=e_vals,
        pch=_grab(sol, vm.pch),
        pdis=_grab(sol, vm.pdis),
        pbch=_grab(sol, vm.pbch),
        pbdis=_grab(sol, vm.pbdis),
        pg=_grab(sol, vm.pg),
        pll=_grab(sol, vm.pll),
        fade=np.array([sol.value(n) for n in vm.fade]),
        dod=dod,
        soc_cycle=soc_cycle,
        soc_idle=soc_idle,
        objective=sol.objective,
    )


def fade_trajectory(
    schedule: Schedule,
    deg: DegradationParams,
    grids: GridSet,
) -> np.ndarray:
    """Replay the fade recursion from the schedule's realized quantities.

    Uses the same segment-midpoint rates as the model: each year adds
    365 x the cycling rate of the active (depth, median SoC) segments
    per window plus 365 x the idling rate of the active average-SoC
    segment, evaluated at mid-year cycle counts and days.
    """
    years = schedule.years
    cycles = len(schedule.windows)
    out = np.zeros(years + 1)
    for y in range(1, years + 1):
        inc = 0.0
        n_mid = DAYS_PER_YEAR * cycles * (y - 0.5)
        tau_mid = DAYS_PER_YEAR * (y - 0.5)
        for c in range(cycles):
            i = grids.dod.active_segment(schedule.dod[y - 1, c])
            l = grids.soc_cycle.active_segment(schedule.soc_cycle[y - 1, c])
            if i == 0 or l == 0:
                continue
            inc += (
                bat.fade_rate_cycling(
                    deg,
                    grids.soc_cycle.midpoint(l),
                    grids.dod.midpoint(i),
                    n_mid,
                )
                * DAYS_PER_YEAR
            )
        j = grids.soc_idle.active_segment(schedule.soc_idle[y - 1])
        if j > 0:
            inc += (
                bat.fade_rate_idling(deg, grids.soc_idle.midpoint(j), tau_mid)
                * DAYS_PER_YEAR
            )
        out[y] = out[y - 1] + inc
    return out


# -- Deterministic re-approximation (for linearization-error studies) ---


def approximate_internal_power(
    p_t: float,
    soc: float,
    n_fc: float,
    battery: BatteryParams,
    grids: GridSet,
) -> float:
    """The model's piecewise-linear internal power at one operating point.

    Canonical consecutive fill of the terminal power, derivative
    coefficients at segment midpoints, SoC selector from the segment
    containing ``soc`` (zero SoC uses the first segment).
    """
    k = max(1, grids.soc.active_segment(soc))
    v = bat.open_circuit_voltage(battery, grids.soc.midpoint(k))
    r = bat.internal_resistance(battery, grids.soc.midpoint(k), n_fc)
    if p_t >= 0:
        fills, _ = grids.charge.canonical_fill(p_t)
        return sum(
            bat.power_input_derivative(
                v, r, battery.to_cell_power(grids.charge.midpoint(g))
            )
            * fill
            for g, fill in enumerate(fills, start=1)
        )
    fills, _ = grids.discharge.canonical_fill(-p_t)
    return -sum(
        bat.power_input_derivative(
            v, r, battery.to_cell_power(-grids.discharge.midpoint(h))
        )
        * fill
        for h, fill in enumerate(fills, start=1)
    )


# -- CSV artifacts -------------------------------------------------------

SCHEDULE_COLUMNS = (
    "year", "step", "charge_mwh", "p_charge_mw", "p_discharge_mw",
    "pb_charge_mw", "pb_discharge_mw", "p_grid_mw", "p_lost_mw",
)


def write_schedule_csv(schedule: Schedule, destination) -> None:
    rows = [SCHEDULE_COLUMNS]
    for y in range(schedule.years):
        for t in range(schedule.steps):
            rows.append(
                (
                    y + 1,
                    t + 1,
                    repr(schedule.e[y, t]),
                    repr(schedule.pch[y, t]),
                    repr(schedule.pdis[y, t]),
                    repr(schedule.pbch[y, t]),
                    repr(schedule.pbdis[y, t]),
                    repr(schedule.pg[y, t]),
                    repr(schedule.pll[y, t]),
                )
            )
    _write_csv(rows, destination)


def read_schedule_csv(
    source,
    e_bar_mwh: float,
    p_bar_mw: float,
    dt_h: float,
    windows: tuple[tuple[int, ...], ...],
) -> Schedule:
    with _open_maybe(source) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SCHEDULE_COLUMNS:
            raise ExtractionError(
                f"unexpected schedule header {header!r}"
            )
        data: dict[tuple[int, int], tuple[float, ...]] = {}
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                y, t = int(row[0]), int(row[1])
                vals = tuple(float(v) for v in row[2:9])
            except (ValueError, IndexError) as exc:
                raise ExtractionError(f"bad schedule row {ln}: {exc}") from exc
            data[(y, t)] = vals
    years = max(k[0] for k in data)
    steps = max(k[1] for k in data)
    if len(data) != years * steps:
        raise ExtractionError("schedule rows do not form a full (year, step) grid")
    arrays = [np.zeros((years, steps)) for _ in range(7)]
    for (y, t), vals in data.items():
        for a, v in zip(arrays, vals):
            a[y - 1, t - 1] = v
    e, pch, pdis, pbch, pbdis, pg, pll = arrays
    sched = Schedule(
        e_bar_mwh=e_bar_mwh,
        p_bar_mw=p_bar_mw,
        dt_h=dt_h,
        windows=windows,
        e=e, pch=pch, pdis=pdis, pbch=pbch, pbdis=pbdis, pg=pg, pll=pll,
        fade=np.zeros(years + 1),
        dod=np.zeros((years, len(windows))),
        soc_cycle=np.zeros((years, len(windows))),
        soc_idle=np.zeros(years),
    )
    _fill_realized(sched)
    return sched


def _fill_realized(schedule: Schedule) -> None:
    """Recompute window depth / median SoC / average SoC from trajectories."""
    e_bar = schedule.e_bar_mwh
    for y in range(schedule.years):
        for c, window in enumerate(schedule.windows):
            thr = sum(
                schedule.pbch[y, t] - schedule.pbdis[y, t] for t in window
            ) * schedule.dt_h
            schedule.dod[y, c] = thr / (2.0 * e_bar)
            emin = min(schedule.e[y, t] for t in window)
            schedule.soc_cycle[y, c] = emin / e_bar + schedule.dod[y, c] / 2.0
        schedule.soc_idle[y] = schedule.e[y].mean() / e_bar


def write_summary_csv(schedule: Schedule, destination) -> None:
    """Per-year summary: fade, average SoC, depth, median SoC, cycles."""
    rows = [
        (
            "year", "fade_start", "fade_end", "avg_soc",
            *(f"dod_c{c + 1}" for c in range(len(schedule.windows))),
            *(f"soc_cycle_c{c + 1}" for c in range(len(schedule.windows))),
            "full_cycles_to_date", "charging_steps",
        )
    ]
    n_fc = schedule.cumulative_full_cycles()
    for y in range(schedule.years):
        rows.append(
            (
                y + 1,
                repr(float(schedule.fade[y])),
                repr(float(schedule.fade[y + 1])),
                repr(schedule.avg_soc(y)),
                *(repr(float(schedule.dod[y, c])) for c in range(len(schedule.windows))),
                *(
                    repr(float(schedule.soc_cycle[y, c]))
                    for c in range(len(schedule.windows))
                ),
                repr(float(n_fc[y])),
                schedule.charging_steps(y),
            )
        )
    _write_csv(rows, destination)


def _write_csv(rows, destination) -> None:
    if hasattr(destination, "write"):
        csv.writer(destination, lineterminator="\n").writerows(rows)
    else:
        with open(destination, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


class _open_maybe:
    def __init__(self, source):
        self.source = source
        self.fh = None

    def __enter__(self):
        if hasattr(self.source, "read"):
            return self.source
        self.fh = open(self.source, newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()
        return False
