"""INI-style run configuration with units spelled out in the key names.

One file describes a whole study: battery and degradation constants,
the scenario (demand CSV, prices, windows), segment grids, solver
command, sweep grids, and validation tolerances. Every physical key
carries its unit suffix, e.g. ``price_energy_usd_per_mwh = 80``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .battery import BatteryParams, DegradationParams, ResistanceSegment, default_battery
from .dispatch import GridSet, ScenarioSpec
from .errors import ConfigError
from .milp import DEFAULT_MIP_GAP, DEFAULT_SOLVER_CMD, DEFAULT_TIME_LIMIT
from .profiles import read_demand_csv
from .pwl import make_grid

SOLVER_ENV_VAR = "BESSOPT_SOLVER"


@dataclass
class SolverConfig:
    command: str = DEFAULT_SOLVER_CMD
    dialect: str = "generic"
    time_limit_s: float = DEFAULT_TIME_LIMIT
    mip_gap: float = DEFAULT_MIP_GAP

    def resolved_command(self) -> str:
        return os.environ.get(SOLVER_ENV_VAR, self.command)


@dataclass
class SweepConfig:
    power_mw: float = 7.0
    energy_grid_mwh: tuple[float, ...] = ()
    lifetime_grid_years: tuple[int, ...] = ()
    workers: int = 1
    dod_reference: float | None = None


@dataclass
class Tolerances:
    balance_mw: float = 1e-3
    soc_bound_mwh: float = 1e-3
    fade: float = 0.02


@dataclass
class RunConfig:
    battery: BatteryParams
    degradation: DegradationParams
    scenario: ScenarioSpec
    grid_counts: dict[str, int]
    solver: SolverConfig
    sweep: SweepConfig
    tolerances: Tolerances
    output_dir: Path = Path(".")
    source_path: Path | None = None

    def grids(self, p_bar_mw: float) -> GridSet:
        n = self.grid_counts
        return GridSet(
            charge=make_grid(0.0, p_bar_mw, n["charge"], label="charge"),
            discharge=make_grid(0.0, p_bar_mw, n["discharge"], label="discharge"),
            dod=make_grid(0.0, 1.0, n["dod"], label="dod"),
            soc_cycle=make_grid(0.0, 1.0, n["soc_cycle"], label="soc_cycle"),
            soc_idle=make_grid(0.0, 1.0, n["soc_idle"], label="soc_idle"),
            soc=make_grid(0.0, 1.0, n["soc"], label="soc"),
        )


_DEFAULT_GRID_COUNTS = {
    "charge": 10,
    "discharge": 10,
    "dod": 10,
    "soc_cycle": 10,
    "soc_idle": 10,
    "soc": 10,
}


def _parse_windows(text: str, steps: int) -> tuple[tuple[int, ...], ...]:
    """Windows like '0-11, 12-23' (inclusive hour ranges) or 'all'."""
    text = text.strip()
    if not text or text.lower() == "all":
        return (tuple(range(steps)),)
    windows = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            a, b = chunk.split("-", 1)
            windows.append(tuple(range(int(a), int(b) + 1)))
        else:
            windows.append((int(chunk),))
    return tuple(windows)


def _parse_segments(text: str) -> tuple[ResistanceSegment, ...]:
    """Resistance pieces as 'soc_hi:a:b' triples separated by commas."""
    out = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad resistance segment {chunk!r}, want soc_hi:a:b")
        out.append(ResistanceSegment(float(parts[0]), float(parts[1]), float(parts[2])))
    return tuple(out)


def _parse_range(text: str, integer: bool = False):
    """Grid spec 'lo:hi:step' or comma list; 'lo:hi' steps by 1."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1.0
        n = int(round((hi - lo) / step)) + 1
        vals = [lo + i * step for i in range(n) if lo + i * step <= hi + 1e-9]
    else:
        vals = [float(p) for p in text.split(",") if p.strip()]
    if integer:
        return tuple(int(round(v)) for v in vals)
    return tuple(round(v, 9) for v in vals)


def load_config(path) -> RunConfig:
    """Read a study configuration, resolving the demand CSV path."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    def get(section, key, cast=float, default=None):
        if not cp.has_option(section, key):
            if default is None:
                raise ConfigError(f"missing [{section}] {key} in {path}")
            return default
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc

    b = default_battery()
    battery = BatteryParams(
        kv=get("battery", "kv_v_per_pu", float, b.kv),
        v0=get("battery", "v0_v", float, b.v0),
        rin_segments=(
            _parse_segments(cp.get("battery", "rin_segments_ohm"))
            if cp.has_option("battery", "rin_segments_ohm")
            else b.rin_segments
        ),
        a_fc=get("battery", "a_fc_ohm_per_fc", float, b.a_fc),
        ksd=get("battery", "ksd_per_step", float, b.ksd),
        cell_energy_wh=get("battery", "cell_energy_wh", float, b.cell_energy_wh),
    )
    d = DegradationParams()
    degradation = DegradationParams(
        cyc_amp=get("degradation", "cyc_amp", float, d.cyc_amp),
        cyc_soc_exp=get("degradation", "cyc_soc_exp", float, d.cyc_soc_exp),
        cyc_dod_exp=get("degradation", "cyc_dod_exp", float, d.cyc_dod_exp),
        idl_amp=get("degradation", "idl_amp", float, d.idl_amp),
        idl_soc_exp=get("degradation", "idl_soc_exp", float, d.idl_soc_exp),
        idl_tau_exp=get("degradation", "idl_tau_exp", float, d.idl_tau_exp),
        eol=get("degradation", "eol_fraction", float, d.eol),
    )

    demand_key = get("scenario", "demand_csv", str)
    demand_path = Path(demand_key)
    if not demand_path.is_absolute():
        demand_path = path.parent / demand_path
    if not demand_path.exists():
        raise ConfigError(f"demand file not found: {demand_path}")
    demand = read_demand_csv(demand_path)
    scenario = ScenarioSpec(
        demand_mw=demand,
        dt_h=get("scenario", "timestep_h", float, 1.0),
        grid_limit_mw=get("scenario", "grid_limit_mw", float),
        windows=_parse_windows(
            get("scenario", "cycle_windows", str, "all"), len(demand)
        ),
        price_energy_usd_per_mwh=get("scenario", "price_energy_usd_per_mwh", float),
        price_capacity_usd_per_mwh=1000.0
        * get("scenario", "price_capacity_usd_per_kwh", float),
        price_power_usd_per_mw=1000.0
        * get("scenario", "price_power_usd_per_kw", float),
        value_lost_load_usd_per_mwh=get(
            "scenario", "value_lost_load_usd_per_mwh", float, 10_000.0
        ),
    )

    counts = dict(_DEFAULT_GRID_COUNTS)
    for key in counts:
        counts[key] = get("pwl", f"segments_{key}", int, counts[key])

    solver = SolverConfig(
        command=get("solver", "command", str, DEFAULT_SOLVER_CMD),
        dialect=get("solver", "dialect", str, "generic"),
        time_limit_s=get("solver", "time_limit_s", float, DEFAULT_TIME_LIMIT),
        mip_gap=get("solver", "mip_gap", float, DEFAULT_MIP_GAP),
    )

    dod_ref_raw = get("sizing", "dod_reference", str, "auto")
    sweep = SweepConfig(
        power_mw=get("sizing", "power_mw", float, 7.0),
        energy_grid_mwh=(
            _parse_range(cp.get("sizing", "energy_grid_mwh"))
            if cp.has_option("sizing", "energy_grid_mwh")
            else ()
        ),
        lifetime_grid_years=(
            _parse_range(cp.get("sizing", "lifetime_grid_years"), integer=True)
            if cp.has_option("sizing", "lifetime_grid_years")
            else ()
        ),
        workers=get("sizing", "workers", int, 1),
        dod_reference=None if dod_ref_raw == "auto" else float(dod_ref_raw),
    )

    tolerances = Tolerances(
        balance_mw=get("tolerances", "balance_mw", float, 1e-3),
        soc_bound_mwh=get("tolerances", "soc_bound_mwh", float, 1e-3),
        fade=get("tolerances", "fade", float, 0.02),
    )

    return RunConfig(
        battery=battery,
        degradation=degradation,
        scenario=scenario,
        grid_counts=counts,
        solver=solver,
        sweep=sweep,
        tolerances=tolerances,
        source_path=path,
    )


def write_example_config(directory, profile: str = "one_peak") -> Path:
    """Materialize a ready-to-run config plus its demand CSV."""
    from .profiles import default_windows, demand_profile, write_demand_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    demand_csv = directory / f"{profile}.csv"
    write_demand_csv(demand_profile(profile), demand_csv)
    windows = default_windows(profile)
    windows_txt = ", ".join(f"{w[0]}-{w[-1]}" for w in windows)
    body = f"""\
[battery]
kv_v_per_pu = 0.15
v0_v = 3.2
rin_segments_ohm = 0.3:-0.966667:0.95, 0.7:-0.025:0.6675, 1.0:0.166667:0.533333
a_fc_ohm_per_fc = 0.000131
ksd_per_step = 0.0
cell_energy_wh = 1.47375

[degradation]
cyc_amp = 0.00568
cyc_soc_exp = -1.943
cyc_dod_exp = 0.7162
idl_amp = 0.000112
idl_soc_exp = 0.7388
idl_tau_exp = 0.8
eol_fraction = 0.75

[scenario]
demand_csv = {demand_csv.name}
timestep_h = 1.0
grid_limit_mw = 10.0
cycle_windows = {windows_txt}
price_energy_usd_per_mwh = 80.0
price_capacity_usd_per_kwh = 290.0
price_power_usd_per_kw = 90.0
value_lost_load_usd_per_mwh = 10000.0

[pwl]
segments_charge = 10
segments_discharge = 10
segments_dod = 10
segments_soc_cycle = 10
segments_soc_idle = 10
segments_soc = 10

[solver]
command = {DEFAULT_SOLVER_CMD}
dialect = generic
time_limit_s = 3600
mip_gap = 0.0001

[sizing]
power_mw = 7.0
energy_grid_mwh = 18:32:0.5
lifetime_grid_years = 8:20
workers = 1
dod_reference = auto

[tolerances]
balance_mw = 0.001
soc_bound_mwh = 0.001
fade = 0.02
"""
    cfg_path = directory / f"{profile}.ini"
    cfg_path.write_text(body)
    return cfg_path
