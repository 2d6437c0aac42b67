"""Parameter sweeps behind the command-line tool.

Each ``run_*`` function takes a :class:`SweepConfig` and returns a
:class:`Table` (or, for ``channel-apply``, a JSON-ready dict).  Invariants of
each sweep are asserted row by row and reported as ``InvariantViolation`` with
the offending row index.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .entanglement import Measure, bell_output_bound, measure_entanglement
from .errors import ConfigError, DivergenceError, EntransError, InvariantViolation
from .fock_space import BellKind, DensityOperator, FockState, ModeLayout, make_bell_state
from .fourport import DeviceSpec, FiberSpec, apply_channel, bell_output_closed_form, fiber_transmission
from .gaussian import (
    GaussianState,
    ScalarDevice,
    ThresholdInputs,
    amplifier_margin,
    fiber_margin,
    is_separable_ppt,
    lmax_fiber,
    margin_crossing,
    max_gain,
    nth_threshold,
    tmsv_covariance,
    transform_moments,
    transform_moments_device,
)
from .ppt_optimizer import ppt_relative_entropy

SCHEMA_VERSION = 1
EXPERIMENTS = ("bell-decay", "tmsv-separability", "amplifier-gain", "channel-apply")
LN2 = math.log(2.0)
OPTIMIZER_TOL = 1e-4
THRESHOLD_TOL = 1e-6
VERIFY_STRIDE = 20
# covariance entries grow like cosh(2 zeta); past this the crossing error from rounding nears 1e-6
MAX_GAUSSIAN_ZETA = 10.0

DEFAULT_GRIDS = {
    "bell-decay": (0.0, 2.0, 81),
    "tmsv-separability": (0.0, 2.0, 81),
    "amplifier-gain": (1.0, 2.2, 61),
}
DEFAULT_CUTOFFS = {"bell-decay": (6, 6), "tmsv-separability": (14, 14), "amplifier-gain": (14, 14),
                   "channel-apply": (6, 6)}


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    steps: int

    def __post_init__(self) -> None:
        if int(self.steps) != self.steps or self.steps < 2:
            raise ConfigError(f"grid steps must be an integer >= 2, got {self.steps}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)) or self.stop <= self.start:
            raise ConfigError(f"grid needs finite start < stop, got {self.start}..{self.stop}")
        object.__setattr__(self, "steps", int(self.steps))

    def points(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class SweepConfig:
    experiment: str
    grid: Grid | None = None
    psi_kind: str = "psi+"
    phi_kind: str = "phi+"
    zeta: float = 1.0
    n_th: float | None = None
    sigma: int | None = None
    T1: float | None = None
    T2: float | None = None
    R: float = 0.0
    field_cutoff: int | None = None
    device_cutoff: int | None = None
    measure: str = "relative_entropy"
    input: str | None = None
    device: dict | None = None
    out: str | None = None
    format: str = "csv"
    verify: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.grid is None and self.experiment in DEFAULT_GRIDS:
            object.__setattr__(self, "grid", Grid(*DEFAULT_GRIDS[self.experiment]))
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        try:
            Measure(self.measure)
        except ValueError:
            raise ConfigError(f"unknown measure {self.measure!r}") from None
        for name in ("psi_kind", "phi_kind"):
            try:
                kind = BellKind(getattr(self, name))
            except ValueError:
                raise ConfigError(f"{name} must be one of psi+, psi-, phi+, phi-") from None
            if kind.family != name[:3]:
                raise ConfigError(f"{name} must be a {name[:3]} state, got {kind.value}")
        if self.sigma not in (None, 1, -1):
            raise ConfigError(f"sigma must be +1 or -1, got {self.sigma}")
        if self.n_th is not None and not self.n_th >= 0:
            raise ConfigError(f"n_th must be >= 0, got {self.n_th}")
        if not self.zeta >= 0 or not math.isfinite(self.zeta):
            raise ConfigError(f"zeta must be finite and >= 0, got {self.zeta}")
        if not 0 <= self.R <= 1:
            raise ConfigError(f"R must lie in [0, 1], got {self.R}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("field_cutoff", "device_cutoff"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value < 0):
                raise ConfigError(f"{name} must be a nonnegative integer, got {value}")

    @property
    def cutoffs(self) -> tuple[int, int]:
        field_default, device_default = DEFAULT_CUTOFFS[self.experiment]
        fc = field_default if self.field_cutoff is None else int(self.field_cutoff)
        dc = device_default if self.device_cutoff is None else int(self.device_cutoff)
        return fc, dc

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "SweepConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        data = dict(data)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        grid = data.get("grid")
        if isinstance(grid, dict):
            missing = {"start", "stop", "steps"} - set(grid)
            if missing:
                raise ConfigError(f"grid is missing {', '.join(sorted(missing))}")
            data["grid"] = Grid(float(grid["start"]), float(grid["stop"]), grid["steps"])
        elif grid is not None and not isinstance(grid, Grid):
            raise ConfigError("grid must be an object with start, stop and steps")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class Table:
    experiment: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def schema(self) -> str:
        return f"entrans/{self.experiment}/v{SCHEMA_VERSION}"

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)


def format_value(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _json_value(x: Any) -> Any:
    if isinstance(x, (bool, np.bool_)) or x is None:
        return None if x is None else bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.12g}")
    return x


def to_csv(table: Table) -> str:
    lines = [f"# schema: {table.schema}", ",".join(table.columns)]
    lines += [",".join(format_value(v) for v in row) for row in table.rows]
    lines += [f"# {key}: {format_value(value)}" for key, value in table.summary.items()]
    return "\n".join(lines) + "\n"


def to_json(table: Table) -> str:
    payload = {
        "schema": table.schema,
        "columns": table.columns,
        "rows": [[_json_value(v) for v in row] for row in table.rows],
        "summary": {k: _json_value(v) for k, v in table.summary.items()},
    }
    return json.dumps(payload, indent=2) + "\n"


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _indexed(experiment: str, index: int, x: float, exc: Exception) -> Exception:
    exc.args = (f"{experiment} row {index} (x={x:.6g}): {exc}",) + exc.args[1:]
    return exc


# bell-decay


def _bell_output(kind: str, T: complex, cutoffs: tuple[int, int]) -> DensityOperator:
    field_cut, device_cut = cutoffs
    rho = make_bell_state(kind, ModeLayout((field_cut, field_cut))).density()
    return apply_channel(rho, DeviceSpec.diagonal(T, T), device_cutoff=device_cut)


def _bell_row(args: tuple) -> list:
    index, l_over_L, psi_kind, phi_kind, measure, cutoffs = args
    try:
        T = fiber_transmission(FiberSpec(l_over_L))
        t_sq = abs(T) ** 2
        reports = [measure_entanglement(_bell_output(k, T, cutoffs), measure) for k in (psi_kind, phi_kind)]
    except EntransError as exc:
        raise _indexed("bell-decay", index, l_over_L, exc)
    e_psi, e_phi = (r.value for r in reports)
    return [l_over_L, t_sq, e_psi, e_phi, e_psi / LN2, e_phi / LN2,
            bell_output_bound(psi_kind, t_sq), bell_output_bound(phi_kind, t_sq),
            all(r.converged for r in reports)]


BELL_COLUMNS = ["l_over_L", "T_sq", "E_psi", "E_phi", "E_psi_norm", "E_phi_norm", "bound_psi", "bound_phi",
                "converged"]


def run_bell_decay(cfg: SweepConfig) -> Table:
    if cfg.grid.start < 0:
        raise ConfigError("fiber length grid must start at l/L >= 0")
    measure = Measure(cfg.measure)
    if measure in (Measure.REDUCED_ENTROPY, Measure.UPPER_BOUND):
        raise ConfigError(f"measure {measure.value} is not available for mixed outputs")
    grid = cfg.grid.points()
    items = [(i, float(x), cfg.psi_kind, cfg.phi_kind, measure.value, cfg.cutoffs) for i, x in enumerate(grid)]
    table = Table("bell-decay", list(BELL_COLUMNS), _parallel_map(_bell_row, items, cfg.workers))
    check_bell_decay(table, measure)
    table.summary = {
        "measure": measure.value,
        "units": "nats",
        "psi_kind": cfg.psi_kind,
        "phi_kind": cfg.phi_kind,
        "all_converged": all(row[-1] for row in table.rows),
    }
    if cfg.verify:
        table.summary["verified_rows"] = verify_bell_decay(table, cfg)
    return table


def check_bell_decay(table: Table, measure: Measure) -> None:
    """Lossless endpoint, family ordering, monotone decay and the closed-form bounds."""
    entropic = measure in (Measure.RELATIVE_ENTROPY, Measure.LS_ENTANGLEMENT)
    previous = None
    for i, (x, t_sq, e_psi, e_phi, _, _, b_psi, b_phi, _) in enumerate(table.rows):
        if x == 0 and entropic and (abs(e_psi - LN2) > OPTIMIZER_TOL or abs(e_phi - LN2) > OPTIMIZER_TOL):
            raise InvariantViolation(f"bell-decay row {i}: lossless endpoint gives "
                                     f"E_psi={e_psi:.8g}, E_phi={e_phi:.8g}, expected ln 2")
        if x > 0 and entropic and not e_phi < e_psi:
            raise InvariantViolation(f"bell-decay row {i} (l/L={x:.6g}): E_phi={e_phi:.8g} >= E_psi={e_psi:.8g}")
        if entropic and (e_psi > b_psi + OPTIMIZER_TOL or e_phi > b_phi + OPTIMIZER_TOL):
            raise InvariantViolation(f"bell-decay row {i} (l/L={x:.6g}): value exceeds its closed-form bound")
        if previous is not None and (e_psi > previous[0] + OPTIMIZER_TOL or e_phi > previous[1] + OPTIMIZER_TOL):
            raise InvariantViolation(f"bell-decay row {i} (l/L={x:.6g}): entanglement increased along the fiber")
        previous = (e_psi, e_phi)


def verify_bell_decay(table: Table, cfg: SweepConfig) -> int:
    """Re-derive every ``VERIFY_STRIDE``-th row from the closed-form output matrices."""
    checked = 0
    for i in range(0, len(table.rows), VERIFY_STRIDE):
        x = table.rows[i][0]
        T = np.exp(-x)
        for col, kind in ((2, cfg.psi_kind), (3, cfg.phi_kind)):
            rho = _bell_output(kind, T, cfg.cutoffs)
            block = rho.matrix.reshape(rho.layout.dims * 2)[:2, :2, :2, :2].reshape(4, 4)
            closed = bell_output_closed_form(kind, T, T)
            if np.max(np.abs(block - closed)) > 1e-10:
                raise InvariantViolation(f"bell-decay row {i}: Fock output differs from the closed form")
            if cfg.measure == Measure.RELATIVE_ENTROPY.value:
                ref = ppt_relative_entropy(closed).value
                if abs(ref - table.rows[i][col]) > OPTIMIZER_TOL:
                    raise InvariantViolation(f"bell-decay row {i}: REE {table.rows[i][col]:.8g} vs "
                                             f"closed-form input {ref:.8g}")
        checked += 1
    return checked


# Gaussian sweeps


def _symmetric_margin(zeta: float, dev: ScalarDevice) -> float:
    """Independent route: symmetric two-mode covariance ``[[a, c Z], [c Z, a]]`` has PT margin ``a - |c| - 1/2``."""
    t_sq = abs(dev.T) ** 2
    a = 0.5 * t_sq * math.cosh(2 * zeta) + dev.added_noise
    c = 0.5 * t_sq * math.sinh(2 * zeta)
    return a - c - 0.5


GAUSS_COLUMNS = {"tmsv-separability": ["l_over_L", "T_sq", "nu_min", "margin", "entangled"],
                 "amplifier-gain": ["T_sq", "gain", "nu_min", "margin", "entangled"]}


def _fiber_row(args: tuple) -> list:
    index, x, zeta, n_th, R = args
    T = math.exp(-x)
    res = is_separable_ppt(transform_moments(tmsv_covariance(zeta), *[ScalarDevice(T, 1, n_th, R)] * 2))
    return [x, T * T, res.nu_min, res.margin, res.entangled]


def _amplifier_row(args: tuple) -> list:
    index, t_sq, zeta, n_th, R = args
    dev = ScalarDevice(math.sqrt(t_sq), -1, n_th, R)
    res = is_separable_ppt(transform_moments(tmsv_covariance(zeta), dev, dev))
    return [t_sq, t_sq - 1, res.nu_min, res.margin, res.entangled]


def _verify_margins(table: Table, cfg: SweepConfig, sigma: int) -> int:
    n_th = cfg.n_th or 0.0
    checked = 0
    for i in range(0, len(table.rows), VERIFY_STRIDE):
        t_sq, margin = table.rows[i][1 if sigma == 1 else 0], table.rows[i][3]
        ref = _symmetric_margin(cfg.zeta, ScalarDevice(math.sqrt(t_sq), sigma, n_th, cfg.R))
        if abs(ref - margin) > 1e-9 * max(1.0, math.cosh(2 * cfg.zeta)):
            raise InvariantViolation(f"{table.experiment} row {i}: margin {margin:.12g} vs symmetric form {ref:.12g}")
        checked += 1
    return checked


def _check_zeta(cfg: SweepConfig) -> None:
    if cfg.zeta > MAX_GAUSSIAN_ZETA:
        raise ConfigError(f"zeta = {cfg.zeta} exceeds {MAX_GAUSSIAN_ZETA}: margins are not resolvable in double "
                          f"precision; use the closed forms for the zeta -> infinity limit")


def run_tmsv_separability(cfg: SweepConfig) -> Table:
    _check_zeta(cfg)
    n_th = 1.0 if cfg.n_th is None else cfg.n_th
    if cfg.sigma == -1:
        raise ConfigError("tmsv-separability describes absorbing fibers (sigma = +1)")
    if cfg.grid.start < 0:
        raise ConfigError("fiber length grid must start at l/L >= 0")
    if n_th == 0:
        raise DivergenceError("n_th = 0: the maximal fiber length diverges, the TMSV never separates")
    cfg = dataclasses.replace(cfg, n_th=n_th)
    grid = cfg.grid.points()
    items = [(i, float(x), cfg.zeta, n_th, cfg.R) for i, x in enumerate(grid)]
    table = Table("tmsv-separability", GAUSS_COLUMNS["tmsv-separability"],
                  _parallel_map(_fiber_row, items, cfg.workers))
    crossing = margin_crossing(lambda x: fiber_margin(cfg.zeta, n_th, x, cfg.R), grid)
    summary: dict[str, Any] = {"zeta": cfg.zeta, "n_th": n_th, "R": cfg.R, "crossing": crossing}
    if cfg.R == 0:
        lmax = lmax_fiber(cfg.zeta, n_th)
        summary["lmax_closed_form"] = lmax
        in_range = grid[0] <= lmax <= grid[-1]
        if crossing is None:
            if in_range:
                raise InvariantViolation(f"tmsv-separability: no crossing found but l_max/L = {lmax:.12g} is in range")
        elif abs(crossing - max(lmax, grid[0])) > THRESHOLD_TOL:
            raise InvariantViolation(f"tmsv-separability: crossing {crossing:.12g} vs l_max/L {lmax:.12g}")
    if crossing is not None and crossing > 0:
        # the threshold occupation at the crossing transmission must give back n_th
        n_back = nth_threshold(ThresholdInputs(cfg.zeta, math.exp(-crossing), cfg.R, 0.0, 1))
        summary["nth_at_crossing"] = n_back
        if abs(n_back - n_th) > THRESHOLD_TOL * max(1.0, n_th):
            raise InvariantViolation(f"tmsv-separability: threshold occupation {n_back:.12g} != n_th {n_th:.12g}")
    if cfg.verify:
        summary["verified_rows"] = _verify_margins(table, cfg, 1)
    table.summary = summary
    return table


def amplifier_threshold(zeta: float, n_th: float, R: float) -> float:
    """``|T|^2`` at which ``nth_threshold`` equals ``n_th`` for an amplifier (root of the closed form)."""
    if n_th == 0:
        return max_gain(zeta, R)[0]
    lower = 1 - R * R
    f = lambda t2: nth_threshold(ThresholdInputs(zeta, math.sqrt(t2), R, n_th, -1)) - n_th  # noqa: E731
    upper = max_gain(zeta, R)[0]
    if upper <= lower:
        return lower
    return float(brentq(f, lower * (1 + 1e-13) + 1e-15, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def run_amplifier_gain(cfg: SweepConfig) -> Table:
    if cfg.sigma == 1:
        raise ConfigError("amplifier-gain needs sigma = -1")
    _check_zeta(cfg)
    n_th = cfg.n_th or 0.0
    grid = cfg.grid.points()
    if grid[0] < 1 - cfg.R**2 - 1e-12:
        raise ConfigError(f"amplifier grid must start at |T|^2 >= 1 - R^2 = {1 - cfg.R**2:.6g}")
    items = [(i, float(x), cfg.zeta, n_th, cfg.R) for i, x in enumerate(grid)]
    table = Table("amplifier-gain", GAUSS_COLUMNS["amplifier-gain"],
                  _parallel_map(_amplifier_row, items, cfg.workers))
    crossing = margin_crossing(lambda t2: amplifier_margin(cfg.zeta, t2, n_th, cfg.R), grid)
    t_max = amplifier_threshold(cfg.zeta, n_th, cfg.R)
    summary: dict[str, Any] = {"zeta": cfg.zeta, "n_th": n_th, "R": cfg.R, "crossing_T_sq": crossing,
                               "T_max_sq_closed_form": t_max, "g_max": t_max - 1}
    in_range = grid[0] <= t_max <= grid[-1]
    if crossing is None:
        if in_range:
            raise InvariantViolation(f"amplifier-gain: no sign change found but |T_max|^2 = {t_max:.12g} is in range")
    elif abs(crossing - max(t_max, grid[0])) > THRESHOLD_TOL:
        raise InvariantViolation(f"amplifier-gain: sign change at {crossing:.12g} vs |T_max|^2 {t_max:.12g}")
    if cfg.verify:
        summary["verified_rows"] = _verify_margins(table, cfg, -1)
    table.summary = summary
    return table


# channel-apply


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_state(data: dict, source: str = "input") -> DensityOperator | GaussianState:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    try:
        if "matrix" in data:
            return DensityOperator.from_dict(data)
        if "amplitudes" in data:
            return FockState.from_dict(data).density()
        if "cov" in data:
            return GaussianState.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{source}: malformed state ({exc!r})") from None
    raise ConfigError(f"{source}: state needs a 'matrix', 'amplitudes' or 'cov' key")


def device_from_config(cfg: SweepConfig) -> DeviceSpec:
    sigma = 1 if cfg.sigma is None else cfg.sigma
    n_th = cfg.n_th or 0.0
    if cfg.device is not None:
        data = {"sigma": sigma, "n_th": n_th, **cfg.device}
        try:
            return DeviceSpec.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, EntransError):
                raise
            raise ConfigError(f"device: malformed matrices ({exc})") from None
    if cfg.T1 is None or cfg.T2 is None:
        raise ConfigError("channel-apply needs either a 'device' object or T1 and T2")
    return DeviceSpec.diagonal(cfg.T1, cfg.T2, sigma, n_th)


def run_channel_apply(cfg: SweepConfig) -> dict:
    if cfg.input is None:
        raise ConfigError("channel-apply needs an 'input' state file")
    state = load_state(read_json(cfg.input), cfg.input)
    spec = device_from_config(cfg)
    meta = {"schema": f"entrans/channel-apply/v{SCHEMA_VERSION}", "device": spec.to_dict()}
    if isinstance(state, GaussianState):
        out = transform_moments_device(state, spec)
        return {**out.to_dict(), **meta, "engine": "gaussian", "leakage": 0.0}
    _, device_cut = cfg.cutoffs
    field_cutoffs = None if cfg.field_cutoff is None else (cfg.field_cutoff, cfg.field_cutoff)
    rho = apply_channel(state, spec, device_cutoff=device_cut, field_cutoffs=field_cutoffs)
    return {**rho.to_dict(), **meta, "engine": "fock", "truncated": True, "leakage": float(rho.leakage)}


RUNNERS: dict[str, Callable[[SweepConfig], Any]] = {
    "bell-decay": run_bell_decay,
    "tmsv-separability": run_tmsv_separability,
    "amplifier-gain": run_amplifier_gain,
    "channel-apply": run_channel_apply,
}


def run(cfg: SweepConfig) -> Table | dict:
    return RUNNERS[cfg.experiment](cfg)


def render(result: Table | dict, fmt: str) -> str:
    """CSV or JSON text for a table; state files are always JSON."""
    if isinstance(result, dict):
        return json.dumps(result, indent=2) + "\n"
    return to_csv(result) if fmt == "csv" else to_json(result)


__all__ = [
    "EXPERIMENTS", "Grid", "SweepConfig", "Table", "amplifier_threshold", "check_bell_decay", "load_state",
    "render", "run", "run_amplifier_gain", "run_bell_decay", "run_channel_apply", "run_tmsv_separability",
    "to_csv", "to_json",
]
