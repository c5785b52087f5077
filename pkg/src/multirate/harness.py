"""Convergence-order studies, stability sweeps and trajectory CSV I/O."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .contraction import contraction_report, window_error_propagation_check
from .core import MacroStepPlan, Strategy, Trajectory
from .coupling import lagrange_lphi
from .dae import integrate_dae
from .errors import MultirateError, NumericalError, ValidationError
from .ode import integrate
from .problems import CatalogEntry, get_problem

MIN_SAMPLES = 4
EXACT = "exact"
DEFAULT_LADDER = tuple(0.1 * 2.0**-j for j in range(5))
ERROR_COLUMNS = ("error_slow", "error_fast", "error_total")
CHANNELS = ("y_slow", "y_fast", "z_slow", "z_fast")


def _entry(problem_or_id: Union[str, CatalogEntry], **params) -> CatalogEntry:
    if isinstance(problem_or_id, CatalogEntry):
        return problem_or_id
    return get_problem(problem_or_id, **params)


def run_plan(problem, plan: MacroStepPlan, gate=None, force: bool = False, parallel: bool = False) -> Trajectory:
    """Dispatch to the ODE or DAE driver."""
    if problem.is_dae:
        return integrate_dae(problem, plan, gate=gate, force=force)
    return integrate(problem, plan, parallel=parallel)


def _sup(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.max(np.abs(a))) if a.size else 0.0


def endpoint_errors(traj: Trajectory, reference: dict) -> dict:
    """Sup-norm absolute errors at the final node, per channel and aggregated."""
    final = traj.final_state()
    per = {ch: _sup(final[ch] - reference[ch]) for ch in CHANNELS if ch in final and ch in reference}
    slow = max(per.get("y_slow", 0.0), per.get("z_slow", 0.0))
    fast = max(per.get("y_fast", 0.0), per.get("z_fast", 0.0))
    return {**per, "error_slow": slow, "error_fast": fast, "error_total": max(slow, fast)}


def fit_slope(H: Sequence[float], err: Sequence[float]) -> Union[float, str]:
    """Least-squares slope of ``log err`` against ``log H``.

    Returns :data:`EXACT` when every error is zero; zero entries among nonzero
    ones are skipped.
    """
    H = np.asarray(H, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    if not np.all(np.isfinite(err)):
        raise NumericalError("non-finite errors cannot be fitted")
    keep = err > 0
    if not np.any(keep):
        return EXACT
    if np.count_nonzero(keep) < 2:
        raise NumericalError("need at least two nonzero errors to fit a slope")
    slope, _ = np.polyfit(np.log(H[keep]), np.log(err[keep]), 1)
    return float(slope)


@dataclass
class ConvergenceReport:
    """Endpoint errors per step size plus fitted slopes over the asymptotic window."""

    H: list
    errors: list
    asymptotic_window: list
    slopes: dict
    problem: str = ""
    plan: Optional[MacroStepPlan] = None

    def __post_init__(self):
        if len(self.H) < MIN_SAMPLES:
            raise ValidationError(f"≥ {MIN_SAMPLES} step sizes required (got {len(self.H)})")

    @property
    def samples(self) -> list:
        return [(h, e["error_slow"], e["error_fast"], e["error_total"]) for h, e in zip(self.H, self.errors)]

    def column(self, name: str) -> list:
        return [e.get(name, 0.0) for e in self.errors]

    def slope(self, name: str = "error_total"):
        return self.slopes[name]

    def to_csv(self) -> str:
        cols = [c for c in CHANNELS if c in self.errors[0]] + list(ERROR_COLUMNS)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["H", *cols])
        for h, e in zip(self.H, self.errors):
            w.writerow([format(h, ".17g"), *(format(e[c], ".17g") for c in cols)])
        return buf.getvalue()

    def slope_lines(self) -> str:
        lines = []
        for name, s in self.slopes.items():
            val = s if isinstance(s, str) else f"{s:.6f}"
            lines.append(f"slope.{name} = {val}")
        lines.append("fit_indices = " + ",".join(str(i) for i in self.asymptotic_window))
        return "\n".join(lines) + "\n"


def _check_ladder(H_list) -> list:
    H = [float(h) for h in H_list]
    if len(H) < MIN_SAMPLES:
        raise ValidationError(f"≥ {MIN_SAMPLES} step sizes required (got {len(H)})")
    if any(not h > 0 for h in H):
        raise ValidationError("step sizes must be positive")
    if any(b >= a for a, b in zip(H, H[1:])):
        raise ValidationError("step sizes must be strictly decreasing")
    return H


def convergence_study(problem_or_id, plan_template: MacroStepPlan, H_list=DEFAULT_LADDER, drop: int = 1,
                      parallel: bool = False) -> ConvergenceReport:
    """Run ``plan_template`` at each H and fit observed orders.

    The fit drops the ``drop`` largest step sizes.  Any failing run aborts the
    study with the offending H in the message.
    """
    H = _check_ladder(H_list)
    if not 0 <= drop <= len(H) - 2:
        raise ValidationError(f"drop={drop} leaves fewer than two points to fit")
    entry = _entry(problem_or_id)
    problem = entry.problem
    ref = entry.reference(problem.t_end)

    def one(h):
        try:
            traj = run_plan(problem, plan_template.replace(H=h), force=True)
        except ValidationError as exc:
            raise ValidationError(f"run at H={h:.17g} failed: {exc}") from exc
        except MultirateError as exc:
            raise NumericalError(f"run at H={h:.17g} failed: {exc}") from exc
        return endpoint_errors(traj, ref)

    if parallel:
        with ThreadPoolExecutor() as pool:
            errors = list(pool.map(one, H))
    else:
        errors = [one(h) for h in H]
    window = list(range(drop, len(H)))
    hs = [H[i] for i in window]
    names = [c for c in CHANNELS if c in errors[0]] + list(ERROR_COLUMNS)
    slopes = {name: fit_slope(hs, [errors[i][name] for i in window]) for name in names}
    return ConvergenceReport(H, errors, window, slopes, entry.id, plan_template)


def order_degradation_probe(problem_or_id="lin2", scheme: str = "heun", extrap_order: int = 0,
                            strategy=Strategy.FULLY_DECOUPLED, m: int = 4, interp_order: int = 1,
                            H_list=DEFAULT_LADDER) -> ConvergenceReport:
    """Convergence study of a order-p scheme with deliberately low-order coupling data."""
    plan = MacroStepPlan(H=H_list[0], m=m, strategy=Strategy.parse(strategy), scheme_slow=scheme,
                         scheme_fast=scheme, extrap_order=extrap_order, interp_order=interp_order)
    return convergence_study(problem_or_id, plan, H_list)


def plan_lphi(plan: MacroStepPlan) -> float:
    """Operator bound of the plan's extrapolation on a window of length H."""
    q = plan.extrap_order
    if q == 0:
        return 1.0
    if q == 1:
        return 1.0 + plan.H
    return lagrange_lphi(np.linspace(-plan.H, 0.0, q + 1), 0.0, plan.H)


def macro_errors(traj: Trajectory, reference) -> np.ndarray:
    """Sup-norm error over all channels at every macro node."""
    out = np.empty(traj.macro_times.size)
    zf_macro = traj.z_fast_at_macro()
    yf_macro = traj.fast_at_macro()
    for i, t in enumerate(traj.macro_times):
        ref = reference(t)
        parts = [traj.slow_states[i] - ref["y_slow"], yf_macro[i] - ref["y_fast"]]
        if traj.z_slow_states is not None:
            parts.append(traj.z_slow_states[i] - ref["z_slow"])
        if zf_macro is not None:
            parts.append(zf_macro[i] - ref["z_fast"])
        out[i] = max(_sup(p) for p in parts)
    return out


@dataclass
class GrowthMeasurement:
    """Window-to-window error growth of a run.

    ``ratios[i]`` is ``e_{i+1} / e_i`` with ``e_i`` the error after window i.
    ``growth`` is the geometric mean ratio over windows ``skip+1 .. n`` and
    ``max_ratio`` / ``min_ratio`` the extremes over that range.
    """

    errors: np.ndarray
    ratios: np.ndarray
    growth: float
    max_ratio: float
    min_ratio: float
    diverged: bool = False


def measure_growth(errors: np.ndarray, skip: int = 5) -> GrowthMeasurement:
    e = np.asarray(errors, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        return GrowthMeasurement(e, np.array([]), math.inf, math.inf, math.inf, True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = e[2:] / e[1:-1]
    tail = ratios[max(skip - 1, 0):]
    n = e.size - 1
    if n <= skip or e[skip] == 0.0:
        growth = 0.0 if e[-1] == 0.0 else math.inf
    else:
        growth = float((e[-1] / e[skip]) ** (1.0 / (n - skip)))
    if tail.size == 0:
        return GrowthMeasurement(e, ratios, growth, growth, growth)
    return GrowthMeasurement(e, ratios, growth, float(np.max(tail)), float(np.min(tail)))


STABLE_GROWTH = 1.02


@dataclass
class SweepRow:
    b: float
    d: float
    strategy: str
    k: int
    alpha_S: float
    alpha_F: float
    lphi: float
    verdict: str
    failed: str
    propagation: str
    growth: float
    max_ratio: float
    status: str

    @property
    def agrees(self) -> bool:
        stable = self.status == "ok" and self.growth <= STABLE_GROWTH
        return (self.verdict == "pass") == stable


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    COLUMNS = ("b", "d", "strategy", "k", "alpha_S", "alpha_F", "lphi", "verdict", "failed",
               "propagation", "growth", "max_ratio", "status", "agrees")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            vals = []
            for c in self.COLUMNS:
                v = getattr(r, c)
                vals.append(format(v, ".17g") if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v)
            w.writerow(vals)
        return buf.getvalue()


def stability_sweep(dae_id: str = "dae-lin", grid=((0.0, 0.0), (0.4, 0.4), (1.5, 1.5)), strategy=Strategy.FULLY_DECOUPLED,
                    k: int = 1, H: float = 0.05, m: int = 4, n_windows: int = 20, extrap_order: int = 0,
                    interp_order: int = 0, skip: int = 5, parallel: bool = False) -> SweepTable:
    """Forced runs over a (b, d) grid with measured growth and analyzer verdicts.

    Runs that overflow or fail numerically are recorded as ``diverged``.
    Rows are sorted by (b, d) regardless of execution order.
    """
    strategy = Strategy.parse(strategy)
    plan = MacroStepPlan(H=H, m=m, strategy=strategy, scheme_slow="implicit-euler", scheme_fast="implicit-euler",
                         extrap_order=extrap_order, interp_order=interp_order, k=k)
    lphi = plan_lphi(plan)

    def one(point):
        b, d = (float(x) for x in point)
        entry = get_problem(dae_id, b=b, d=d, t_end=n_windows * H)
        report = contraction_report(entry.problem, lphi=lphi, k=k)
        verdict = report.verdicts[strategy]
        prop = window_error_propagation_check(max(report.alpha_S, report.alpha_F), lphi, k)
        status = "ok"
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                traj = run_plan(entry.problem, plan, force=True)
                g = measure_growth(macro_errors(traj, entry.reference), skip)
            if g.diverged:
                status = "diverged"
        except (NumericalError, FloatingPointError, OverflowError):
            status = "diverged"
            g = GrowthMeasurement(np.array([]), np.array([]), math.inf, math.inf, math.inf, True)
        return SweepRow(b, d, strategy.value, k, report.alpha_S, report.alpha_F, lphi,
                        "pass" if verdict.passed else "fail", ";".join(verdict.failed),
                        "pass" if prop.passed else "fail", g.growth, g.max_ratio, status)

    points = sorted((float(b), float(d)) for b, d in grid)
    if parallel:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(p) for p in points]
    return SweepTable(rows)


# ---------------------------------------------------------------- trajectory CSV

def trajectory_header(traj: Trajectory) -> list:
    cols = ["t"]
    cols += [f"y_S{i}" for i in range(traj.slow_states.shape[1])]
    cols += [f"y_F{i}" for i in range(traj.fast_states.shape[1])]
    if traj.z_slow_states is not None:
        cols += [f"z_S{i}" for i in range(traj.z_slow_states.shape[1])]
    if traj.z_fast_states is not None:
        cols += [f"z_F{i}" for i in range(traj.z_fast_states.shape[1])]
    return cols


def emit_trajectory_csv(traj: Trajectory) -> str:
    """One row per micro time; slow cells are blank on rows without a macro node.

    A DAE trajectory is marked by a trailing ``dae`` header field so that empty
    algebraic blocks survive the round trip.
    """
    header = trajectory_header(traj)
    dae = traj.z_slow_states is not None or traj.z_fast_states is not None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header + (["dae"] if dae else []))
    macro_index = {float(t): i for i, t in enumerate(traj.macro_times)}
    ns = traj.slow_states.shape[1]
    nzs = 0 if traj.z_slow_states is None else traj.z_slow_states.shape[1]
    for j, t in enumerate(traj.fast_micro_times):
        i = macro_index.get(float(t))
        slow = [""] * ns if i is None else [format(x, ".17g") for x in traj.slow_states[i]]
        zslow = [""] * nzs if i is None else [format(x, ".17g") for x in traj.z_slow_states[i]] if nzs else []
        row = [format(t, ".17g"), *slow, *(format(x, ".17g") for x in traj.fast_states[j]), *zslow]
        if traj.z_fast_states is not None:
            row += [format(x, ".17g") for x in traj.z_fast_states[j]]
        if dae:
            row.append("")
        w.writerow(row)
    return buf.getvalue()


def parse_trajectory_csv(text: str) -> Trajectory:
    """Inverse of :func:`emit_trajectory_csv`."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValidationError("trajectory CSV must start with a header row beginning with 't'")
    header = rows[0]
    dae = header[-1] == "dae"

    def cols(prefix):
        return [i for i, name in enumerate(header) if name.startswith(prefix)]

    c_ys, c_yf, c_zs, c_zf = cols("y_S"), cols("y_F"), cols("z_S"), cols("z_F")
    body = rows[1:]
    try:
        times = np.array([float(r[0]) for r in body])
        yf = np.array([[float(r[c]) for c in c_yf] for r in body]).reshape(len(body), len(c_yf))
        zf = np.array([[float(r[c]) for c in c_zf] for r in body]).reshape(len(body), len(c_zf))
        macro = [r for r in body if all(r[c] != "" for c in c_ys + c_zs) and (c_ys or c_zs)]
        mt = np.array([float(r[0]) for r in macro])
        ys = np.array([[float(r[c]) for c in c_ys] for r in macro]).reshape(len(macro), len(c_ys))
        zs = np.array([[float(r[c]) for c in c_zs] for r in macro]).reshape(len(macro), len(c_zs))
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed trajectory CSV: {exc}") from None
    return Trajectory(mt, ys, times, yf, zs if dae else None, zf if dae else None)
