"""Multirate integration of partitioned ODEs by extrapolation/interpolation coupling.

One macro window advances the slow part by a single step of size H and the
fast part by m steps of size h = H/m.  The three strategies differ only in
which partner waveform each subsystem sees:

* fully-decoupled: both sides use data extrapolated from the window start;
* slowest-first: slow side extrapolates the fast data, fast side then
  interpolates the freshly computed slow data;
* fastest-first: fast side extrapolates the slow data, slow side then
  interpolates the freshly computed fast micro nodes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    MacroStepPlan,
    PartitionedOde,
    Strategy,
    Trajectory,
    macro_windows,
    micro_grid,
    validate_plan,
)
from .coupling import (
    Waveform,
    extrapolate_constant,
    extrapolate_history,
    extrapolate_linear,
    interpolate_nodes,
)
from .errors import NumericalError
from .steppers import DEFAULT_NEWTON, NewtonConfig, step, step_dense

log = logging.getLogger(__name__)


@dataclass
class History:
    """Node buffers of the previous window, one per channel."""

    slow: Optional[Waveform] = None
    fast_times: Optional[np.ndarray] = None
    fast_values: Optional[np.ndarray] = None


@dataclass
class WindowResult:
    t_start: float
    t_end: float
    slow_end: np.ndarray
    fast_times: np.ndarray
    fast_states: np.ndarray
    waveforms_used: dict = field(default_factory=dict)
    slow_dense: Optional[Waveform] = None
    warnings: list = field(default_factory=list)

    @property
    def fast_nodes(self) -> list:
        return list(zip(self.fast_times.tolist(), self.fast_states))

    def history(self) -> History:
        return History(slow=self.slow_dense, fast_times=self.fast_times, fast_values=self.fast_states)


def fast_node_indices(m: int, q: int) -> np.ndarray:
    """Micro-node indices used for a degree-q fast interpolant.

    q=0 takes the newest node; otherwise q+1 nodes spread over the window so
    that q=1 uses the macro endpoints and q=m uses every micro node.
    """
    if q == 0:
        return np.array([m])
    return np.unique(np.round(np.linspace(0, m, q + 1)).astype(int))


def build_extrapolation(t_bar, value, slope_fn, H, order, history_nodes, warnings, channel):
    """Order-``order`` extrapolation of one channel over ``[t_bar, t_bar + H]``.

    Orders 0 and 1 use data at ``t_bar`` (order 1 takes its slope from the
    right-hand side).  Higher orders need nodes from the previous window; on
    the first window they fall back to order 1.
    """
    if order == 0:
        return extrapolate_constant(t_bar, value, H)
    if order >= 2:
        if history_nodes is not None:
            return extrapolate_history(history_nodes, order, (t_bar, t_bar + H))
        msg = f"{channel}: no history at t={t_bar:.17g}; extrapolation order {order} reduced to 1"
        warnings.append(msg)
        log.warning(msg)
    return extrapolate_linear(t_bar, value, slope_fn(), H)


def _slow_history_nodes(history: Optional[History], q: int):
    if history is None or history.slow is None or q < 2:
        return None
    w = history.slow
    ts = np.linspace(w.t_start, w.t_end, q + 1)
    return [(t, w(t)) for t in ts]


def _fast_history_nodes(history: Optional[History], q: int):
    if history is None or history.fast_times is None or q < 2:
        return None
    m = history.fast_times.size - 1
    idx = fast_node_indices(m, q)
    if idx.size < q + 1:
        return None
    return [(history.fast_times[i], history.fast_values[i]) for i in idx]


def slow_interpolant(plan: MacroStepPlan, t_bar, t_next, y0, y1, dense: Waveform) -> Waveform:
    """Slow-channel waveform built from data of the current window."""
    q = plan.interp_order
    if plan.dense_output or q >= 2:
        return dense
    if q == 0:
        return interpolate_nodes([(t_next, y1)], 0, window=(t_bar, t_next))
    return interpolate_nodes([(t_bar, y0), (t_next, y1)], 1, window=(t_bar, t_next))


def fast_interpolant(q: int, times: np.ndarray, states: np.ndarray) -> Waveform:
    m = times.size - 1
    q = min(q, m)
    idx = fast_node_indices(m, q)
    return interpolate_nodes([(times[i], states[i]) for i in idx], idx.size - 1, window=(times[0], times[-1]))


def _micro_steps(scheme, f, times, y0, cfg):
    states = np.empty((times.size, np.size(y0)))
    states[0] = y0
    y = np.asarray(y0, dtype=np.float64)
    for j in range(times.size - 1):
        y = step(scheme, f, times[j], y, times[j + 1] - times[j], cfg)
        states[j + 1] = y
    return states


def _prepare(problem, t_bar, y_slow, y_fast, plan, history, length):
    H = plan.H if length is None else float(length)
    y_slow = np.asarray(y_slow, dtype=np.float64)
    y_fast = np.asarray(y_fast, dtype=np.float64)
    times = micro_grid(t_bar, t_bar + H, plan.m)
    return H, y_slow, y_fast, times


def _extrapolations(problem, t_bar, y_slow, y_fast, plan, history, H, warnings, need_slow, need_fast):
    q = plan.extrap_order
    out = {}
    if need_fast:
        out["fast_extrap"] = build_extrapolation(
            t_bar, y_fast, lambda: problem.f_fast(t_bar, y_slow, y_fast), H, q,
            _fast_history_nodes(history, q), warnings, "fast",
        )
    if need_slow:
        out["slow_extrap"] = build_extrapolation(
            t_bar, y_slow, lambda: problem.f_slow(t_bar, y_slow, y_fast), H, q,
            _slow_history_nodes(history, q), warnings, "slow",
        )
    return out


def window_fully_decoupled(problem: PartitionedOde, t_bar, y_slow, y_fast, plan: MacroStepPlan,
                           history: History = None, length: float = None,
                           cfg: NewtonConfig = DEFAULT_NEWTON, parallel: bool = False) -> WindowResult:
    H, y_slow, y_fast, times = _prepare(problem, t_bar, y_slow, y_fast, plan, history, length)
    warnings = []
    wf = _extrapolations(problem, t_bar, y_slow, y_fast, plan, history, H, warnings, True, True)
    fast_w, slow_w = wf["fast_extrap"], wf["slow_extrap"]

    def run_slow():
        return step_dense(plan.scheme_slow, lambda t, y: problem.f_slow(t, y, fast_w(t)), t_bar, y_slow, H, cfg)

    def run_fast():
        return _micro_steps(plan.scheme_fast, lambda t, y: problem.f_fast(t, slow_w(t), y), times, y_fast, cfg)

    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_slow, fut_fast = pool.submit(run_slow), pool.submit(run_fast)
            (slow_end, dense), fast_states = fut_slow.result(), fut_fast.result()
    else:
        slow_end, dense = run_slow()
        fast_states = run_fast()
    return WindowResult(t_bar, t_bar + H, slow_end, times, fast_states, wf, dense, warnings)


def window_slowest_first(problem: PartitionedOde, t_bar, y_slow, y_fast, plan: MacroStepPlan,
                         history: History = None, length: float = None,
                         cfg: NewtonConfig = DEFAULT_NEWTON) -> WindowResult:
    H, y_slow, y_fast, times = _prepare(problem, t_bar, y_slow, y_fast, plan, history, length)
    warnings = []
    wf = _extrapolations(problem, t_bar, y_slow, y_fast, plan, history, H, warnings, False, True)
    fast_w = wf["fast_extrap"]
    slow_end, dense = step_dense(
        plan.scheme_slow, lambda t, y: problem.f_slow(t, y, fast_w(t)), t_bar, y_slow, H, cfg
    )
    slow_int = slow_interpolant(plan, t_bar, t_bar + H, y_slow, slow_end, dense)
    wf["slow_interp"] = slow_int
    fast_states = _micro_steps(
        plan.scheme_fast, lambda t, y: problem.f_fast(t, slow_int(t), y), times, y_fast, cfg
    )
    return WindowResult(t_bar, t_bar + H, slow_end, times, fast_states, wf, dense, warnings)


def window_fastest_first(problem: PartitionedOde, t_bar, y_slow, y_fast, plan: MacroStepPlan,
                         history: History = None, length: float = None,
                         cfg: NewtonConfig = DEFAULT_NEWTON) -> WindowResult:
    H, y_slow, y_fast, times = _prepare(problem, t_bar, y_slow, y_fast, plan, history, length)
    warnings = []
    wf = _extrapolations(problem, t_bar, y_slow, y_fast, plan, history, H, warnings, True, False)
    slow_w = wf["slow_extrap"]
    fast_states = _micro_steps(
        plan.scheme_fast, lambda t, y: problem.f_fast(t, slow_w(t), y), times, y_fast, cfg
    )
    fast_int = fast_interpolant(plan.interp_order, times, fast_states)
    wf["fast_interp"] = fast_int
    slow_end, dense = step_dense(
        plan.scheme_slow, lambda t, y: problem.f_slow(t, y, fast_int(t)), t_bar, y_slow, H, cfg
    )
    return WindowResult(t_bar, t_bar + H, slow_end, times, fast_states, wf, dense, warnings)


WINDOW_FUNCTIONS = {
    Strategy.FULLY_DECOUPLED: window_fully_decoupled,
    Strategy.SLOWEST_FIRST: window_slowest_first,
    Strategy.FASTEST_FIRST: window_fastest_first,
}


def run_window(problem, t_bar, y_slow, y_fast, plan, history=None, length=None,
               cfg: NewtonConfig = DEFAULT_NEWTON, parallel=False) -> WindowResult:
    fn = WINDOW_FUNCTIONS[Strategy.parse(plan.strategy)]
    if fn is window_fully_decoupled:
        return fn(problem, t_bar, y_slow, y_fast, plan, history, length, cfg, parallel=parallel)
    return fn(problem, t_bar, y_slow, y_fast, plan, history, length, cfg)


def _integrate_single_rate(problem: PartitionedOde, plan: MacroStepPlan, cfg) -> Trajectory:
    ns = problem.dim_slow

    def f(t, w):
        ys, yf = w[:ns], w[ns:]
        return np.concatenate([problem.f_slow(t, ys, yf), problem.f_fast(t, ys, yf)])

    windows = macro_windows(problem.t0, problem.t_end, plan.H)
    times = np.array([windows[0][0]] + [b for _, b in windows])
    states = np.empty((times.size, ns + problem.dim_fast))
    states[0] = np.concatenate([problem.y_slow0, problem.y_fast0])
    for i, (a, b) in enumerate(windows):
        states[i + 1] = step(plan.scheme_slow, f, a, states[i], b - a, cfg)
    return Trajectory(times, states[:, :ns].copy(), times.copy(), states[:, ns:].copy())


def integrate(problem: PartitionedOde, plan: MacroStepPlan, cfg: NewtonConfig = DEFAULT_NEWTON,
              parallel: bool = False) -> Trajectory:
    """Integrate over ``[t0, t_end]`` window by window.

    Lifted (single-rate) problems are integrated monolithically with
    ``plan.scheme_slow`` and step H; this path exists for building references.
    """
    plan = validate_plan(plan, problem)
    if problem.single_rate:
        return _integrate_single_rate(problem, plan, cfg)

    windows = macro_windows(problem.t0, problem.t_end, plan.H)
    m = plan.m
    macro_times = np.empty(len(windows) + 1)
    slow = np.empty((len(windows) + 1, problem.dim_slow))
    fast_times = np.empty(len(windows) * m + 1)
    fast = np.empty((len(windows) * m + 1, problem.dim_fast))
    macro_times[0], fast_times[0] = problem.t0, problem.t0
    slow[0], fast[0] = problem.y_slow0, problem.y_fast0
    warnings = []
    history = None
    for i, (a, b) in enumerate(windows):
        res = run_window(problem, a, slow[i], fast[i * m], plan, history, b - a, cfg, parallel)
        macro_times[i + 1] = b
        slow[i + 1] = res.slow_end
        fast_times[i * m + 1:(i + 1) * m + 1] = res.fast_times[1:]
        fast_times[(i + 1) * m] = b
        fast[i * m + 1:(i + 1) * m + 1] = res.fast_states[1:]
        warnings.extend(res.warnings)
        history = res.history()
        if not (np.all(np.isfinite(res.slow_end)) and np.all(np.isfinite(res.fast_states))):
            raise NumericalError(f"non-finite state in window [{a:.17g}, {b:.17g}]")
    return Trajectory(macro_times, slow, fast_times, fast, warnings=warnings)
