"""Multirate dynamic iteration for split index-1 DAEs.

Each macro window runs ``k`` sweeps.  A sweep integrates the slow subsystem
(one implicit Euler step of size H) and the fast subsystem (m implicit Euler
steps of size h); the partner channels a subsystem reads are bound either to
the previous iterate or to data already produced in the current sweep, as
fixed by the :class:`SplittingScheme` of the strategy.  ``k = 1`` is multirate
co-simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    MacroStepPlan,
    PartitionedDae,
    Strategy,
    Trajectory,
    macro_windows,
    micro_grid,
    validate_plan,
)
from .coupling import Waveform, interpolate_nodes
from .errors import NumericalError, StabilityGateError
from .ode import build_extrapolation, fast_interpolant, fast_node_indices
from .steppers import DEFAULT_NEWTON, NewtonConfig, fd_jacobian, implicit_euler_dae_step, newton_solve

CONSISTENCY_TOL = 1e-10

CHANNELS = ("y_slow", "y_fast", "z_slow", "z_fast")


@dataclass(frozen=True)
class SplittingScheme:
    """Binding of partner arguments to new (i+1) or old (i) iterates.

    ``x`` tuples are ``(y_S, y_F, z_S, z_F)``.  The own-subsystem arguments
    always bind to the new iterate.
    """

    strategy: Strategy

    @property
    def slow_reads_new_fast(self) -> bool:
        return self.strategy is Strategy.FASTEST_FIRST

    @property
    def fast_reads_new_slow(self) -> bool:
        return self.strategy is Strategy.SLOWEST_FIRST

    def _slow_args(self, x_new, x_old):
        src = x_new if self.slow_reads_new_fast else x_old
        return x_new[0], src[1], x_new[2], src[3]

    def _fast_args(self, x_new, x_old):
        src = x_new if self.fast_reads_new_slow else x_old
        return src[0], x_new[1], src[2], x_new[3]

    def F_S(self, problem, t, x_new, x_old):
        return problem.f_slow(t, *self._slow_args(x_new, x_old))

    def G_S(self, problem, t, x_new, x_old):
        return problem.g_slow(t, *self._slow_args(x_new, x_old))

    def F_F(self, problem, t, x_new, x_old):
        return problem.f_fast(t, *self._fast_args(x_new, x_old))

    def G_F(self, problem, t, x_new, x_old):
        return problem.g_fast(t, *self._fast_args(x_new, x_old))


def _g_full(problem: PartitionedDae, t, ys, yf, zs, zf):
    return np.concatenate([
        np.atleast_1d(problem.g_slow(t, ys, yf, zs, zf)),
        np.atleast_1d(problem.g_fast(t, ys, yf, zs, zf)),
    ])


def consistent_initialize(problem: PartitionedDae, t0: float, y_slow, y_fast, z_guess=None,
                          cfg: NewtonConfig = DEFAULT_NEWTON) -> tuple[np.ndarray, np.ndarray]:
    """Solve the full algebraic system at ``t0`` for ``(z_S, z_F)``."""
    nzs = problem.dim_zslow
    if z_guess is None:
        z_guess = np.concatenate([problem.z_slow0, problem.z_fast0])
    z_guess = np.asarray(z_guess, dtype=np.float64)
    if z_guess.size == 0:
        return np.zeros(0), np.zeros(0)
    ys, yf = np.asarray(y_slow, dtype=np.float64), np.asarray(y_fast, dtype=np.float64)
    z, _ = newton_solve(lambda z: _g_full(problem, t0, ys, yf, z[:nzs], z[nzs:]), z_guess, cfg, t=t0)
    residual = float(np.max(np.abs(_g_full(problem, t0, ys, yf, z[:nzs], z[nzs:]))))
    if residual > max(cfg.abs_tol, CONSISTENCY_TOL):
        raise NumericalError(f"consistent initialization failed: residual {residual:.3e}")
    return z[:nzs], z[nzs:]


def algebraic_rate(problem: PartitionedDae, t, ys, yf, zs, zf) -> tuple[np.ndarray, np.ndarray]:
    """``dz/dt`` on the constraint manifold, by finite differences.

    Differentiating ``0 = g(t, y, z)`` gives ``g_z z' = -(g_t + g_y y')``.
    """
    nzs, ns = zs.size, ys.size
    if zs.size + zf.size == 0:
        return zs.copy(), zf.copy()
    y = np.concatenate([ys, yf])
    z = np.concatenate([zs, zf])
    ydot = np.concatenate([problem.f_slow(t, ys, yf, zs, zf), problem.f_fast(t, ys, yf, zs, zf)])
    g0 = _g_full(problem, t, ys, yf, zs, zf)
    Gz = fd_jacobian(lambda zz: _g_full(problem, t, ys, yf, zz[:nzs], zz[nzs:]), z, g0)
    Gy = fd_jacobian(lambda yy: _g_full(problem, t, yy[:ns], yy[ns:], zs, zf), y, g0)
    Gt = fd_jacobian(lambda tt: _g_full(problem, tt[0], ys, yf, zs, zf), np.array([t]), g0)[:, 0]
    zdot = -np.linalg.solve(Gz, Gt + Gy @ ydot)
    return zdot[:nzs], zdot[nzs:]


@dataclass
class DaeHistory:
    """Previous-window waveforms per channel (used for extrapolation order >= 2)."""

    waveforms: dict = field(default_factory=dict)
    fast_times: Optional[np.ndarray] = None
    fast_values: dict = field(default_factory=dict)


@dataclass
class IterationState:
    waveforms: dict
    sweep: int = 0


@dataclass
class DaeWindowResult:
    t_start: float
    t_end: float
    y_slow_end: np.ndarray
    z_slow_end: np.ndarray
    fast_times: np.ndarray
    y_fast_states: np.ndarray
    z_fast_states: np.ndarray
    sweep_endpoints: list = field(default_factory=list)
    split_residuals: list = field(default_factory=list)
    waveforms_used: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def slow_end(self) -> np.ndarray:
        return self.y_slow_end

    @property
    def fast_states(self) -> np.ndarray:
        return self.y_fast_states

    @property
    def fast_nodes(self) -> list:
        return list(zip(self.fast_times.tolist(), self.y_fast_states))

    def history(self) -> DaeHistory:
        start = self.sweep_endpoints[0]["start"]
        return DaeHistory(
            waveforms={
                "y_slow": interpolate_nodes([(self.t_start, start[0]), (self.t_end, self.y_slow_end)], 1),
                "z_slow": interpolate_nodes([(self.t_start, start[2]), (self.t_end, self.z_slow_end)], 1),
            },
            fast_times=self.fast_times,
            fast_values={"y_fast": self.y_fast_states, "z_fast": self.z_fast_states},
        )


def _slow_interp(q, t0, t1, v0, v1) -> Waveform:
    if q == 0:
        return interpolate_nodes([(t1, v1)], 0, window=(t0, t1))
    return interpolate_nodes([(t0, v0), (t1, v1)], 1, window=(t0, t1))


def _history_nodes(history: Optional[DaeHistory], channel: str, q: int):
    if history is None or q < 2:
        return None
    if channel in ("y_slow", "z_slow"):
        w = history.waveforms.get(channel)
        if w is None:
            return None
        ts = np.linspace(w.t_start, w.t_end, q + 1)
        return [(t, w(t)) for t in ts]
    times = history.fast_times
    values = history.fast_values.get(channel)
    if times is None or values is None:
        return None
    idx = fast_node_indices(times.size - 1, q)
    if idx.size < q + 1:
        return None
    return [(times[i], values[i]) for i in idx]


def _initial_iterate(problem, t_bar, x0, plan, history, H, warnings) -> dict:
    ys, yf, zs, zf = x0
    q = plan.extrap_order
    rates = {}

    def rate(channel):
        if not rates:
            rates["y_slow"] = problem.f_slow(t_bar, ys, yf, zs, zf)
            rates["y_fast"] = problem.f_fast(t_bar, ys, yf, zs, zf)
            rates["z_slow"], rates["z_fast"] = algebraic_rate(problem, t_bar, ys, yf, zs, zf)
        return rates[channel]

    return {
        ch: build_extrapolation(
            t_bar, val, (lambda ch=ch: rate(ch)), H, q, _history_nodes(history, ch, q), warnings, ch,
        )
        for ch, val in zip(CHANNELS, x0)
    }


def _solve_slow(problem, t_bar, H, ys0, zs0, partner, cfg):
    pyf, pzf = partner["y_fast"], partner["z_fast"]

    def f(t, y, z):
        return problem.f_slow(t, y, pyf(t), z, pzf(t))

    def g(t, y, z):
        return problem.g_slow(t, y, pyf(t), z, pzf(t))

    return implicit_euler_dae_step(f, g, t_bar, ys0, zs0, H, cfg)


def _solve_fast(problem, times, yf0, zf0, partner, cfg):
    pys, pzs = partner["y_slow"], partner["z_slow"]

    def f(t, y, z):
        return problem.f_fast(t, pys(t), y, pzs(t), z)

    def g(t, y, z):
        return problem.g_fast(t, pys(t), y, pzs(t), z)

    ys = np.empty((times.size, yf0.size))
    zs = np.empty((times.size, zf0.size))
    ys[0], zs[0] = yf0, zf0
    y, z = yf0, zf0
    for j in range(times.size - 1):
        y, z = implicit_euler_dae_step(f, g, times[j], y, z, times[j + 1] - times[j], cfg)
        ys[j + 1], zs[j + 1] = y, z
    return ys, zs


def dae_window(problem: PartitionedDae, t_bar, state, plan: MacroStepPlan, history: DaeHistory = None,
               length: float = None, cfg: NewtonConfig = DEFAULT_NEWTON) -> DaeWindowResult:
    """One macro window with ``plan.k`` dynamic-iteration sweeps.

    ``state`` is ``(y_S, y_F, z_S, z_F)`` at ``t_bar``, consistent with the
    constraints.  The iterate-0 waveforms are extrapolations of order
    ``plan.extrap_order``; later iterates are interpolants of the previous
    sweep's nodes built with ``plan.interp_order``.
    """
    H = plan.H if length is None else float(length)
    strategy = Strategy.parse(plan.strategy)
    scheme = SplittingScheme(strategy)
    x0 = tuple(np.asarray(v, dtype=np.float64) for v in state)
    ys0, yf0, zs0, zf0 = x0
    t_next = t_bar + H
    times = micro_grid(t_bar, t_next, plan.m)
    q = plan.interp_order
    warnings = []
    old = _initial_iterate(problem, t_bar, x0, plan, history, H, warnings)
    it = IterationState(dict(old), 0)
    sweeps, residuals = [], []
    used = {"iterate0": dict(old)}

    def slow_waveforms(ys1, zs1):
        return {"y_slow": _slow_interp(q, t_bar, t_next, ys0, ys1), "z_slow": _slow_interp(q, t_bar, t_next, zs0, zs1)}

    def fast_waveforms(yf_nodes, zf_nodes):
        return {"y_fast": fast_interpolant(q, times, yf_nodes), "z_fast": fast_interpolant(q, times, zf_nodes)}

    for _ in range(plan.k):
        old = it.waveforms
        if scheme.slow_reads_new_fast:
            yf_nodes, zf_nodes = _solve_fast(problem, times, yf0, zf0, old, cfg)
            new_fast = fast_waveforms(yf_nodes, zf_nodes)
            ys1, zs1 = _solve_slow(problem, t_bar, H, ys0, zs0, new_fast, cfg)
            new_slow = slow_waveforms(ys1, zs1)
            slow_partner = new_fast
            fast_partner = old
        elif scheme.fast_reads_new_slow:
            ys1, zs1 = _solve_slow(problem, t_bar, H, ys0, zs0, old, cfg)
            new_slow = slow_waveforms(ys1, zs1)
            yf_nodes, zf_nodes = _solve_fast(problem, times, yf0, zf0, new_slow, cfg)
            new_fast = fast_waveforms(yf_nodes, zf_nodes)
            slow_partner = old
            fast_partner = new_slow
        else:
            ys1, zs1 = _solve_slow(problem, t_bar, H, ys0, zs0, old, cfg)
            yf_nodes, zf_nodes = _solve_fast(problem, times, yf0, zf0, old, cfg)
            new_slow = slow_waveforms(ys1, zs1)
            new_fast = fast_waveforms(yf_nodes, zf_nodes)
            slow_partner = old
            fast_partner = old
        gs = problem.g_slow(t_next, ys1, slow_partner["y_fast"](t_next), zs1, slow_partner["z_fast"](t_next))
        gf = problem.g_fast(t_next, fast_partner["y_slow"](t_next), yf_nodes[-1], fast_partner["z_slow"](t_next), zf_nodes[-1])
        residuals.append((float(np.max(np.abs(gs), initial=0.0)), float(np.max(np.abs(gf), initial=0.0))))
        sweeps.append({
            "start": x0,
            "end": (ys1, yf_nodes[-1], zs1, zf_nodes[-1]),
        })
        it = IterationState({**new_slow, **new_fast}, it.sweep + 1)
        if not all(np.all(np.isfinite(v)) for v in (ys1, zs1, yf_nodes, zf_nodes)):
            raise NumericalError(f"non-finite iterate in window [{t_bar:.17g}, {t_next:.17g}]")
    used["final"] = it.waveforms
    return DaeWindowResult(
        t_bar, t_next, ys1, zs1, times, yf_nodes, zf_nodes, sweeps, residuals, used, warnings,
    )


def _integrate_single_rate(problem: PartitionedDae, plan: MacroStepPlan, cfg) -> Trajectory:
    ns, nf, nzs = problem.dim_slow, problem.dim_fast, problem.dim_zslow

    def f(t, y, z):
        ys, yf, zs, zf = y[:ns], y[ns:], z[:nzs], z[nzs:]
        return np.concatenate([problem.f_slow(t, ys, yf, zs, zf), problem.f_fast(t, ys, yf, zs, zf)])

    def g(t, y, z):
        return _g_full(problem, t, y[:ns], y[ns:], z[:nzs], z[nzs:])

    zs0, zf0 = consistent_initialize(problem, problem.t0, problem.y_slow0, problem.y_fast0, cfg=cfg)
    windows = macro_windows(problem.t0, problem.t_end, plan.H)
    times = np.array([windows[0][0]] + [b for _, b in windows])
    Y = np.empty((times.size, ns + nf))
    Z = np.empty((times.size, zs0.size + zf0.size))
    Y[0] = np.concatenate([problem.y_slow0, problem.y_fast0])
    Z[0] = np.concatenate([zs0, zf0])
    for i, (a, b) in enumerate(windows):
        Y[i + 1], Z[i + 1] = implicit_euler_dae_step(f, g, a, Y[i], Z[i], b - a, cfg)
    return Trajectory(times, Y[:, :ns].copy(), times.copy(), Y[:, ns:].copy(), Z[:, :nzs].copy(), Z[:, nzs:].copy())


def integrate_dae(problem: PartitionedDae, plan: MacroStepPlan, cfg: NewtonConfig = DEFAULT_NEWTON,
                  gate=None, force: bool = False) -> Trajectory:
    """Windowed multirate integration with ``plan.k`` sweeps per window.

    ``gate`` may be a contraction report; when the plan's strategy fails its
    stability verdict the run is refused unless ``force`` is set.
    """
    plan = validate_plan(plan, problem)
    if gate is not None:
        verdict = gate.verdicts[plan.strategy]
        if not verdict.passed and not force:
            raise StabilityGateError(plan.strategy.value, verdict.failed)
    if problem.single_rate:
        return _integrate_single_rate(problem, plan, cfg)

    zs0, zf0 = consistent_initialize(problem, problem.t0, problem.y_slow0, problem.y_fast0, cfg=cfg)
    windows = macro_windows(problem.t0, problem.t_end, plan.H)
    n, m = len(windows), plan.m
    macro_times = np.empty(n + 1)
    fast_times = np.empty(n * m + 1)
    ys = np.empty((n + 1, problem.dim_slow))
    zs = np.empty((n + 1, problem.dim_zslow))
    yf = np.empty((n * m + 1, problem.dim_fast))
    zf = np.empty((n * m + 1, problem.dim_zfast))
    macro_times[0] = fast_times[0] = problem.t0
    ys[0], zs[0], yf[0], zf[0] = problem.y_slow0, zs0, problem.y_fast0, zf0
    warnings, history = [], None
    for i, (a, b) in enumerate(windows):
        state = (ys[i], yf[i * m], zs[i], zf[i * m])
        res = dae_window(problem, a, state, plan, history, b - a, cfg)
        macro_times[i + 1] = b
        ys[i + 1], zs[i + 1] = res.y_slow_end, res.z_slow_end
        sl = slice(i * m + 1, (i + 1) * m + 1)
        fast_times[sl] = res.fast_times[1:]
        fast_times[(i + 1) * m] = b
        yf[sl], zf[sl] = res.y_fast_states[1:], res.z_fast_states[1:]
        warnings.extend(res.warnings)
        history = res.history()
    return Trajectory(macro_times, ys, fast_times, yf, zs, zf, warnings=warnings)
