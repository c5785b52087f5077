"""One-step base schemes, dense output, and Newton with finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .coupling import Waveform, hermite_waveform, linear_dense_waveform
from .errors import NewtonError, ValidationError

_SQRT_EPS = float(np.sqrt(np.finfo(np.float64).eps))


@dataclass(frozen=True)
class SchemeSpec:
    id: str
    order: int
    dense_output_order: Optional[int]
    implicit: bool = False


SCHEMES = {
    "explicit-euler": SchemeSpec("explicit-euler", 1, 1),
    "heun": SchemeSpec("heun", 2, 2),
    # cubic Hermite on endpoint data; one order short of the step order
    "rk4": SchemeSpec("rk4", 4, 3),
    "implicit-euler": SchemeSpec("implicit-euler", 1, 1, implicit=True),
}

_ALIASES = {
    "euler": "explicit-euler",
    "expliciteuler": "explicit-euler",
    "ee": "explicit-euler",
    "rk2": "heun",
    "impliciteuler": "implicit-euler",
    "ie": "implicit-euler",
    "backward-euler": "implicit-euler",
    "backwardeuler": "implicit-euler",
}


def get_scheme(name) -> SchemeSpec:
    if isinstance(name, SchemeSpec):
        return name
    key = str(name).strip().lower().replace("_", "-")
    key = _ALIASES.get(key.replace("-", ""), _ALIASES.get(key, key))
    try:
        return SCHEMES[key]
    except KeyError:
        raise ValidationError(f"unknown scheme id {name!r}") from None


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    max_iters: int = 25
    fd_eps: float = _SQRT_EPS

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValidationError("abs_tol must be > 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")


DEFAULT_NEWTON = NewtonConfig()


def fd_jacobian(fun: Callable, x: np.ndarray, f0: np.ndarray = None, eps: float = _SQRT_EPS) -> np.ndarray:
    """Forward-difference Jacobian.

    The increment is ``eps * (1 + |x_j|)`` rounded to a power of two, so that
    ``x_j + step`` is exact and affine maps with dyadic coefficients are
    differentiated without rounding error.
    """
    x = np.asarray(x, dtype=np.float64)
    if f0 is None:
        f0 = np.asarray(fun(x), dtype=np.float64)
    jac = np.empty((f0.size, x.size))
    xp = x.copy()
    for j in range(x.size):
        step = 2.0 ** np.round(np.log2(eps * (1.0 + abs(x[j]))))
        xp[j] = x[j] + step
        step = xp[j] - x[j]
        jac[:, j] = (np.asarray(fun(xp), dtype=np.float64) - f0) / step
        xp[j] = x[j]
    return jac


def newton_solve(fun: Callable, x0, cfg: NewtonConfig = DEFAULT_NEWTON, t: float = None, jac: Callable = None):
    """Damped Newton on ``fun(x) = 0``; returns ``(x, iterations)``.

    A full step that increases the residual is halved until it does not
    (at most 10 halvings, after which the last trial is accepted).
    """
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if x.size == 0:
        return x, 0
    r = np.asarray(fun(x), dtype=np.float64)
    norm = float(np.max(np.abs(r)))
    for it in range(cfg.max_iters + 1):
        if not np.isfinite(norm):
            raise NewtonError("non-finite residual", t=t, residual=norm)
        if norm <= cfg.abs_tol:
            return x, it
        if it == cfg.max_iters:
            break
        J = jac(x) if jac is not None else fd_jacobian(fun, x, r, cfg.fd_eps)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NewtonError("singular Jacobian", t=t, residual=norm) from None
        if not np.all(np.isfinite(dx)):
            raise NewtonError("singular Jacobian", t=t, residual=norm)
        lam = 1.0
        for _ in range(10):
            x_try = x + lam * dx
            r_try = np.asarray(fun(x_try), dtype=np.float64)
            norm_try = float(np.max(np.abs(r_try)))
            if np.isfinite(norm_try) and norm_try < norm:
                break
            lam *= 0.5
        x, r, norm = x_try, r_try, norm_try
    raise NewtonError(f"Newton did not converge in {cfg.max_iters} iterations", t=t, residual=norm)


def solve_algebraic(g: Callable, t: float, y_args, z_guess, cfg: NewtonConfig = DEFAULT_NEWTON) -> np.ndarray:
    """Solve ``0 = g(t, *y_args, z)`` for z."""
    z, _ = newton_solve(lambda z: g(t, *y_args, z), z_guess, cfg, t=t)
    return z


def _implicit_solve(residual: Callable, guess: np.ndarray, cfg: NewtonConfig, t: float) -> np.ndarray:
    u, _ = newton_solve(residual, guess, cfg, t=t)
    return u


def step(scheme, f: Callable, t: float, y: np.ndarray, h: float, cfg: NewtonConfig = DEFAULT_NEWTON) -> np.ndarray:
    """One step of ``scheme`` for ``y' = f(t, y)``."""
    y1, _ = step_with_stages(scheme, f, t, y, h, cfg)
    return y1


def step_with_stages(scheme, f, t, y, h, cfg: NewtonConfig = DEFAULT_NEWTON):
    """One step; also returns the slope at the step start (reused by dense output)."""
    spec = get_scheme(scheme)
    y = np.asarray(y, dtype=np.float64)
    if not h > 0:
        raise ValidationError(f"step size must be > 0 (got {h})")
    if spec.id == "explicit-euler":
        k1 = f(t, y)
        return y + h * k1, k1
    if spec.id == "heun":
        k1 = f(t, y)
        k2 = f(t + h, y + h * k1)
        return y + 0.5 * h * (k1 + k2), k1
    if spec.id == "rk4":
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1
    # implicit Euler
    t1 = t + h
    y1 = _implicit_solve(lambda Y: Y - y - h * f(t1, Y), y, cfg, t1)
    return y1, None


def dense_output(scheme, t0: float, t1: float, y0, y1, f0=None, f1=None) -> Waveform:
    """Continuous extension of one step.

    Euler-type schemes give the linear segment; Heun and RK4 give the cubic
    Hermite interpolant on endpoint values and slopes.
    """
    spec = get_scheme(scheme)
    if spec.dense_output_order is None:
        raise ValidationError(f"scheme {spec.id} has no dense output")
    if spec.dense_output_order == 1:
        return linear_dense_waveform(t0, t1, y0, y1, order=1)
    if f0 is None or f1 is None:
        raise ValidationError(f"{spec.id} dense output needs endpoint slopes")
    return hermite_waveform(t0, t1, y0, y1, f0, f1, order=spec.dense_output_order)


def step_dense(scheme, f, t, y, h, cfg: NewtonConfig = DEFAULT_NEWTON):
    """One step plus its dense-output waveform over ``[t, t+h]``."""
    spec = get_scheme(scheme)
    y1, k1 = step_with_stages(spec, f, t, y, h, cfg)
    if spec.dense_output_order == 1:
        return y1, dense_output(spec, t, t + h, y, y1)
    return y1, dense_output(spec, t, t + h, y, y1, k1, f(t + h, y1))


def ode_step(scheme, rhs: Callable, t: float, y, h: float, partner: Waveform, cfg: NewtonConfig = DEFAULT_NEWTON):
    """Step ``y' = rhs(t, y, partner(t))`` with the partner frozen as a waveform."""
    return step(scheme, lambda tt, yy: rhs(tt, yy, partner(tt)), t, y, h, cfg)


def implicit_euler_dae_step(f: Callable, g: Callable, t: float, y, z, h: float, cfg: NewtonConfig = DEFAULT_NEWTON):
    """Implicit Euler for ``y' = f(t, y, z), 0 = g(t, y, z)`` on the stacked unknown.

    Partner coupling is expected to be bound into ``f`` and ``g`` already.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    ny = y.size
    t1 = t + h
    if z.size == 0:
        empty = z

        def residual(Y):
            return Y - y - h * f(t1, Y, empty)

        return _implicit_solve(residual, y, cfg, t1), empty.copy()

    def residual(u):
        Y, Z = u[:ny], u[ny:]
        return np.concatenate([Y - y - h * f(t1, Y, Z), np.atleast_1d(g(t1, Y, Z))])

    u = _implicit_solve(residual, np.concatenate([y, z]), cfg, t1)
    return u[:ny], u[ny:]
