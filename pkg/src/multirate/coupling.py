"""Coupling waveforms: extrapolation and interpolation operators of fixed order.

A :class:`Waveform` only stores node data (times, values, optional slopes), so
it can be pickled or serialized to a dict and shipped between workers.  Every
operator is linear in that data; ``lphi`` is the sup-norm operator bound of the
map from data to waveform values on the evaluation window, i.e. the maximum
over the window of the absolute basis-function sum.
"""

from __future__ import annotations

import io
from functools import lru_cache
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ValidationError, WaveformWindowError

_SCAN_POINTS = 501


class WaveformKind(str, Enum):
    CONSTANT_EXTRAP = "constant-extrap"
    LINEAR_EXTRAP = "linear-extrap"
    HISTORY_POLY_EXTRAP = "history-poly-extrap"
    NODE_INTERP = "node-interp"
    DENSE_OUTPUT = "dense-output"


def lagrange_basis(nodes: np.ndarray, t: float) -> np.ndarray:
    """Values of all Lagrange basis polynomials on ``nodes`` at ``t``."""
    nodes = np.asarray(nodes, dtype=np.float64)
    n = nodes.size
    out = np.ones(n)
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i] *= (t - nodes[j]) / (nodes[i] - nodes[j])
    return out


def hermite_basis(t0: float, t1: float, t: float) -> np.ndarray:
    """Cubic Hermite basis, ordered (value0, value1, slope0, slope1).

    Slope entries already include the step length factor.
    """
    dt = t1 - t0
    s = (t - t0) / dt
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h10 = s * (1 - s) ** 2
    h11 = s * s * (s - 1)
    return np.array([h00, h01, dt * h10, dt * h11])


def max_abs_basis_sum(basis, a: float, b: float) -> float:
    """Maximize ``sum |basis(t)|`` over ``[a, b]``: 501-point scan, then bounded refinement."""
    if b <= a:
        return float(np.sum(np.abs(basis(a))))
    grid = np.linspace(a, b, _SCAN_POINTS)
    vals = np.array([np.sum(np.abs(basis(t))) for t in grid])
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda t: -np.sum(np.abs(basis(t))),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, abs(b - a))},
        )
        best = max(best, float(-res.fun))
    return best


@lru_cache(maxsize=1024)
def _lagrange_lphi_normalized(nodes: tuple, lo: float, hi: float) -> float:
    u = np.array(nodes)
    return max_abs_basis_sum(lambda t: lagrange_basis(u, t), lo, hi)


def lagrange_lphi(times: np.ndarray, a: float, b: float) -> float:
    """Lebesgue-type constant of the nodes on ``[a, b]``.

    The basis sum is invariant under affine maps of time, so the maximization
    runs on coordinates normalized to the window and is cached.
    """
    span = b - a if b > a else 1.0
    u = tuple(round(float(x), 12) for x in (np.asarray(times) - a) / span)
    return _lagrange_lphi_normalized(u, 0.0, round((b - a) / span, 12))


@lru_cache(maxsize=1024)
def hermite_lphi(dt: float) -> float:
    return max_abs_basis_sum(lambda t: hermite_basis(0.0, dt, t), 0.0, dt)


@dataclass(frozen=True, eq=False)
class Waveform:
    t_start: float
    t_end: float
    kind: WaveformKind
    times: np.ndarray
    values: np.ndarray
    order: int
    lphi: float
    slopes: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def domain(self) -> tuple[float, float]:
        if self.kind in (WaveformKind.NODE_INTERP, WaveformKind.HISTORY_POLY_EXTRAP):
            return min(self.t_start, float(self.times.min())), max(self.t_end, float(self.times.max()))
        return self.t_start, self.t_end

    def basis(self, t: float) -> np.ndarray:
        if self.kind is WaveformKind.CONSTANT_EXTRAP:
            return np.ones(1)
        if self.kind is WaveformKind.LINEAR_EXTRAP:
            return np.array([1.0, t - self.times[0]])
        if self.kind is WaveformKind.DENSE_OUTPUT and self.slopes is not None:
            return hermite_basis(self.times[0], self.times[1], t)
        return lagrange_basis(self.times, t)

    def data(self) -> np.ndarray:
        """Stacked input data matching :meth:`basis` (rows = basis functions)."""
        if self.kind is WaveformKind.LINEAR_EXTRAP:
            return np.vstack([self.values[:1], self.slopes[:1]])
        if self.kind is WaveformKind.DENSE_OUTPUT and self.slopes is not None:
            return np.vstack([self.values, self.slopes])
        return self.values

    def __call__(self, t: float) -> np.ndarray:
        lo, hi = self.domain()
        tol = 1e-10 * max(1.0, abs(lo), abs(hi))
        if t < lo - tol or t > hi + tol:
            raise WaveformWindowError(
                f"{self.kind.value} waveform evaluated at t={t!r} outside [{lo!r}, {hi!r}]"
            )
        return self.basis(t) @ self.data()

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        ts = np.linspace(self.t_start, self.t_end, n)
        return ts, np.array([self(t) for t in ts])

    def to_dict(self) -> dict:
        return {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "kind": self.kind.value,
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "order": self.order,
            "lphi": self.lphi,
            "slopes": None if self.slopes is None else self.slopes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Waveform":
        return cls(
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            kind=WaveformKind(d["kind"]),
            times=np.asarray(d["times"], dtype=np.float64),
            values=np.asarray(d["values"], dtype=np.float64),
            order=int(d["order"]),
            lphi=float(d["lphi"]),
            slopes=None if d.get("slopes") is None else np.asarray(d["slopes"], dtype=np.float64),
        )


def _as_rows(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def _check_window(H: float) -> None:
    if not H > 0:
        raise ValidationError(f"window length must be > 0 (got {H})")


def _node_arrays(nodes):
    if len(nodes) == 0:
        raise ValidationError("no interpolation nodes given")
    times = np.array([float(t) for t, _ in nodes])
    values = np.array([np.atleast_1d(np.asarray(v, dtype=np.float64)) for _, v in nodes])
    if np.unique(times).size != times.size:
        raise ValidationError(f"duplicate node times in {times.tolist()}")
    return times, values


def extrapolate_constant(t_bar: float, v, H: float) -> Waveform:
    _check_window(H)
    return Waveform(
        t_start=float(t_bar),
        t_end=float(t_bar) + H,
        kind=WaveformKind.CONSTANT_EXTRAP,
        times=np.array([float(t_bar)]),
        values=_as_rows(v),
        order=0,
        lphi=1.0,
    )


def extrapolate_linear(t_bar: float, v, slope, H: float) -> Waveform:
    """Taylor extrapolation ``v + (t - t_bar) * slope``.

    The data vector is ``(v, slope)``, hence ``lphi = 1 + H``.
    """
    _check_window(H)
    return Waveform(
        t_start=float(t_bar),
        t_end=float(t_bar) + H,
        kind=WaveformKind.LINEAR_EXTRAP,
        times=np.array([float(t_bar)]),
        values=_as_rows(v),
        order=1,
        lphi=1.0 + H,
        slopes=_as_rows(slope),
    )


def extrapolate_history(nodes, q: int, window: tuple[float, float]) -> Waveform:
    """Degree-q polynomial through the last q+1 nodes, evaluated on ``window``."""
    t_start, t_stop = float(window[0]), float(window[1])
    _check_window(t_stop - t_start)
    times, values = _node_arrays(nodes)
    if times.size < q + 1:
        raise ValidationError(f"degree-{q} extrapolation needs {q + 1} nodes, got {times.size}")
    order = np.argsort(times)
    times, values = times[order][-(q + 1):], values[order][-(q + 1):]
    if times.max() > t_start + 1e-12 * max(1.0, abs(t_start)):
        raise ValidationError("extrapolation nodes must not lie after the window start")
    if q == 0:
        return extrapolate_constant(t_start, values[-1], t_stop - t_start)
    lphi = lagrange_lphi(times, t_start, t_stop)
    return Waveform(
        t_start=t_start,
        t_end=t_stop,
        kind=WaveformKind.HISTORY_POLY_EXTRAP,
        times=times,
        values=values,
        order=q,
        lphi=lphi,
    )


def interpolate_nodes(nodes, q: int, window: Optional[tuple[float, float]] = None) -> Waveform:
    """Degree-q interpolant through exactly q+1 nodes.

    ``window`` defaults to the node hull; ``lphi`` is taken over the window.
    """
    times, values = _node_arrays(nodes)
    if times.size != q + 1:
        raise ValidationError(f"degree-{q} interpolation needs {q + 1} nodes, got {times.size}")
    order = np.argsort(times)
    times, values = times[order], values[order]
    if window is None:
        window = (float(times[0]), float(times[-1]))
    t_start, t_stop = float(window[0]), float(window[1])
    if q == 0:
        lphi = 1.0
    else:
        lphi = lagrange_lphi(times, t_start, t_stop)
    return Waveform(
        t_start=t_start,
        t_end=t_stop,
        kind=WaveformKind.NODE_INTERP,
        times=times,
        values=values,
        order=q,
        lphi=lphi,
    )


def hermite_waveform(t0: float, t1: float, y0, y1, f0, f1, order: int) -> Waveform:
    values = np.vstack([_as_rows(y0), _as_rows(y1)])
    slopes = np.vstack([_as_rows(f0), _as_rows(f1)])
    lphi = hermite_lphi(round(float(t1 - t0), 15))
    return Waveform(
        t_start=float(t0),
        t_end=float(t1),
        kind=WaveformKind.DENSE_OUTPUT,
        times=np.array([float(t0), float(t1)]),
        values=values,
        order=order,
        lphi=lphi,
        slopes=slopes,
    )


def linear_dense_waveform(t0: float, t1: float, y0, y1, order: int = 1) -> Waveform:
    return Waveform(
        t_start=float(t0),
        t_end=float(t1),
        kind=WaveformKind.DENSE_OUTPUT,
        times=np.array([float(t0), float(t1)]),
        values=np.vstack([_as_rows(y0), _as_rows(y1)]),
        order=order,
        lphi=1.0,
    )


def operator_lphi(w: Waveform) -> float:
    return w.lphi


def waveform_csv(w: Waveform, n_samples: int = 101) -> str:
    """Debug dump: one row ``t, value...`` per sample point."""
    ts, vals = w.sample(n_samples)
    buf = io.StringIO()
    buf.write("t," + ",".join(f"v{i}" for i in range(w.dim)) + "\n")
    for t, row in zip(ts, vals):
        buf.write(",".join(format(x, ".17g") for x in (t, *row)) + "\n")
    return buf.getvalue()
