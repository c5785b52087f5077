"""Benchmark problems with oracle references.

Linear problems (ODE and DAE) carry a matrix-exponential reference; the
nonlinear oscillator uses a fine single-rate RK4 run.  References are
evaluated lazily and cached per end time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .core import MacroStepPlan, PartitionedDae, PartitionedOde, lift_single_rate
from .errors import ValidationError

SELF_CHECK_TOL = 1e-10


def _mat(a, rows, cols, name):
    if a is None:
        return np.zeros((rows, cols))
    arr = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    if arr.shape != (rows, cols):
        raise ValidationError(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    return arr


@dataclass(frozen=True, eq=False)
class LinearOdeData:
    A_SS: np.ndarray
    A_SF: np.ndarray
    A_FS: np.ndarray
    A_FF: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.A_SS, self.A_SF], [self.A_FS, self.A_FF]])


def linear_ode(A_SS, A_SF, A_FS, A_FF, y_slow0, y_fast0, t0=0.0, t_end=1.0, name="linear-ode"):
    """Build ``y' = A y`` split into slow/fast blocks; returns (problem, data)."""
    ys0 = np.atleast_1d(np.asarray(y_slow0, dtype=np.float64))
    yf0 = np.atleast_1d(np.asarray(y_fast0, dtype=np.float64))
    ns, nf = ys0.size, yf0.size
    d = LinearOdeData(
        _mat(A_SS, ns, ns, "A_SS"), _mat(A_SF, ns, nf, "A_SF"),
        _mat(A_FS, nf, ns, "A_FS"), _mat(A_FF, nf, nf, "A_FF"),
    )

    def f_slow(t, ys, yf):
        return d.A_SS @ ys + d.A_SF @ yf

    def f_fast(t, ys, yf):
        return d.A_FS @ ys + d.A_FF @ yf

    problem = PartitionedOde(ns, nf, f_slow, f_fast, ys0, yf0, t0, t_end, name=name)
    return problem, d


@dataclass(frozen=True, eq=False)
class LinearDaeData:
    """``y' = A y + B z``, ``0 = C y + D z`` in slow/fast block form."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    ns: int
    nf: int
    nzs: int
    nzf: int

    def z_of_y(self) -> np.ndarray:
        return -np.linalg.solve(self.D, self.C)

    def reduced(self) -> np.ndarray:
        if self.D.size == 0:
            return self.A
        return self.A + self.B @ self.z_of_y()


def linear_dae(blocks: dict, y_slow0, y_fast0, t0=0.0, t_end=1.0, name="linear-dae", dim_zslow=None, dim_zfast=None):
    """Build a linear split DAE from named blocks.

    Block names: ``A_XY`` (f_X w.r.t. y_Y), ``B_XY`` (f_X w.r.t. z_Y),
    ``C_XY`` (g_X w.r.t. y_Y), ``D_XY`` (g_X w.r.t. z_Y), X, Y in {S, F}.
    Missing blocks are zero.  The constraints read ``0 = C y + D z``.
    """
    ys0 = np.atleast_1d(np.asarray(y_slow0, dtype=np.float64))
    yf0 = np.atleast_1d(np.asarray(y_fast0, dtype=np.float64))
    ns, nf = ys0.size, yf0.size

    def infer(side):
        if side == "S" and dim_zslow is not None:
            return dim_zslow
        if side == "F" and dim_zfast is not None:
            return dim_zfast
        for key in (f"D_{side}{side}", f"C_{side}S", f"C_{side}F"):
            if blocks.get(key) is not None:
                return np.atleast_2d(blocks[key]).shape[0]
        return 0

    nzs, nzf = infer("S"), infer("F")
    dims_y = {"S": ns, "F": nf}
    dims_z = {"S": nzs, "F": nzf}

    def block(prefix, rows_of, cols_of):
        return np.block([
            [_mat(blocks.get(f"{prefix}_{r}{c}"), rows_of[r], cols_of[c], f"{prefix}_{r}{c}") for c in "SF"]
            for r in "SF"
        ])

    A = block("A", dims_y, dims_y)
    B = block("B", dims_y, dims_z)
    C = block("C", dims_z, dims_y)
    D = block("D", dims_z, dims_z)
    if nzs + nzf:
        for side in "SF":
            n = dims_z[side]
            if n and abs(np.linalg.det(_mat(blocks.get(f"D_{side}{side}"), n, n, "D"))) < 1e-12:
                raise ValidationError(f"constraint block D_{side}{side} is singular (subsystem not index 1)")
        if abs(np.linalg.det(D)) < 1e-12:
            raise ValidationError("full algebraic Jacobian D is singular (system not index 1)")
    data = LinearDaeData(A, B, C, D, ns, nf, nzs, nzf)
    sy, fy = slice(0, ns), slice(ns, ns + nf)
    sz, fz = slice(0, nzs), slice(nzs, nzs + nzf)

    def make_f(rows):
        Ay, Bz = A[rows], B[rows]

        def f(t, ys, yf, zs, zf):
            return Ay @ np.concatenate([ys, yf]) + Bz @ np.concatenate([zs, zf])

        return f

    def make_g(rows):
        Cy, Dz = C[rows], D[rows]

        def g(t, ys, yf, zs, zf):
            return Cy @ np.concatenate([ys, yf]) + Dz @ np.concatenate([zs, zf])

        return g

    if nzs + nzf:
        z0 = data.z_of_y() @ np.concatenate([ys0, yf0])
    else:
        z0 = np.zeros(0)
    problem = PartitionedDae(
        ns, nf, nzs, nzf, make_f(sy), make_f(fy), make_g(sz), make_g(fz),
        ys0, yf0, z0[sz], z0[fz], t0, t_end, name=name,
    )
    return problem, data


@dataclass(eq=False)
class CatalogEntry:
    id: str
    problem: object
    reference: Callable
    description: str = ""
    metadata: dict = field(default_factory=dict)
    self_check: Optional[Callable] = None

    @property
    def is_dae(self) -> bool:
        return self.problem.is_dae


def _ode_reference(problem: PartitionedOde, data: LinearOdeData):
    w0 = np.concatenate([problem.y_slow0, problem.y_fast0])
    ns = problem.dim_slow

    @lru_cache(maxsize=4096)
    def ref(t: float):
        w = expm(data.full * (t - problem.t0)) @ w0
        return {"y_slow": w[:ns], "y_fast": w[ns:]}

    return lambda t: ref(float(t))


def _dae_reference(problem: PartitionedDae, data: LinearDaeData):
    y0 = np.concatenate([problem.y_slow0, problem.y_fast0])
    Ar = data.reduced()
    Zy = data.z_of_y() if data.D.size else np.zeros((0, y0.size))
    ns, nzs = data.ns, data.nzs

    @lru_cache(maxsize=4096)
    def ref(t: float):
        y = expm(Ar * (t - problem.t0)) @ y0
        z = Zy @ y
        return {"y_slow": y[:ns], "y_fast": y[ns:], "z_slow": z[:nzs], "z_fast": z[nzs:]}

    return lambda t: ref(float(t))


def _expm_self_check(matrix: np.ndarray, w0: np.ndarray, span: float):
    """Full-interval exponential versus the square of the half-interval one."""

    def check():
        full = expm(matrix * span) @ w0
        half = expm(matrix * (span / 2))
        return float(np.max(np.abs(full - half @ (half @ w0))))

    return check


def lin2_problem(coupling=(0.1, 0.2), fast_rate=-10.0, t_end=1.0, name="lin2"):
    return linear_ode([[-1.0]], [[coupling[0]]], [[coupling[1]]], [[fast_rate]], [1.0], [1.0], 0.0, t_end, name)


def lin2(coupling=(0.1, 0.2), fast_rate=-10.0, t_end=1.0, name="lin2") -> CatalogEntry:
    problem, data = lin2_problem(coupling, fast_rate, t_end, name)
    return CatalogEntry(
        name, problem, _ode_reference(problem, data),
        f"y_S' = -y_S + {coupling[0]} y_F, y_F' = {coupling[1]} y_S + {fast_rate} y_F, y(0) = (1, 1)",
        {"stiffness_ratio": abs(fast_rate), "coupling": tuple(coupling), "matrix": data.full},
        _expm_self_check(data.full, np.array([1.0, 1.0]), t_end),
    )


def lin2_stiff(t_end=1.0) -> CatalogEntry:
    return lin2(fast_rate=-200.0, t_end=t_end, name="lin2-stiff")


def lin2_decoupled(t_end=1.0) -> CatalogEntry:
    return lin2(coupling=(0.0, 0.0), t_end=t_end, name="lin2-decoupled")


def nonlin_osc_problem(t_end=1.0):
    def f_slow(t, ys, yf):
        return -ys + 0.1 * np.sin(yf)

    def f_fast(t, ys, yf):
        return -8.0 * yf + 0.2 * ys**2

    return PartitionedOde(1, 1, f_slow, f_fast, [1.0], [1.0], 0.0, t_end, name="nonlin-osc")


NONLIN_REF_STEP = 1e-4


def fine_rk4_reference(problem: PartitionedOde, h: float = NONLIN_REF_STEP):
    from .ode import integrate

    lifted = lift_single_rate(problem)

    @lru_cache(maxsize=256)
    def ref(t: float, step: float):
        if t == problem.t0:
            return {"y_slow": problem.y_slow0, "y_fast": problem.y_fast0}
        p = lifted.with_horizon(t)
        n = max(1, int(np.ceil((t - problem.t0) / step - 1e-9)))
        traj = integrate(p, MacroStepPlan(H=(t - problem.t0) / n, scheme_slow="rk4", scheme_fast="rk4"))
        return {"y_slow": traj.slow_states[-1], "y_fast": traj.fast_states[-1]}

    return ref


def nonlin_osc(t_end=1.0) -> CatalogEntry:
    problem = nonlin_osc_problem(t_end)
    ref = fine_rk4_reference(problem)

    def check():
        a, b = ref(problem.t_end, NONLIN_REF_STEP), ref(problem.t_end, NONLIN_REF_STEP / 2)
        return max(float(np.max(np.abs(a[k] - b[k]))) for k in a)

    return CatalogEntry(
        "nonlin-osc", problem, lambda t: ref(float(t), NONLIN_REF_STEP),
        "y_S' = -y_S + 0.1 sin(y_F), y_F' = -8 y_F + 0.2 y_S^2, y(0) = (1, 1); fine RK4 reference",
        {"stiffness_ratio": 8.0}, check,
    )


def dae_lin_problem(a=1.0, b=0.0, c=1.0, d=0.0, t_end=1.0):
    if abs(b * d - 1.0) < 1e-12:
        raise ValidationError(f"DAE-LIN with b*d = 1 (b={b}, d={d}) has a singular algebraic Jacobian")
    blocks = {
        "A_SS": [[-1.0]], "B_SF": [[1.0]],
        "A_FF": [[-10.0]], "B_FS": [[1.0]],
        "C_SS": [[-a]], "D_SS": [[1.0]], "D_SF": [[-b]],
        "C_FF": [[-c]], "D_FF": [[1.0]], "D_FS": [[-d]],
    }
    return linear_dae(blocks, [1.0], [1.0], 0.0, t_end, name="dae-lin")


def dae_lin(a=1.0, b=0.0, c=1.0, d=0.0, t_end=1.0) -> CatalogEntry:
    problem, data = dae_lin_problem(a, b, c, d, t_end)
    return CatalogEntry(
        "dae-lin", problem, _dae_reference(problem, data),
        f"y_S' = -y_S + z_F, 0 = z_S - {a} y_S - {b} z_F, y_F' = -10 y_F + z_S, 0 = z_F - {c} y_F - {d} z_S",
        {"params": {"a": a, "b": b, "c": c, "d": d}, "alpha": (abs(b), abs(d)), "data": data},
        _expm_self_check(data.reduced(), np.array([1.0, 1.0]), t_end),
    )


def dae_ode(a=1.0, b=0.5, t_end=1.0) -> CatalogEntry:
    blocks = {
        "A_SS": [[-1.0]], "A_SF": [[1.0]],
        "A_FF": [[-10.0]], "B_FS": [[1.0]],
        "C_SS": [[-a]], "C_SF": [[-b]], "D_SS": [[1.0]],
    }
    problem, data = linear_dae(blocks, [1.0], [1.0], 0.0, t_end, name="dae-ode", dim_zslow=1, dim_zfast=0)
    return CatalogEntry(
        "dae-ode", problem, _dae_reference(problem, data),
        f"y_S' = -y_S + y_F, 0 = z_S - {a} y_S - {b} y_F, y_F' = -10 y_F + z_S (fast side is an ODE)",
        {"params": {"a": a, "b": b}, "alpha": (0.0, 0.0), "data": data},
        _expm_self_check(data.reduced(), np.array([1.0, 1.0]), t_end),
    )


_FACTORIES = {
    "lin2": lin2,
    "lin2-stiff": lin2_stiff,
    "lin2-decoupled": lin2_decoupled,
    "nonlin-osc": nonlin_osc,
    "dae-lin": dae_lin,
    "dae-ode": dae_ode,
}


def catalog() -> dict:
    """All built-in problems with default parameters, keyed by id."""
    return {key: factory() for key, factory in _FACTORIES.items()}


def get_problem(problem_id: str, **params) -> CatalogEntry:
    key = problem_id.strip().lower().replace("_", "-")
    if key not in _FACTORIES:
        raise ValidationError(f"unknown problem {problem_id!r} (known: {', '.join(_FACTORIES)})")
    try:
        return _FACTORIES[key](**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {key}: {exc}") from None


def reference_self_check(entry: CatalogEntry) -> float:
    """Distance at t_end between two oracle resolutions differing by a factor 2."""
    return entry.self_check()
