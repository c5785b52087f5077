"""Problem definitions, macro-step plans, window tiling and trajectories."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError


class Strategy(str, Enum):
    FULLY_DECOUPLED = "fully-decoupled"
    SLOWEST_FIRST = "slowest-first"
    FASTEST_FIRST = "fastest-first"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "fullydecoupled": cls.FULLY_DECOUPLED,
            "slowestfirst": cls.SLOWEST_FIRST,
            "fastestfirst": cls.FASTEST_FIRST,
        }
        for member in cls:
            if member.value == key:
                return member
        if key.replace("-", "") in aliases:
            return aliases[key.replace("-", "")]
        raise ValidationError(f"unknown strategy {value!r}")


def _vector(values, name, size=None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    if size is not None and arr.shape[0] != size:
        raise ValidationError(f"{name} has length {arr.shape[0]}, expected {size}")
    return arr


@dataclass(frozen=True)
class PartitionedOde:
    """Component-wise partitioned ODE ``y_S' = f_S(t, y_S, y_F)``, ``y_F' = f_F(t, y_S, y_F)``."""

    dim_slow: int
    dim_fast: int
    f_slow: Callable
    f_fast: Callable
    y_slow0: np.ndarray
    y_fast0: np.ndarray
    t0: float
    t_end: float
    name: str = ""
    single_rate: bool = False

    def __post_init__(self):
        errors = []
        if int(self.dim_slow) < 1:
            errors.append("dim_slow must be >= 1")
        if int(self.dim_fast) < 1:
            errors.append("dim_fast must be >= 1")
        if not float(self.t0) < float(self.t_end):
            errors.append("t0 must be smaller than t_end")
        if errors:
            raise ValidationError(errors)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "y_slow0", _vector(self.y_slow0, "y_slow0", self.dim_slow))
        object.__setattr__(self, "y_fast0", _vector(self.y_fast0, "y_fast0", self.dim_fast))

    @property
    def is_dae(self) -> bool:
        return False

    def with_horizon(self, t_end: float) -> "PartitionedOde":
        return dataclasses.replace(self, t_end=t_end)


@dataclass(frozen=True)
class PartitionedDae:
    """Split semi-explicit index-1 DAE.

    Every callable takes ``(t, y_S, y_F, z_S, z_F)``.  Algebraic dimensions may be
    zero, in which case the corresponding ``g`` must return an empty array.
    """

    dim_slow: int
    dim_fast: int
    dim_zslow: int
    dim_zfast: int
    f_slow: Callable
    f_fast: Callable
    g_slow: Callable
    g_fast: Callable
    y_slow0: np.ndarray
    y_fast0: np.ndarray
    z_slow0: np.ndarray
    z_fast0: np.ndarray
    t0: float
    t_end: float
    name: str = ""
    single_rate: bool = False

    def __post_init__(self):
        errors = []
        if int(self.dim_slow) < 1:
            errors.append("dim_slow must be >= 1")
        if int(self.dim_fast) < 1:
            errors.append("dim_fast must be >= 1")
        if int(self.dim_zslow) < 0 or int(self.dim_zfast) < 0:
            errors.append("algebraic dimensions must be >= 0")
        if not float(self.t0) < float(self.t_end):
            errors.append("t0 must be smaller than t_end")
        if errors:
            raise ValidationError(errors)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "y_slow0", _vector(self.y_slow0, "y_slow0", self.dim_slow))
        object.__setattr__(self, "y_fast0", _vector(self.y_fast0, "y_fast0", self.dim_fast))
        object.__setattr__(self, "z_slow0", _vector(self.z_slow0, "z_slow0", self.dim_zslow))
        object.__setattr__(self, "z_fast0", _vector(self.z_fast0, "z_fast0", self.dim_zfast))

    @property
    def is_dae(self) -> bool:
        return True

    def with_horizon(self, t_end: float) -> "PartitionedDae":
        return dataclasses.replace(self, t_end=t_end)


def lift_single_rate(problem):
    """Flag a problem for monolithic single-rate integration (reference runs)."""
    if problem.single_rate:
        return problem
    return dataclasses.replace(problem, single_rate=True)


@dataclass(frozen=True)
class MacroStepPlan:
    H: float
    m: int = 1
    strategy: Strategy = Strategy.FULLY_DECOUPLED
    scheme_slow: str = "explicit-euler"
    scheme_fast: str = "explicit-euler"
    extrap_order: int = 0
    interp_order: int = 1
    k: int = 1
    dense_output: bool = False

    @property
    def h(self) -> float:
        return self.H / self.m

    def replace(self, **changes) -> "MacroStepPlan":
        return dataclasses.replace(self, **changes)


MAX_EXTRAP_ORDER = 4


def validate_plan(plan: MacroStepPlan, problem=None) -> MacroStepPlan:
    """Check a plan against the available operators and return it normalized.

    Every violated field is reported in one :class:`ValidationError`.
    """
    from .steppers import SCHEMES, get_scheme

    errors = []
    try:
        H = float(plan.H)
        if not math.isfinite(H) or H <= 0:
            errors.append(f"macro step H must be > 0 (got {plan.H})")
    except (TypeError, ValueError):
        errors.append(f"macro step H must be a number (got {plan.H!r})")
        H = float("nan")
    m = plan.m
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        errors.append(f"multirate factor must be ≥ 1 (got {m})")
        m = 1
    k = plan.k
    if not isinstance(k, (int, np.integer)) or k < 1:
        errors.append(f"iteration count k must be ≥ 1 (got {k})")
    try:
        strategy = Strategy.parse(plan.strategy)
    except ValidationError as exc:
        errors.extend(exc.problems)
        strategy = Strategy.FULLY_DECOUPLED
    schemes = {}
    for side in ("scheme_slow", "scheme_fast"):
        try:
            schemes[side] = get_scheme(getattr(plan, side))
        except ValidationError:
            errors.append(
                f"{side}: unknown scheme id {getattr(plan, side)!r} "
                f"(known: {', '.join(sorted(SCHEMES))})"
            )
    q_ext, q_int = plan.extrap_order, plan.interp_order
    if not isinstance(q_ext, (int, np.integer)) or not 0 <= q_ext <= MAX_EXTRAP_ORDER:
        errors.append(f"extrap_order must be an integer in [0, {MAX_EXTRAP_ORDER}] (got {q_ext})")
    elif q_ext >= 2 and m < q_ext:
        errors.append(
            f"extrap_order={q_ext} needs at least {q_ext + 1} previous fast nodes; "
            f"multirate factor {m} is too small"
        )
    if not isinstance(q_int, (int, np.integer)) or q_int < 0:
        errors.append(f"interp_order must be a nonnegative integer (got {q_int})")
        q_int = 0

    is_dae = problem is not None and problem.is_dae and not problem.single_rate
    if is_dae:
        for side, spec in schemes.items():
            if spec.id != "implicit-euler":
                errors.append(f"{side}: DAE integration supports only implicit-euler (got {spec.id})")
        if q_int > 1:
            errors.append("interp_order > 1 is not available for the DAE path (implicit Euler is first order)")
    else:
        if k != 1 and isinstance(k, (int, np.integer)):
            errors.append("ODE integration uses a single sweep (k must be 1)")

    dense = bool(plan.dense_output)
    if strategy is Strategy.SLOWEST_FIRST and "scheme_slow" in schemes and not is_dae:
        dense_order = schemes["scheme_slow"].dense_output_order
        if dense:
            if dense_order is None:
                errors.append(f"scheme {schemes['scheme_slow'].id} has no dense output")
            else:
                q_int = dense_order
        elif q_int >= 2 and (dense_order is None or dense_order < q_int):
            errors.append(
                f"interp_order={q_int} for the slow channel needs dense output of that order; "
                f"{schemes['scheme_slow'].id} provides {dense_order}"
            )
        elif q_int >= 2:
            dense = True
    if strategy is Strategy.FASTEST_FIRST and q_int > m:
        errors.append(f"interp_order={q_int} exceeds the {m + 1} fast micro nodes available")

    if problem is not None and math.isfinite(H) and H > 0:
        span = problem.t_end - problem.t0
        if span <= 0:
            errors.append("problem horizon is empty")
    if errors:
        raise ValidationError(errors)
    return MacroStepPlan(
        H=H,
        m=int(m),
        strategy=strategy,
        scheme_slow=schemes["scheme_slow"].id,
        scheme_fast=schemes["scheme_fast"].id,
        extrap_order=int(q_ext),
        interp_order=int(q_int),
        k=int(k),
        dense_output=dense,
    )


def macro_windows(t0: float, t_end: float, H: float) -> list[tuple[float, float]]:
    """Tile ``[t0, t_end]`` with windows of length H; the last one may be shorter.

    Window boundaries are computed as ``t0 + i*H`` and the final boundary is
    ``t_end`` exactly, so no drift accumulates.
    """
    if H <= 0:
        raise ValidationError(f"macro step H must be > 0 (got {H})")
    span = t_end - t0
    ratio = span / H
    n_full = int(round(ratio))
    if abs(ratio - n_full) > 1e-9 * max(1.0, ratio):
        n_full = int(math.floor(ratio))
    n_full = max(n_full, 0)
    bounds = [t0 + i * H for i in range(n_full + 1)]
    if n_full == 0:
        bounds = [t0, t_end]
    elif t_end - bounds[-1] > 1e-12 * max(1.0, abs(t_end)):
        bounds.append(t_end)
    else:
        bounds[-1] = t_end
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def micro_grid(t_start: float, t_stop: float, m: int) -> np.ndarray:
    h = (t_stop - t_start) / m
    grid = t_start + h * np.arange(m + 1, dtype=np.float64)
    grid[0] = t_start
    grid[-1] = t_stop
    return grid


@dataclass
class Trajectory:
    macro_times: np.ndarray
    slow_states: np.ndarray
    fast_micro_times: np.ndarray
    fast_states: np.ndarray
    z_slow_states: Optional[np.ndarray] = None
    z_fast_states: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def t_end(self) -> float:
        return float(self.macro_times[-1])

    def final_state(self) -> dict:
        out = {"y_slow": self.slow_states[-1], "y_fast": self.fast_states[-1]}
        if self.z_slow_states is not None:
            out["z_slow"] = self.z_slow_states[-1]
        if self.z_fast_states is not None:
            out["z_fast"] = self.z_fast_states[-1]
        return out

    def fast_at_macro(self) -> np.ndarray:
        idx = np.searchsorted(self.fast_micro_times, self.macro_times)
        return self.fast_states[idx]

    def z_fast_at_macro(self) -> Optional[np.ndarray]:
        if self.z_fast_states is None:
            return None
        idx = np.searchsorted(self.fast_micro_times, self.macro_times)
        return self.z_fast_states[idx]

    def equals(self, other: "Trajectory") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return all(
            same(getattr(self, name), getattr(other, name))
            for name in (
                "macro_times",
                "slow_states",
                "fast_micro_times",
                "fast_states",
                "z_slow_states",
                "z_fast_states",
            )
        )


def validate_trajectory(traj: Trajectory, t0: float = None, t_end: float = None) -> None:
    """Raise :class:`ValidationError` if grids or state arrays are inconsistent."""
    errors = []
    mt, ft = traj.macro_times, traj.fast_micro_times
    if mt.ndim != 1 or mt.size < 2:
        errors.append("macro_times must hold at least two nodes")
    if np.any(np.diff(mt) <= 0):
        errors.append("macro_times not strictly increasing")
    if np.any(np.diff(ft) <= 0):
        errors.append("fast_micro_times not strictly increasing")
    if not np.all(np.isin(mt, ft)):
        errors.append("macro nodes missing from fast_micro_times")
    if traj.slow_states.shape[0] != mt.size:
        errors.append("slow_states length does not match macro_times")
    if traj.fast_states.shape[0] != ft.size:
        errors.append("fast_states length does not match fast_micro_times")
    if traj.z_slow_states is not None and traj.z_slow_states.shape[0] != mt.size:
        errors.append("z_slow_states length does not match macro_times")
    if traj.z_fast_states is not None and traj.z_fast_states.shape[0] != ft.size:
        errors.append("z_fast_states length does not match fast_micro_times")
    if t0 is not None and mt.size and mt[0] != t0:
        errors.append(f"first macro node {mt[0]!r} != t0 {t0!r}")
    if t_end is not None and mt.size and mt[-1] != t_end:
        errors.append(f"last macro node {mt[-1]!r} != t_end {t_end!r}")
    if errors:
        raise ValidationError(errors)
