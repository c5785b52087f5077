"""Lipschitz estimates, contraction ratios and per-strategy stability verdicts.

All constants are maxima over sample points of sup-norm (row-sum) induced
norms of finite-difference Jacobian blocks.  Sampling only sees the states it
is given, so every estimate is a lower bound of the true supremum.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MacroStepPlan, PartitionedDae, Strategy, lift_single_rate
from .errors import NumericalError, ValidationError

_CBRT_EPS = float(np.finfo(np.float64).eps ** (1.0 / 3.0))

SIDES = ("S", "F")
LOWER_BOUND_NOTE = "estimates are maxima over sampled states (lower bounds of the true suprema)"
STEP_BOUND_NOTE = "sufficient conditions, typically pessimistic for stiff problems"


def central_jacobian(fun, x: np.ndarray, eps: float = _CBRT_EPS) -> np.ndarray:
    """Central-difference Jacobian, increment ``eps * (1 + |x_j|)``."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=np.float64))
    jac = np.zeros((f0.size, x.size))
    for j in range(x.size):
        step = eps * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        fp = np.atleast_1d(np.asarray(fun(xp), dtype=np.float64))
        fm = np.atleast_1d(np.asarray(fun(xm), dtype=np.float64))
        jac[:, j] = (fp - fm) / (xp[j] - xm[j])
    if not np.all(np.isfinite(jac)):
        raise NumericalError("non-finite function values while estimating Lipschitz constants")
    return jac


def inf_norm(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(mat), axis=1)))


@dataclass
class LipschitzEstimates:
    """Constants indexed ``[lambda][rho]`` with lambda, rho in {"S", "F"}.

    ``Lg``: g_lambda w.r.t. z_rho; ``Mf``: f_lambda w.r.t. y_rho;
    ``Lf``: f_lambda w.r.t. z_rho; ``Mg``: g_lambda w.r.t. y_rho.
    ``alpha_S`` / ``alpha_F`` are the normalized contraction ratios
    ``||(dg_S/dz_S)^-1 dg_S/dz_F||`` and ``||(dg_F/dz_F)^-1 dg_F/dz_S||``
    maximized over the samples (None if a self block was singular).
    """

    Lg: dict
    Mf: dict
    Lf: dict
    Mg: dict
    alpha_S: Optional[float]
    alpha_F: Optional[float]
    n_samples: int
    sample_times: list = field(default_factory=list)
    singular: list = field(default_factory=list)


def _empty_table():
    return {lam: {rho: 0.0 for rho in SIDES} for lam in SIDES}


def _blocks(problem: PartitionedDae, t, x, fd_eps):
    ys, yf, zs, zf = (np.asarray(v, dtype=np.float64) for v in x)
    ns, nf, nzs = ys.size, yf.size, zs.size
    y = np.concatenate([ys, yf])
    z = np.concatenate([zs, zf])
    funcs = {
        "f": {"S": problem.f_slow, "F": problem.f_fast},
        "g": {"S": problem.g_slow, "F": problem.g_fast},
    }
    out = {}
    for kind, by_side in funcs.items():
        for lam, fn in by_side.items():
            Jy = central_jacobian(lambda yy: fn(t, yy[:ns], yy[ns:], zs, zf), y, fd_eps)
            Jz = central_jacobian(lambda zz: fn(t, ys, yf, zz[:nzs], zz[nzs:]), z, fd_eps) if z.size else np.zeros((Jy.shape[0], 0))
            out[(kind, lam, "y", "S")] = Jy[:, :ns]
            out[(kind, lam, "y", "F")] = Jy[:, ns:ns + nf]
            out[(kind, lam, "z", "S")] = Jz[:, :nzs]
            out[(kind, lam, "z", "F")] = Jz[:, nzs:]
    return out


def _ratio(self_block: np.ndarray, cross_block: np.ndarray) -> float:
    if cross_block.size == 0:
        return 0.0
    if self_block.size == 0:
        return 0.0
    if not np.all(np.isfinite(self_block)) or np.linalg.cond(self_block) > 1e12:
        raise np.linalg.LinAlgError("singular self block")
    return inf_norm(np.linalg.solve(self_block, cross_block))


def estimate_lipschitz(problem: PartitionedDae, samples, fd_eps: float = _CBRT_EPS) -> LipschitzEstimates:
    """Estimate all Lipschitz constants and contraction ratios over ``samples``.

    ``samples`` is a nonempty list of ``(t, (y_S, y_F, z_S, z_F))``.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("at least one sample is required")
    tables = {"Lg": _empty_table(), "Mf": _empty_table(), "Lf": _empty_table(), "Mg": _empty_table()}
    key_map = {"Lg": ("g", "z"), "Mf": ("f", "y"), "Lf": ("f", "z"), "Mg": ("g", "y")}
    alpha = {"S": 0.0, "F": 0.0}
    singular = []
    for t, x in samples:
        blocks = _blocks(problem, t, x, fd_eps)
        for name, (kind, var) in key_map.items():
            for lam in SIDES:
                for rho in SIDES:
                    val = inf_norm(blocks[(kind, lam, var, rho)])
                    tables[name][lam][rho] = max(tables[name][lam][rho], val)
        for lam, rho in (("S", "F"), ("F", "S")):
            try:
                a = _ratio(blocks[("g", lam, "z", lam)], blocks[("g", lam, "z", rho)])
            except np.linalg.LinAlgError:
                singular.append((lam, float(t)))
                continue
            alpha[lam] = max(alpha[lam], a)
    bad = {lam for lam, _ in singular}
    return LipschitzEstimates(
        tables["Lg"], tables["Mf"], tables["Lf"], tables["Mg"],
        None if "S" in bad else alpha["S"], None if "F" in bad else alpha["F"],
        len(samples), [float(t) for t, _ in samples], singular,
    )


def contraction_ratios(est: LipschitzEstimates) -> tuple[float, float]:
    """Return ``(alpha_S, alpha_F)``; raises if a self block was singular (index-1 violation)."""
    if est.alpha_S is None or est.alpha_F is None:
        where = ", ".join(f"dg_{lam}/dz_{lam} at t={t:.6g}" for lam, t in est.singular)
        raise NumericalError(f"singular algebraic self block ({where}): index-1 condition violated")
    return est.alpha_S, est.alpha_F


def lipschitz_ratio(est: LipschitzEstimates) -> tuple[float, float]:
    """Plain Lipschitz-constant ratios (cross over self) for comparison."""
    out = []
    for lam, rho in (("S", "F"), ("F", "S")):
        den = est.Lg[lam][lam]
        out.append(est.Lg[lam][rho] / den if den > 0 else float("inf") if est.Lg[lam][rho] > 0 else 0.0)
    return out[0], out[1]


@dataclass(frozen=True)
class Verdict:
    passed: bool
    failed: tuple = ()


def stability_verdicts(alpha_S: float, alpha_F: float, lphi: float) -> dict:
    """Per-strategy window-to-window stability verdicts (strict inequalities).

    fully-decoupled: alpha_S < 1/L_phi and alpha_F < 1/L_phi;
    slowest-first:   alpha_S < 1/L_phi and alpha_F < 1;
    fastest-first:   alpha_F < 1/L_phi and alpha_S < 1.
    """
    inv = 1.0 / lphi
    conds = {
        Strategy.FULLY_DECOUPLED: [("alpha_S < 1/L_phi", alpha_S < inv), ("alpha_F < 1/L_phi", alpha_F < inv)],
        Strategy.SLOWEST_FIRST: [("alpha_S < 1/L_phi", alpha_S < inv), ("alpha_F < 1", alpha_F < 1.0)],
        Strategy.FASTEST_FIRST: [("alpha_F < 1/L_phi", alpha_F < inv), ("alpha_S < 1", alpha_S < 1.0)],
    }
    return {
        strat: Verdict(all(ok for _, ok in cs), tuple(name for name, ok in cs if not ok))
        for strat, cs in conds.items()
    }


@dataclass(frozen=True)
class PropagationCheck:
    passed: bool
    product: float
    min_k: Optional[int]


def window_error_propagation_check(alpha: float, lphi: float, k: int) -> PropagationCheck:
    """``lphi * alpha**k < 1``; ``min_k`` is the smallest passing sweep count (None if none)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    product = lphi * alpha**k
    if alpha == 0.0:
        return PropagationCheck(True, 0.0, 1)
    if alpha >= 1.0 and lphi >= 1.0:
        return PropagationCheck(product < 1.0, product, None)
    min_k = 1
    while lphi * alpha**min_k >= 1.0:
        min_k += 1
    return PropagationCheck(product < 1.0, product, min_k)


def suggest_step_bounds(est: LipschitzEstimates) -> tuple[Optional[float], Optional[float]]:
    """Sufficient step bounds for DAE-ODE coupling with implicit Euler.

    ``H < 1/(M^{f_S}_S + L^{f_S}_S M^{g_S}_S)``,
    ``h < 1/(M^{f_F}_S + L^{f_F}_S M^{g_S}_F)``; None where a denominator is 0.
    """
    den_H = est.Mf["S"]["S"] + est.Lf["S"]["S"] * est.Mg["S"]["S"]
    den_h = est.Mf["F"]["S"] + est.Lf["F"]["S"] * est.Mg["S"]["F"]
    return (1.0 / den_H if den_H > 0 else None, 1.0 / den_h if den_h > 0 else None)


@dataclass
class ContractionReport:
    alpha_S: float
    alpha_F: float
    lphi: float
    verdicts: dict
    suggested_H: Optional[float] = None
    suggested_h: Optional[float] = None
    estimates: Optional[LipschitzEstimates] = None
    k: int = 1
    propagation: Optional[PropagationCheck] = None
    notes: list = field(default_factory=lambda: [LOWER_BOUND_NOTE, f"step bounds: {STEP_BOUND_NOTE}"])

    def key_values(self) -> dict:
        kv = {
            "alpha_S": self.alpha_S,
            "alpha_F": self.alpha_F,
            "lphi": self.lphi,
            "k": self.k,
        }
        for strat, v in self.verdicts.items():
            kv[f"verdict.{strat.value}"] = "pass" if v.passed else "fail"
            kv[f"failed.{strat.value}"] = ";".join(v.failed)
        if self.propagation is not None:
            kv["propagation.product"] = self.propagation.product
            kv["propagation.passed"] = "pass" if self.propagation.passed else "fail"
            kv["propagation.min_k"] = "none" if self.propagation.min_k is None else self.propagation.min_k
        kv["suggested_H"] = "unconstrained" if self.suggested_H is None else self.suggested_H
        kv["suggested_h"] = "unconstrained" if self.suggested_h is None else self.suggested_h
        if self.estimates is not None:
            for name in ("Lg", "Mf", "Lf", "Mg"):
                table = getattr(self.estimates, name)
                for lam in SIDES:
                    for rho in SIDES:
                        kv[f"{name}.{lam}{rho}"] = table[lam][rho]
            kv["samples"] = self.estimates.n_samples
        return kv

    def to_text(self) -> str:
        """Machine-readable ``key = value`` block followed by a readable table."""
        buf = io.StringIO()
        buf.write("# contraction report\n")
        for key, val in self.key_values().items():
            if isinstance(val, float):
                val = format(val, ".17g")
            buf.write(f"{key} = {val}\n")
        buf.write("\n# strategy         verdict  violated\n")
        for strat, v in self.verdicts.items():
            buf.write(f"# {strat.value:<16} {'pass' if v.passed else 'FAIL':<8} {', '.join(v.failed) or '-'}\n")
        for note in self.notes:
            buf.write(f"# note: {note}\n")
        return buf.getvalue()


def parse_report_text(text: str) -> dict:
    """Read the key/value part of :meth:`ContractionReport.to_text` back."""
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        val = val.strip()
        try:
            out[key.strip()] = float(val) if any(c.isdigit() for c in val) and ";" not in val else val
        except ValueError:
            out[key.strip()] = val
    return out


def reference_samples(problem: PartitionedDae, n: int = 20, extra: int = 0, seed: Optional[int] = None):
    """Sample states along a coarse single-rate implicit Euler run.

    ``extra`` adds randomly perturbed differential states (with consistent
    algebraic parts) around the trajectory nodes, drawn with ``seed``.
    """
    from .dae import consistent_initialize, integrate_dae

    H = (problem.t_end - problem.t0) / n
    traj = integrate_dae(lift_single_rate(problem), MacroStepPlan(H=H, scheme_slow="implicit-euler", scheme_fast="implicit-euler"))
    samples = [
        (t, (traj.slow_states[i], traj.fast_states[i], traj.z_slow_states[i], traj.z_fast_states[i]))
        for i, t in enumerate(traj.macro_times)
    ]
    if extra:
        rng = np.random.default_rng(seed)
        for _ in range(extra):
            i = int(rng.integers(len(samples)))
            t, (ys, yf, zs, zf) = samples[i]
            ys = ys * (1 + 0.1 * rng.standard_normal(ys.shape))
            yf = yf * (1 + 0.1 * rng.standard_normal(yf.shape))
            zs, zf = consistent_initialize(problem, t, ys, yf, np.concatenate([zs, zf]))
            samples.append((t, (ys, yf, zs, zf)))
    return samples


def contraction_report(problem: PartitionedDae, lphi: float = 1.0, k: int = 1, samples=None,
                       fd_eps: float = _CBRT_EPS) -> ContractionReport:
    if samples is None:
        samples = reference_samples(problem)
    est = estimate_lipschitz(problem, samples, fd_eps)
    a_s, a_f = contraction_ratios(est)
    H, h = suggest_step_bounds(est)
    return ContractionReport(
        a_s, a_f, lphi, stability_verdicts(a_s, a_f, lphi), H, h, est, k,
        window_error_propagation_check(max(a_s, a_f), lphi, k),
    )
