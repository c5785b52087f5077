import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multirate.contraction import (
    LipschitzEstimates,
    central_jacobian,
    contraction_ratios,
    contraction_report,
    estimate_lipschitz,
    parse_report_text,
    reference_samples,
    stability_verdicts,
    suggest_step_bounds,
    window_error_propagation_check,
)
from multirate.core import PartitionedDae, Strategy
from multirate.errors import NumericalError, ValidationError
from multirate.problems import get_problem, linear_dae

FD, SF, FF = Strategy.FULLY_DECOUPLED, Strategy.SLOWEST_FIRST, Strategy.FASTEST_FIRST


def table(value=0.0, **cells):
    out = {lam: {rho: value for rho in "SF"} for lam in "SF"}
    for key, val in cells.items():
        out[key[0]][key[1]] = val
    return out


def estimates(Lg=None, Mf=None, Lf=None, Mg=None):
    return LipschitzEstimates(Lg or table(), Mf or table(), Lf or table(), Mg or table(), 0.0, 0.0, 1)


class TestJacobian:
    def test_linear_map(self):
        A = np.array([[1.0, -2.0], [0.5, 3.0]])
        np.testing.assert_allclose(central_jacobian(lambda x: A @ x, np.array([0.3, -1.0])), A, atol=1e-10)

    def test_quadratic(self):
        J = central_jacobian(lambda x: x**2, np.array([2.0]))
        assert J[0, 0] == pytest.approx(4.0, abs=1e-8)


class TestEstimates:
    def test_dae_lin_constants(self):
        entry = get_problem("dae-lin", a=2.0, b=0.5, d=0.25)
        est = estimate_lipschitz(entry.problem, reference_samples(entry.problem, n=5))
        assert est.Lg["S"]["S"] == pytest.approx(1.0, abs=1e-8)
        assert est.Lg["S"]["F"] == pytest.approx(0.5, abs=1e-8)
        assert est.Mg["S"]["S"] == pytest.approx(2.0, abs=1e-8)
        assert est.Lf["S"]["F"] == pytest.approx(1.0, abs=1e-8)
        assert est.Mf["S"]["S"] == pytest.approx(1.0, abs=1e-8)
        assert est.Mf["F"]["F"] == pytest.approx(10.0, abs=1e-7)

    def test_zero_differential_field(self):
        zero = lambda t, ys, yf, zs, zf: np.zeros(1)
        p = PartitionedDae(1, 1, 1, 1, zero, zero,
                           lambda t, ys, yf, zs, zf: zs - ys, lambda t, ys, yf, zs, zf: zf - yf,
                           [1.0], [1.0], [1.0], [1.0], 0.0, 1.0)
        est = estimate_lipschitz(p, reference_samples(p, n=4))
        for name in ("Mf", "Lf"):
            assert all(v == 0.0 for row in getattr(est, name).values() for v in row.values())

    @pytest.mark.parametrize("seed", range(3))
    def test_random_linear_matches_coefficients(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.uniform(-2, 2, size=8)
        blocks = {
            "A_SS": [[c[0]]], "A_SF": [[c[1]]], "A_FS": [[c[2]]], "A_FF": [[c[3]]],
            "C_SS": [[c[4]]], "C_FF": [[c[5]]],
            "D_SS": [[1.0]], "D_SF": [[0.5 * c[6]]], "D_FF": [[1.0]], "D_FS": [[0.5 * c[7]]],
        }
        p, _ = linear_dae(blocks, [1.0], [1.0])
        est = estimate_lipschitz(p, reference_samples(p, n=4))
        assert est.Mf["S"]["S"] == pytest.approx(abs(c[0]), abs=1e-6)
        assert est.Mf["S"]["F"] == pytest.approx(abs(c[1]), abs=1e-6)
        assert est.Mf["F"]["S"] == pytest.approx(abs(c[2]), abs=1e-6)
        assert est.Mg["S"]["S"] == pytest.approx(abs(c[4]), abs=1e-6)
        assert est.alpha_S == pytest.approx(abs(0.5 * c[6]), abs=1e-8)
        assert est.alpha_F == pytest.approx(abs(0.5 * c[7]), abs=1e-8)

    def test_no_samples(self):
        with pytest.raises(ValidationError):
            estimate_lipschitz(get_problem("dae-lin").problem, [])


class TestRatios:
    def test_decoupled(self):
        r = contraction_report(get_problem("dae-lin", b=0.0, d=0.0).problem)
        assert (r.alpha_S, r.alpha_F) == (0.0, 0.0)

    def test_unit_diagonal(self):
        r = contraction_report(get_problem("dae-lin", b=0.5, d=0.25).problem)
        assert r.alpha_S == pytest.approx(0.5, abs=1e-8)
        assert r.alpha_F == pytest.approx(0.25, abs=1e-8)

    def test_nonlinear_constraint(self):
        # g_S = z_S + 0.3 sin(z_F) - y_S: ratio 0.3 |cos z_F|, maximal at z_F = 0
        p = PartitionedDae(
            1, 1, 1, 1,
            lambda t, ys, yf, zs, zf: -ys, lambda t, ys, yf, zs, zf: -yf,
            lambda t, ys, yf, zs, zf: zs + 0.3 * np.sin(zf) - ys, lambda t, ys, yf, zs, zf: zf - yf,
            [1.0], [0.0], [1.0], [0.0], 0.0, 1.0,
        )
        zf_values = np.linspace(-1.0, 1.0, 9)
        samples = [(0.0, (np.array([1.0]), np.array([v]), np.array([1.0 - 0.3 * np.sin(v)]), np.array([v])))
                   for v in zf_values]
        est = estimate_lipschitz(p, samples)
        analytic = max(0.3 * abs(np.cos(v)) for v in zf_values)
        assert analytic == 0.3
        assert est.alpha_S == pytest.approx(analytic, abs=1e-8)
        assert est.alpha_F == 0.0

    def test_singular_self_block(self):
        p = PartitionedDae(
            1, 1, 1, 1,
            lambda t, ys, yf, zs, zf: -ys, lambda t, ys, yf, zs, zf: -yf,
            lambda t, ys, yf, zs, zf: zf - ys, lambda t, ys, yf, zs, zf: zf - yf,
            [1.0], [1.0], [0.0], [1.0], 0.0, 1.0,
        )
        samples = [(0.0, (np.array([1.0]), np.array([1.0]), np.array([0.0]), np.array([1.0])))]
        with pytest.raises(NumericalError, match="index-1"):
            contraction_ratios(estimate_lipschitz(p, samples))

    def test_extra_samples_are_consistent(self):
        p = get_problem("dae-lin", b=0.3, d=0.3).problem
        samples = reference_samples(p, n=4, extra=5, seed=7)
        assert len(samples) == 5 + 5
        for t, (ys, yf, zs, zf) in samples:
            assert abs(p.g_slow(t, ys, yf, zs, zf)[0]) <= 1e-10


class TestVerdicts:
    def test_all_pass_when_decoupled(self):
        assert all(v.passed for v in stability_verdicts(0.0, 0.0, 1.0).values())

    def test_fast_ratio_above_one(self):
        v = stability_verdicts(0.5, 1.2, 1.0)
        assert not any(x.passed for x in v.values())
        assert v[FD].failed == ("alpha_F < 1/L_phi",)
        assert v[SF].failed == ("alpha_F < 1",)
        assert v[FF].failed == ("alpha_F < 1/L_phi",)

    def test_lphi_three(self):
        assert all(v.passed for v in stability_verdicts(0.9, 0.5, 1.0).values())
        v = stability_verdicts(0.9, 0.5, 3.0)
        assert v[FD].failed == ("alpha_S < 1/L_phi", "alpha_F < 1/L_phi")
        assert v[SF].failed == ("alpha_S < 1/L_phi",)
        assert v[FF].failed == ("alpha_F < 1/L_phi",)

    def test_strict_boundary(self):
        v = stability_verdicts(1.0 / 3.0, 0.0, 3.0)
        assert not v[FD].passed and not v[SF].passed and v[FF].passed

    @settings(max_examples=200, deadline=None)
    @given(a_s=st.floats(0, 3), a_f=st.floats(0, 3), lphi=st.floats(1, 5),
           da=st.floats(0, 1), db=st.floats(0, 1), dl=st.floats(0, 2))
    def test_antitone(self, a_s, a_f, lphi, da, db, dl):
        base = stability_verdicts(a_s, a_f, lphi)
        raised = stability_verdicts(a_s + da, a_f + db, lphi + dl)
        for strat in Strategy:
            assert not (raised[strat].passed and not base[strat].passed)


def test_verdict_truth_table():
    values = (0.0, 0.5, 0.99, 1.01, 1.5)
    for a_s, a_f, lphi in itertools.product(values, values, (1.0, 3.0)):
        v = stability_verdicts(a_s, a_f, lphi)
        assert v[FD].passed == (a_s < 1 / lphi and a_f < 1 / lphi)
        assert v[SF].passed == (a_s < 1 / lphi and a_f < 1)
        assert v[FF].passed == (a_f < 1 / lphi and a_s < 1)


class TestPropagation:
    def test_contractive(self):
        c = window_error_propagation_check(0.5, 1.0, 1)
        assert c.passed and c.product == 0.5

    def test_needs_more_sweeps(self):
        c = window_error_propagation_check(0.8, 3.0, 1)
        assert not c.passed and c.min_k == 5
        assert 3 * 0.8**5 == pytest.approx(0.98304)
        assert window_error_propagation_check(0.8, 3.0, 5).passed

    @pytest.mark.parametrize("k", [1, 2, 7])
    def test_zero_alpha(self, k):
        assert window_error_propagation_check(0.0, 3.0, k).passed

    def test_never_passes(self):
        c = window_error_propagation_check(1.5, 1.0, 3)
        assert not c.passed and c.min_k is None

    def test_bad_k(self):
        with pytest.raises(ValidationError):
            window_error_propagation_check(0.5, 1.0, 0)


class TestStepBounds:
    def test_unconstrained(self):
        assert suggest_step_bounds(estimates()) == (None, None)

    def test_formula(self):
        H, h = suggest_step_bounds(estimates(Mf=table(SS=1.0), Lf=table(SS=2.0), Mg=table(SS=0.5)))
        assert H == 0.5 and h is None

    def test_dae_ode_by_hand(self):
        # f_S = -y_S + y_F, g_S = z_S - a y_S - b y_F, f_F = -10 y_F + z_S
        # H: 1 / (|-1| + 0 * a) = 1;  h: 1 / (0 + 1 * |b|) = 2 for b = 0.5
        entry = get_problem("dae-ode", a=1.0, b=0.5)
        r = contraction_report(entry.problem)
        assert r.suggested_H == pytest.approx(1.0, abs=1e-8)
        assert r.suggested_h == pytest.approx(2.0, abs=1e-7)

    def test_dae_lin_by_hand(self):
        # f_S = -y_S + z_F: H bound 1 / (1 + 0); f_F = -10 y_F + z_S, g_S has no y_F: h unconstrained
        r = contraction_report(get_problem("dae-lin", b=0.5, d=0.25).problem)
        assert r.suggested_H == pytest.approx(1.0, abs=1e-8)
        assert r.suggested_h is None


class TestReport:
    def test_text_round_trip(self):
        r = contraction_report(get_problem("dae-lin", b=0.5, d=0.25).problem, lphi=1.1, k=2)
        kv = parse_report_text(r.to_text())
        assert kv["alpha_S"] == r.alpha_S and kv["alpha_F"] == r.alpha_F
        assert kv["lphi"] == 1.1 and kv["k"] == 2
        assert kv["verdict.fully-decoupled"] == "pass"
        assert kv["suggested_h"] == "unconstrained"
        assert kv["samples"] == 21

    def test_failure_listed(self):
        r = contraction_report(get_problem("dae-lin", b=1.5, d=0.2).problem)
        kv = parse_report_text(r.to_text())
        assert kv["verdict.fully-decoupled"] == "fail"
        assert kv["failed.fully-decoupled"] == "alpha_S < 1/L_phi"
        assert kv["verdict.fastest-first"] == "fail"
        assert "lower bound" in r.to_text()
