import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multirate.core import MacroStepPlan, PartitionedOde, Trajectory
from multirate.errors import NumericalError, ValidationError
from multirate.harness import (
    EXACT,
    ConvergenceReport,
    convergence_study,
    emit_trajectory_csv,
    endpoint_errors,
    fit_slope,
    measure_growth,
    order_degradation_probe,
    parse_trajectory_csv,
    plan_lphi,
    stability_sweep,
)
from multirate.problems import CatalogEntry, get_problem

LADDER = [0.1 * 2.0**-j for j in range(5)]


class TestFitSlope:
    @pytest.mark.parametrize("p", [0.5, 1.0, 2.0, 4.0])
    def test_power_law(self, p):
        assert fit_slope(LADDER, [3.0 * h**p for h in LADDER]) == pytest.approx(p, abs=1e-6)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(0)
        err = [h**2 * (1 + 0.01 * rng.standard_normal()) for h in LADDER]
        assert fit_slope(LADDER, err) == pytest.approx(2.0, abs=0.05)

    def test_exact(self):
        assert fit_slope(LADDER, [0.0] * 5) == EXACT

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            fit_slope(LADDER, [1.0, math.nan, 1.0, 1.0, 1.0])


class TestConvergenceStudy:
    def test_too_few_step_sizes(self):
        with pytest.raises(ValidationError, match="≥ 4 step sizes required"):
            convergence_study("lin2", MacroStepPlan(H=0.1), [0.1, 0.05, 0.025])

    def test_report_guard(self):
        with pytest.raises(ValidationError, match="≥ 4"):
            ConvergenceReport([0.1], [{}], [0], {})

    def test_increasing_ladder(self):
        with pytest.raises(ValidationError, match="decreasing"):
            convergence_study("lin2", MacroStepPlan(H=0.1), [0.1, 0.2, 0.05, 0.01])

    def test_exact_on_zero_field(self):
        # zero right-hand side: every run stays at the initial value
        zero = lambda t, ys, yf: np.zeros(1)
        problem = PartitionedOde(1, 1, zero, zero, [1.0], [2.0], 0.0, 1.0)
        const = {"y_slow": np.array([1.0]), "y_fast": np.array([2.0])}
        entry = CatalogEntry("zero", problem, lambda t: const)
        rep = convergence_study(entry, MacroStepPlan(H=0.1, m=2), LADDER)
        assert rep.slope() == EXACT and rep.slope("error_fast") == EXACT

    def test_euler_columns_and_slope(self):
        rep = convergence_study("lin2", MacroStepPlan(H=0.1, m=2), LADDER)
        assert rep.asymptotic_window == [1, 2, 3, 4]
        assert 0.8 <= rep.slope() <= 1.3
        lines = rep.to_csv().splitlines()
        assert lines[0] == "H,y_slow,y_fast,error_slow,error_fast,error_total"
        assert len(lines) == 6
        assert "slope.error_total = " in rep.slope_lines()

    def test_dae_columns(self):
        rep = convergence_study(get_problem("dae-lin", b=0.3, d=0.3),
                                MacroStepPlan(H=0.1, m=2, scheme_slow="implicit-euler", scheme_fast="implicit-euler"),
                                LADDER[:4])
        assert rep.to_csv().splitlines()[0] == "H,y_slow,y_fast,z_slow,z_fast,error_slow,error_fast,error_total"

    def test_failing_run_names_h(self):
        with pytest.raises(ValidationError, match="run at H=0.10000000000000001"):
            convergence_study("lin2", MacroStepPlan(H=0.1, m=2, scheme_slow="bogus"), LADDER)

    def test_parallel_matches_serial(self):
        plan = MacroStepPlan(H=0.1, m=3, scheme_slow="heun", scheme_fast="heun", extrap_order=1)
        a = convergence_study("lin2", plan, LADDER)
        b = convergence_study("lin2", plan, LADDER, parallel=True)
        assert a.to_csv() == b.to_csv()

    def test_order_degradation_probe(self):
        assert order_degradation_probe("lin2").slope() <= 1.4


def test_endpoint_errors_aggregate():
    traj = Trajectory(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), np.array([[0.0], [2.0]]))
    e = endpoint_errors(traj, {"y_slow": np.array([1.5]), "y_fast": np.array([1.0])})
    assert e == {"y_slow": 0.5, "y_fast": 1.0, "error_slow": 0.5, "error_fast": 1.0, "error_total": 1.0}


def test_plan_lphi():
    assert plan_lphi(MacroStepPlan(H=0.1)) == 1.0
    assert plan_lphi(MacroStepPlan(H=0.1, extrap_order=1)) == 1.1
    # nodes -1, -1/2, 0 evaluated at t = 1: |3| + |-8| + |6|
    assert plan_lphi(MacroStepPlan(H=1.0, m=4, extrap_order=2)) == pytest.approx(17.0, rel=1e-9)


class TestGrowth:
    def test_geometric(self):
        g = measure_growth(1.3 ** np.arange(21))
        assert g.growth == pytest.approx(1.3, rel=1e-12)
        assert g.min_ratio == pytest.approx(1.3) and g.max_ratio == pytest.approx(1.3)

    def test_diverged(self):
        assert measure_growth(np.array([1.0, np.inf])).diverged

    def test_constant(self):
        assert measure_growth(np.ones(21)).growth == 1.0


class TestSweep:
    def test_rows_sorted_and_flagged(self):
        table = stability_sweep(grid=[(1.5, 1.5), (0.0, 0.0)], n_windows=10)
        assert [(r.b, r.d) for r in table.rows] == [(0.0, 0.0), (1.5, 1.5)]
        stable, unstable = table.rows
        assert stable.verdict == "pass" and stable.agrees
        assert unstable.verdict == "fail" and unstable.growth > 1.2 and unstable.agrees
        assert table.to_csv().splitlines()[0].startswith("b,d,strategy,k,alpha_S")

    def test_diverged_run_recorded(self):
        table = stability_sweep(grid=[(1.5, 1.5)], strategy="slowest-first", n_windows=20)
        row = table.rows[0]
        assert row.status in ("ok", "diverged") and row.verdict == "fail"
        assert not (row.status == "ok" and row.growth <= 1.02)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def trajectories(draw):
    n_macro = draw(st.integers(1, 4))
    m = draw(st.integers(1, 3))
    ns, nf = draw(st.integers(1, 2)), draw(st.integers(1, 2))
    dae = draw(st.booleans())
    nzs, nzf = (draw(st.integers(0, 2)), draw(st.integers(0, 2))) if dae else (0, 0)
    micro = np.linspace(0.0, float(n_macro), n_macro * m + 1)
    macro = micro[::m]

    def arr(rows, cols):
        return np.array(draw(st.lists(st.lists(finite, min_size=cols, max_size=cols), min_size=rows, max_size=rows)),
                        dtype=np.float64).reshape(rows, cols)

    return Trajectory(macro, arr(macro.size, ns), micro, arr(micro.size, nf),
                      arr(macro.size, nzs) if dae else None, arr(micro.size, nzf) if dae else None)


@settings(max_examples=100, deadline=None)
@given(traj=trajectories())
def test_csv_round_trip(traj):
    text = emit_trajectory_csv(traj)
    back = parse_trajectory_csv(text)
    assert back.equals(traj)
    assert emit_trajectory_csv(back) == text


def test_csv_blank_slow_cells():
    traj = Trajectory(np.array([0.0, 1.0]), np.array([[1.0], [2.0]]), np.array([0.0, 0.5, 1.0]),
                      np.array([[3.0], [4.0], [5.0]]))
    assert emit_trajectory_csv(traj).splitlines() == ["t,y_S0,y_F0", "0,1,3", "0.5,,4", "1,2,5"]


def test_csv_rejects_garbage():
    with pytest.raises(ValidationError):
        parse_trajectory_csv("x,y\n1,2\n")
