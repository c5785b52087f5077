import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multirate.core import (
    MacroStepPlan,
    PartitionedDae,
    PartitionedOde,
    Strategy,
    Trajectory,
    lift_single_rate,
    macro_windows,
    micro_grid,
    validate_plan,
    validate_trajectory,
)
from multirate.errors import ValidationError
from multirate.ode import integrate
from multirate.problems import get_problem


def zero_ode(t_end=1.0):
    return PartitionedOde(
        1, 1, lambda t, ys, yf: np.zeros(1), lambda t, ys, yf: np.zeros(1), [0.7], [-1.3], 0.0, t_end
    )


class TestStrategy:
    @pytest.mark.parametrize("text, expected", [
        ("fully-decoupled", Strategy.FULLY_DECOUPLED),
        ("slowest_first", Strategy.SLOWEST_FIRST),
        ("FastestFirst", Strategy.FASTEST_FIRST),
    ])
    def test_parse(self, text, expected):
        assert Strategy.parse(text) is expected

    def test_parse_unknown(self):
        with pytest.raises(ValidationError, match="unknown strategy"):
            Strategy.parse("round-robin")


class TestProblems:
    def test_ode_rejects_bad_dims(self):
        with pytest.raises(ValidationError):
            PartitionedOde(2, 1, None, None, [1.0], [1.0], 0.0, 1.0)

    def test_ode_rejects_empty_horizon(self):
        with pytest.raises(ValidationError):
            PartitionedOde(1, 1, None, None, [1.0], [1.0], 1.0, 1.0)

    def test_dae_flags(self):
        p = get_problem("dae-lin").problem
        assert isinstance(p, PartitionedDae)
        assert p.is_dae
        assert not zero_ode().is_dae

    def test_lift_is_idempotent(self):
        p = zero_ode()
        once = lift_single_rate(p)
        assert once.single_rate and not p.single_rate
        assert lift_single_rate(once) == once

    def test_lifted_zero_field_is_constant(self):
        traj = integrate(lift_single_rate(zero_ode()), MacroStepPlan(H=0.1, scheme_slow="rk4", scheme_fast="rk4"))
        assert np.all(traj.slow_states == 0.7)
        assert np.all(traj.fast_states == -1.3)


class TestValidatePlan:
    def test_micro_step(self):
        plan = validate_plan(MacroStepPlan(H=0.1, m=4))
        assert plan.h == pytest.approx(0.025, abs=0, rel=1e-15)

    def test_zero_multirate_factor(self):
        with pytest.raises(ValidationError, match="multirate factor must be ≥ 1"):
            validate_plan(MacroStepPlan(H=0.1, m=0))

    def test_lists_every_violation(self):
        with pytest.raises(ValidationError) as info:
            validate_plan(MacroStepPlan(H=-1.0, m=0, scheme_slow="bogus", extrap_order=9))
        assert len(info.value.problems) == 4

    def test_scheme_aliases_are_normalized(self):
        plan = validate_plan(MacroStepPlan(H=0.1, scheme_slow="euler", scheme_fast="rk2"))
        assert (plan.scheme_slow, plan.scheme_fast) == ("explicit-euler", "heun")

    def test_dae_needs_implicit_euler(self):
        dae = get_problem("dae-lin").problem
        with pytest.raises(ValidationError, match="implicit-euler"):
            validate_plan(MacroStepPlan(H=0.1, scheme_slow="heun", scheme_fast="implicit-euler"), dae)

    def test_ode_single_sweep(self):
        with pytest.raises(ValidationError, match="single sweep"):
            validate_plan(MacroStepPlan(H=0.1, k=2), zero_ode())

    def test_dense_interp_needs_dense_scheme(self):
        with pytest.raises(ValidationError, match="dense output"):
            validate_plan(MacroStepPlan(H=0.1, strategy="slowest-first", scheme_slow="explicit-euler", interp_order=2))
        plan = validate_plan(MacroStepPlan(H=0.1, strategy="slowest-first", scheme_slow="heun", dense_output=True))
        assert plan.interp_order == 2

    def test_fast_interp_limited_by_micro_nodes(self):
        with pytest.raises(ValidationError, match="fast micro nodes"):
            validate_plan(MacroStepPlan(H=0.1, m=2, strategy="fastest-first", interp_order=3))

    def test_history_extrapolation_needs_enough_nodes(self):
        with pytest.raises(ValidationError, match="too small"):
            validate_plan(MacroStepPlan(H=0.1, m=2, extrap_order=3))


class TestWindows:
    def test_shortened_final_window(self):
        w = macro_windows(0.0, 1.0, 0.3)
        assert len(w) == 4
        lengths = [b - a for a, b in w]
        assert lengths[:3] == pytest.approx([0.3] * 3)
        assert lengths[3] == pytest.approx(0.1)
        assert w[-1][1] == 1.0

    def test_exact_division(self):
        assert len(macro_windows(0.0, 1.0, 0.1)) == 10

    @settings(max_examples=200, deadline=None)
    @given(t0=st.floats(-10, 10), span=st.floats(1e-3, 50), frac=st.floats(1e-3, 1.0))
    def test_windows_tile_horizon(self, t0, span, frac):
        t_end = t0 + span
        if not t_end > t0:
            return
        H = span * frac
        w = macro_windows(t0, t_end, H)
        assert w[0][0] == t0 and w[-1][1] == t_end
        assert all(b > a for a, b in w)
        assert all(w[i][1] == w[i + 1][0] for i in range(len(w) - 1))
        assert math.isclose(sum(b - a for a, b in w), t_end - t0, rel_tol=1e-12, abs_tol=1e-12)

    def test_micro_grid_endpoints(self):
        g = micro_grid(0.1, 0.4, 3)
        assert g[0] == 0.1 and g[-1] == 0.4 and g.size == 4


class TestTrajectory:
    def test_integrated_trajectory_is_valid(self):
        entry = get_problem("lin2")
        for strategy in Strategy:
            traj = integrate(entry.problem, MacroStepPlan(H=0.3, m=3, strategy=strategy))
            validate_trajectory(traj, 0.0, 1.0)
            assert traj.fast_micro_times.size == 4 * 3 + 1

    def test_validator_catches_missing_macro_node(self):
        traj = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.array([0.0, 0.5, 0.9]), np.zeros((3, 1)))
        with pytest.raises(ValidationError, match="macro nodes missing"):
            validate_trajectory(traj)

    def test_fast_at_macro(self):
        traj = integrate(get_problem("lin2").problem, MacroStepPlan(H=0.5, m=2))
        np.testing.assert_array_equal(traj.fast_at_macro(), traj.fast_states[::2])
