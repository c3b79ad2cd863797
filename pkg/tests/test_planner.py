"""Tests for the control-plan scheduler and its execution."""

from collections.abc import Callable

import numpy as np
import pytest

from beamnet.beam import DiagonalizedBeam
from beamnet.control import (
    ControlProblem,
    equilibrium_profiles,
    rigid_translation_state,
    smooth_random_profiles,
    synthesize,
    transmission_times,
)
from beamnet.exceptions import InvalidControlProblemError, PlanStalledError
from beamnet.network import NetworkSpec, diagonalize_network
from beamnet.planner import (
    ForwardSolve,
    PlanInput,
    SidewiseSolve,
    build_plan,
    check_sufficient_conditions,
    execute_plan,
    plan_time,
)
from beamnet.solver import Grid

PATH_EDGES = [(1, 1, 2), (2, 2, 3)]
STAR_EDGES = [(1, 1, 2), (2, 1, 3), (3, 1, 4)]
T_STAR = 2.5
HORIZON = 3.5
VELOCITY = [0.01, 0.0, 0.0]


@pytest.fixture
def a_input(a_network: NetworkSpec) -> PlanInput:
    """Planner input of the A-network: charged node 1, controls at 4 and 5."""
    return PlanInput(a_network, (1,), (4, 5), (1, 2, 4, 5))


class TestPlanInput:
    """Tests for PlanInput validation."""

    def test_unknown_node(self, a_network: NetworkSpec) -> None:
        """Test rejection of nodes outside the network."""
        with pytest.raises(InvalidControlProblemError, match="Unknown nodes \\[9\\]"):
            PlanInput(a_network, (1,), (9,), (1, 2))

    def test_unknown_edge(self, a_network: NetworkSpec) -> None:
        """Test rejection of path edges outside the network."""
        with pytest.raises(InvalidControlProblemError, match="Unknown control-path edges"):
            PlanInput(a_network, (1,), (4, 5), (1, 7))

    def test_overlap(self, a_network: NetworkSpec) -> None:
        """Test rejection of a node both charged and controlled."""
        with pytest.raises(InvalidControlProblemError, match="both charged and controlled"):
            PlanInput(a_network, (1, 4), (4, 5), (1, 2))


class TestSufficientConditions:
    """Tests for check_sufficient_conditions."""

    def test_a_network(self, a_input: PlanInput) -> None:
        """Test that the A-network satisfies all conditions."""
        report = check_sufficient_conditions(a_input)
        assert report.passed
        assert report.violations == []

    def test_path(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test a path charged at one end and controlled at the other."""
        network = make_network(PATH_EDGES)
        assert check_sufficient_conditions(PlanInput(network, (1,), (3,), (1, 2))).passed

    def test_star(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test a star charged at its center."""
        network = make_network(STAR_EDGES)
        assert check_sufficient_conditions(PlanInput(network, (1,), (2, 3, 4), (1, 2, 3))).passed

    def test_count_mismatch(self, a_network: NetworkSpec) -> None:
        """Test too few controlled nodes."""
        report = check_sufficient_conditions(PlanInput(a_network, (1,), (4,), (1, 2, 4, 5)))
        assert not report.count_matches
        assert not report.charged_paths_disjoint
        assert any("charged degrees sum to 2" in v for v in report.violations)

    def test_missing_path(self, a_network: NetworkSpec) -> None:
        """Test a charged node reaching only one controlled node."""
        report = check_sufficient_conditions(PlanInput(a_network, (1,), (4, 5), (1, 2, 4)))
        assert report.count_matches
        assert not report.charged_paths_disjoint
        assert any("1 disjoint control paths, needs 2" in v for v in report.violations)

    def test_shared_paths(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test two charged leaves whose paths meet at the center."""
        network = make_network([(1, 1, 2), (2, 3, 2), (3, 2, 4), (4, 2, 5)])
        report = check_sufficient_conditions(PlanInput(network, (1, 3), (4, 5), (1, 2, 3, 4)))
        assert report.count_matches
        assert report.charged_paths_disjoint
        assert not report.paths_mutually_disjoint
        assert any("control paths of nodes 1 and 3 share nodes" in v for v in report.violations)


class TestBuildPlan:
    """Tests for build_plan and plan_time."""

    def test_a_network_plan(self, a_input: PlanInput, a_dbs: dict[int, DiagonalizedBeam]) -> None:
        """Test the three phases of the A-network plan."""
        plan = build_plan(a_input)
        assert plan.listing() == [
            "phase 1 (step 1): sidewise(edge 1 from node 1), sidewise(edge 2 from node 1)",
            "phase 2 (step 2): forward(nodes [2, 3], edges [3])",
            "phase 3 (step 3): sidewise(edge 4 from node 2), sidewise(edge 5 from node 3)",
        ]
        assert plan.steps == 3
        assert plan.phases[1].solves == (ForwardSolve((2, 3), (3,)),)
        assert plan.phases[2].is_sidewise
        assert plan.phases[2].edges == (4, 5)
        assert plan_time(plan, transmission_times(a_dbs)) == pytest.approx(2.0)

    def test_path_plan(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test two consecutive sidewise phases along a path."""
        plan = build_plan(PlanInput(make_network(PATH_EDGES), (1,), (3,), (1, 2)))
        assert [p.solves for p in plan.phases] == [
            (SidewiseSolve(edge=1, anchor=1),),
            (SidewiseSolve(edge=2, anchor=2),),
        ]
        assert plan_time(plan, {1: 1.0, 2: 1.5}) == pytest.approx(2.5)

    def test_star_plan(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test that a charged star center needs a single phase."""
        plan = build_plan(PlanInput(make_network(STAR_EDGES), (1,), (2, 3, 4), (1, 2, 3)))
        assert len(plan.phases) == 1
        assert plan.phases[0].edges == (1, 2, 3)
        assert plan_time(plan, {1: 1.0, 2: 3.0, 3: 2.0}) == pytest.approx(3.0)

    def test_forward_only_edges(self, a_network: NetworkSpec) -> None:
        """Test that edges off the control paths are solved forward."""
        plan = build_plan(PlanInput(a_network, (1,), (2, 3), (1, 2)))
        assert plan.phases[0].is_sidewise
        assert plan.phases[1].solves == (ForwardSolve((2, 3, 4, 5), (3, 4, 5)),)

    def test_stalled_plan(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test that a schedule without progress raises PlanStalledError."""
        with pytest.raises(PlanStalledError, match="unsolved edges \\[1, 2\\]"):
            build_plan(PlanInput(make_network(PATH_EDGES), (1,), (3,), (2,)))


class TestExecutePlan:
    """Tests for execute_plan."""

    def test_matches_synthesize(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam], a_input: PlanInput
    ) -> None:
        """Test that the A-network plan reproduces the direct synthesis."""
        problem = ControlProblem(
            network=a_network,
            y0={i: np.zeros((db.n_samples, 12)) for i, db in a_dbs.items()},
            profiles=smooth_random_profiles(a_network, 1, 1e-3, 5, T_STAR, HORIZON),
            t_star=T_STAR,
            horizon=HORIZON,
        )
        grid = Grid.from_cfl(a_dbs, HORIZON)
        direct = synthesize(problem, a_dbs, grid, resimulate=False)
        planned = execute_plan(build_plan(a_input), problem, a_dbs, grid)
        for n in (4, 5):
            assert np.allclose(planned.controls[n].values, direct.controls[n].values, rtol=0.0, atol=1e-15)
        assert len(planned.report.steps) == 6
        assert planned.report.node_residual is not None
        assert planned.report.node_residual < 1e-10

    def test_path_rigid_translation(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test zero controls and tracking for a translating path."""
        network = make_network(PATH_EDGES)
        dbs = diagonalize_network(network, 20)
        problem = ControlProblem(
            network=network,
            y0=rigid_translation_state(network, dbs, VELOCITY),
            profiles=equilibrium_profiles(network, VELOCITY, [1], T_STAR, HORIZON),
            t_star=T_STAR,
            horizon=HORIZON,
            charged=(1,),
            controlled=(3,),
            path_edges=(1, 2),
        )
        plan = build_plan(PlanInput.from_problem(problem))
        result = execute_plan(plan, problem, dbs, Grid.from_cfl(dbs, HORIZON), resimulate=True)
        assert float(np.max(np.abs(result.controls[3].values))) < 1e-10
        assert result.report.tracking_error is not None
        assert result.report.tracking_error < 1e-10
        assert result.report.controllability_time == pytest.approx(2.0)
