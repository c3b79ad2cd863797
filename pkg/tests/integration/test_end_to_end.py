"""End-to-end integration tests."""

from pathlib import Path

import numpy as np
import pytest

from beamnet.beam import DiagonalizedBeam
from beamnet.config_loader import NetworkLoader
from beamnet.control import (
    ControlProblem,
    ControlResult,
    smooth_random_profiles,
    synthesize,
    verify_initial_recovery,
)
from beamnet.geb import reconstruct_network, reconstruction_report
from beamnet.network import diagonalize_network
from beamnet.planner import PlanInput, build_plan, execute_plan
from beamnet.solver import Grid

NETWORKS_DIR = Path(__file__).resolve().parents[2] / "networks"


@pytest.fixture
def loader() -> NetworkLoader:
    """Loader over the bundled networks."""
    return NetworkLoader(networks_dir=NETWORKS_DIR)


class TestEndToEnd:
    """End-to-end integration tests."""

    @pytest.mark.integration
    def test_rigid_control_and_reconstruction(self, loader: NetworkLoader) -> None:
        """Test config to controls to centerlines for a translating A-network."""
        run = loader.load("a_network_rigid")
        dbs = diagonalize_network(run.network, 12)
        problem = run.control_problem(dbs)
        grid = Grid.from_cfl(dbs, problem.horizon)

        result = synthesize(problem, dbs, grid)
        assert max(float(np.max(np.abs(c.values))) for c in result.controls.values()) < 1e-10
        assert verify_initial_recovery(result, dbs).passed

        fields = reconstruct_network(result.trajectory, run.network)
        velocity = np.array([0.01, 0.0, 0.0])
        for geb in fields.values():
            drift = geb.p[-1] - geb.p[0]
            assert np.allclose(drift, velocity * geb.t[-1], atol=1e-9)
        report = reconstruction_report(result.trajectory, run.network, fields)
        assert [e.beam for e in report.entries] == [1, 2, 3, 4, 5]
        assert max(e.orthogonality_drift for e in report.entries) < 1e-6

    @pytest.mark.integration
    def test_planned_control_on_path(self, loader: NetworkLoader) -> None:
        """Test a planned synthesis on a network other than the A-shape."""
        run = loader.load("path_three")
        dbs = diagonalize_network(run.network, 10)
        problem = run.control_problem(dbs)
        plan = build_plan(PlanInput.from_problem(problem))
        assert [phase.edges for phase in plan.phases] == [(1,), (2,)]

        result = execute_plan(plan, problem, dbs, Grid.from_cfl(dbs, problem.horizon), resimulate=True)
        assert sorted(result.controls) == [3]
        assert not result.controls[3].values.any()
        assert result.report.tracking_error == 0.0

    @pytest.mark.integration
    @pytest.mark.slow
    def test_random_profile_tracking(self, loader: NetworkLoader) -> None:
        """Test that the closed loop follows random profiles after T* to first order."""
        coarse, coarse_dbs = random_profile_run(loader, 200)
        fine, _ = random_profile_run(loader, 400)

        assert coarse.report.tracking_error is not None
        assert fine.report.tracking_error is not None
        assert coarse.report.tracking_error <= 2e-5
        assert 1.4 <= coarse.report.tracking_error / fine.report.tracking_error <= 2.6
        assert coarse.report.node_residual is not None
        assert coarse.report.node_residual < 1e-10
        assert verify_initial_recovery(coarse, coarse_dbs, tol=5 * 2e-5).passed


def random_profile_run(loader: NetworkLoader, nx: int) -> tuple[ControlResult, dict[int, DiagonalizedBeam]]:
    """Synthesis on the unit A-network with random profiles of amplitude 1e-3."""
    run = loader.load("a_network_unit")
    dbs = diagonalize_network(run.network, nx)
    control = run.config.control
    assert control is not None
    profiles = smooth_random_profiles(run.network, 1, 1e-3, 2024, control.t_star, control.horizon)
    problem = ControlProblem(
        network=run.network,
        y0=run.initial_state(dbs),
        profiles=profiles,
        t_star=control.t_star,
        horizon=control.horizon,
    )
    return synthesize(problem, dbs, Grid.from_cfl(dbs, control.horizon)), dbs
