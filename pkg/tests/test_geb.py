"""Tests for the fixed-frame transform, nodal data conversion and reconstruction."""

import logging

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from beamnet.beam import BeamSpec, DiagonalizedBeam, diagonalize
from beamnet.control import rigid_translation_state
from beamnet.exceptions import CompatibilityWarning, NotRotationError, NotSkewError
from beamnet.geb import (
    BeamInitialData,
    DirichletMotion,
    GebData,
    GebField,
    check_first_order_compat,
    check_geb_compat,
    check_joint_consistency,
    check_reconstruction_conditions,
    first_order_rate,
    fn_from_qn,
    geb_residual,
    igeb_initial_from_geb,
    last6_residual,
    qn_from_dirichlet,
    reconstruct,
    reconstruct_network,
    reconstruction_report,
    rigid_body_motion,
    strains,
    transform,
)
from beamnet.kinematics import E1, bar
from beamnet.network import Endpoint, Incidence, NetworkSpec, NodeKind, NodeRecord, TimeSeries
from beamnet.solver import BeamField, Grid, Trajectory, solve_forward

F_CIRC = np.array([0.1, 0.2, 0.0])
K_CIRC = np.array([0.3, 0.0, 0.0])


def spin_rotations(t: np.ndarray, k: np.ndarray = K_CIRC) -> np.ndarray:
    """Rotations exp(t hat(k)) on the samples t."""
    return Rotation.from_rotvec(t[:, None] * k[None, :]).as_matrix()


def spinning_field(db: DiagonalizedBeam, t: np.ndarray) -> BeamField:
    """Intrinsic field of a unit beam translating with F_CIRC and spinning about e1."""
    R = spin_rotations(t)
    y = np.zeros((len(t), db.n_samples, 12))
    y[..., :3] = np.einsum("tji,j->ti", R, F_CIRC)[:, None, :]
    y[..., 3:6] = K_CIRC
    return BeamField(beam=db.index, x=db.x, t=t, y=y, L=db.L)


def undeformed_data(
    network: NetworkSpec, n_samples: int = 21, velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
) -> GebData:
    """Undeformed beams translating rigidly with ``velocity``."""
    positions = network.node_positions()
    initial = {}
    for beam in network.beams:
        x = np.linspace(0.0, beam.length, n_samples)
        R0 = beam.rotation(x)
        start = positions[network.node_of(beam.index, Endpoint.START)]
        initial[beam.index] = BeamInitialData(
            beam=beam.index,
            x=x,
            p0=start + x[:, None] * (R0 @ E1),
            R0=R0,
            p1=np.tile(velocity, (n_samples, 1)),
            w0=np.zeros((n_samples, 3)),
        )
    return GebData(initial=initial)



def twisting_motion(n: int) -> GebField:
    """Smooth bending, twisting and stretching motion sampled on an n x n grid of [0, 1]^2."""
    x = np.linspace(0.0, 1.0, n)
    t = np.linspace(0.0, 1.0, n)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    rotvec = np.stack([0.4 * xx + 0.3 * tt, 0.3 * xx * tt, 0.2 * xx + 0.5 * tt**2], axis=-1)
    R = Rotation.from_rotvec(rotvec.reshape(-1, 3)).as_matrix().reshape(n, n, 3, 3)
    p = np.stack([xx + 0.1 * tt**2, 0.05 * np.sin(xx) * tt, 0.02 * xx * tt], axis=-1)
    return GebField(beam=1, x=x, t=t, p=p, R=R)


def intrinsic_field(geb: GebField, spec: BeamSpec) -> BeamField:
    """Intrinsic field of a fixed-frame motion with identity Riemann maps."""
    y = transform(geb, spec)
    L = np.broadcast_to(np.eye(12), (len(geb.x), 12, 12)).copy()
    return BeamField(beam=geb.beam, x=geb.x, t=geb.t, y=y, L=L)


def loaded_beam_field(nx: int) -> BeamField:
    """Forward run of a free unit beam pushed sideways at its end by a small load."""
    spec = BeamSpec.uniform(1)
    t = np.linspace(0.0, 1.0, 201)
    load = np.zeros((201, 6))
    load[:, 1] = 1e-3 * np.sin(np.pi * t) ** 2
    network = NetworkSpec(
        beams=(spec,),
        nodes=(
            NodeRecord(1, NodeKind.NEUMANN, (Incidence.of(1, "start"),), TimeSeries.zeros(6, 0.0, 1.0)),
            NodeRecord(2, NodeKind.NEUMANN, (Incidence.of(1, "end"),), TimeSeries(t, load)),
        ),
    )
    dbs = {1: diagonalize(spec, nx + 1)}
    y0 = {1: np.zeros((nx + 1, 12))}
    return solve_forward(network, dbs, y0, Grid.from_cfl(dbs, 1.0)).field(1)

@pytest.fixture
def rigid_trajectory(a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]) -> Trajectory:
    """A-network trajectory of a rigid translation with velocity (0.01, 0, 0)."""
    y0 = rigid_translation_state(a_network, a_dbs, [0.01, 0.0, 0.0])
    return solve_forward(a_network, a_dbs, y0, Grid.from_cfl(a_dbs, 0.5))


class TestGebField:
    """Tests for GebField and the data containers."""

    def test_rejects_non_rotation(self) -> None:
        """Test that a scaled identity is rejected."""
        x = np.linspace(0.0, 1.0, 3)
        t = np.linspace(0.0, 1.0, 4)
        R = np.broadcast_to(2.0 * np.eye(3), (4, 3, 3, 3)).copy()
        with pytest.raises(NotRotationError, match="left SO\\(3\\)"):
            GebField(beam=1, x=x, t=t, p=np.zeros((4, 3, 3)), R=R)

    def test_rejects_shape_mismatch(self) -> None:
        """Test that positions must match the grid."""
        x = np.linspace(0.0, 1.0, 3)
        t = np.linspace(0.0, 1.0, 4)
        R = np.broadcast_to(np.eye(3), (4, 3, 3, 3)).copy()
        with pytest.raises(ValueError, match="shapes do not match"):
            GebField(beam=1, x=x, t=t, p=np.zeros((4, 2, 3)), R=R)

    def test_dirichlet_motion_rejects_reflection(self) -> None:
        """Test that prescribed rotations must be proper."""
        t = np.linspace(0.0, 1.0, 3)
        with pytest.raises(NotRotationError, match="Node 4"):
            DirichletMotion(node=4, t=t, fp=np.zeros((3, 3)), fR=np.tile(-np.eye(3), (3, 1, 1)))

    def test_missing_load_is_zero(self) -> None:
        """Test the default nodal load."""
        data = GebData(initial={})
        assert np.array_equal(data.load(3, 0.5), np.zeros(6))


class TestTransform:
    """Tests for the fixed-frame to intrinsic transform."""

    def test_rigid_motion(self, unit_beam: BeamSpec) -> None:
        """Test V = R^T f, W = k and zero forces for a spin about the tangent."""
        x = np.linspace(0.0, 1.0, 11)
        t = np.linspace(0.0, 1.0, 101)
        y = transform(rigid_body_motion(unit_beam, x, t, F_CIRC, K_CIRC), unit_beam)
        R = spin_rotations(t)
        assert np.allclose(y[..., :3], np.einsum("tji,j->ti", R, F_CIRC)[:, None, :], atol=1e-10)
        assert np.allclose(y[..., 3:6], K_CIRC, atol=1e-5)
        assert np.allclose(y[..., 6:], 0.0, atol=1e-10)

    def test_rotated_beam_has_no_strain(self, a_network: NetworkSpec) -> None:
        """Test the undeformed configuration of a rotated straight beam."""
        beam = a_network.beam(4)
        x = np.linspace(0.0, 1.0, 11)
        t = np.linspace(0.0, 0.1, 3)
        y = transform(rigid_body_motion(beam, x, t, np.zeros(3), np.zeros(3)), beam)
        assert np.allclose(y, 0.0, atol=1e-10)

    def test_too_coarse_grid(self, unit_beam: BeamSpec) -> None:
        """Test the minimum number of samples."""
        geb = rigid_body_motion(unit_beam, [0.0, 1.0], np.linspace(0.0, 1.0, 5), F_CIRC, K_CIRC)
        with pytest.raises(ValueError, match="at least 3 samples"):
            transform(geb, unit_beam)

    def test_coarse_smooth_motion_accepted(self, unit_beam: BeamSpec) -> None:
        """Test that stencil asymmetry on a coarse grid is tolerated."""
        geb = twisting_motion(41)
        y = transform(geb, unit_beam)
        assert y.shape == (41, 41, 12)
        assert np.all(np.isfinite(y))
        assert np.allclose(y[0, 0, 3:6], [0.3, 0.0, 0.0], atol=1e-2)

    def test_rough_rotations_rejected(self, unit_beam: BeamSpec) -> None:
        """Test that unrelated rotations on neighbouring samples raise NotSkewError."""
        n = 21
        x = np.linspace(0.0, 1.0, n)
        R = Rotation.random(n * n, random_state=3).as_matrix().reshape(n, n, 3, 3)
        geb = GebField(beam=1, x=x, t=x, p=np.zeros((n, n, 3)), R=R)
        with pytest.raises(NotSkewError, match="not skew-symmetric"):
            transform(geb, unit_beam)

    def test_misaligned_spin_logs_warning(
        self, unit_beam: BeamSpec, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Test the warning for a rotation axis off the beam tangent."""
        with caplog.at_level(logging.WARNING, logger="beamnet.geb"):
            rigid_body_motion(unit_beam, np.linspace(0.0, 1.0, 5), np.linspace(0.0, 1.0, 5), F_CIRC, [0.0, 0.0, 1.0])
        assert "not aligned" in caplog.text

    def test_geb_residual_of_rigid_motion(self, unit_beam: BeamSpec) -> None:
        """Test that a rigid motion satisfies the fixed-frame equations."""
        geb = rigid_body_motion(unit_beam, np.linspace(0.0, 1.0, 11), np.linspace(0.0, 1.0, 101), F_CIRC, K_CIRC)
        residual = geb_residual(geb, unit_beam)
        assert float(np.max(residual[2:-2])) < 1e-8
        assert float(np.max(residual)) < 1e-3


class TestNodalData:
    """Tests for Dirichlet data and nodal load conversion."""

    def test_qn_from_dirichlet(self) -> None:
        """Test body-frame velocities of a translating, spinning node."""
        t = np.linspace(0.0, 1.0, 201)
        R = spin_rotations(t)
        motion = DirichletMotion(node=1, t=t, fp=t[:, None] * F_CIRC, fR=R)
        q = qn_from_dirichlet(motion)
        assert np.allclose(q.values[:, :3], np.einsum("tji,j->ti", R, F_CIRC), atol=1e-10)
        assert np.allclose(q.values[:, 3:], K_CIRC, atol=1e-5)

    def test_fn_from_qn_neumann(self) -> None:
        """Test f = diag(R, R) q at a Neumann node."""
        t = np.linspace(0.0, 1.0, 5)
        q = TimeSeries(t, np.tile(np.arange(6.0), (5, 1)))
        R = spin_rotations(t, np.array([0.0, 0.0, 1.0]))
        f = fn_from_qn(q, R, NodeKind.NEUMANN)
        assert np.allclose(f.values[2], bar(R[2]) @ np.arange(6.0))

    def test_fn_from_qn_multiple_uses_reference(self) -> None:
        """Test that the undeformed rotation is factored out at multiple nodes."""
        t = np.linspace(0.0, 1.0, 5)
        q = TimeSeries(t, np.tile(np.arange(6.0), (5, 1)))
        ref = Rotation.from_rotvec([0.0, 0.0, 0.4]).as_matrix()
        f = fn_from_qn(q, np.tile(ref, (5, 1, 1)), NodeKind.MULTIPLE, reference=ref)
        assert np.allclose(f.values, q.values)

    def test_fn_from_qn_rejects_dirichlet(self) -> None:
        """Test that Dirichlet nodes carry no load."""
        q = TimeSeries.constant(np.zeros(6))
        with pytest.raises(ValueError, match="multiple and Neumann"):
            fn_from_qn(q, np.tile(np.eye(3), (2, 1, 1)), NodeKind.DIRICHLET)


class TestCompatibility:
    """Tests for first-order and fixed-frame compatibility checks."""

    def test_zero_data_compatible(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]
    ) -> None:
        """Test that zero data pass every family."""
        y0 = {i: np.zeros((db.n_samples, 12)) for i, db in a_dbs.items()}
        report = check_first_order_compat(y0, a_network, a_dbs)
        assert report.passed
        families = {e.family for e in report.entries}
        assert {"continuity", "kirchhoff", "neumann", "neumann_rate", "kirchhoff_rate"} <= families

    def test_rigid_translation_compatible(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]
    ) -> None:
        """Test that a rigid translation has zero rate and passes."""
        y0 = rigid_translation_state(a_network, a_dbs, [0.01, 0.02, 0.0])
        assert np.allclose(first_order_rate(a_dbs[2], y0[2]), 0.0, atol=1e-14)
        assert check_first_order_compat(y0, a_network, a_dbs).passed

    def test_neumann_violation_reported(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]
    ) -> None:
        """Test that a force at a free end is reported at its node."""
        y0 = {i: np.zeros((db.n_samples, 12)) for i, db in a_dbs.items()}
        y0[4][-1, 6] = 1e-3
        report = check_first_order_compat(y0, a_network, a_dbs)
        assert not report.passed
        assert report.residual("neumann", 4) == pytest.approx(1e-3)
        assert report.residual("neumann", 5) == 0.0

    def test_undeformed_geb_data_compatible(self, a_network: NetworkSpec) -> None:
        """Test that undeformed, rigidly translating beams pass."""
        data = undeformed_data(a_network, velocity=(0.01, 0.0, 0.0))
        states = igeb_initial_from_geb(data, a_network)
        assert np.allclose(states[1][:, 6:], 0.0, atol=1e-12)
        assert np.allclose(states[4][:, :3], a_network.beam(4).rotation(0.0).T @ [0.01, 0.0, 0.0])
        assert check_geb_compat(data, a_network).passed

    def test_position_gap_reported(self, a_network: NetworkSpec) -> None:
        """Test that a displaced beam breaks position continuity."""
        data = undeformed_data(a_network)
        shifted = data.initial[3]
        data.initial[3] = BeamInitialData(
            beam=3, x=shifted.x, p0=shifted.p0 + [1e-3, 0.0, 0.0], R0=shifted.R0, p1=shifted.p1, w0=shifted.w0
        )
        report = check_geb_compat(data, a_network)
        assert report.residual("position_continuity", 2) == pytest.approx(1e-3)
        assert report.residual("position_continuity", 1) == 0.0


class TestReconstruct:
    """Tests for single-beam and network reconstruction."""

    @pytest.mark.parametrize("order", ["time_first", "space_first"])
    def test_spinning_beam(self, unit_db: DiagonalizedBeam, unit_beam: BeamSpec, order: str) -> None:
        """Test recovery of a translating beam spinning about its tangent."""
        t = np.linspace(0.0, 1.0, 51)
        bf = spinning_field(unit_db, t)
        geb = reconstruct(bf, unit_beam, np.zeros(3), np.eye(3), order=order)  # type: ignore[arg-type]
        expected_p = t[:, None, None] * F_CIRC + unit_db.x[None, :, None] * E1
        assert np.allclose(geb.p, expected_p, atol=1e-10)
        assert np.allclose(geb.R, spin_rotations(t)[:, None], atol=1e-10)

    def test_zero_field_from_end_anchor(self, unit_db: DiagonalizedBeam, unit_beam: BeamSpec) -> None:
        """Test anchoring at the end of the beam."""
        t = np.linspace(0.0, 0.5, 6)
        bf = BeamField(1, unit_db.x, t, np.zeros((6, unit_db.n_samples, 12)), unit_db.L)
        geb = reconstruct(bf, unit_beam, [2.0, 0.0, 0.0], np.eye(3), Endpoint.END)
        assert np.allclose(geb.p[-1, :, 0], 1.0 + unit_db.x)

    def test_incompatible_field_warns(self, unit_db: DiagonalizedBeam, unit_beam: BeamSpec) -> None:
        """Test the warning for a field violating kinematic compatibility."""
        t = np.linspace(0.0, 0.5, 6)
        y = np.zeros((6, unit_db.n_samples, 12))
        y[..., 0] = unit_db.x
        bf = BeamField(1, unit_db.x, t, y, unit_db.L)
        assert float(np.max(last6_residual(bf, unit_beam))) == pytest.approx(1.0)
        with pytest.warns(CompatibilityWarning, match="kinematic compatibility"):
            reconstruct(bf, unit_beam, np.zeros(3), np.eye(3))

    def test_exact_motion_is_compatible(self, unit_beam: BeamSpec) -> None:
        """Test that the residual of an exact motion with strain and curvature decays like h^2."""
        coarse = intrinsic_field(twisting_motion(41), unit_beam)
        fine = intrinsic_field(twisting_motion(81), unit_beam)
        u = fine.y
        quadratic = np.concatenate(
            [np.cross(u[..., 3:6], u[..., 6:9]) + np.cross(u[..., 0:3], u[..., 9:12]), np.cross(u[..., 3:6], u[..., 9:12])],
            axis=-1,
        )
        assert float(np.max(np.linalg.norm(quadratic, axis=-1))) > 0.1
        assert float(np.max(last6_residual(fine, unit_beam))) < 0.05
        res_coarse = float(np.max(last6_residual(coarse, unit_beam)[2:-2, 2:-2]))
        res_fine = float(np.max(last6_residual(fine, unit_beam)[2:-2, 2:-2]))
        assert res_coarse / res_fine > 3.0

    def test_round_trip_of_forward_run(self, unit_beam: BeamSpec) -> None:
        """Test transform(reconstruct(y)) against y on a small-data run under refinement."""
        errors = []
        for nx in (20, 40):
            bf = loaded_beam_field(nx)
            geb = reconstruct(bf, unit_beam, np.zeros(3), np.eye(3))
            errors.append(float(np.max(np.abs(transform(geb, unit_beam) - bf.y))))
            scale = float(np.max(np.abs(bf.y)))
            assert scale > 1e-4
            assert errors[-1] < 0.2 * scale
        assert errors[1] < 0.75 * errors[0]

    def test_geb_residual_decays_under_refinement(self, unit_beam: BeamSpec) -> None:
        """Test that reconstructed motions satisfy the fixed-frame equations increasingly well."""
        residuals = []
        for nx in (20, 40):
            geb = reconstruct(loaded_beam_field(nx), unit_beam, np.zeros(3), np.eye(3))
            residuals.append(float(np.max(geb_residual(geb, unit_beam))))
        assert residuals[1] < 0.75 * residuals[0]

    def test_unknown_order(self, unit_db: DiagonalizedBeam, unit_beam: BeamSpec) -> None:
        """Test rejection of an unknown integration order."""
        t = np.linspace(0.0, 0.5, 6)
        bf = BeamField(1, unit_db.x, t, np.zeros((6, unit_db.n_samples, 12)), unit_db.L)
        with pytest.raises(ValueError, match="Unknown integration order"):
            reconstruct(bf, unit_beam, np.zeros(3), np.eye(3), order="diagonal")  # type: ignore[arg-type]

    def test_strains_identity_for_unit_flex(self, unit_beam: BeamSpec) -> None:
        """Test u = y when C = I."""
        x = np.linspace(0.0, 1.0, 4)
        y = np.random.default_rng(7).standard_normal((2, 4, 12))
        assert np.allclose(strains(y, unit_beam, x), y)

    def test_network_rigid_translation(self, a_network: NetworkSpec, rigid_trajectory: Trajectory) -> None:
        """Test p = p_undeformed + t V on every beam of the A-network."""
        fields = reconstruct_network(rigid_trajectory, a_network)
        positions = a_network.node_positions()
        V = np.array([0.01, 0.0, 0.0])
        for i, geb in fields.items():
            beam = a_network.beam(i)
            start = positions[a_network.node_of(i, Endpoint.START)]
            undeformed = start + geb.x[:, None] * (beam.rotation(geb.x) @ E1)
            expected = undeformed[None] + geb.t[:, None, None] * V
            assert np.allclose(geb.p, expected, atol=1e-9)
        joints = check_joint_consistency(fields, a_network)
        assert joints.passed

    def test_reconstruction_report(self, a_network: NetworkSpec, rigid_trajectory: Trajectory) -> None:
        """Test per-beam drift and joint mismatches of the report."""
        fields = reconstruct_network(rigid_trajectory, a_network)
        report = reconstruction_report(rigid_trajectory, a_network, fields)
        assert report.anchor_node == 1
        assert [e.beam for e in report.entries] == [1, 2, 3, 4, 5]
        assert max(e.orthogonality_drift for e in report.entries) < 1e-12
        assert report.joint_position_mismatch is not None
        assert report.joint_position_mismatch < 1e-9

    def test_reconstruction_conditions(self, a_network: NetworkSpec, rigid_trajectory: Trajectory) -> None:
        """Test last6 and initial-shape conditions on a rigid translation."""
        data = undeformed_data(a_network, velocity=(0.01, 0.0, 0.0))
        report = check_reconstruction_conditions(rigid_trajectory, a_network, initial=data.initial)
        assert report.passed
        assert {e.family for e in report.entries} == {"last6", "initial_shape"}
