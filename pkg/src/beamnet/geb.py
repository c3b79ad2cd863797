"""Bridge between the geometrically exact and the intrinsic beam models.

The fixed-frame model describes each beam by its centerline position p(x, t)
and cross-section rotation R(x, t); the intrinsic model by body-frame
velocities and internal forces y = (V, W, Phi, Psi). This module provides:
- The transformation (p, R) -> y and conversion of initial and nodal data
- First-order compatibility checks of intrinsic data and of fixed-frame data
- Reconstruction of (p, R) from an intrinsic trajectory, per beam and for a
  whole network, with rotations integrated on SO(3)
- Evaluation of the fixed-frame governing equations as a residual field
- Rigid body motions and consistency checks of reconstructed networks

Derivatives of sampled fields use second-order differences
(``numpy.gradient`` with one-sided second-order ends).

Time Complexity: O(nt * nx) per beam
Space Complexity: O(nt * nx) per beam
"""

import logging
import warnings
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.spatial.transform import Rotation

from beamnet.beam import BeamSpec, DiagonalizedBeam, curvature, quadratic_source, spd_inverse
from beamnet.exceptions import CompatibilityWarning, NotRotationError
from beamnet.kinematics import E1, bar, hat, is_rotation, orthogonality_defect, rot_step, vec
from beamnet.models import (
    CompatibilityEntry,
    CompatibilityReport,
    ReconstructionEntry,
    ReconstructionReport,
)
from beamnet.network import (
    Endpoint,
    NetworkSpec,
    NodeKind,
    TimeSeries,
    endpoint_sample,
    node_residual,
)
from beamnet.solver import BeamField, Trajectory

logger = logging.getLogger(__name__)

FIELD_ROTATION_TOL = 1e-7
DATA_ROTATION_TOL = 1e-8
DRIFT_TOL = 1e-6
TRANSFORM_SKEW_TOL = 1e-3
STENCIL_SKEW_FACTOR = 10.0
DATA_SKEW_TOL = 1e-4
DEFAULT_COMPAT_TOL = 1e-8
LAST6_TOL = 1e-3

FloatArray = NDArray[np.float64]
Order = Literal["time_first", "space_first"]


@dataclass(frozen=True)
class GebField:
    """Sampled fixed-frame motion of one beam.

    Attributes:
        beam: Beam index
        x: Space samples (nx + 1)
        t: Time samples (nt + 1)
        p: Positions, shape (nt + 1, nx + 1, 3)
        R: Rotations, shape (nt + 1, nx + 1, 3, 3)
    """

    beam: int
    x: FloatArray
    t: FloatArray
    p: FloatArray
    R: FloatArray

    def __post_init__(self) -> None:
        """Check shapes and that every sample is a rotation.

        Raises:
            ValueError: On shape mismatch
            NotRotationError: If a sample is not in SO(3) within 1e-7
        """
        shape = (len(self.t), len(self.x))
        if self.p.shape != (*shape, 3) or self.R.shape != (*shape, 3, 3):
            raise ValueError(f"Beam {self.beam}: GEB field shapes do not match the grid {shape}")
        if not is_rotation(self.R, FIELD_ROTATION_TOL):
            raise NotRotationError(f"Beam {self.beam}: GEB field rotation left SO(3)")


@dataclass(frozen=True)
class BeamInitialData:
    """Initial shape and velocities of one beam, sampled on ``x``."""

    beam: int
    x: FloatArray
    p0: FloatArray
    R0: FloatArray
    p1: FloatArray
    w0: FloatArray

    def __post_init__(self) -> None:
        """Check that the initial rotations are in SO(3)."""
        if not is_rotation(self.R0, DATA_ROTATION_TOL):
            raise NotRotationError(f"Beam {self.beam}: initial rotation is not in SO(3)")


@dataclass(frozen=True)
class DirichletMotion:
    """Prescribed position and rotation of a Dirichlet node, sampled on ``t``."""

    node: int
    t: FloatArray
    fp: FloatArray
    fR: FloatArray

    def __post_init__(self) -> None:
        """Check that the prescribed rotations are in SO(3)."""
        if not is_rotation(self.fR, DATA_ROTATION_TOL):
            raise NotRotationError(f"Node {self.node}: prescribed rotation is not in SO(3)")

    def rates(self) -> tuple[FloatArray, FloatArray]:
        """Time derivatives of ``fp`` and ``fR`` on the samples."""
        return (
            np.gradient(self.fp, self.t, axis=0, edge_order=2),
            np.gradient(self.fR, self.t, axis=0, edge_order=2),
        )


@dataclass(frozen=True)
class GebData:
    """Fixed-frame initial data, Dirichlet motions and body-frame nodal loads."""

    initial: dict[int, BeamInitialData]
    dirichlet: dict[int, DirichletMotion] = field(default_factory=dict)
    loads: dict[int, TimeSeries] = field(default_factory=dict)

    def load(self, n: int, t: float) -> FloatArray:
        """Body-frame load q_n(t) (zero when absent)."""
        return self.loads[n](t) if n in self.loads else np.zeros(6)


def _flex_inverse(spec: BeamSpec, x: FloatArray) -> FloatArray:
    return spd_inverse(spec.flex(x))


def _differenced_vec(
    frame_t: FloatArray, rate: FloatArray, grid: FloatArray, skew_tol: float, label: str
) -> FloatArray:
    """Return ``vec(R^T dR)`` for a differenced rotation field.

    The differenced product is skew only up to the stencil error, so the
    accepted asymmetry grows with the squared grid step.
    """
    h = float(np.max(np.diff(grid)))
    tol = skew_tol + STENCIL_SKEW_FACTOR * h**2
    product = frame_t @ rate
    asymmetry = float(np.max(np.linalg.norm(product + np.swapaxes(product, -1, -2), axis=(-2, -1))))
    logger.debug(f"{label}: asymmetry of R^T dR is {asymmetry:.3e} (accepted {tol:.1e})")
    return vec(product, tol=tol)


def transform(geb: GebField, spec: BeamSpec, skew_tol: float = TRANSFORM_SKEW_TOL) -> FloatArray:
    """Return the intrinsic field y = (V, W, Phi, Psi) of a fixed-frame motion.

    ``V = R^T dp/dt``, ``W = vec(R^T dR/dt)``, and
    ``(Phi; Psi) = C^{-1} (R^T dp/dx - e1; vec(R^T dR/dx) - Upsilon)``.

    Args:
        geb: Motion sampled with at least 3 points per direction
        spec: Beam description
        skew_tol: Accepted asymmetry of the differenced ``R^T dR`` before
            the grid-step allowance ``10 h^2`` is added

    Returns:
        Array of shape (nt + 1, nx + 1, 12)

    Raises:
        ValueError: If the grid is too coarse
        NotSkewError: If ``R^T dR`` is not skew within the allowance
    """
    if len(geb.t) < 3 or len(geb.x) < 3:
        raise ValueError("transform needs at least 3 samples in x and in t")
    Rt = np.swapaxes(geb.R, -1, -2)
    dp_dt = np.gradient(geb.p, geb.t, axis=0, edge_order=2)
    dR_dt = np.gradient(geb.R, geb.t, axis=0, edge_order=2)
    dp_dx = np.gradient(geb.p, geb.x, axis=1, edge_order=2)
    dR_dx = np.gradient(geb.R, geb.x, axis=1, edge_order=2)
    velocity = np.einsum("...ij,...j->...i", Rt, dp_dt)
    angular = _differenced_vec(Rt, dR_dt, geb.t, skew_tol, f"Beam {geb.beam} (t)")
    strain = np.einsum("...ij,...j->...i", Rt, dp_dx) - E1
    bending = _differenced_vec(Rt, dR_dx, geb.x, skew_tol, f"Beam {geb.beam} (x)") - curvature(spec, geb.x)
    forces = np.einsum(
        "xij,txj->txi", _flex_inverse(spec, geb.x), np.concatenate([strain, bending], axis=-1)
    )
    return np.concatenate([velocity, angular, forces], axis=-1)


def _initial_state(data: BeamInitialData, spec: BeamSpec, skew_tol: float) -> FloatArray:
    R0t = np.swapaxes(data.R0, -1, -2)
    dp0 = np.gradient(data.p0, data.x, axis=0, edge_order=2)
    dR0 = np.gradient(data.R0, data.x, axis=0, edge_order=2)
    v = np.concatenate(
        [np.einsum("xij,xj->xi", R0t, data.p1), np.einsum("xij,xj->xi", R0t, data.w0)], axis=-1
    )
    strain = np.einsum("xij,xj->xi", R0t, dp0) - E1
    bending = _differenced_vec(R0t, dR0, data.x, skew_tol, f"Beam {data.beam} initial") - curvature(
        spec, data.x
    )
    z = np.einsum(
        "xij,xj->xi", _flex_inverse(spec, data.x), np.concatenate([strain, bending], axis=-1)
    )
    return np.concatenate([v, z], axis=-1)


def igeb_initial_from_geb(
    data: GebData, network: NetworkSpec, skew_tol: float = TRANSFORM_SKEW_TOL
) -> dict[int, FloatArray]:
    """Intrinsic initial states from fixed-frame initial data.

    ``v0 = (R0^T p1; R0^T w0)`` and
    ``z0 = C^{-1} (R0^T dp0/dx - e1; vec(R0^T dR0/dx) - Upsilon)``.

    Returns:
        Beam index -> states (n_samples, 12) on the data's own x samples
    """
    return {
        i: _initial_state(data.initial[i], network.beam(i), skew_tol) for i in network.beam_indices
    }


def qn_from_dirichlet(motion: DirichletMotion, skew_tol: float = DATA_SKEW_TOL) -> TimeSeries:
    """Body-frame velocity data ``(fR^T dfp/dt; vec(fR^T dfR/dt))`` of a Dirichlet node.

    Raises:
        NotSkewError: If ``fR^T dfR/dt`` is not skew within ``skew_tol + 10 h^2``
    """
    dfp, dfR = motion.rates()
    fRt = np.swapaxes(motion.fR, -1, -2)
    linear = np.einsum("tij,tj->ti", fRt, dfp)
    angular = _differenced_vec(fRt, dfR, motion.t, skew_tol, f"Node {motion.node}")
    return TimeSeries(motion.t, np.concatenate([linear, angular], axis=-1))


def fn_from_qn(
    q: TimeSeries,
    rotation_trace: ArrayLike,
    kind: NodeKind,
    reference: ArrayLike | None = None,
) -> TimeSeries:
    """Fixed-frame nodal loads from body-frame data.

    Multiple nodes use ``diag(R Rref^T, R Rref^T) q`` with the rotation trace
    of the smallest incident beam and its undeformed rotation ``reference``
    at the node; Neumann nodes use ``diag(R, R) q``.

    Args:
        q: Body-frame data sampled on ``q.t``
        rotation_trace: Rotations (len(q.t), 3, 3) at the node end
        kind: Node kind (multiple or Neumann)
        reference: Undeformed rotation at the node (multiple nodes)
    """
    R = np.asarray(rotation_trace, dtype=float)
    if kind is NodeKind.MULTIPLE:
        ref = np.eye(3) if reference is None else np.asarray(reference, dtype=float)
        R = R @ ref.T
    elif kind is not NodeKind.NEUMANN:
        raise ValueError("fn_from_qn applies to multiple and Neumann nodes")
    return TimeSeries(q.t, np.einsum("tij,tj->ti", bar(R), q.values))


def _node_entries(
    entries: list[CompatibilityEntry],
    network: NetworkSpec,
    n: int,
    residual_velocity: float,
    residual_force: float,
    suffix: str,
    tol: float,
) -> None:
    kind = network.node(n).kind
    if kind is NodeKind.MULTIPLE:
        entries.append(CompatibilityEntry(family=f"continuity{suffix}", node=n, residual=residual_velocity, tolerance=tol))
        entries.append(CompatibilityEntry(family=f"kirchhoff{suffix}", node=n, residual=residual_force, tolerance=tol))
    elif kind is NodeKind.NEUMANN:
        entries.append(CompatibilityEntry(family=f"neumann{suffix}", node=n, residual=residual_force, tolerance=tol))
    else:
        entries.append(CompatibilityEntry(family=f"dirichlet{suffix}", node=n, residual=residual_velocity, tolerance=tol))


def first_order_rate(db: DiagonalizedBeam, y0: ArrayLike) -> FloatArray:
    """Return ``y1 = -A dy0/dx - Bbar y0 + gbar(y0)`` on the samples of ``db``."""
    y = np.asarray(y0, dtype=float)
    dy = np.gradient(y, db.x, axis=0, edge_order=2)
    return np.asarray(
        -np.einsum("xij,xj->xi", db.A, dy)
        - np.einsum("xij,xj->xi", db.Bbar, y)
        + quadratic_source(db.M, db.C, db.Minv, db.Cinv, y)
    )


def check_first_order_compat(
    y0: Mapping[int, ArrayLike],
    network: NetworkSpec,
    dbs: Mapping[int, DiagonalizedBeam],
    tol: float = DEFAULT_COMPAT_TOL,
) -> CompatibilityReport:
    """Evaluate the nodal conditions for y0 against q(0) and for y1 against dq/dt(0).

    Returns:
        Report with families ``continuity``, ``kirchhoff``, ``neumann``,
        ``dirichlet`` and their ``_rate`` counterparts; never raises
    """
    states = {i: np.asarray(y0[i], dtype=float) for i in network.beam_indices}
    rates = {i: first_order_rate(dbs[i], states[i]) for i in network.beam_indices}
    entries: list[CompatibilityEntry] = []
    for n in network.node_indices:
        data = network.node(n).data
        q0 = network.nodal_data(n, 0.0)
        dq0 = np.zeros(6) if data is None else data.derivative(0.0)
        for values, q, suffix in ((states, q0, ""), (rates, dq0, "_rate")):
            res = node_residual(
                network,
                n,
                lambda inc, v=values: v[inc.beam][endpoint_sample(dbs[inc.beam], inc.endpoint)],
                q,
            )
            _node_entries(entries, network, n, res.velocity, res.force, suffix, tol)
    return CompatibilityReport(title="First-order compatibility", entries=entries)


def _end_index(data: BeamInitialData, endpoint: Endpoint) -> int:
    return 0 if endpoint is Endpoint.START else len(data.x) - 1


def check_geb_compat(
    data: GebData,
    network: NetworkSpec,
    tol: float = DEFAULT_COMPAT_TOL,
    skew_tol: float = TRANSFORM_SKEW_TOL,
) -> CompatibilityReport:
    """Evaluate the compatibility conditions of fixed-frame data.

    Families: ``dirichlet_shape`` and ``dirichlet_rate`` (Dirichlet nodes),
    ``position_continuity``, ``rotation_continuity``, ``velocity_continuity``
    and ``kirchhoff_strain`` (multiple nodes), ``neumann_strain`` (Neumann
    nodes). Never raises for violated conditions.

    Raises:
        NotSkewError: If differenced initial rotations are not skew
    """
    entries: list[CompatibilityEntry] = []
    states = igeb_initial_from_geb(data, network, skew_tol)

    def entry(family: str, n: int, residual: float) -> None:
        entries.append(CompatibilityEntry(family=family, node=n, residual=residual, tolerance=tol))

    for n in network.node_indices:
        node = network.node(n)
        order = network.ordered_incidences(n)
        q0 = data.load(n, 0.0)
        if node.kind is NodeKind.DIRICHLET:
            inc = order[0]
            init = data.initial[inc.beam]
            k = _end_index(init, inc.endpoint)
            motion = data.dirichlet.get(n)
            if motion is None:
                continue
            entry(
                "dirichlet_shape",
                n,
                max(
                    float(np.max(np.abs(motion.fp[0] - init.p0[k]))),
                    float(np.max(np.abs(motion.fR[0] - init.R0[k]))),
                ),
            )
            dfp, dfR = motion.rates()
            spatial_rate = vec(dfR[0] @ motion.fR[0].T, tol=skew_tol)
            entry(
                "dirichlet_rate",
                n,
                max(
                    float(np.max(np.abs(init.p1[k] - dfp[0]))),
                    float(np.max(np.abs(init.w0[k] - spatial_rate))),
                ),
            )
            continue

        if node.kind is NodeKind.NEUMANN:
            inc = order[0]
            k = _end_index(data.initial[inc.beam], inc.endpoint)
            z = states[inc.beam][k, 6:]
            entry("neumann_strain", n, float(np.max(np.abs(inc.tau * z - q0))))
            continue

        first = data.initial[order[0].beam]
        k_first = _end_index(first, order[0].endpoint)
        ref_beam = network.beam(order[0].beam)
        joint = first.R0[k_first] @ ref_beam.rotation(first.x[k_first]).T
        position = rotation = velocity = 0.0
        force = -q0
        for inc in order:
            init = data.initial[inc.beam]
            k = _end_index(init, inc.endpoint)
            beam = network.beam(inc.beam)
            undeformed = beam.rotation(init.x[k])
            position = max(position, float(np.max(np.abs(init.p0[k] - first.p0[k_first]))))
            rotation = max(rotation, float(np.max(np.abs(init.R0[k] @ undeformed.T - joint))))
            velocity = max(
                velocity,
                float(np.max(np.abs(init.p1[k] - first.p1[k_first]))),
                float(np.max(np.abs(init.w0[k] - first.w0[k_first]))),
            )
            force = force + inc.tau * bar(undeformed) @ states[inc.beam][k, 6:]
        entry("position_continuity", n, position)
        entry("rotation_continuity", n, rotation)
        entry("velocity_continuity", n, velocity)
        entry("kirchhoff_strain", n, float(np.max(np.abs(force))))

    return CompatibilityReport(title="Fixed-frame data compatibility", entries=entries)


def strains(y: ArrayLike, spec: BeamSpec, x: FloatArray) -> FloatArray:
    """Return ``u = diag(I6, C) y`` for stacked states on samples ``x``."""
    u = np.array(y, dtype=float, copy=True)
    u[..., 6:] = np.einsum("xij,...xj->...xi", spec.flex(x), u[..., 6:])
    return u


def last6_residual(bf: BeamField, spec: BeamSpec) -> FloatArray:
    """Pointwise residual of the kinematic compatibility of an intrinsic field.

    ``d/dt (u3; u4) - d/dx (u1; u2) - [[hat(U), hat(e1)], [0, hat(U)]] (u1; u2)
    + [[hat(u2), hat(u1)], [0, hat(u2)]] (u3; u4)`` with ``u = diag(I, C) y``.

    The quadratic terms come from ``d/dt (Gamma) = d/dx V + K x V + Gamma x W``
    and ``d/dt K = d/dx W + K x W`` with ``Gamma = e1 + u3``, ``K = Upsilon + u4``.

    Returns:
        Residual norms of shape (nt + 1, nx + 1)
    """
    u = strains(bf.y, spec, bf.x)
    u1, u2, u3, u4 = u[..., 0:3], u[..., 3:6], u[..., 6:9], u[..., 9:12]
    upsilon = curvature(spec, bf.x)
    dt_34 = np.gradient(u[..., 6:], bf.t, axis=0, edge_order=2)
    dx_12 = np.gradient(u[..., :6], bf.x, axis=1, edge_order=2)
    top = (
        dt_34[..., :3]
        - dx_12[..., :3]
        - np.cross(upsilon, u1)
        - np.cross(E1, u2)
        + np.cross(u2, u3)
        + np.cross(u1, u4)
    )
    bottom = dt_34[..., 3:] - dx_12[..., 3:] - np.cross(upsilon, u2) + np.cross(u2, u4)
    return np.asarray(np.linalg.norm(np.concatenate([top, bottom], axis=-1), axis=-1))


def _cumulative_from(values: FloatArray, grid: FloatArray, anchor: int, axis: int) -> FloatArray:
    total = cumulative_trapezoid(values, grid, axis=axis, initial=0.0)
    if anchor == 0:
        return total
    return total - np.take(total, [anchor], axis=axis)


def _integrate_rotation_x(
    R_anchor: FloatArray, kappa: FloatArray, dx: float, anchor: int
) -> FloatArray:
    """Integrate ``dR/dx = R hat(kappa)`` from column ``anchor`` (kappa: (..., nx+1, 3))."""
    n = kappa.shape[-2]
    out = np.empty((*kappa.shape[:-2], n, 3, 3))
    out[..., anchor, :, :] = R_anchor
    for j in range(anchor, n - 1):
        mid = 0.5 * (kappa[..., j, :] + kappa[..., j + 1, :])
        out[..., j + 1, :, :] = rot_step(out[..., j, :, :], mid, dx)
    for j in range(anchor, 0, -1):
        mid = 0.5 * (kappa[..., j, :] + kappa[..., j - 1, :])
        out[..., j - 1, :, :] = rot_step(out[..., j, :, :], -mid, dx)
    return out


def _integrate_rotation_t(R_start: FloatArray, omega: FloatArray, dt: float) -> FloatArray:
    """Integrate ``dR/dt = R hat(omega)`` from t = 0 (omega: (nt+1, ..., 3))."""
    out = np.empty((*omega.shape[:-1], 3, 3))
    out[0] = R_start
    for k in range(len(omega) - 1):
        out[k + 1] = rot_step(out[k], 0.5 * (omega[k] + omega[k + 1]), dt)
    return out


def reconstruct(
    bf: BeamField,
    spec: BeamSpec,
    anchor_p: ArrayLike,
    anchor_R: ArrayLike,
    anchor_end: Endpoint = Endpoint.START,
    order: Order = "time_first",
    compat_tol: float = LAST6_TOL,
) -> GebField:
    """Recover positions and rotations of one beam from its intrinsic field.

    With ``time_first``, R is integrated in t at the anchor end and then in x
    for every time; p(x, 0) is integrated in x from the anchor and p(x, t) in
    t from there. ``space_first`` integrates both in x at t = 0 first.

    Args:
        bf: Intrinsic field on a uniform grid
        spec: Beam description
        anchor_p: Position of the anchor end at t = 0
        anchor_R: Rotation of the anchor end at t = 0
        anchor_end: Beam end holding the anchor
        order: Integration order
        compat_tol: Warning threshold of the kinematic compatibility residual

    Returns:
        Reconstructed motion

    Raises:
        NotRotationError: If the orthogonality drift exceeds 1e-6
    """
    a = 0 if anchor_end is Endpoint.START else len(bf.x) - 1
    dt = float(bf.t[1] - bf.t[0])
    dx = float(bf.x[1] - bf.x[0])
    u = strains(bf.y, spec, bf.x)
    u1, u2, u3 = u[..., 0:3], u[..., 3:6], u[..., 6:9]
    kappa = u[..., 9:12] + curvature(spec, bf.x)
    anchor_R = np.asarray(anchor_R, dtype=float)
    anchor_p = np.asarray(anchor_p, dtype=float)

    residual = float(np.max(last6_residual(bf, spec)))
    if residual > compat_tol:
        message = f"Beam {bf.beam}: kinematic compatibility residual {residual:.3e} exceeds {compat_tol:.1e}"
        logger.warning(message)
        warnings.warn(message, CompatibilityWarning, stacklevel=2)

    if order == "time_first":
        # frame along t at the anchor, then along x; centerline at t = 0, then along t
        R_anchor = _integrate_rotation_t(anchor_R, u2[:, a], dt)
        R = _integrate_rotation_x(R_anchor, kappa, dx, a)
        tangent = np.einsum("xij,xj->xi", R[0], u3[0] + E1)
        p_initial = anchor_p + _cumulative_from(tangent, bf.x, a, axis=0)
        velocity = np.einsum("txij,txj->txi", R, u1)
        p = p_initial[None] + cumulative_trapezoid(velocity, bf.t, axis=0, initial=0.0)
    elif order == "space_first":
        # frame along x at t = 0 then along t; anchor position along t, then tangents along x
        R_initial = _integrate_rotation_x(anchor_R, kappa[0], dx, a)
        R = _integrate_rotation_t(R_initial, u2, dt)
        velocity_anchor = np.einsum("tij,tj->ti", R[:, a], u1[:, a])
        p_anchor = anchor_p + cumulative_trapezoid(velocity_anchor, bf.t, axis=0, initial=0.0)
        tangent = np.einsum("txij,txj->txi", R, u3 + E1)
        p = p_anchor[:, None] + _cumulative_from(tangent, bf.x, a, axis=1)
    else:
        raise ValueError(f"Unknown integration order '{order}'")

    drift = orthogonality_defect(R)
    if drift > DRIFT_TOL:
        raise NotRotationError(f"Beam {bf.beam}: rotation drift {drift:.3e} exceeds {DRIFT_TOL}")
    logger.debug(f"Reconstructed beam {bf.beam} ({order}), drift {drift:.2e}")
    return GebField(beam=bf.beam, x=bf.x, t=bf.t, p=p, R=R)


def _anchor_node(network: NetworkSpec, beam: int) -> tuple[int, Endpoint]:
    start = network.node_of(beam, Endpoint.START)
    end = network.node_of(beam, Endpoint.END)
    return (start, Endpoint.START) if start <= end else (end, Endpoint.END)


def initial_node_frames(
    trajectory: Trajectory,
    network: NetworkSpec,
    anchor_node: int | None = None,
) -> dict[int, tuple[FloatArray, FloatArray]]:
    """Positions and joint rotations ``R Rref^T`` of every node at t = 0.

    Frames are propagated from ``anchor_node`` (default: smallest index, placed
    at its undeformed position with identity joint rotation) by integrating
    the t = 0 strains along each beam.
    """
    root = network.node_indices[0] if anchor_node is None else anchor_node
    undeformed = network.node_positions()
    frames: dict[int, tuple[FloatArray, FloatArray]] = {root: (undeformed[root], np.eye(3))}
    queue = deque([root])
    while queue:
        n = queue.popleft()
        for inc in network.ordered_incidences(n):
            other_end = Endpoint.END if inc.endpoint is Endpoint.START else Endpoint.START
            other = network.node_of(inc.beam, other_end)
            if other in frames:
                continue
            beam = network.beam(inc.beam)
            bf = trajectory.field(inc.beam)
            a = 0 if inc.endpoint is Endpoint.START else len(bf.x) - 1
            b = len(bf.x) - 1 - a
            u = strains(bf.y[0], beam, bf.x)
            kappa = u[:, 9:12] + curvature(beam, bf.x)
            position, joint = frames[n]
            R = _integrate_rotation_x(joint @ beam.rotation(bf.x[a]), kappa, float(bf.x[1] - bf.x[0]), a)
            tangent = np.einsum("xij,xj->xi", R, u[:, 6:9] + E1)
            p = position + _cumulative_from(tangent, bf.x, a, axis=0)
            frames[other] = (p[b], R[b] @ beam.rotation(bf.x[b]).T)
            queue.append(other)
    return frames


def reconstruct_network(
    trajectory: Trajectory,
    network: NetworkSpec,
    anchor_node: int | None = None,
    order: Order = "time_first",
    compat_tol: float = LAST6_TOL,
) -> dict[int, GebField]:
    """Reconstruct every beam, each anchored at its smaller-index node.

    Anchors come from :func:`initial_node_frames`.
    """
    frames = initial_node_frames(trajectory, network, anchor_node)
    fields: dict[int, GebField] = {}
    for i in network.beam_indices:
        n, end = _anchor_node(network, i)
        beam = network.beam(i)
        bf = trajectory.field(i)
        position, joint = frames[n]
        x_anchor = bf.x[0] if end is Endpoint.START else bf.x[-1]
        fields[i] = reconstruct(
            bf, beam, position, joint @ beam.rotation(x_anchor), end, order, compat_tol
        )
    logger.info(f"Reconstructed {len(fields)} beams ({order})")
    return fields


def geb_residual(geb: GebField, spec: BeamSpec) -> FloatArray:
    """Pointwise residual of the fixed-frame governing equations.

    ``d/dt(diag(R, R) M (V; W)) - d/dx(phi; psi) - (0; dp/dx x phi)`` with
    ``(phi; psi) = diag(R, R) (Phi; Psi)``.

    Returns:
        Residual norms of shape (nt + 1, nx + 1)
    """
    y = transform(geb, spec)
    R_bar = bar(geb.R)
    momentum = np.einsum("txij,txj->txi", R_bar, np.einsum("xij,txj->txi", spec.mass(geb.x), y[..., :6]))
    stress = np.einsum("txij,txj->txi", R_bar, y[..., 6:])
    dp_dx = np.gradient(geb.p, geb.x, axis=1, edge_order=2)
    lhs = np.gradient(momentum, geb.t, axis=0, edge_order=2)
    rhs = np.gradient(stress, geb.x, axis=1, edge_order=2)
    rhs[..., 3:] += np.cross(dp_dx, stress[..., :3])
    return np.asarray(np.linalg.norm(lhs - rhs, axis=-1))


def rigid_body_motion(
    spec: BeamSpec,
    x: ArrayLike,
    t: ArrayLike,
    f_circ: ArrayLike,
    k_circ: ArrayLike,
    n_quad: int = 2001,
) -> GebField:
    """Rigid motion ``p = t f + int_0^x R_i e1``, ``R = exp(t hat(k)) R_i``.

    This is an exact free-beam motion when ``exp(t hat(k))`` fixes the beam
    tangent ``R_i e1``; otherwise a warning is logged.
    """
    xs = np.asarray(x, dtype=float)
    ts = np.asarray(t, dtype=float)
    f = np.asarray(f_circ, dtype=float)
    k = np.asarray(k_circ, dtype=float)
    fine = np.linspace(0.0, float(xs[-1]), n_quad)
    arc = cumulative_trapezoid(spec.rotation(fine) @ E1, fine, axis=0, initial=0.0)
    shape = np.stack([np.interp(xs, fine, arc[:, c]) for c in range(3)], axis=-1)
    rest = spec.rotation(xs)
    tangents = rest @ E1
    if float(np.max(np.linalg.norm(np.cross(k, tangents), axis=-1))) > 1e-12:
        logger.warning(
            f"Beam {spec.index}: rotation axis is not aligned with the beam tangent; "
            "the rigid motion is not an exact solution"
        )
    K = Rotation.from_rotvec(ts[:, None] * k[None, :]).as_matrix()
    R = np.einsum("tij,xjk->txik", K, rest)
    p = ts[:, None, None] * f[None, None, :] + shape[None]
    return GebField(beam=spec.index, x=xs, t=ts, p=p, R=R)


def check_reconstruction_conditions(
    trajectory: Trajectory,
    network: NetworkSpec,
    initial: Mapping[int, BeamInitialData] | None = None,
    dirichlet: Mapping[int, DirichletMotion] | None = None,
    tol: float = LAST6_TOL,
) -> CompatibilityReport:
    """Evaluate the conditions under which an intrinsic trajectory is invertible.

    Families: ``last6`` per beam; ``initial_shape`` per beam when initial
    data are given (``dp0/dx = R0 (u3 + e1)``, ``dR0/dx = R0 (hat(u4) + hat(U))``);
    ``dirichlet_rate`` per Dirichlet node when motions are given
    (``dfp/dt = fR u1``, ``dfR/dt = fR hat(u2)``).
    """
    entries: list[CompatibilityEntry] = []
    for i in network.beam_indices:
        bf = trajectory.field(i)
        beam = network.beam(i)
        entries.append(
            CompatibilityEntry(
                family="last6", beam=i, residual=float(np.max(last6_residual(bf, beam))), tolerance=tol
            )
        )
        if initial is not None and i in initial:
            data = initial[i]
            u0 = strains(bf.y[0], beam, bf.x)
            dp0 = np.gradient(data.p0, data.x, axis=0, edge_order=2)
            dR0 = np.gradient(data.R0, data.x, axis=0, edge_order=2)
            shape_res = np.abs(dp0 - np.einsum("xij,xj->xi", data.R0, u0[:, 6:9] + E1))
            bend_res = np.abs(dR0 - data.R0 @ (hat(u0[:, 9:12]) + hat(curvature(beam, data.x))))
            entries.append(
                CompatibilityEntry(
                    family="initial_shape",
                    beam=i,
                    residual=max(float(np.max(shape_res)), float(np.max(bend_res))),
                    tolerance=tol,
                )
            )
    for n, motion in (dirichlet or {}).items():
        inc = network.ordered_incidences(n)[0]
        trace = trajectory.endpoint_state(inc)
        dfp, dfR = motion.rates()
        u1 = np.stack([np.interp(motion.t, trajectory.t, trace[:, c]) for c in range(3)], axis=-1)
        u2 = np.stack([np.interp(motion.t, trajectory.t, trace[:, 3 + c]) for c in range(3)], axis=-1)
        res = max(
            float(np.max(np.abs(dfp - np.einsum("tij,tj->ti", motion.fR, u1)))),
            float(np.max(np.abs(dfR - motion.fR @ hat(u2)))),
        )
        entries.append(CompatibilityEntry(family="dirichlet_rate", node=n, residual=res, tolerance=tol))
    return CompatibilityReport(title="Reconstruction conditions", entries=entries)


def check_joint_consistency(
    fields: Mapping[int, GebField],
    network: NetworkSpec,
    dirichlet: Mapping[int, DirichletMotion] | None = None,
    tol: float = LAST6_TOL,
) -> CompatibilityReport:
    """Check rigid joints, position continuity and Dirichlet traces of reconstructed beams.

    Families: ``rotation_joint`` and ``position_joint`` at multiple nodes
    (``R Rref^T`` and ``p`` agree across incident beams for all t), and
    ``dirichlet_trace`` where motions are given.
    """
    entries: list[CompatibilityEntry] = []
    for n in network.node_indices:
        node = network.node(n)
        order = network.ordered_incidences(n)
        if node.kind is NodeKind.MULTIPLE:
            joints: list[FloatArray] = []
            positions: list[FloatArray] = []
            for inc in order:
                geb = fields[inc.beam]
                k = 0 if inc.endpoint is Endpoint.START else len(geb.x) - 1
                ref = network.beam(inc.beam).rotation(geb.x[k])
                joints.append(geb.R[:, k] @ ref.T)
                positions.append(geb.p[:, k])
            entries.append(
                CompatibilityEntry(
                    family="rotation_joint",
                    node=n,
                    residual=max(float(np.max(np.abs(j - joints[0]))) for j in joints),
                    tolerance=tol,
                )
            )
            entries.append(
                CompatibilityEntry(
                    family="position_joint",
                    node=n,
                    residual=max(float(np.max(np.abs(p - positions[0]))) for p in positions),
                    tolerance=tol,
                )
            )
        elif node.kind is NodeKind.DIRICHLET and dirichlet and n in dirichlet:
            motion = dirichlet[n]
            inc = order[0]
            geb = fields[inc.beam]
            k = 0 if inc.endpoint is Endpoint.START else len(geb.x) - 1
            p_trace = np.stack([np.interp(motion.t, geb.t, geb.p[:, k, c]) for c in range(3)], axis=-1)
            entries.append(
                CompatibilityEntry(
                    family="dirichlet_trace",
                    node=n,
                    residual=float(np.max(np.abs(p_trace - motion.fp))),
                    tolerance=tol,
                )
            )
    return CompatibilityReport(title="Joint consistency", entries=entries)


def reconstruction_report(
    trajectory: Trajectory,
    network: NetworkSpec,
    fields: Mapping[int, GebField],
    anchor_node: int | None = None,
    with_residual: bool = True,
) -> ReconstructionReport:
    """Per-beam drift and residuals plus joint mismatches of a reconstruction."""
    entries = []
    for i in sorted(fields):
        geb = fields[i]
        beam = network.beam(i)
        entries.append(
            ReconstructionEntry(
                beam=i,
                orthogonality_drift=orthogonality_defect(geb.R),
                last6_residual=float(np.max(last6_residual(trajectory.field(i), beam))),
                geb_residual=float(np.max(geb_residual(geb, beam))) if with_residual else None,
            )
        )
    joints = check_joint_consistency(fields, network)
    multiple = any(network.node(n).kind is NodeKind.MULTIPLE for n in network.node_indices)
    return ReconstructionReport(
        anchor_node=network.node_indices[0] if anchor_node is None else anchor_node,
        entries=entries,
        joint_rotation_mismatch=joints.residual("rotation_joint") if multiple else None,
        joint_position_mismatch=joints.residual("position_joint") if multiple else None,
    )
