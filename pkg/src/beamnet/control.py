"""Nodal profile control synthesis.

Given profiles (time-dependent states) prescribed at a charged node for
t in [T*, T], this module constructs boundary controls at the controlled nodes
so that the network reproduces the profiles. The construction:
- solves the network forward on [0, T_bar] with placeholder controls;
- bridges the resulting node trace to the profiles with cubic Hermite pieces;
- solves the control-path beams sidewise from the bridged traces and the
  remaining beams forward, completing node traces with the nodal conditions;
- reads the controls off the traces at the controlled nodes.

The trace-assembly helpers are shared with ``beamnet.planner`` so that plan
execution on the A-shaped network runs the same arithmetic.

Time Complexity: O(nt * nx) per beam and solve
Space Complexity: O(nt * nx) per beam
"""

import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import trapezoid
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from beamnet.beam import DiagonalizedBeam, quadratic_source
from beamnet.exceptions import (
    InvalidControlProblemError,
    ProfileIncompatibleError,
    TraceUnavailableError,
)
from beamnet.kinematics import bar
from beamnet.models import ControlReport, VerificationEntry, VerificationReport
from beamnet.network import (
    Endpoint,
    Incidence,
    NetworkSpec,
    NodeKind,
    NodeRecord,
    TimeSeries,
    endpoint_sample,
    node_residual,
)
from beamnet.solver import (
    DEFAULT_BLOWUP_BOUND,
    BeamField,
    Grid,
    Trajectory,
    characteristic_curve,
    restrict_to_characteristic_domain,
    solve_forward,
    solve_sidewise,
)

logger = logging.getLogger(__name__)

PROFILE_TOL = 1e-8
SPLIT_NODE_BASE = 1000
SUBNETWORK_CFL = 1.0

FloatArray = NDArray[np.float64]

A_NETWORK_INCIDENCES: dict[int, tuple[NodeKind, frozenset[tuple[int, Endpoint]]]] = {
    1: (NodeKind.MULTIPLE, frozenset({(1, Endpoint.START), (2, Endpoint.START)})),
    2: (NodeKind.MULTIPLE, frozenset({(1, Endpoint.END), (3, Endpoint.START), (4, Endpoint.START)})),
    3: (NodeKind.MULTIPLE, frozenset({(2, Endpoint.END), (3, Endpoint.END), (5, Endpoint.START)})),
    4: (NodeKind.NEUMANN, frozenset({(4, Endpoint.END)})),
    5: (NodeKind.NEUMANN, frozenset({(5, Endpoint.END)})),
}


def transmission_time(db: DiagonalizedBeam) -> float:
    """Travel time of the slowest characteristic, ``int_0^l 1 / min_k |lambda_k| dx``."""
    return float(trapezoid(1.0 / db.min_speed, db.x))


def transmission_times(dbs: Mapping[int, DiagonalizedBeam]) -> dict[int, float]:
    """Transmission time of every beam."""
    return {i: transmission_time(db) for i, db in sorted(dbs.items())}


def controllability_time(times: Mapping[int, float]) -> float:
    """Return ``max(T1, T2) + max(T4, T5)`` for the A-shaped network."""
    return max(times[1], times[2]) + max(times[4], times[5])


def hermite_bridge(
    left: tuple[ArrayLike, ArrayLike],
    right: tuple[ArrayLike, ArrayLike],
    t_left: float,
    t_right: float,
) -> CubicHermiteSpline:
    """Cubic matching (value, slope) at ``t_left`` and at ``t_right``.

    Raises:
        ValueError: If ``t_right <= t_left``
    """
    if not t_right > t_left:
        raise ValueError(f"Bridge interval [{t_left}, {t_right}] is empty")
    values = np.stack([np.asarray(left[0], dtype=float), np.asarray(right[0], dtype=float)])
    slopes = np.stack([np.asarray(left[1], dtype=float), np.asarray(right[1], dtype=float)])
    return CubicHermiteSpline([t_left, t_right], values, slopes, axis=0)


@dataclass(frozen=True)
class ControlProblem:
    """Nodal profile control problem.

    Attributes:
        network: Network with nodal data on its non-controlled nodes
        y0: Initial states per beam on the solver samples
        profiles: Beam -> profile (12-valued series covering [t_star, horizon])
            for every beam incident to a charged node
        t_star: Start of profile tracking T*
        horizon: Final time T
        charged: Charged nodes
        controlled: Controlled nodes
        path_edges: Control-path edges
    """

    network: NetworkSpec
    y0: dict[int, FloatArray]
    profiles: dict[int, TimeSeries]
    t_star: float
    horizon: float
    charged: tuple[int, ...] = (1,)
    controlled: tuple[int, ...] = (4, 5)
    path_edges: tuple[int, ...] = (1, 2, 4, 5)


@dataclass(frozen=True)
class ControlResult:
    """Outcome of a control synthesis.

    Attributes:
        controls: Controlled node -> control series on [0, T]
        trajectory: Synthesised solution on [0, T]
        preliminary: Forward solution with placeholder controls on [0, T_bar]
        report: Diagnostics
        closed_loop: Re-simulation with the synthesised controls, if run
    """

    controls: dict[int, TimeSeries]
    trajectory: Trajectory
    preliminary: Trajectory
    report: ControlReport
    closed_loop: Trajectory | None = None


def check_a_topology(network: NetworkSpec) -> None:
    """Ensure the network is the A-shaped five-beam network.

    Raises:
        InvalidControlProblemError: On any structural difference
    """
    if network.beam_indices != [1, 2, 3, 4, 5] or network.node_indices != [1, 2, 3, 4, 5]:
        raise InvalidControlProblemError("Control synthesis requires beams and nodes 1..5")
    for n, (kind, expected) in A_NETWORK_INCIDENCES.items():
        node = network.node(n)
        found = frozenset((inc.beam, inc.endpoint) for inc in node.incidences)
        if node.kind is not kind or found != expected:
            raise InvalidControlProblemError(
                f"Node {n} does not match the A-shaped network ({node.kind.value}, "
                f"{sorted((b, e.value) for b, e in found)})"
            )


def rigid_translation_state(
    network: NetworkSpec, dbs: Mapping[int, DiagonalizedBeam], velocity: ArrayLike
) -> dict[int, FloatArray]:
    """Body-frame states ``(R_i^T V, 0, 0, 0)`` of a rigid translation with velocity V."""
    V = np.asarray(velocity, dtype=float)
    states: dict[int, FloatArray] = {}
    for i in network.beam_indices:
        db = dbs[i]
        y = np.zeros((db.n_samples, 12))
        y[:, :3] = np.einsum("xji,j->xi", db.R, V)
        states[i] = y
    return states


def _end_x(network: NetworkSpec, inc: Incidence) -> float:
    return 0.0 if inc.endpoint is Endpoint.START else network.beam(inc.beam).length


def _node_bar(network: NetworkSpec, inc: Incidence) -> FloatArray:
    return bar(network.beam(inc.beam).rotation(_end_x(network, inc)))


def equilibrium_profiles(
    network: NetworkSpec,
    velocity: ArrayLike,
    charged: Iterable[int],
    t_start: float,
    t_end: float,
) -> dict[int, TimeSeries]:
    """Constant rigid-translation profiles at the charged nodes."""
    V = np.asarray(velocity, dtype=float)
    profiles: dict[int, TimeSeries] = {}
    for n in charged:
        for inc in network.ordered_incidences(n):
            state = np.zeros(12)
            state[:3] = network.beam(inc.beam).rotation(_end_x(network, inc)).T @ V
            profiles[inc.beam] = TimeSeries.constant(state, t_start, t_end)
    return profiles


def _complete_velocities_and_forces(
    network: NetworkSpec,
    n: int,
    traces: dict[int, FloatArray],
    q: FloatArray,
) -> dict[int, FloatArray]:
    """Impose continuity from the smallest beam and Kirchhoff on the largest."""
    order = network.ordered_incidences(n)
    lead = min(order, key=lambda inc: inc.beam)
    completed = max(order, key=lambda inc: inc.beam)
    lead_bar = _node_bar(network, lead)
    fixed_frame_v = np.einsum("ij,tj->ti", lead_bar, traces[lead.beam][:, :6])
    balance = np.array(q, dtype=float, copy=True)
    out: dict[int, FloatArray] = {}
    for inc in order:
        rb = _node_bar(network, inc)
        y = traces[inc.beam].copy()
        y[:, :6] = np.einsum("ji,tj->ti", rb, fixed_frame_v)
        out[inc.beam] = y
        if inc != completed:
            balance = balance - inc.tau * np.einsum("ij,tj->ti", rb, y[:, 6:])
    rb = _node_bar(network, completed)
    out[completed.beam][:, 6:] = completed.tau * np.einsum("ji,tj->ti", rb, balance)
    return out


def smooth_random_profiles(
    network: NetworkSpec,
    charged: int,
    amplitude: float,
    seed: int,
    t_start: float,
    t_end: float,
    modes: int = 3,
    n_samples: int = 201,
) -> dict[int, TimeSeries]:
    """Random C1 profiles at ``charged`` satisfying its nodal conditions.

    Each beam trace is a sum of ``modes`` low-frequency Fourier modes with
    Gaussian coefficients; velocities are then made continuous from the
    smallest incident beam and the largest beam's force completes Kirchhoff
    with the node's data.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(t_start, t_end, n_samples)
    period = 2.0 * (t_end - t_start)
    raw: dict[int, FloatArray] = {}
    for inc in network.ordered_incidences(charged):
        coeffs = rng.standard_normal((modes, 12)) * amplitude / modes
        phases = rng.uniform(0.0, 2.0 * np.pi, (modes, 12))
        k = np.arange(1, modes + 1)[:, None, None]
        waves = np.sin(2.0 * np.pi * k * (t[None, :, None] - t_start) / period + phases[:, None, :])
        raw[inc.beam] = np.sum(coeffs[:, None, :] * waves, axis=0)
    completed = _complete_velocities_and_forces(
        network, charged, raw, network.nodal_data(charged, t)
    )
    return {i: TimeSeries(t, values) for i, values in completed.items()}


def control_value(
    network: NetworkSpec, n: int, state_at: Callable[[Incidence], FloatArray]
) -> FloatArray:
    """Value of the nodal data that node ``n`` sees for the given end states.

    ``tau z`` at Neumann nodes, ``v`` at Dirichlet nodes and the Kirchhoff sum
    ``sum tau Rbar z`` at multiple nodes. States may be stacked along leading axes.
    """
    kind = network.node(n).kind
    order = network.ordered_incidences(n)
    if kind is NodeKind.NEUMANN:
        return order[0].tau * state_at(order[0])[..., 6:]
    if kind is NodeKind.DIRICHLET:
        return state_at(order[0])[..., :6]
    return sum(
        (
            inc.tau * np.einsum("ij,...j->...i", _node_bar(network, inc), state_at(inc)[..., 6:])
            for inc in order
        ),
        start=np.zeros(6),
    )


def preliminary_solve(
    network: NetworkSpec,
    dbs: Mapping[int, DiagonalizedBeam],
    y0: Mapping[int, FloatArray],
    grid: Grid,
    controlled: Iterable[int],
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> Trajectory:
    """Forward solve with constant placeholder controls compatible at t = 0."""

    def initial_state(inc: Incidence) -> FloatArray:
        return np.asarray(y0[inc.beam])[endpoint_sample(dbs[inc.beam], inc.endpoint)]

    placeholders: dict[int, TimeSeries | None] = {
        n: TimeSeries.constant(control_value(network, n, initial_state), 0.0, grid.horizon)
        for n in controlled
    }
    logger.info(f"Preliminary forward solve on [0, {grid.horizon:.6g}]")
    return solve_forward(
        network.with_node_data(placeholders), dbs, y0, grid, blowup_bound=blowup_bound
    )


def _bridged_trace(
    preliminary: TimeSeries,
    profile: TimeSeries,
    t_bar: float,
    t_star: float,
    t: FloatArray,
) -> FloatArray:
    out = np.empty((len(t), 12))
    before = t <= t_bar
    after = t >= t_star
    middle = ~before & ~after
    out[before] = preliminary(t[before])
    out[after] = profile(t[after])
    if np.any(middle):
        bridge = hermite_bridge(
            (preliminary(t_bar), preliminary.derivative(t_bar)),
            (profile(t_star), profile.derivative(t_star)),
            t_bar,
            t_star,
        )
        out[middle] = bridge(t[middle])
    return out


def bridge_charged_node(
    network: NetworkSpec,
    n: int,
    preliminary: Trajectory,
    profiles: Mapping[int, TimeSeries],
    t_bar: float,
    t_star: float,
    t: FloatArray,
) -> dict[int, FloatArray]:
    """Traces on [0, T] at charged node ``n`` joining the preliminary solution to the profiles.

    Raises:
        InvalidControlProblemError: If a profile is missing
    """
    raw: dict[int, FloatArray] = {}
    for inc in network.ordered_incidences(n):
        if inc.beam not in profiles:
            raise InvalidControlProblemError(f"No profile for beam {inc.beam} at charged node {n}")
        series = TimeSeries(preliminary.t, preliminary.endpoint_state(inc))
        raw[inc.beam] = _bridged_trace(series, profiles[inc.beam], t_bar, t_star, t)
    return _complete_velocities_and_forces(network, n, raw, network.nodal_data(n, t))


def complete_node_trace(
    network: NetworkSpec,
    n: int,
    target: Incidence,
    solved: Mapping[int, BeamField],
    t: FloatArray,
) -> FloatArray:
    """Trace at ``target`` from the nodal conditions and all other solved incident beams.

    Velocity follows by continuity from the smallest solved beam; the force
    solves Kirchhoff with the node's data.

    Raises:
        TraceUnavailableError: If another incident beam is not solved yet
    """
    others = [inc for inc in network.ordered_incidences(n) if inc != target]
    missing = [inc.beam for inc in others if inc.beam not in solved]
    if missing or not others:
        raise TraceUnavailableError(
            f"Node {n}: cannot complete the trace of beam {target.beam} (unsolved beams {missing})"
        )
    lead = min(others, key=lambda inc: inc.beam)
    lead_bar = _node_bar(network, lead)
    target_bar = _node_bar(network, target)
    lead_trace = solved[lead.beam].trace(lead.endpoint)
    trace = np.empty((len(t), 12))
    trace[:, :6] = np.einsum("ji,tj->ti", target_bar, np.einsum("ij,tj->ti", lead_bar, lead_trace[:, :6]))
    balance = np.array(network.nodal_data(n, t), dtype=float, copy=True)
    for inc in others:
        z = solved[inc.beam].trace(inc.endpoint)[:, 6:]
        balance = balance - inc.tau * np.einsum("ij,tj->ti", _node_bar(network, inc), z)
    trace[:, 6:] = target.tau * np.einsum("ji,tj->ti", target_bar, balance)
    return trace


def terminal_forces(db: DiagonalizedBeam, anchor: Endpoint, t: FloatArray, trace: FloatArray) -> FloatArray:
    """Linear continuation in x of the trace's final force.

    The slope is the x derivative the equations give at the anchor from the
    trace and its time derivative at t = T, so the forces at t = T meet the
    trace with matching first derivatives at the corner.
    """
    k = 0 if anchor is Endpoint.START else db.n_samples - 1
    y = trace[-1]
    dy_dt = np.gradient(trace, t, axis=0, edge_order=2 if len(t) > 2 else 1)[-1]
    g = quadratic_source(db.M[k], db.C[k], db.Minv[k], db.Cinv[k], y)
    dy_dx = -np.linalg.solve(db.A[k], dy_dt + db.Bbar[k] @ y - g)
    return np.asarray(y[6:] + (db.x - db.x[k])[:, None] * dy_dx[None, 6:])


def sidewise_edge(
    db: DiagonalizedBeam,
    anchor: Endpoint,
    t: FloatArray,
    trace: FloatArray,
    y0: FloatArray,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> BeamField:
    """Sidewise solve of one beam from its trace at ``anchor``.

    Velocities at t = 0 come from ``y0``; forces at t = T come from
    :func:`terminal_forces`.
    """
    direction = "rightward" if anchor is Endpoint.START else "leftward"
    bc_tT = terminal_forces(db, anchor, t, trace)
    return solve_sidewise(
        db, direction, t, trace, np.asarray(y0)[:, :6], bc_tT, blowup_bound=blowup_bound
    )


def forward_subnetwork(
    network: NetworkSpec,
    dbs: Mapping[int, DiagonalizedBeam],
    y0: Mapping[int, FloatArray],
    grid: Grid,
    edges: Iterable[int],
    solved: Mapping[int, BeamField],
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> dict[int, BeamField]:
    """Forward solve on the sub-network spanned by ``edges``.

    A node with a solved incident beam imposes velocities on each of its
    ``edges`` ends (continuity from the smallest solved beam) as separate
    Dirichlet nodes. Other nodes keep their kind and data and must have all
    their incident beams in ``edges``. The solve runs on its own grid at
    Courant number one and the fields are resampled onto ``grid`` with cubic splines.

    Raises:
        TraceUnavailableError: If a node has an incident beam neither solved nor in ``edges``
    """
    edge_set = set(edges)
    t = grid.t
    nodes: list[NodeRecord] = []
    touched = sorted({network.node_of(i, e) for i in edge_set for e in Endpoint})
    for n in touched:
        node = network.node(n)
        local = [inc for inc in network.ordered_incidences(n) if inc.beam in edge_set]
        done = [inc for inc in network.ordered_incidences(n) if inc.beam in solved and inc.beam not in edge_set]
        if done:
            lead = min(done, key=lambda inc: inc.beam)
            fixed = np.einsum("ij,tj->ti", _node_bar(network, lead), solved[lead.beam].trace(lead.endpoint)[:, :6])
            for j, inc in enumerate(local):
                v = np.einsum("ji,tj->ti", _node_bar(network, inc), fixed)
                index = n if len(local) == 1 else n * SPLIT_NODE_BASE + j
                nodes.append(NodeRecord(index, NodeKind.DIRICHLET, (inc,), TimeSeries(t, v)))
            continue
        if len(local) != len(node.incidences):
            raise TraceUnavailableError(
                f"Node {n}: incident beams outside the forward set have no trace yet"
            )
        nodes.append(node)
    sub = NetworkSpec(beams=tuple(network.beam(i) for i in sorted(edge_set)), nodes=tuple(nodes))
    sub_dbs = {i: dbs[i] for i in sorted(edge_set)}
    # own grid at the largest stable step, resampled onto the caller grid
    inner = Grid.from_cfl(sub_dbs, grid.horizon, SUBNETWORK_CFL)
    logger.info(f"Forward solve on beams {sorted(edge_set)} over [0, {grid.horizon:.6g}], {inner.nt} steps")
    result = solve_forward(sub, sub_dbs, {i: y0[i] for i in edge_set}, inner, blowup_bound=blowup_bound)
    if inner.nt == grid.nt:
        return dict(result.fields)
    return {
        i: BeamField(beam=i, x=f.x, t=t, y=CubicSpline(f.t, f.y, axis=0)(t), L=f.L)
        for i, f in result.fields.items()
    }


def extract_controls(
    network: NetworkSpec, fields: Mapping[int, BeamField], controlled: Iterable[int]
) -> dict[int, TimeSeries]:
    """Controls read off the traces at the controlled nodes (see :func:`control_value`)."""
    controls: dict[int, TimeSeries] = {}
    for n in controlled:
        t = fields[network.ordered_incidences(n)[0].beam].t
        values = control_value(network, n, lambda inc: fields[inc.beam].trace(inc.endpoint))
        controls[n] = TimeSeries(t, values)
    return controls


def check_profiles(network: NetworkSpec, n: int, profiles: Mapping[int, TimeSeries], t: FloatArray) -> float:
    """Largest nodal-condition residual of the profiles at node ``n`` on times ``t``.

    Raises:
        ProfileIncompatibleError: If it exceeds ``PROFILE_TOL``
    """
    res = node_residual(network, n, lambda inc: profiles[inc.beam](t), network.nodal_data(n, t))
    if res.worst > PROFILE_TOL:
        raise ProfileIncompatibleError(
            f"Profiles violate the conditions of node {n} (continuity {res.velocity:.3e}, "
            f"Kirchhoff {res.force:.3e})"
        )
    return res.worst


def check_times(t_bar: float, t_star: float, horizon: float, grid: Grid) -> None:
    """Ensure ``T > T* > T_bar`` and that ``grid`` ends at T.

    Raises:
        InvalidControlProblemError: If violated
    """
    if not horizon > t_star > t_bar:
        raise InvalidControlProblemError(
            f"Times must satisfy T > T* > T_bar, got T={horizon}, T*={t_star}, T_bar={t_bar:.6g}"
        )
    if abs(grid.horizon - horizon) > 1e-9 * max(1.0, horizon):
        raise InvalidControlProblemError(f"Grid ends at {grid.horizon}, expected T={horizon}")


def check_profile_range(profiles: Mapping[int, TimeSeries], t_star: float, horizon: float) -> None:
    """Ensure every profile covers [T*, T]."""
    for i, series in profiles.items():
        if series.t_start > t_star + 1e-12 or series.t_end < horizon - 1e-12:
            raise InvalidControlProblemError(
                f"Profile of beam {i} covers [{series.t_start}, {series.t_end}], "
                f"not [{t_star}, {horizon}]"
            )


def tracking_error(
    trajectory: Trajectory,
    network: NetworkSpec,
    profiles: Mapping[int, TimeSeries],
    charged: Iterable[int],
    t_star: float,
) -> float:
    """Largest deviation of the node traces from the profiles on [T*, T]."""
    mask = trajectory.t >= t_star - 1e-12
    worst = 0.0
    for n in charged:
        for inc in network.ordered_incidences(n):
            trace = trajectory.endpoint_state(inc)[mask]
            worst = max(worst, float(np.max(np.abs(trace - profiles[inc.beam](trajectory.t[mask])))))
    return worst


def max_node_residual(trajectory: Trajectory, network: NetworkSpec, nodes: Iterable[int]) -> float:
    """Largest nodal-condition residual of a trajectory over all stored times."""
    return max(
        (
            node_residual(network, n, trajectory.endpoint_state, network.nodal_data(n, trajectory.t)).worst
            for n in nodes
        ),
        default=0.0,
    )


def closed_loop(
    problem: ControlProblem,
    dbs: Mapping[int, DiagonalizedBeam],
    controls: Mapping[int, TimeSeries],
    grid: Grid,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> Trajectory:
    """Re-simulate the network with the synthesised controls."""
    network = problem.network.with_node_data(dict(controls))
    return solve_forward(network, dbs, problem.y0, grid, blowup_bound=blowup_bound)


def synthesize(
    problem: ControlProblem,
    dbs: Mapping[int, DiagonalizedBeam],
    grid: Grid,
    *,
    resimulate: bool = True,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> ControlResult:
    """Construct controls at nodes 4 and 5 of the A-shaped network.

    Args:
        problem: Control problem (A-shaped topology)
        dbs: Diagonalised beams
        grid: Time grid on [0, T]
        resimulate: Re-run the network with the controls and report tracking
        blowup_bound: Bound on Riemann components

    Returns:
        Controls, synthesised and preliminary trajectories and a report

    Raises:
        InvalidControlProblemError: On topology, time or profile-range violations
        ProfileIncompatibleError: If profiles violate the node 1 conditions
        BlowUpError: If a solve blows up
    """
    network = problem.network
    check_a_topology(network)
    times = transmission_times(dbs)
    t_bar = controllability_time(times)
    check_times(t_bar, problem.t_star, problem.horizon, grid)
    check_profile_range(problem.profiles, problem.t_star, problem.horizon)
    t = grid.t
    check_profiles(network, 1, problem.profiles, t[t >= problem.t_star - 1e-12])

    steps: list[str] = []
    # placeholder controls up to the controllability time
    prelim_grid = grid.prefix(t_bar)
    preliminary = preliminary_solve(
        network, dbs, problem.y0, prelim_grid, problem.controlled, blowup_bound
    )
    steps.append(f"forward solve of the network on [0, {prelim_grid.horizon:.6g}] with placeholder controls")

    # node 1: preliminary trace, Hermite bridge, then the profiles
    bridged = bridge_charged_node(network, 1, preliminary, problem.profiles, t_bar, problem.t_star, t)
    steps.append(f"bridged traces at node 1 on [{t_bar:.6g}, {problem.t_star:.6g}]")

    fields: dict[int, BeamField] = {}
    # beams 1 and 2 sidewise from node 1
    for i in (1, 2):
        fields[i] = sidewise_edge(dbs[i], Endpoint.START, t, bridged[i], problem.y0[i], blowup_bound)
        steps.append(f"sidewise solve of beam {i} from node 1")

    # beam 3 driven by the velocities already known at nodes 2 and 3
    fields.update(forward_subnetwork(network, dbs, problem.y0, grid, [3], fields, blowup_bound))
    steps.append("forward solve of beam 3 with velocities imposed at nodes 2 and 3")

    # beams 4 and 5 from the completed traces at nodes 2 and 3
    for i, n in ((4, 2), (5, 3)):
        inc = Incidence.of(i, Endpoint.START)
        trace = complete_node_trace(network, n, inc, fields, t)
        fields[i] = sidewise_edge(dbs[i], Endpoint.START, t, trace, problem.y0[i], blowup_bound)
        steps.append(f"sidewise solve of beam {i} from node {n}")

    controls = extract_controls(network, fields, problem.controlled)
    trajectory = Trajectory(t=t, fields={i: fields[i] for i in sorted(fields)})
    steps.append("controls read at nodes 4 and 5")

    report = ControlReport(
        controllability_time=t_bar,
        t_star=problem.t_star,
        horizon=problem.horizon,
        transmission_times=times,
        steps=steps,
        node_residual=max_node_residual(trajectory, network, (1, 2, 3)),
    )
    loop: Trajectory | None = None
    if resimulate:
        loop = closed_loop(problem, dbs, controls, grid, blowup_bound)
        report.tracking_error = tracking_error(loop, network, problem.profiles, problem.charged, problem.t_star)
        logger.info(f"Closed-loop tracking error {report.tracking_error:.3e}")
    logger.info(f"Control synthesis finished (T_bar={t_bar:.6g}, T*={problem.t_star}, T={problem.horizon})")
    return ControlResult(
        controls=controls,
        trajectory=trajectory,
        preliminary=preliminary,
        report=report,
        closed_loop=loop,
    )


def _region_deviation(
    synthesized: BeamField, preliminary: BeamField, t_curve: FloatArray | None, t_max: float
) -> float:
    rows = min(len(preliminary.t), len(synthesized.t))
    head = BeamField(synthesized.beam, synthesized.x, synthesized.t[:rows], synthesized.y[:rows], synthesized.L)
    diff = np.abs(head.y - preliminary.y[:rows])
    curve = np.full(len(head.x), t_max) if t_curve is None else np.minimum(t_curve, t_max)
    masked = restrict_to_characteristic_domain(
        BeamField(head.beam, head.x, head.t, diff, head.L), curve
    )
    value = masked.max()
    return 0.0 if value is np.ma.masked else float(value)


def verify_initial_recovery(
    result: ControlResult,
    dbs: Mapping[int, DiagonalizedBeam],
    tol: float = 1e-6,
) -> VerificationReport:
    """Compare the synthesised and preliminary solutions where they must coincide.

    Regions: below ``t_i(x)`` with ``t_i(0) = T_i + max(T4, T5)`` on beams 1
    and 2, ``[0, l3] x [0, max(T4, T5)]`` on beam 3, and below ``t_i(x)`` with
    ``t_i(0) = T_i`` on beams 4 and 5.
    """
    times = result.report.transmission_times
    tail = max(times[4], times[5])
    t_max = float(result.preliminary.t[-1])
    entries: list[VerificationEntry] = []
    for i in (1, 2):
        curve = characteristic_curve(dbs[i], times[i] + tail)
        entries.append(
            VerificationEntry(
                beam=i,
                region=f"below characteristic from t={times[i] + tail:.6g}",
                deviation=_region_deviation(
                    result.trajectory.field(i), result.preliminary.field(i), curve, t_max
                ),
            )
        )
    entries.append(
        VerificationEntry(
            beam=3,
            region=f"t <= {tail:.6g}",
            deviation=_region_deviation(
                result.trajectory.field(3), result.preliminary.field(3), None, min(tail, t_max)
            ),
        )
    )
    for i in (4, 5):
        curve = characteristic_curve(dbs[i], times[i])
        entries.append(
            VerificationEntry(
                beam=i,
                region=f"below characteristic from t={times[i]:.6g}",
                deviation=_region_deviation(
                    result.trajectory.field(i), result.preliminary.field(i), curve, t_max
                ),
            )
        )
    report = VerificationReport(entries=entries, tolerance=tol)
    logger.info(f"Initial recovery: max deviation {report.max_deviation:.3e}")
    return report

