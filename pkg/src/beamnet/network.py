"""Beam network topology and node coupling.

A network is a set of beams joined at nodes. Each node is either a multiple
node (rigid joint with continuity of velocities and a Kirchhoff force balance)
or a simple node carrying a Neumann (force) or Dirichlet (velocity) condition.
This module provides:
- Network data model with incidence, orientation and nodal data series
- Structural validation returning a report (never raising)
- Assembly of node coupling maps ``r_out = Bcal r_in + Qcal q``
- Evaluation of the physical nodal conditions on physical states

Stacked node vectors always list beams ending at the node first (ascending
index), then beams starting there (ascending index).

Time Complexity: O(k^3) per node for k incident beams
Space Complexity: O(k^2) per node
"""

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import networkx as nx
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import block_diag, lu_factor, lu_solve

from beamnet.beam import BeamSpec, DiagonalizedBeam, diagonalize
from beamnet.exceptions import NotSPDError, SingularNodeMatrixError
from beamnet.kinematics import E1, bar
from beamnet.models import ValidationReport

logger = logging.getLogger(__name__)

SIGMA_GAMMA_TOL = 1e-9
NODE_SOLVE_TOL = 1e-8
POSITION_TOL = 1e-6

FloatArray = NDArray[np.float64]


class NodeKind(str, Enum):
    """Kind of nodal condition."""

    MULTIPLE = "multiple"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"

    @property
    def is_simple(self) -> bool:
        """Whether the node is a simple (degree one) node."""
        return self is not NodeKind.MULTIPLE


class Endpoint(str, Enum):
    """Beam end attached to a node."""

    START = "start"
    END = "end"

    @property
    def tau(self) -> int:
        """Orientation sign: -1 at x = 0, +1 at x = length."""
        return -1 if self is Endpoint.START else 1


@dataclass(frozen=True)
class Incidence:
    """Attachment of one beam end to a node."""

    beam: int
    endpoint: Endpoint
    tau: int

    @classmethod
    def of(cls, beam: int, endpoint: Endpoint | str) -> "Incidence":
        """Build an incidence with the sign implied by the endpoint."""
        end = Endpoint(endpoint)
        return cls(beam=beam, endpoint=end, tau=end.tau)


class TimeSeries:
    """Sampled C1 time series with cubic interpolation.

    Evaluation outside the sampled range is clamped to the nearest end.
    """

    def __init__(self, t: ArrayLike, values: ArrayLike) -> None:
        """Initialise the series.

        Args:
            t: Strictly increasing sample times (at least two)
            values: Samples of shape (len(t), d)

        Raises:
            ValueError: If shapes are inconsistent or t is not increasing
        """
        ts = np.asarray(t, dtype=float)
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if ts.ndim != 1 or len(ts) < 2 or vals.shape[0] != len(ts):
            raise ValueError(f"Time series needs >= 2 samples matching t, got {vals.shape}")
        if np.any(np.diff(ts) <= 0.0):
            raise ValueError("Time samples must be strictly increasing")
        self.t: FloatArray = ts
        self.values: FloatArray = vals
        self._spline = CubicSpline(ts, vals, axis=0)
        self._derivative = self._spline.derivative()

    @classmethod
    def constant(cls, value: ArrayLike, t_start: float = 0.0, t_end: float = 1.0) -> "TimeSeries":
        """Return a constant series on ``[t_start, t_end]``."""
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([t_start, t_end], np.vstack([v, v]))

    @classmethod
    def zeros(cls, dim: int = 6, t_start: float = 0.0, t_end: float = 1.0) -> "TimeSeries":
        """Return the zero series of dimension ``dim``."""
        return cls.constant(np.zeros(dim), t_start, t_end)

    @property
    def dim(self) -> int:
        """Dimension of the values."""
        return int(self.values.shape[1])

    @property
    def t_start(self) -> float:
        """First sample time."""
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        """Last sample time."""
        return float(self.t[-1])

    def __call__(self, t: ArrayLike) -> FloatArray:
        """Evaluate at time(s) ``t``; returns shape ``t.shape + (dim,)``."""
        ts = np.clip(np.asarray(t, dtype=float), self.t[0], self.t[-1])
        return np.asarray(self._spline(ts))

    def derivative(self, t: ArrayLike) -> FloatArray:
        """Evaluate the time derivative at ``t`` (clamped)."""
        ts = np.clip(np.asarray(t, dtype=float), self.t[0], self.t[-1])
        return np.asarray(self._derivative(ts))


@dataclass(frozen=True)
class NodeRecord:
    """One node of the network.

    Attributes:
        index: Node index n
        kind: Nodal condition kind
        incidences: Attached beam ends
        data: Nodal data q_n (6-valued series); None means zero
        position: Optional fixed-frame position of the node
        ending_count: Optional declared number of beams ending at the node
    """

    index: int
    kind: NodeKind
    incidences: tuple[Incidence, ...]
    data: TimeSeries | None = None
    position: FloatArray | None = None
    ending_count: int | None = None


@dataclass(frozen=True)
class NetworkSpec:
    """Beams and nodes of a network."""

    beams: tuple[BeamSpec, ...]
    nodes: tuple[NodeRecord, ...]
    _beam_map: dict[int, BeamSpec] = field(init=False, repr=False, compare=False)
    _node_map: dict[int, NodeRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Index beams and nodes by their ids."""
        object.__setattr__(self, "_beam_map", {b.index: b for b in self.beams})
        object.__setattr__(self, "_node_map", {n.index: n for n in self.nodes})

    @property
    def beam_indices(self) -> list[int]:
        """Sorted beam indices."""
        return sorted(self._beam_map)

    @property
    def node_indices(self) -> list[int]:
        """Sorted node indices."""
        return sorted(self._node_map)

    def beam(self, i: int) -> BeamSpec:
        """Return beam ``i``."""
        return self._beam_map[i]

    def node(self, n: int) -> NodeRecord:
        """Return node ``n``."""
        return self._node_map[n]

    def degree(self, n: int) -> int:
        """Number of beam ends attached to node ``n`` (k_n)."""
        return len(self.node(n).incidences)

    def incident(self, n: int) -> list[int]:
        """Sorted indices of beams incident to node ``n``."""
        return sorted({inc.beam for inc in self.node(n).incidences})

    def i_n(self, n: int) -> int:
        """Smallest incident beam index of node ``n``."""
        return self.incident(n)[0]

    def s_n(self, n: int) -> int:
        """Number of beams ending at node ``n``."""
        return sum(1 for inc in self.node(n).incidences if inc.endpoint is Endpoint.END)

    def ordered_incidences(self, n: int) -> list[Incidence]:
        """Incidences of ``n``: ending beams ascending, then starting beams ascending."""
        incs = self.node(n).incidences
        ending = sorted((i for i in incs if i.endpoint is Endpoint.END), key=lambda i: i.beam)
        starting = sorted((i for i in incs if i.endpoint is Endpoint.START), key=lambda i: i.beam)
        return ending + starting

    def node_of(self, beam: int, endpoint: Endpoint) -> int:
        """Return the node holding the given beam end.

        Raises:
            KeyError: If no node holds it
        """
        for node in self.nodes:
            for inc in node.incidences:
                if inc.beam == beam and inc.endpoint is endpoint:
                    return node.index
        raise KeyError(f"Beam {beam} {endpoint.value} is not attached to any node")

    def nodal_data(self, n: int, t: ArrayLike) -> FloatArray:
        """Evaluate q_n at time(s) ``t`` (zero when no data are attached)."""
        data = self.node(n).data
        ts = np.asarray(t, dtype=float)
        if data is None:
            return np.zeros((*ts.shape, 6))
        return data(ts)

    def with_node_data(self, data: Mapping[int, TimeSeries | None]) -> "NetworkSpec":
        """Return a copy with nodal data replaced for the given nodes."""
        nodes = tuple(
            replace(node, data=data[node.index]) if node.index in data else node
            for node in self.nodes
        )
        return NetworkSpec(beams=self.beams, nodes=nodes)

    def to_graph(self) -> nx.MultiGraph:
        """Return the topology as a multigraph keyed by beam index."""
        graph = nx.MultiGraph()
        for node in self.nodes:
            graph.add_node(node.index, kind=node.kind.value)
        for i in self.beam_indices:
            graph.add_edge(
                self.node_of(i, Endpoint.START), self.node_of(i, Endpoint.END), key=i, beam=i
            )
        return graph

    def node_positions(self, anchor: int | None = None, n_quad: int = 401) -> dict[int, FloatArray]:
        """Fixed-frame node positions of the undeformed network.

        Positions are propagated from ``anchor`` (default: smallest node index)
        by integrating ``R_i(x) e1`` along each beam. The anchor sits at its
        declared position, or at the origin.
        """
        start = self.node_indices[0] if anchor is None else anchor
        declared = self.node(start).position
        positions: dict[int, FloatArray] = {
            start: np.zeros(3) if declared is None else np.asarray(declared, dtype=float)
        }
        graph = self.to_graph()
        for u, v, key in nx.edge_bfs(graph, start):
            beam = self.beam(key)
            xs = beam.grid(n_quad)
            chord = trapezoid(beam.rotation(xs) @ E1, xs, axis=0)
            sign = 1.0 if self.node_of(key, Endpoint.START) == u else -1.0
            if v not in positions:
                positions[v] = positions[u] + sign * chord
        return positions


def _position_violations(spec: NetworkSpec) -> list[str]:
    violations: list[str] = []
    for i in spec.beam_indices:
        start = spec.node(spec.node_of(i, Endpoint.START)).position
        end = spec.node(spec.node_of(i, Endpoint.END)).position
        if start is None or end is None:
            continue
        beam = spec.beam(i)
        xs = beam.grid(401)
        chord = trapezoid(beam.rotation(xs) @ E1, xs, axis=0)
        gap = float(np.linalg.norm(np.asarray(end) - np.asarray(start) - chord))
        if gap > POSITION_TOL * max(1.0, beam.length):
            violations.append(
                f"Beam {i}: node positions disagree with the undeformed shape by {gap:.3e}"
            )
    return violations


def validate(spec: NetworkSpec) -> ValidationReport:
    """Check the structural invariants of a network.

    Checks unique ids, that every beam end belongs to exactly one node,
    orientation signs, degrees per node kind, declared ending counts, data
    dimensions and declared node positions.

    Returns:
        Report listing every violation; never raises
    """
    violations: list[str] = []
    beam_ids = [b.index for b in spec.beams]
    node_ids = [n.index for n in spec.nodes]
    if len(set(beam_ids)) != len(beam_ids):
        violations.append("Duplicate beam indices")
    if len(set(node_ids)) != len(node_ids):
        violations.append("Duplicate node indices")

    owners: dict[tuple[int, Endpoint], list[int]] = {}
    for node in spec.nodes:
        for inc in node.incidences:
            if inc.beam not in set(beam_ids):
                violations.append(f"Node {node.index}: unknown beam {inc.beam}")
                continue
            owners.setdefault((inc.beam, inc.endpoint), []).append(node.index)
            if inc.tau != inc.endpoint.tau:
                violations.append(
                    f"Node {node.index}: beam {inc.beam} tau={inc.tau} inconsistent "
                    f"with endpoint '{inc.endpoint.value}'"
                )
        k = len(node.incidences)
        if node.kind.is_simple and k != 1:
            violations.append(f"Node {node.index}: simple {node.kind.value} node has degree {k}")
        if node.kind is NodeKind.MULTIPLE and k < 2:
            violations.append(f"Node {node.index}: multiple node has degree {k}")
        if node.ending_count is not None:
            ending = sum(1 for inc in node.incidences if inc.tau == 1)
            if ending != node.ending_count:
                violations.append(
                    f"Node {node.index}: declared ending count {node.ending_count} "
                    f"but {ending} beams end there"
                )
        if node.data is not None and node.data.dim != 6:
            violations.append(f"Node {node.index}: nodal data has dimension {node.data.dim}")

    for i in beam_ids:
        for end in Endpoint:
            holders = owners.get((i, end), [])
            if len(holders) != 1:
                violations.append(
                    f"Beam {i} {end.value}: attached to {len(holders)} nodes {sorted(holders)}"
                )

    if not violations:
        violations.extend(_position_violations(spec))

    if violations:
        logger.debug(f"Network validation found {len(violations)} violations")
    return ValidationReport(valid=not violations, violations=violations)


def endpoint_sample(db: DiagonalizedBeam, endpoint: Endpoint) -> int:
    """Index of the sample sitting at ``endpoint``."""
    return 0 if endpoint is Endpoint.START else db.n_samples - 1


def node_matrices(
    spec: NetworkSpec, dbs: Mapping[int, DiagonalizedBeam], n: int
) -> tuple[list[FloatArray], list[FloatArray]]:
    """Evaluate gamma and sigma for each incident beam end of node ``n``.

    ``gamma = Rbar C^{1/2} U^T`` and ``sigma = Rbar C^{-1/2} U^T D^{-1} U C^{-1/2} Rbar^T``
    at the node end, listed in :meth:`NetworkSpec.ordered_incidences` order.

    Raises:
        NotSPDError: If a sigma fails its Cholesky factorisation
    """
    gammas: list[FloatArray] = []
    sigmas: list[FloatArray] = []
    for inc in spec.ordered_incidences(n):
        db = dbs[inc.beam]
        k = endpoint_sample(db, inc.endpoint)
        r_bar = bar(db.R[k])
        ut = db.U[k].T
        gamma = r_bar @ db.C_sqrt[k] @ ut
        left = r_bar @ db.C_invsqrt[k] @ ut / db.D[k][None, :]
        sigma = left @ db.U[k] @ db.C_invsqrt[k] @ r_bar.T
        sigma = 0.5 * (sigma + sigma.T)
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as e:
            raise NotSPDError(f"Node {n}: sigma of beam {inc.beam} is not SPD") from e
        defect = float(np.linalg.norm(sigma @ gamma - left))
        if defect > SIGMA_GAMMA_TOL * max(1.0, float(np.linalg.norm(left))):
            logger.warning(f"Node {n}, beam {inc.beam}: sigma*gamma identity defect {defect:.3e}")
        gammas.append(gamma)
        sigmas.append(sigma)
    return gammas, sigmas


@dataclass(frozen=True)
class NodeCoupling:
    """Node map ``r_out = Bcal r_in + Qcal q`` in the fixed block ordering."""

    node: int
    kind: NodeKind
    order: tuple[Incidence, ...]
    gammas: tuple[FloatArray, ...]
    sigmas: tuple[FloatArray, ...]
    Bcal: FloatArray
    Qcal: FloatArray

    @property
    def size(self) -> int:
        """Length of the stacked out/in vectors."""
        return 6 * len(self.order)


def _checked_solve(lu: tuple[FloatArray, NDArray[np.int32]], a: FloatArray, rhs: FloatArray, what: str) -> FloatArray:
    sol = np.asarray(lu_solve(lu, rhs))
    residual = float(np.linalg.norm(a @ sol - rhs))
    if not residual <= NODE_SOLVE_TOL * max(1.0, float(np.linalg.norm(rhs))):
        raise SingularNodeMatrixError(f"{what}: solve residual {residual:.3e} exceeds {NODE_SOLVE_TOL}")
    return sol


def assemble_coupling(spec: NetworkSpec, dbs: Mapping[int, DiagonalizedBeam], n: int) -> NodeCoupling:
    """Assemble the node map of node ``n``.

    Simple nodes use closed forms: Neumann ``Bcal = I``, ``Qcal = 2 D U C^{1/2}``;
    Dirichlet ``Bcal = -I``, ``Qcal = 2 U C^{-1/2}``. Multiple nodes solve
    ``Abold G r_out = Bbold G r_in + 2 (q; 0)`` by LU with residual checks.

    Raises:
        NotSPDError: If a sigma is not SPD
        SingularNodeMatrixError: If a node solve fails its residual check
    """
    node = spec.node(n)
    order = tuple(spec.ordered_incidences(n))
    gammas, sigmas = node_matrices(spec, dbs, n)

    if node.kind.is_simple:
        inc = order[0]
        db = dbs[inc.beam]
        k = endpoint_sample(db, inc.endpoint)
        if node.kind is NodeKind.NEUMANN:
            bcal = np.eye(6)
            qcal = 2.0 * db.D[k][:, None] * (db.U[k] @ db.C_sqrt[k])
        else:
            bcal = -np.eye(6)
            qcal = 2.0 * db.U[k] @ db.C_invsqrt[k]
    else:
        kn = len(order)
        a_mat = np.zeros((6 * kn, 6 * kn))
        b_mat = np.zeros((6 * kn, 6 * kn))
        for j, sigma in enumerate(sigmas):
            a_mat[:6, 6 * j : 6 * j + 6] = sigma
            b_mat[:6, 6 * j : 6 * j + 6] = sigma
        for j in range(1, kn):
            rows = slice(6 * j, 6 * j + 6)
            a_mat[rows, :6] = -np.eye(6)
            a_mat[rows, rows] = np.eye(6)
            b_mat[rows, :6] = np.eye(6)
            b_mat[rows, rows] = -np.eye(6)
        g_mat = block_diag(*gammas)
        try:
            lu_a = lu_factor(a_mat)
            lu_g = lu_factor(g_mat)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SingularNodeMatrixError(f"Node {n}: node matrix factorisation failed") from e
        rhs_q = np.zeros((6 * kn, 6))
        rhs_q[:6] = 2.0 * np.eye(6)
        a_inv_b_g = _checked_solve(lu_a, a_mat, b_mat @ g_mat, f"Node {n}")
        bcal = _checked_solve(lu_g, g_mat, a_inv_b_g, f"Node {n}")
        qcal = _checked_solve(lu_g, g_mat, _checked_solve(lu_a, a_mat, rhs_q, f"Node {n}"), f"Node {n}")

    logger.debug(f"Assembled {node.kind.value} coupling for node {n} (k={len(order)})")
    return NodeCoupling(
        node=n,
        kind=node.kind,
        order=order,
        gammas=tuple(gammas),
        sigmas=tuple(sigmas),
        Bcal=bcal,
        Qcal=qcal,
    )


def split_out_in(order: Sequence[Incidence], states: Sequence[ArrayLike]) -> tuple[FloatArray, FloatArray]:
    """Stack node-end Riemann states into (outgoing, incoming) vectors.

    Outgoing means leaving the node into the beam: ``r-`` at a beam end and
    ``r+`` at a beam start.

    Args:
        order: Incidences in coupling order
        states: Riemann state (12,) of each incidence's beam end, same order
    """
    outs: list[FloatArray] = []
    ins: list[FloatArray] = []
    for inc, r in zip(order, states, strict=True):
        r = np.asarray(r, dtype=float)
        if inc.endpoint is Endpoint.END:
            outs.append(r[:6])
            ins.append(r[6:])
        else:
            outs.append(r[6:])
            ins.append(r[:6])
    return np.concatenate(outs), np.concatenate(ins)


def merge_out_in(order: Sequence[Incidence], r_out: ArrayLike, r_in: ArrayLike) -> list[FloatArray]:
    """Inverse of :func:`split_out_in`."""
    r_out = np.asarray(r_out, dtype=float)
    r_in = np.asarray(r_in, dtype=float)
    states: list[FloatArray] = []
    for j, inc in enumerate(order):
        out = r_out[6 * j : 6 * j + 6]
        inn = r_in[6 * j : 6 * j + 6]
        if inc.endpoint is Endpoint.END:
            states.append(np.concatenate([out, inn]))
        else:
            states.append(np.concatenate([inn, out]))
    return states


def apply_node(coupling: NodeCoupling, r_in: ArrayLike, q: ArrayLike) -> FloatArray:
    """Return ``r_out = Bcal r_in + Qcal q``."""
    return np.asarray(coupling.Bcal @ np.asarray(r_in, dtype=float) + coupling.Qcal @ np.asarray(q, dtype=float))


def diagonalize_network(spec: NetworkSpec, nx_cells: int) -> dict[int, DiagonalizedBeam]:
    """Diagonalise every beam on ``nx_cells + 1`` samples."""
    dbs = {i: diagonalize(spec.beam(i), nx_cells + 1) for i in spec.beam_indices}
    logger.info(f"Diagonalized {len(dbs)} beams with nx={nx_cells}")
    return dbs


def assemble_all_couplings(
    spec: NetworkSpec, dbs: Mapping[int, DiagonalizedBeam]
) -> dict[int, NodeCoupling]:
    """Assemble the coupling of every node."""
    return {n: assemble_coupling(spec, dbs, n) for n in spec.node_indices}


@dataclass(frozen=True)
class NodeResidual:
    """Physical nodal-condition residuals at one node.

    ``velocity`` is the continuity (multiple) or Dirichlet residual;
    ``force`` the Kirchhoff (multiple) or Neumann residual.
    """

    node: int
    kind: NodeKind
    velocity: float
    force: float

    @property
    def worst(self) -> float:
        """Largest of the two residuals."""
        return max(self.velocity, self.force)


def node_residual(
    spec: NetworkSpec,
    n: int,
    endpoint_state: Callable[[Incidence], FloatArray],
    q: ArrayLike,
) -> NodeResidual:
    """Evaluate the physical condition of node ``n``.

    Args:
        spec: Network
        n: Node index
        endpoint_state: Returns the physical state y (12,) (or a stack
            (..., 12) of them) at a given beam end
        q: Nodal data value(s), broadcastable against the states
    """
    node = spec.node(n)
    q = np.asarray(q, dtype=float)
    order = spec.ordered_incidences(n)
    if node.kind is NodeKind.NEUMANN:
        inc = order[0]
        y = endpoint_state(inc)
        return NodeResidual(n, node.kind, 0.0, float(np.max(np.abs(inc.tau * y[..., 6:] - q))))
    if node.kind is NodeKind.DIRICHLET:
        y = endpoint_state(order[0])
        return NodeResidual(n, node.kind, float(np.max(np.abs(y[..., :6] - q))), 0.0)

    velocities: list[FloatArray] = []
    force = -q
    for inc in order:
        beam = spec.beam(inc.beam)
        x = 0.0 if inc.endpoint is Endpoint.START else beam.length
        r_bar = bar(beam.rotation(x))
        y = endpoint_state(inc)
        velocities.append(np.einsum("ij,...j->...i", r_bar, y[..., :6]))
        force = force + inc.tau * np.einsum("ij,...j->...i", r_bar, y[..., 6:])
    continuity = max(float(np.max(np.abs(v - velocities[0]))) for v in velocities)
    return NodeResidual(n, node.kind, continuity, float(np.max(np.abs(force))))


def transmission_residuals(
    spec: NetworkSpec,
    endpoint_state: Callable[[Incidence], FloatArray],
    data: Mapping[int, ArrayLike] | None = None,
    nodes: Iterable[int] | None = None,
) -> list[NodeResidual]:
    """Evaluate velocity continuity, Kirchhoff, Neumann and Dirichlet conditions.

    Args:
        spec: Network
        endpoint_state: Physical state(s) at a beam end
        data: Nodal data per node (default zero)
        nodes: Nodes to check (default all)
    """
    data = data or {}
    checked = spec.node_indices if nodes is None else sorted(nodes)
    return [node_residual(spec, n, endpoint_state, data.get(n, np.zeros(6))) for n in checked]
