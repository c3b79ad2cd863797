"""Control-path scheduling on general beam networks.

Given charged nodes P, controlled nodes C and control-path edges S, the
planner decides in which order the beams can be solved:
- edges off the control paths are solved forward, as maximal connected
  groups of marked nodes (Principle 1);
- control-path edges are solved sidewise from a node once that node holds
  data for all but one of its incident beams (Principle 2).

Each node carries a counter J(n) of available data; charged nodes start at
``k_n - 1``. The plan records phases in the order they become solvable, and
``execute_plan`` runs them with the trace-assembly helpers of
``beamnet.control``.

Time Complexity: O(steps * (|N| + |I|)) for planning
Space Complexity: O(|N| + |I|)
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import networkx as nx
import numpy as np
from numpy.typing import NDArray

from beamnet.beam import DiagonalizedBeam
from beamnet.control import (
    ControlProblem,
    ControlResult,
    bridge_charged_node,
    check_profile_range,
    check_profiles,
    check_times,
    closed_loop,
    complete_node_trace,
    extract_controls,
    forward_subnetwork,
    max_node_residual,
    preliminary_solve,
    sidewise_edge,
    tracking_error,
    transmission_times,
)
from beamnet.exceptions import InvalidControlProblemError, PlanStalledError, TraceUnavailableError
from beamnet.models import ControlReport, SufficiencyReport
from beamnet.network import Endpoint, Incidence, NetworkSpec
from beamnet.solver import DEFAULT_BLOWUP_BOUND, BeamField, Grid, Trajectory

logger = logging.getLogger(__name__)

_SINK = ("sink",)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class PlanInput:
    """Charged nodes, controlled nodes and control-path edges of a network.

    Raises:
        InvalidControlProblemError: If the sets overlap or name unknown nodes or beams
    """

    network: NetworkSpec
    charged: tuple[int, ...]
    controlled: tuple[int, ...]
    path_edges: tuple[int, ...]

    def __post_init__(self) -> None:
        """Check the node and edge sets against the network."""
        nodes = set(self.network.node_indices)
        unknown = sorted((set(self.charged) | set(self.controlled)) - nodes)
        if unknown:
            raise InvalidControlProblemError(f"Unknown nodes {unknown}")
        unknown_edges = sorted(set(self.path_edges) - set(self.network.beam_indices))
        if unknown_edges:
            raise InvalidControlProblemError(f"Unknown control-path edges {unknown_edges}")
        overlap = sorted(set(self.charged) & set(self.controlled))
        if overlap:
            raise InvalidControlProblemError(f"Nodes {overlap} are both charged and controlled")

    @classmethod
    def from_problem(cls, problem: ControlProblem) -> "PlanInput":
        """Planner view of a control problem."""
        return cls(problem.network, problem.charged, problem.controlled, problem.path_edges)


@dataclass(frozen=True)
class ForwardSolve:
    """Forward solve on a connected group of marked nodes and unsolved edges."""

    nodes: tuple[int, ...]
    edges: tuple[int, ...]

    def describe(self) -> str:
        """One-line description."""
        return f"forward(nodes {list(self.nodes)}, edges {list(self.edges)})"


@dataclass(frozen=True)
class SidewiseSolve:
    """Sidewise solve of one control-path edge from an anchor node."""

    edge: int
    anchor: int

    def describe(self) -> str:
        """One-line description."""
        return f"sidewise(edge {self.edge} from node {self.anchor})"


@dataclass(frozen=True)
class PlanPhase:
    """Solves of one principle within one step; they touch disjoint edges."""

    step: int
    solves: tuple[ForwardSolve, ...] | tuple[SidewiseSolve, ...]

    @property
    def is_sidewise(self) -> bool:
        """Whether the phase holds sidewise solves."""
        return isinstance(self.solves[0], SidewiseSolve)

    @property
    def edges(self) -> tuple[int, ...]:
        """Edges solved by the phase."""
        out: list[int] = []
        for solve in self.solves:
            out.extend(solve.edges if isinstance(solve, ForwardSolve) else (solve.edge,))
        return tuple(out)


@dataclass(frozen=True)
class Plan:
    """Ordered phases produced by :func:`build_plan`."""

    input: PlanInput
    phases: tuple[PlanPhase, ...]

    @property
    def steps(self) -> int:
        """Value of the step counter when scheduling finished."""
        return max((p.step for p in self.phases), default=0)

    def listing(self) -> list[str]:
        """Human-readable listing, one phase per line."""
        return [
            f"phase {k} (step {phase.step}): " + ", ".join(s.describe() for s in phase.solves)
            for k, phase in enumerate(self.phases, start=1)
        ]


def _tips(network: NetworkSpec, beam: int) -> tuple[int, int]:
    return network.node_of(beam, Endpoint.START), network.node_of(beam, Endpoint.END)


def _path_graph(network: NetworkSpec, path_edges: tuple[int, ...]) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(network.node_indices)
    for i in path_edges:
        graph.add_edge(*_tips(network, i))
    return graph


def check_sufficient_conditions(plan_input: PlanInput) -> SufficiencyReport:
    """Evaluate the sufficient conditions for nodal profile controllability.

    1. ``#C`` equals the sum of the degrees of the charged nodes.
    2. Every charged node n reaches k_n distinct controlled nodes along
       control paths sharing only n.
    3. Control paths of different charged nodes share no node.

    Node-disjoint paths are found with a max-flow search towards a super sink
    joined to every controlled node.
    """
    network = plan_input.network
    violations: list[str] = []
    expected = sum(network.degree(n) for n in plan_input.charged)
    count_matches = len(plan_input.controlled) == expected
    if not count_matches:
        violations.append(
            f"{len(plan_input.controlled)} controlled nodes, but charged degrees sum to {expected}"
        )

    graph = _path_graph(network, plan_input.path_edges)
    graph.add_node(_SINK)
    for c in plan_input.controlled:
        graph.add_edge(c, _SINK)

    charged_ok = True
    covered: dict[int, set[int]] = {}
    for n in sorted(plan_input.charged):
        try:
            paths = list(nx.node_disjoint_paths(graph, n, _SINK))
        except nx.NetworkXNoPath:
            paths = []
        covered[n] = {v for path in paths for v in path[:-1]}
        logger.debug(f"Charged node {n}: control paths {[p[:-1] for p in paths]}")
        if len(paths) < network.degree(n):
            charged_ok = False
            violations.append(
                f"charged node {n} has {len(paths)} disjoint control paths, needs {network.degree(n)}"
            )

    mutually_ok = True
    charged = sorted(covered)
    for a_pos, a in enumerate(charged):
        for b in charged[a_pos + 1 :]:
            shared = covered[a] & covered[b]
            if shared:
                mutually_ok = False
                violations.append(f"control paths of nodes {a} and {b} share nodes {sorted(shared)}")

    return SufficiencyReport(
        count_matches=count_matches,
        charged_paths_disjoint=charged_ok,
        paths_mutually_disjoint=mutually_ok,
        violations=violations,
    )


def _forward_components(
    network: NetworkSpec, marked: set[int], solved: set[int], path_edges: set[int]
) -> list[ForwardSolve]:
    graph = nx.MultiGraph()
    for i in network.beam_indices:
        if i in solved or i in path_edges:
            continue
        a, b = _tips(network, i)
        if a in marked and b in marked:
            graph.add_edge(a, b, key=i)
    found: list[ForwardSolve] = []
    for component in nx.connected_components(graph):
        nodes = tuple(sorted(component))
        edges = tuple(sorted(k for _, _, k in graph.subgraph(component).edges(keys=True)))
        found.append(ForwardSolve(nodes, edges))
    return sorted(found, key=lambda f: (f.nodes, f.edges))


def build_plan(plan_input: PlanInput) -> Plan:
    """Schedule forward and sidewise solves until every edge is solved.

    Raises:
        PlanStalledError: If a round solves no edge
    """
    network = plan_input.network
    report = check_sufficient_conditions(plan_input)
    if not report.passed:
        logger.warning(f"Sufficient conditions do not hold: {'; '.join(report.violations)}")

    path_edges = set(plan_input.path_edges)
    all_edges = set(network.beam_indices)
    J = {n: 0 for n in network.node_indices}
    for n in plan_input.charged:
        J[n] = network.degree(n) - 1
    on_paths = {n for i in path_edges for n in _tips(network, i)}
    marked = set(plan_input.charged) | (set(network.node_indices) - on_paths)
    solved: set[int] = set()
    step = 1
    phases: list[PlanPhase] = []

    while solved != all_edges:
        progress = False
        forward = _forward_components(network, marked, solved, path_edges)
        if forward:
            for solve in forward:
                for n in solve.nodes:
                    J[n] += 1
                marked |= set(solve.nodes)
                solved |= set(solve.edges)
            phases.append(PlanPhase(step, tuple(forward)))
            step += 1
            progress = True

        sidewise: list[SidewiseSolve] = []
        for n in sorted(marked):
            if J[n] != network.degree(n) - 1:
                continue
            for i in network.incident(n):
                if i not in path_edges or i in solved:
                    continue
                sidewise.append(SidewiseSolve(edge=i, anchor=n))
                tips = set(_tips(network, i))
                marked |= tips
                solved.add(i)
                for m in tips:
                    J[m] += 1
        if sidewise:
            phases.append(PlanPhase(step, tuple(sidewise)))
            step += 1
            progress = True

        if not progress:
            raise PlanStalledError(
                f"Scheduling stalled with unsolved edges {sorted(all_edges - solved)} "
                f"(counters {dict(sorted(J.items()))})"
            )

    plan = Plan(plan_input, tuple(phases))
    logger.info(f"Plan built: {len(plan.phases)} phases, {plan.steps} steps")
    return plan


def plan_time(plan: Plan, times: Mapping[int, float]) -> float:
    """Sum over sidewise phases of the largest transmission time among their edges."""
    total = 0.0
    for phase in plan.phases:
        if phase.is_sidewise:
            total += max(times[i] for i in phase.edges)
    return total


def _incidence_at(network: NetworkSpec, beam: int, node: int) -> Incidence:
    for inc in network.ordered_incidences(node):
        if inc.beam == beam:
            return inc
    raise TraceUnavailableError(f"Beam {beam} is not incident to node {node}")


def execute_plan(
    plan: Plan,
    problem: ControlProblem,
    dbs: Mapping[int, DiagonalizedBeam],
    grid: Grid,
    *,
    resimulate: bool = False,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> ControlResult:
    """Run the phases of ``plan`` and read the controls at the controlled nodes.

    Charged nodes receive bridged traces; other anchors complete their trace
    from the nodal conditions.

    Raises:
        InvalidControlProblemError: On time or profile-range violations
        ProfileIncompatibleError: If profiles violate a charged node's conditions
        TraceUnavailableError: If a phase needs a trace no earlier phase produced
        BlowUpError: If a solve blows up
    """
    network = problem.network
    times = transmission_times(dbs)
    t_bar = plan_time(plan, times)
    check_times(t_bar, problem.t_star, problem.horizon, grid)
    check_profile_range(problem.profiles, problem.t_star, problem.horizon)
    t = grid.t
    for n in problem.charged:
        check_profiles(network, n, problem.profiles, t[t >= problem.t_star - 1e-12])

    prelim_grid = grid.prefix(t_bar)
    preliminary = preliminary_solve(
        network, dbs, problem.y0, prelim_grid, problem.controlled, blowup_bound
    )
    bridged: dict[int, dict[int, FloatArray]] = {}
    fields: dict[int, BeamField] = {}
    steps = [f"forward solve of the network on [0, {prelim_grid.horizon:.6g}] with placeholder controls"]
    for phase in plan.phases:
        for solve in phase.solves:
            if isinstance(solve, ForwardSolve):
                fields.update(
                    forward_subnetwork(network, dbs, problem.y0, grid, solve.edges, fields, blowup_bound)
                )
            else:
                inc = _incidence_at(network, solve.edge, solve.anchor)
                if solve.anchor in problem.charged:
                    if solve.anchor not in bridged:
                        bridged[solve.anchor] = bridge_charged_node(
                            network, solve.anchor, preliminary, problem.profiles, t_bar, problem.t_star, t
                        )
                    trace = bridged[solve.anchor][solve.edge]
                else:
                    trace = complete_node_trace(network, solve.anchor, inc, fields, t)
                fields[solve.edge] = sidewise_edge(
                    dbs[solve.edge], inc.endpoint, t, trace, problem.y0[solve.edge], blowup_bound
                )
            steps.append(solve.describe())

    controls = extract_controls(network, fields, problem.controlled)
    trajectory = Trajectory(t=t, fields={i: fields[i] for i in sorted(fields)})
    multiple = [n for n in network.node_indices if not network.node(n).kind.is_simple and n not in problem.controlled]
    report = ControlReport(
        controllability_time=t_bar,
        t_star=problem.t_star,
        horizon=problem.horizon,
        transmission_times=times,
        steps=steps,
        node_residual=max_node_residual(trajectory, network, multiple),
    )
    loop: Trajectory | None = None
    if resimulate:
        loop = closed_loop(problem, dbs, controls, grid, blowup_bound)
        report.tracking_error = tracking_error(loop, network, problem.profiles, problem.charged, problem.t_star)
    logger.info(f"Plan executed: {len(plan.phases)} phases, controls at nodes {list(problem.controlled)}")
    return ControlResult(
        controls=controls, trajectory=trajectory, preliminary=preliminary, report=report, closed_loop=loop
    )
