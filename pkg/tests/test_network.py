"""Tests for network topology, validation and node coupling."""

from collections.abc import Callable

import numpy as np
import pytest

from beamnet.beam import BeamSpec, DiagonalizedBeam
from beamnet.network import (
    Endpoint,
    Incidence,
    NetworkSpec,
    NodeKind,
    NodeRecord,
    TimeSeries,
    apply_node,
    assemble_all_couplings,
    assemble_coupling,
    endpoint_sample,
    merge_out_in,
    node_residual,
    split_out_in,
    transmission_residuals,
    validate,
)


class TestTimeSeries:
    """Tests for TimeSeries."""

    def test_constant(self) -> None:
        """Test a constant series and its zero derivative."""
        series = TimeSeries.constant([1.0, 2.0], 0.0, 2.0)
        assert series.dim == 2
        assert np.allclose(series(1.0), [1.0, 2.0])
        assert np.allclose(series.derivative(0.5), 0.0)

    def test_clamps_outside_range(self) -> None:
        """Test clamping to the end values."""
        series = TimeSeries([0.0, 1.0, 2.0], [[0.0], [1.0], [2.0]])
        assert series(5.0)[0] == pytest.approx(2.0)
        assert series(-1.0)[0] == pytest.approx(0.0)

    def test_interpolates_cubic(self) -> None:
        """Test exact reproduction of a cubic polynomial."""
        t = np.linspace(0.0, 1.0, 9)
        series = TimeSeries(t, t**3)
        assert series(0.3)[0] == pytest.approx(0.027)
        assert series.derivative(0.3)[0] == pytest.approx(0.27)

    def test_non_increasing_times_raise(self) -> None:
        """Test that time samples must increase."""
        with pytest.raises(ValueError, match="strictly increasing"):
            TimeSeries([0.0, 0.0], [[1.0], [1.0]])

    def test_mismatched_shapes_raise(self) -> None:
        """Test that values must match the times."""
        with pytest.raises(ValueError, match=">= 2 samples"):
            TimeSeries([0.0, 1.0, 2.0], [[1.0], [2.0]])


class TestNetworkSpec:
    """Tests for NetworkSpec queries."""

    def test_a_network_queries(self, a_network: NetworkSpec) -> None:
        """Test degrees, incidence and node lookup."""
        assert a_network.beam_indices == [1, 2, 3, 4, 5]
        assert a_network.degree(2) == 3
        assert a_network.incident(3) == [2, 3, 5]
        assert a_network.i_n(3) == 2
        assert a_network.s_n(3) == 2
        assert a_network.node_of(4, Endpoint.END) == 4

    def test_ordered_incidences_end_first(self, a_network: NetworkSpec) -> None:
        """Test that ending beams precede starting beams."""
        order = [(inc.beam, inc.endpoint) for inc in a_network.ordered_incidences(2)]
        assert order == [(1, Endpoint.END), (3, Endpoint.START), (4, Endpoint.START)]

    def test_node_of_unknown_end_raises(self, a_network: NetworkSpec) -> None:
        """Test lookup of a detached beam end."""
        with pytest.raises(KeyError, match="not attached"):
            a_network.node_of(9, Endpoint.START)

    def test_nodal_data_defaults_to_zero(self, a_network: NetworkSpec) -> None:
        """Test zero data and replacement of data."""
        assert np.allclose(a_network.nodal_data(4, [0.0, 1.0]), 0.0)
        loaded = a_network.with_node_data({4: TimeSeries.constant(np.ones(6))})
        assert np.allclose(loaded.nodal_data(4, 0.5), 1.0)
        assert a_network.node(4).data is None

    def test_node_positions(self, a_network: NetworkSpec) -> None:
        """Test positions integrated along the undeformed beams."""
        positions = a_network.node_positions()
        assert np.allclose(positions[4], [-1.0, -np.sqrt(3.0), 0.0])
        assert np.allclose(positions[5], [1.0, -np.sqrt(3.0), 0.0])

    def test_graph_view(self, a_network: NetworkSpec) -> None:
        """Test the multigraph keyed by beam."""
        graph = a_network.to_graph()
        assert graph.number_of_nodes() == 5
        assert graph.number_of_edges() == 5


class TestValidate:
    """Tests for structural validation."""

    def test_a_network_is_valid(self, a_network: NetworkSpec) -> None:
        """Test the unit A-network."""
        report = validate(a_network)
        assert report.valid
        assert report.violations == []

    def test_detached_beam_end(self) -> None:
        """Test a beam end attached to no node."""
        spec = NetworkSpec(
            beams=(BeamSpec.uniform(1),),
            nodes=(NodeRecord(1, NodeKind.NEUMANN, (Incidence.of(1, "start"),)),),
        )
        report = validate(spec)
        assert not report.valid
        assert any("Beam 1 end: attached to 0 nodes" in v for v in report.violations)

    def test_wrong_tau(self) -> None:
        """Test an orientation sign contradicting the endpoint."""
        spec = NetworkSpec(
            beams=(BeamSpec.uniform(1),),
            nodes=(
                NodeRecord(1, NodeKind.NEUMANN, (Incidence(1, Endpoint.START, 1),)),
                NodeRecord(2, NodeKind.NEUMANN, (Incidence.of(1, "end"),)),
            ),
        )
        assert any("inconsistent" in v for v in validate(spec).violations)

    def test_simple_node_degree(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test that simple nodes must have degree one."""
        spec = make_network([(1, 1, 2), (2, 2, 3)], kinds={2: NodeKind.DIRICHLET})
        assert any("simple dirichlet node has degree 2" in v for v in validate(spec).violations)

    def test_declared_ending_count(self) -> None:
        """Test mismatch of the declared ending count."""
        spec = NetworkSpec(
            beams=(BeamSpec.uniform(1),),
            nodes=(
                NodeRecord(1, NodeKind.NEUMANN, (Incidence.of(1, "start"),), ending_count=1),
                NodeRecord(2, NodeKind.NEUMANN, (Incidence.of(1, "end"),)),
            ),
        )
        assert any("declared ending count" in v for v in validate(spec).violations)

    def test_inconsistent_positions(self, make_network: Callable[..., NetworkSpec]) -> None:
        """Test node positions disagreeing with the beam shape."""
        spec = make_network(
            [(1, 1, 2)], positions={1: (0.0, 0.0, 0.0), 2: (0.0, 1.0, 0.0)}
        )
        assert any("node positions disagree" in v for v in validate(spec).violations)


def _random_in(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.standard_normal(size)


class TestCoupling:
    """Tests for node coupling maps."""

    def test_simple_nodes_closed_form(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]
    ) -> None:
        """Test Bcal = I for Neumann nodes and the Dirichlet sign."""
        coupling = assemble_coupling(a_network, a_dbs, 4)
        assert np.array_equal(coupling.Bcal, np.eye(6))
        nodes = tuple(
            NodeRecord(n.index, NodeKind.DIRICHLET, n.incidences) if n.index == 5 else n
            for n in a_network.nodes
        )
        spec = NetworkSpec(beams=a_network.beams, nodes=nodes)
        assert np.array_equal(assemble_coupling(spec, a_dbs, 5).Bcal, -np.eye(6))

    def test_split_merge_round_trip(self, a_network: NetworkSpec) -> None:
        """Test that merge_out_in inverts split_out_in."""
        order = a_network.ordered_incidences(2)
        states = [np.arange(12.0) + 12 * j for j in range(len(order))]
        r_out, r_in = split_out_in(order, states)
        merged = merge_out_in(order, r_out, r_in)
        for a, b in zip(states, merged, strict=True):
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_coupling_satisfies_physical_conditions(
        self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam], n: int
    ) -> None:
        """Test continuity, Kirchhoff and Neumann conditions for random inputs."""
        coupling = assemble_coupling(a_network, a_dbs, n)
        rng = np.random.default_rng(n)
        for _ in range(20):
            r_in = _random_in(rng, coupling.size)
            q = rng.standard_normal(6)
            r_out = apply_node(coupling, r_in, q)
            states = merge_out_in(coupling.order, r_out, r_in)
            physical = {
                inc.beam: a_dbs[inc.beam].Linv[endpoint_sample(a_dbs[inc.beam], inc.endpoint)] @ r
                for inc, r in zip(coupling.order, states, strict=True)
            }
            res = node_residual(a_network, n, lambda inc, p=physical: p[inc.beam], q)
            assert res.worst < 1e-9

    def test_all_couplings(self, a_network: NetworkSpec, a_dbs: dict[int, DiagonalizedBeam]) -> None:
        """Test that every node gets a coupling of the right size."""
        couplings = assemble_all_couplings(a_network, a_dbs)
        assert sorted(couplings) == [1, 2, 3, 4, 5]
        assert couplings[2].size == 18
        assert couplings[2].Qcal.shape == (18, 6)


class TestResiduals:
    """Tests for physical nodal residuals."""

    def test_rigid_translation_satisfies_conditions(self, a_network: NetworkSpec) -> None:
        """Test that a rigid translation satisfies every node condition."""
        V = np.array([0.01, 0.0, 0.0])

        def state(inc: Incidence) -> np.ndarray:
            beam = a_network.beam(inc.beam)
            x = 0.0 if inc.endpoint is Endpoint.START else beam.length
            y = np.zeros(12)
            y[:3] = beam.rotation(x).T @ V
            return y

        residuals = transmission_residuals(a_network, state)
        assert len(residuals) == 5
        assert max(r.worst for r in residuals) < 1e-14

    def test_kirchhoff_violation(self, a_network: NetworkSpec) -> None:
        """Test that an unbalanced force shows up in the residual."""

        def state(inc: Incidence) -> np.ndarray:
            y = np.zeros(12)
            if inc.beam == 1:
                y[11] = 1.0
            return y

        res = node_residual(a_network, 1, state, np.zeros(6))
        assert res.kind is NodeKind.MULTIPLE
        assert res.force == pytest.approx(1.0)
        assert res.velocity == 0.0

    def test_neumann_residual_uses_tau(self, a_network: NetworkSpec) -> None:
        """Test tau z = q at a Neumann node at a beam end."""
        q = np.arange(6.0)

        def state(inc: Incidence) -> np.ndarray:
            y = np.zeros(12)
            y[6:] = q
            return y

        assert node_residual(a_network, 4, state, q).worst == 0.0
        assert node_residual(a_network, 4, state, -q).worst == pytest.approx(10.0)
