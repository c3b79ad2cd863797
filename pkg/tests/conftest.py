"""Pytest fixtures for beamnet tests."""

import tempfile
from collections.abc import Callable, Iterator, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from beamnet.beam import BeamSpec, DiagonalizedBeam, diagonalize
from beamnet.network import (
    Endpoint,
    Incidence,
    NetworkSpec,
    NodeKind,
    NodeRecord,
    diagonalize_network,
)
from beamnet.utils import write_series

A_ANGLES = {1: -2.0 * np.pi / 3.0, 2: -np.pi / 3.0, 3: 0.0, 4: -2.0 * np.pi / 3.0, 5: -np.pi / 3.0}
A_POSITIONS = {
    1: (0.0, 0.0, 0.0),
    2: (-0.5, -np.sqrt(3.0) / 2.0, 0.0),
    3: (0.5, -np.sqrt(3.0) / 2.0, 0.0),
    4: (-1.0, -np.sqrt(3.0), 0.0),
    5: (1.0, -np.sqrt(3.0), 0.0),
}
A_EDGES = [(1, 1, 2), (2, 1, 3), (3, 2, 3), (4, 2, 4), (5, 3, 5)]


def build_network(
    edges: Sequence[tuple[int, int, int]],
    kinds: dict[int, NodeKind] | None = None,
    angles: dict[int, float] | None = None,
    positions: dict[int, tuple[float, float, float]] | None = None,
) -> NetworkSpec:
    """Network of unit beams from ``(beam, start_node, end_node)`` triples.

    Degree-one nodes default to Neumann, the others to multiple nodes.
    """
    kinds = kinds or {}
    angles = angles or {}
    beams = tuple(
        BeamSpec.uniform(i, rotvec=np.array([0.0, 0.0, angles.get(i, 0.0)])) for i, _, _ in edges
    )
    attached: dict[int, list[Incidence]] = {}
    for i, a, b in edges:
        attached.setdefault(a, []).append(Incidence.of(i, Endpoint.START))
        attached.setdefault(b, []).append(Incidence.of(i, Endpoint.END))
    nodes = []
    for n in sorted(attached):
        incs = tuple(attached[n])
        default = NodeKind.NEUMANN if len(incs) == 1 else NodeKind.MULTIPLE
        position = None if positions is None else np.asarray(positions[n], dtype=float)
        nodes.append(NodeRecord(n, kinds.get(n, default), incs, position=position))
    return NetworkSpec(beams=beams, nodes=tuple(nodes))


@pytest.fixture
def temp_dir() -> Iterator[Path]:
    """Create temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def unit_beam() -> BeamSpec:
    """Straight unit beam with M = C = I."""
    return BeamSpec.uniform(1)


@pytest.fixture
def unit_db(unit_beam: BeamSpec) -> DiagonalizedBeam:
    """Unit beam diagonalised on 21 samples."""
    return diagonalize(unit_beam, 21)


@pytest.fixture
def a_network() -> NetworkSpec:
    """Unit A-shaped network with zero nodal data."""
    return build_network(A_EDGES, angles=A_ANGLES, positions=A_POSITIONS)


@pytest.fixture
def a_dbs(a_network: NetworkSpec) -> dict[int, DiagonalizedBeam]:
    """A-network beams diagonalised with 20 cells."""
    return diagonalize_network(a_network, 20)


@pytest.fixture
def make_network() -> Callable[..., NetworkSpec]:
    """Factory fixture building networks from edge triples."""
    return build_network


@pytest.fixture
def sample_config() -> dict[str, Any]:
    """Minimal two-beam run configuration."""
    return {
        "name": "two_beams",
        "beams": [
            {"id": 1, "length": 1.0},
            {"id": 2, "length": 1.0, "mass": {"diagonal": [1, 1, 1, 2, 2, 2]}},
        ],
        "nodes": [
            {"id": 1, "kind": "neumann", "incidences": [{"beam": 1, "end": "start"}]},
            {
                "id": 2,
                "kind": "multiple",
                "incidences": [{"beam": 1, "end": "end"}, {"beam": 2, "end": "start"}],
            },
            {"id": 3, "kind": "neumann", "incidences": [{"beam": 2, "end": "end"}]},
        ],
        "simulation": {"nx": 10, "horizon": 0.5},
        "io": {"out_dir": "output"},
    }


@pytest.fixture
def create_yaml_file(temp_dir: Path) -> Callable[[str, Any], Path]:
    """Factory fixture to create YAML files."""

    def _create_yaml(filename: str, content: Any) -> Path:
        path = temp_dir / filename
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(content, f)
        return path

    return _create_yaml


@pytest.fixture
def create_series_file(temp_dir: Path) -> Callable[[str, Any, Any], Path]:
    """Factory fixture to create ``t,c1..cN`` CSV files."""

    def _create_series(filename: str, t: Any, values: Any) -> Path:
        path = temp_dir / filename
        write_series(path, t, values)
        return path

    return _create_series
