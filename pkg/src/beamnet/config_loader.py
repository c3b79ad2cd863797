"""Run configuration loading for beamnet.

This module handles:
- Loading run configurations from YAML files, by path or by bundled name
- Validating them with Pydantic and ``network.validate``
- Building the network, initial states, nodal data and profiles they describe
- Caching loaded configs

Security:
- Uses yaml.safe_load() to prevent arbitrary code execution
- Referenced CSV files are resolved relative to the config file

Time Complexity: O(n) where n is YAML file size
Space Complexity: O(n) for cached configs
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import ValidationError
from scipy.interpolate import CubicSpline

from beamnet.beam import BeamSpec, DiagonalizedBeam, MatrixField, RotationField
from beamnet.control import (
    ControlProblem,
    equilibrium_profiles,
    rigid_translation_state,
    smooth_random_profiles,
)
from beamnet.exceptions import (
    ConfigParseError,
    ConfigValidationError,
    NotRotationError,
    NotSPDError,
)
from beamnet.models import NodeDataConfig, RunConfig
from beamnet.network import (
    Endpoint,
    Incidence,
    NetworkSpec,
    NodeKind,
    NodeRecord,
    TimeSeries,
    validate,
)
from beamnet.utils import get_project_root, read_series, read_trajectory

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class LoadedRun:
    """A validated configuration with its network.

    Attributes:
        config: Validated run configuration
        network: Network built from the configuration
        base_dir: Directory used to resolve referenced files
    """

    config: RunConfig
    network: NetworkSpec
    base_dir: Path

    def resolve(self, file: str) -> Path:
        """Resolve a referenced file relative to the config file."""
        path = Path(file)
        return path if path.is_absolute() else self.base_dir / path

    def initial_state(self, dbs: Mapping[int, DiagonalizedBeam]) -> dict[int, FloatArray]:
        """Initial states on the solver samples.

        Raises:
            ConfigParseError: If a CSV file is missing, malformed or lacks a beam
            ConfigValidationError: If the samples of a beam cannot be interpolated
        """
        initial = self.config.simulation.initial
        if initial.kind == "zero":
            return {i: np.zeros((db.n_samples, 12)) for i, db in dbs.items()}
        if initial.kind == "rigid_translation":
            return rigid_translation_state(self.network, dbs, initial.velocity)
        assert initial.file is not None
        fields = read_trajectory(self.resolve(initial.file))
        states: dict[int, FloatArray] = {}
        for i, db in dbs.items():
            if i not in fields:
                raise ConfigParseError(f"Initial data file has no rows for beam {i}")
            x, _, y = fields[i]
            first = y[0]
            if len(x) == db.n_samples and np.allclose(x, db.x):
                states[i] = first
            else:
                try:
                    states[i] = CubicSpline(x, first, axis=0)(db.x)
                except ValueError as e:
                    raise ConfigValidationError(f"Initial data for beam {i}: {e}") from e
        return states

    def profiles(self, dbs: Mapping[int, DiagonalizedBeam]) -> dict[int, TimeSeries]:
        """Profiles at the charged nodes described by the ``control`` block.

        Raises:
            ConfigParseError: If there is no control block or a profile file is missing
            ConfigValidationError: If profile times are not strictly increasing
        """
        control = self.config.control
        if control is None:
            raise ConfigParseError("Configuration has no 'control' block")
        spec = control.profiles
        if spec.kind == "equilibrium":
            velocity = self.config.simulation.initial.velocity
            if self.config.simulation.initial.kind == "zero":
                velocity = [0.0, 0.0, 0.0]
            return equilibrium_profiles(
                self.network, velocity, control.charged, control.t_star, control.horizon
            )
        if spec.kind == "random":
            profiles: dict[int, TimeSeries] = {}
            for n in control.charged:
                profiles.update(
                    smooth_random_profiles(
                        self.network,
                        n,
                        spec.amplitude,
                        spec.seed + n,
                        control.t_star,
                        control.horizon,
                        spec.modes,
                    )
                )
            return profiles
        out: dict[int, TimeSeries] = {}
        for beam, file in sorted(spec.files.items()):
            path = self.resolve(file)
            t, values = read_series(path, 12)
            try:
                out[beam] = TimeSeries(t, values)
            except ValueError as e:
                raise ConfigValidationError(f"Profile file '{path.name}': {e}") from e
        return out

    def control_problem(self, dbs: Mapping[int, DiagonalizedBeam]) -> ControlProblem:
        """Control problem of the ``control`` block."""
        control = self.config.control
        if control is None:
            raise ConfigParseError("Configuration has no 'control' block")
        return ControlProblem(
            network=self.network,
            y0=self.initial_state(dbs),
            profiles=self.profiles(dbs),
            t_star=control.t_star,
            horizon=control.horizon,
            charged=tuple(control.charged),
            controlled=tuple(control.controlled),
            path_edges=tuple(control.path_edges),
        )


class NetworkLoader:
    """Loads run configurations and builds networks.

    This class provides:
    - Discovery of bundled configurations in networks/
    - YAML loading with validation and line diagnostics
    - Config caching

    Time Complexity: O(1) for cached lookups, O(n) for first load
    Space Complexity: O(c * n) where c is config count, n is avg config size
    """

    def __init__(self, networks_dir: Path | None = None) -> None:
        """Initialize the loader.

        Args:
            networks_dir: Directory of bundled configs; defaults to project_root/networks/
        """
        self.networks_dir = networks_dir if networks_dir is not None else get_project_root() / "networks"
        self._cache: dict[Path, LoadedRun] = {}
        logger.info(f"NetworkLoader initialized with networks_dir={self.networks_dir}")

    def resolve(self, name_or_path: str | Path) -> Path:
        """Resolve a config path or bundled name.

        Raises:
            ConfigParseError: If no such file exists
        """
        path = Path(name_or_path)
        if path.is_file():
            return path.resolve()
        bundled = self.networks_dir / f"{path.stem}.yaml"
        if path.suffix in ("", ".yaml", ".yml") and bundled.is_file():
            return bundled.resolve()
        available = ", ".join(self.list_available_networks()) or "none"
        raise ConfigParseError(
            f"Configuration '{name_or_path}' not found. Bundled networks: {available}"
        )

    def load(self, name_or_path: str | Path) -> LoadedRun:
        """Load, validate and build a run configuration.

        Raises:
            ConfigParseError: On missing files, YAML syntax errors or bad data files
            ConfigValidationError: On schema or network validation failures
        """
        path = self.resolve(name_or_path)
        if path in self._cache:
            logger.debug(f"Loading configuration '{path}' from cache")
            return self._cache[path]

        try:
            with path.open("r", encoding="utf-8") as f:
                raw_data = yaml.safe_load(f)
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
            raise ConfigParseError(f"YAML syntax error in '{path}' at {where}: {e.problem}") from e
        except yaml.YAMLError as e:
            raise ConfigParseError(f"YAML syntax error in '{path}': {e}") from e

        if raw_data is None:
            raise ConfigParseError(f"Configuration file '{path}' is empty")
        structured = self._structure_yaml_data(raw_data, path)
        try:
            config = RunConfig(**structured)
        except ValidationError as e:
            raise ConfigValidationError(
                f"Validation failed for '{path.name}':\n{self._format_validation_errors(e)}"
            ) from e

        try:
            network = self._build_network(config, path.parent)
        except (ValueError, NotRotationError, NotSPDError) as e:
            raise ConfigValidationError(f"Network '{config.name}' could not be built: {e}") from e
        run = LoadedRun(config=config, network=network, base_dir=path.parent)
        report = validate(run.network)
        if not report.valid:
            details = "\n".join(f"  • {v}" for v in report.violations)
            raise ConfigValidationError(f"Network '{config.name}' is invalid:\n{details}")

        self._cache[path] = run
        logger.info(
            f"Loaded configuration '{config.name}' with {len(config.beams)} beams "
            f"and {len(config.nodes)} nodes"
        )
        return run

    def list_available_networks(self) -> list[str]:
        """Sorted names of bundled configurations."""
        if not self.networks_dir.exists():
            logger.warning(f"Networks directory does not exist: {self.networks_dir}")
            return []
        return sorted(p.stem for p in self.networks_dir.glob("*.yaml") if not p.name.startswith("."))

    def validate_config(self, name_or_path: str | Path) -> tuple[bool, str]:
        """Validate a configuration without using the cache.

        Returns:
            Tuple of (is_valid, message)
        """
        try:
            self._cache.pop(self.resolve(name_or_path), None)
            run = self.load(name_or_path)
        except (ConfigParseError, ConfigValidationError) as e:
            return False, str(e)
        kinds = [run.network.node(n).kind.value for n in run.network.node_indices]
        message = (
            f"Configuration '{run.config.name}' is valid:\n"
            f"  - Beams: {len(run.network.beams)}\n"
            f"  - Nodes: {len(kinds)} ({', '.join(sorted(set(kinds)))})"
        )
        return True, message

    def _structure_yaml_data(self, raw_data: Any, path: Path) -> dict[str, Any]:
        """Shape raw YAML for the Pydantic models.

        Raises:
            ConfigParseError: If the top level is not a mapping
        """
        if not isinstance(raw_data, dict):
            raise ConfigParseError(
                f"Configuration '{path.name}' must be a mapping, got {type(raw_data).__name__}"
            )
        structured = dict(raw_data)
        structured.setdefault("name", path.stem.replace(".", "_"))
        for key in ("beams", "nodes"):
            if isinstance(structured.get(key), dict):
                # mapping form: {id: {...}}
                structured[key] = [{"id": k, **(v or {})} for k, v in structured[key].items()]
        return structured

    def _format_validation_errors(self, error: ValidationError) -> str:
        """Format Pydantic validation errors as ``  • loc -> loc: msg`` lines."""
        lines = []
        for err in error.errors():
            location = " -> ".join(str(loc) for loc in err["loc"])
            lines.append(f"  • {location}: {err['msg']}")
        return "\n".join(lines)

    def _node_data(self, data: NodeDataConfig, base_dir: Path) -> TimeSeries | None:
        if data.kind == "zero":
            return None
        if data.kind == "constant":
            return TimeSeries.constant(data.value or [0.0] * 6)
        assert data.file is not None
        file = Path(data.file)
        path = file if file.is_absolute() else base_dir / file
        t, values = read_series(path, 6)
        try:
            return TimeSeries(t, values)
        except ValueError as e:
            raise ConfigValidationError(f"Nodal data file '{path.name}': {e}") from e

    def _build_network(self, config: RunConfig, base_dir: Path) -> NetworkSpec:
        beams = tuple(
            BeamSpec(
                index=b.id,
                length=b.length,
                mass=MatrixField(b.mass.to_array(), b.length),
                flex=MatrixField(b.flexibility.to_array(), b.length),
                rotation=RotationField(b.rotation.to_rotvecs(), b.length),
            )
            for b in config.beams
        )
        nodes: list[NodeRecord] = []
        for n in config.nodes:
            incidences = tuple(
                Incidence(inc.beam, Endpoint(inc.end), inc.tau)
                if inc.tau is not None
                else Incidence.of(inc.beam, inc.end)
                for inc in n.incidences
            )
            nodes.append(
                NodeRecord(
                    index=n.id,
                    kind=NodeKind(n.kind),
                    incidences=incidences,
                    data=self._node_data(n.data, base_dir),
                    position=None if n.position is None else np.asarray(n.position, dtype=float),
                    ending_count=n.ending_count,
                )
            )
        return NetworkSpec(beams=beams, nodes=tuple(nodes))


def load_config(path: str | Path, loader: NetworkLoader | None = None) -> tuple[RunConfig, NetworkSpec]:
    """Load a configuration and its validated network.

    Raises:
        ConfigParseError: On missing files or syntax errors
        ConfigValidationError: On schema or network validation failures
    """
    run = (loader or NetworkLoader()).load(path)
    return run.config, run.network
