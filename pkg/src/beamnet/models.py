"""Pydantic V2 models for run configuration and reports.

This module defines:
- Configuration models for beams, nodes, simulation, control and output
- Report models returned by validation, compatibility checks, verification,
  reconstruction diagnostics and planner sufficiency checks

Configuration models only check what can be checked locally (shapes, ranges,
positive definiteness, exactly-one-of groups). Topological checks belong to
``network.validate``.

Time Complexity: O(n) for validation where n is input size
Space Complexity: O(n) for model instances
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


def _is_square6(rows: list[list[float]]) -> bool:
    return len(rows) == 6 and all(len(r) == 6 for r in rows)


class MatrixFieldConfig(BaseModel):
    """6x6 coefficient field: exactly one of the four forms.

    Attributes:
        scale: Multiple of the identity
        diagonal: Six diagonal entries
        constant: Full 6x6 matrix (row-major)
        samples: Matrices on a uniform grid over the beam (x-varying field)
    """

    scale: float | None = Field(default=None, gt=0.0)
    diagonal: list[float] | None = Field(default=None, min_length=6, max_length=6)
    constant: list[list[float]] | None = None
    samples: list[list[list[float]]] | None = None

    @field_validator("constant")
    @classmethod
    def validate_constant_shape(cls, v: list[list[float]] | None) -> list[list[float]] | None:
        """Ensure a constant matrix is 6x6.

        Args:
            v: Matrix rows

        Returns:
            Validated rows

        Raises:
            ValueError: If the matrix is not 6x6
        """
        if v is not None and not _is_square6(v):
            raise ValueError("constant matrix must be 6x6")
        return v

    @field_validator("samples")
    @classmethod
    def validate_samples_shape(
        cls, v: list[list[list[float]]] | None
    ) -> list[list[list[float]]] | None:
        """Ensure at least two 6x6 samples are given.

        Raises:
            ValueError: If fewer than two samples or a sample is not 6x6
        """
        if v is None:
            return v
        if len(v) < 2:
            raise ValueError("samples needs at least two matrices")
        for k, matrix in enumerate(v):
            if not _is_square6(matrix):
                raise ValueError(f"sample {k} is not 6x6")
        return v

    @model_validator(mode="after")
    def validate_exactly_one(self) -> "MatrixFieldConfig":
        """Ensure exactly one representation is given.

        Returns:
            Self after validation

        Raises:
            ValueError: If zero or several forms are set
        """
        given = [
            name
            for name in ("scale", "diagonal", "constant", "samples")
            if getattr(self, name) is not None
        ]
        if len(given) != 1:
            raise ValueError(
                "exactly one of scale, diagonal, constant, samples is required "
                f"(got {given or 'none'})"
            )
        return self

    def to_array(self) -> np.ndarray:
        """Return the matrices as an (m, 6, 6) array (m = 1 if constant)."""
        if self.scale is not None:
            return self.scale * np.eye(6)[None]
        if self.diagonal is not None:
            return np.diag(self.diagonal)[None]
        if self.constant is not None:
            return np.asarray(self.constant, dtype=float)[None]
        return np.asarray(self.samples, dtype=float)


class RotationFieldConfig(BaseModel):
    """Undeformed rotation: constant axis-angle or per-x rotation vectors.

    Attributes:
        axis: Rotation axis (normalised on use)
        angle: Rotation angle in radians about ``axis``
        samples: Rotation vectors on a uniform grid over the beam
    """

    axis: list[float] | None = Field(default=None, min_length=3, max_length=3)
    angle: float = 0.0
    samples: list[list[float]] | None = None

    @field_validator("axis")
    @classmethod
    def validate_axis(cls, v: list[float] | None) -> list[float] | None:
        """Reject the zero axis."""
        if v is not None and float(np.linalg.norm(v)) == 0.0:
            raise ValueError("rotation axis must be non-zero")
        return v

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v: list[list[float]] | None) -> list[list[float]] | None:
        """Ensure at least two three-component rotation vectors."""
        if v is None:
            return v
        if len(v) < 2 or any(len(s) != 3 for s in v):
            raise ValueError("rotation samples must be at least two 3-vectors")
        return v

    @model_validator(mode="after")
    def validate_single_form(self) -> "RotationFieldConfig":
        """Reject configs mixing axis-angle and samples."""
        if self.axis is not None and self.samples is not None:
            raise ValueError("give either axis/angle or samples, not both")
        return self

    def to_rotvecs(self) -> np.ndarray:
        """Return rotation vectors as an (m, 3) array."""
        if self.samples is not None:
            return np.asarray(self.samples, dtype=float)
        if self.axis is None:
            return np.zeros((1, 3))
        axis = np.asarray(self.axis, dtype=float)
        return (self.angle * axis / np.linalg.norm(axis))[None]


class BeamConfig(BaseModel):
    """One beam of the network."""

    id: int = Field(ge=0)
    length: float = Field(default=1.0, gt=0.0)
    mass: MatrixFieldConfig = Field(default_factory=lambda: MatrixFieldConfig(scale=1.0))
    flexibility: MatrixFieldConfig = Field(
        default_factory=lambda: MatrixFieldConfig(scale=1.0)
    )
    rotation: RotationFieldConfig = Field(default_factory=RotationFieldConfig)

    @model_validator(mode="after")
    def validate_positive_definite(self) -> "BeamConfig":
        """Ensure mass and flexibility are symmetric positive definite.

        Raises:
            ValueError: Naming the beam and the offending matrix
        """
        for name, cfg in (("mass", self.mass), ("flexibility", self.flexibility)):
            matrices = cfg.to_array()
            if not np.allclose(matrices, np.swapaxes(matrices, -1, -2), atol=1e-12):
                raise ValueError(f"beam {self.id}: {name} matrix is not symmetric")
            smallest = float(np.min(np.linalg.eigvalsh(matrices)))
            if smallest <= 0.0:
                raise ValueError(
                    f"beam {self.id}: {name} matrix is not positive definite "
                    f"(min eigenvalue {smallest:.3e})"
                )
        return self


class IncidenceConfig(BaseModel):
    """Attachment of a beam end to a node."""

    beam: int = Field(ge=0)
    end: Literal["start", "end"]
    tau: Literal[-1, 1] | None = None


class NodeDataConfig(BaseModel):
    """Nodal data q_n: zero, constant, or a ``t,c1..c6`` CSV file."""

    kind: Literal["zero", "constant", "csv"] = "zero"
    value: list[float] | None = Field(default=None, min_length=6, max_length=6)
    file: str | None = None

    @model_validator(mode="after")
    def validate_payload(self) -> "NodeDataConfig":
        """Ensure the payload matching ``kind`` is present."""
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant nodal data needs 'value'")
        if self.kind == "csv" and not self.file:
            raise ValueError("csv nodal data needs 'file'")
        return self


class NodeConfig(BaseModel):
    """One node of the network."""

    id: int = Field(ge=0)
    kind: Literal["multiple", "neumann", "dirichlet"]
    incidences: list[IncidenceConfig] = Field(min_length=1)
    position: list[float] | None = Field(default=None, min_length=3, max_length=3)
    ending_count: int | None = Field(default=None, ge=0)
    data: NodeDataConfig = Field(default_factory=NodeDataConfig)


class InitialDataConfig(BaseModel):
    """Initial state: zero, a rigid translation, or a trajectory-schema CSV.

    Attributes:
        kind: Representation
        velocity: Fixed-frame translation velocity for ``rigid_translation``
        file: CSV path for ``csv`` (rows at the earliest time per beam are used)
    """

    kind: Literal["zero", "rigid_translation", "csv"] = "zero"
    velocity: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    file: str | None = None

    @model_validator(mode="after")
    def validate_file(self) -> "InitialDataConfig":
        """Ensure a file is given for ``csv``."""
        if self.kind == "csv" and not self.file:
            raise ValueError("csv initial data needs 'file'")
        return self


class SimulationConfig(BaseModel):
    """Discretisation and horizon of forward simulations."""

    nx: int = Field(default=100, ge=4, le=20000)
    cfl: float = Field(default=0.9, gt=0.0, le=1.0)
    horizon: float = Field(default=1.0, gt=0.0)
    blowup_bound: float = Field(default=1e6, gt=0.0)
    initial: InitialDataConfig = Field(default_factory=InitialDataConfig)


class ProfilesConfig(BaseModel):
    """Nodal profiles at the charged node.

    Attributes:
        kind: ``csv`` (one ``t,c1..c12`` file per beam), ``equilibrium``
            (the rigid translation of the initial data) or ``random``
        files: Beam id -> CSV path, for ``csv``
        amplitude: Amplitude of random profiles
        seed: Seed of random profiles
        modes: Number of Fourier modes of random profiles
    """

    kind: Literal["csv", "equilibrium", "random"] = "equilibrium"
    files: dict[int, str] = Field(default_factory=dict)
    amplitude: float = Field(default=1e-3, ge=0.0)
    seed: int = 0
    modes: int = Field(default=3, ge=1, le=16)

    @model_validator(mode="after")
    def validate_files(self) -> "ProfilesConfig":
        """Ensure files are given for ``csv``."""
        if self.kind == "csv" and not self.files:
            raise ValueError("csv profiles need 'files'")
        return self


class ControlConfig(BaseModel):
    """Nodal profile control problem."""

    charged: list[int] = Field(default_factory=lambda: [1], min_length=1)
    controlled: list[int] = Field(default_factory=lambda: [4, 5], min_length=1)
    path_edges: list[int] = Field(default_factory=lambda: [1, 2, 4, 5])
    t_star: float = Field(gt=0.0)
    horizon: float = Field(gt=0.0)
    profiles: ProfilesConfig = Field(default_factory=ProfilesConfig)

    @model_validator(mode="after")
    def validate_times(self) -> "ControlConfig":
        """Ensure ``horizon > t_star`` and disjoint node roles."""
        if not self.horizon > self.t_star:
            raise ValueError(f"horizon ({self.horizon}) must exceed t_star ({self.t_star})")
        overlap = set(self.charged) & set(self.controlled)
        if overlap:
            raise ValueError(f"nodes {sorted(overlap)} are both charged and controlled")
        return self


class IOConfig(BaseModel):
    """Output location and float formatting."""

    out_dir: str = "output"
    precision: int = Field(default=17, ge=1, le=17)


class RunConfig(BaseModel):
    """Complete run description loaded from YAML."""

    name: str = Field(pattern=r"^[A-Za-z0-9_-]+$", min_length=1, max_length=80)
    beams: list[BeamConfig] = Field(min_length=1)
    nodes: list[NodeConfig] = Field(min_length=1)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    control: ControlConfig | None = None
    io: IOConfig = Field(default_factory=IOConfig)

    @model_validator(mode="after")
    def validate_unique_ids(self) -> "RunConfig":
        """Ensure beam and node ids are unique."""
        for what, ids in (
            ("beam", [b.id for b in self.beams]),
            ("node", [n.id for n in self.nodes]),
        ):
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            if duplicates:
                raise ValueError(f"duplicate {what} ids: {duplicates}")
        return self


# Reports


class ValidationReport(BaseModel):
    """Outcome of structural network validation."""

    valid: bool
    violations: list[str] = Field(default_factory=list)


class CompatibilityEntry(BaseModel):
    """One evaluated compatibility condition."""

    family: str
    node: int | None = None
    beam: int | None = None
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        """Whether the residual is within tolerance."""
        return self.residual <= self.tolerance


class CompatibilityReport(BaseModel):
    """Residuals of a family of compatibility conditions."""

    title: str
    entries: list[CompatibilityEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every entry passed."""
        return all(e.passed for e in self.entries)

    @property
    def max_residual(self) -> float:
        """Largest residual (0 when empty)."""
        return max((e.residual for e in self.entries), default=0.0)

    def residual(self, family: str, node: int | None = None) -> float:
        """Largest residual of a family, optionally restricted to a node."""
        return max(
            (
                e.residual
                for e in self.entries
                if e.family == family and (node is None or e.node == node)
            ),
            default=0.0,
        )


class VerificationEntry(BaseModel):
    """Deviation between synthesised and preliminary solutions on one region."""

    beam: int
    region: str
    deviation: float


class VerificationReport(BaseModel):
    """Initial-recovery verification over characteristic domains."""

    entries: list[VerificationEntry] = Field(default_factory=list)
    tolerance: float

    @property
    def max_deviation(self) -> float:
        """Largest deviation (0 when empty)."""
        return max((e.deviation for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        """Whether every deviation is within tolerance."""
        return self.max_deviation <= self.tolerance


class ControlReport(BaseModel):
    """Diagnostics of a control synthesis."""

    controllability_time: float
    t_star: float
    horizon: float
    transmission_times: dict[int, float]
    steps: list[str] = Field(default_factory=list)
    tracking_error: float | None = None
    node_residual: float | None = None


class ReconstructionEntry(BaseModel):
    """Per-beam reconstruction diagnostics."""

    beam: int
    orthogonality_drift: float
    last6_residual: float
    geb_residual: float | None = None


class ReconstructionReport(BaseModel):
    """Reconstruction diagnostics for a network."""

    anchor_node: int
    entries: list[ReconstructionEntry] = Field(default_factory=list)
    joint_rotation_mismatch: float | None = None
    joint_position_mismatch: float | None = None


class SufficiencyReport(BaseModel):
    """Outcome of the sufficient controllability conditions on a plan input."""

    count_matches: bool
    charged_paths_disjoint: bool
    paths_mutually_disjoint: bool
    violations: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether all three conditions hold."""
        return self.count_matches and self.charged_paths_disjoint and self.paths_mutually_disjoint
