"""Utility functions for beamnet.

This module provides helper functions for:
- Path validation and sanitization
- File system operations and atomic writes
- Fixed-precision CSV codecs for trajectories, time series and centerlines

CSV files are written with ``numpy.savetxt`` at a fixed number of
significant digits so identical inputs give byte-identical files.

Time Complexity: Noted per function
Space Complexity: Noted per function
"""

import io
import os
import re
import tempfile
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from beamnet.exceptions import ConfigParseError, PathValidationError

FloatArray = NDArray[np.float64]

DEFAULT_PRECISION = 17
STATE_COLUMNS = [f"v{k}" for k in range(1, 7)] + [f"z{k}" for k in range(1, 7)]
TRAJECTORY_HEADER = ["beam", "x", "t", *STATE_COLUMNS]
CENTERLINE_HEADER = ["beam", "x", "t", "p1", "p2", "p3"]


def validate_output_path(path: Path) -> Path:
    """Validate and sanitize an output directory path.

    Security checks:
    - No path traversal (../) attempts
    - Valid directory name characters only

    Args:
        path: Path to validate

    Returns:
        Validated absolute path

    Raises:
        PathValidationError: If path validation fails

    Example:
        >>> validate_output_path(Path("./output"))
        PosixPath('/home/user/project/output')
    """
    if ".." in path.parts:
        raise PathValidationError(
            f"Path traversal detected in '{path}'. Path must not contain '..' segments."
        )
    for part in path.parts:
        if part in (".", "/") or part == path.anchor:
            continue
        if not re.match(r"^[a-zA-Z0-9._-]+$", part):
            raise PathValidationError(
                f"Invalid characters in path component '{part}'. "
                "Only alphanumeric, underscore, hyphen, and dot allowed."
            )
    try:
        return path.resolve()
    except OSError as e:
        raise PathValidationError(f"Path validation failed for '{path}': {e}") from e


def atomic_write(path: Path, content: bytes) -> None:
    """Write a file atomically using a temp file in the same directory and a rename.

    Args:
        path: Destination file path
        content: Binary content to write

    Raises:
        OSError: If write or rename fails

    Time Complexity: O(n) where n is content size
    Space Complexity: O(n) for content buffer
    """
    temp_fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=path.suffix)
    temp_path = Path(temp_name)
    try:
        with os.fdopen(temp_fd, "wb") as f:
            f.write(content)
        temp_path.replace(path)
    except Exception:
        temp_path.unlink(missing_ok=True)
        raise


def ensure_directory(path: Path) -> Path:
    """Ensure a validated directory exists, creating it if necessary.

    Raises:
        OSError: If directory creation fails
        PathValidationError: If path is invalid
    """
    validated_path = validate_output_path(path)
    validated_path.mkdir(parents=True, exist_ok=True)
    return validated_path


def get_project_root() -> Path:
    """Get the project root directory (first parent holding pyproject.toml or .git)."""
    current = Path(__file__).resolve()
    for parent in current.parents:
        if (parent / "pyproject.toml").exists() or (parent / ".git").exists():
            return parent
    return current.parent.parent.parent


def series_header(dim: int) -> list[str]:
    """Header ``t,c1..cN`` of a time-series CSV."""
    return ["t", *(f"c{k}" for k in range(1, dim + 1))]


def write_csv(path: Path, header: list[str], rows: ArrayLike, precision: int = DEFAULT_PRECISION) -> None:
    """Write a numeric table atomically.

    Time Complexity: O(rows * columns)
    Space Complexity: O(rows * columns) for the text buffer
    """
    table = np.atleast_2d(np.asarray(rows, dtype=float))
    if table.size and table.shape[1] != len(header):
        raise ValueError(f"{table.shape[1]} columns for a header of {len(header)}")
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        table.reshape(-1, len(header)),
        fmt=f"%.{precision}g",
        delimiter=",",
        header=",".join(header),
        comments="",
    )
    atomic_write(path, buffer.getvalue().encode("utf-8"))


def read_csv(path: Path, expected_header: list[str] | None = None) -> tuple[list[str], FloatArray]:
    """Read a numeric table with a one-line header.

    Raises:
        ConfigParseError: If the file is missing, the header differs from
            ``expected_header`` or a row is not numeric
    """
    if not path.is_file():
        raise ConfigParseError(f"CSV file not found: {path}")
    text = path.read_text(encoding="utf-8")
    first, _, _ = text.partition("\n")
    header = [h.strip() for h in first.split(",")]
    if expected_header is not None and header != expected_header:
        raise ConfigParseError(
            f"{path}: line 1: expected header '{','.join(expected_header)}', got '{first.strip()}'"
        )
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except ValueError as e:
        raise ConfigParseError(f"{path}: {e}") from e
    if data.size and data.shape[1] != len(header):
        raise ConfigParseError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    return header, data.reshape(-1, len(header))


def trajectory_rows(fields: dict[int, tuple[FloatArray, FloatArray, FloatArray]]) -> FloatArray:
    """Rows ``beam,x,t,v1..v6,z1..z6`` ordered by beam, then time, then position.

    Args:
        fields: Beam -> (x (nx + 1), t (nt + 1), y (nt + 1, nx + 1, 12))
    """
    blocks: list[FloatArray] = []
    for beam in sorted(fields):
        x, t, y = fields[beam]
        tt, xx = np.meshgrid(t, x, indexing="ij")
        block = np.column_stack(
            [np.full(tt.size, float(beam)), xx.ravel(), tt.ravel(), y.reshape(-1, 12)]
        )
        blocks.append(block)
    return np.vstack(blocks) if blocks else np.empty((0, len(TRAJECTORY_HEADER)))


def write_trajectory(
    path: Path,
    fields: dict[int, tuple[FloatArray, FloatArray, FloatArray]],
    precision: int = DEFAULT_PRECISION,
) -> None:
    """Write beam fields in the trajectory CSV schema."""
    write_csv(path, TRAJECTORY_HEADER, trajectory_rows(fields), precision)


def read_trajectory(path: Path) -> dict[int, tuple[FloatArray, FloatArray, FloatArray]]:
    """Read a trajectory CSV back into per-beam (x, t, y) grids.

    Raises:
        ConfigParseError: If the header is wrong or a beam's rows do not form a full grid
    """
    _, data = read_csv(path, TRAJECTORY_HEADER)
    fields: dict[int, tuple[FloatArray, FloatArray, FloatArray]] = {}
    for beam in np.unique(data[:, 0]):
        rows = data[data[:, 0] == beam]
        x = np.unique(rows[:, 1])
        t = np.unique(rows[:, 2])
        if len(rows) != len(x) * len(t):
            raise ConfigParseError(f"{path}: beam {int(beam)} rows do not form a (t, x) grid")
        order = np.lexsort((rows[:, 1], rows[:, 2]))
        y = rows[order, 3:].reshape(len(t), len(x), 12)
        fields[int(beam)] = (x, t, y)
    return fields


def write_series(path: Path, t: ArrayLike, values: ArrayLike, precision: int = DEFAULT_PRECISION) -> None:
    """Write a time series in the ``t,c1..cN`` schema."""
    vals = np.asarray(values, dtype=float)
    vals = vals.reshape(len(np.asarray(t)), -1)
    write_csv(path, series_header(vals.shape[1]), np.column_stack([np.asarray(t, dtype=float), vals]), precision)


def read_series(path: Path, dim: int | None = None) -> tuple[FloatArray, FloatArray]:
    """Read a ``t,c1..cN`` time series.

    Raises:
        ConfigParseError: If the header does not match or ``dim`` differs
    """
    header, data = read_csv(path)
    expected = series_header(len(header) - 1)
    if header != expected or (dim is not None and len(header) - 1 != dim):
        want = series_header(dim) if dim is not None else expected
        raise ConfigParseError(f"{path}: line 1: expected header '{','.join(want)}', got '{','.join(header)}'")
    return data[:, 0], data[:, 1:]


def write_centerline(
    path: Path,
    fields: dict[int, tuple[FloatArray, FloatArray, FloatArray]],
    precision: int = DEFAULT_PRECISION,
) -> None:
    """Write centerline positions ``beam,x,t,p1,p2,p3``.

    Args:
        path: Destination
        fields: Beam -> (x, t, p (nt + 1, nx + 1, 3))
        precision: Significant digits
    """
    blocks: list[FloatArray] = []
    for beam in sorted(fields):
        x, t, p = fields[beam]
        tt, xx = np.meshgrid(t, x, indexing="ij")
        blocks.append(np.column_stack([np.full(tt.size, float(beam)), xx.ravel(), tt.ravel(), p.reshape(-1, 3)]))
    rows = np.vstack(blocks) if blocks else np.empty((0, len(CENTERLINE_HEADER)))
    write_csv(path, CENTERLINE_HEADER, rows, precision)
