"""Small fixed-dimension linear algebra and rotation utilities.

This module provides:
- The hat/vec isomorphism between R^3 and skew-symmetric 3x3 matrices
- Unit quaternions and their conversion to rotation matrices
- One-step integration of dR/dt = R hat(omega) on SO(3)
- Rotation validity checks and the block-diagonal lift diag(R, R)

Every function accepts stacked inputs (leading batch axes) so that whole
sampled fields can be processed at once. Rotations are handled through
``scipy.spatial.transform.Rotation`` (scalar-last quaternions internally).

Time Complexity: O(b) for b stacked inputs
Space Complexity: O(b)
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from beamnet.exceptions import NotSkewError

E1: NDArray[np.float64] = np.array([1.0, 0.0, 0.0])

SKEW_TOL = 1e-10


@dataclass(frozen=True)
class UnitQuaternion:
    """Rotation parametrised by a scalar-first unit quaternion (w, x, y, z).

    Construction normalises the components, so ``w^2 + x^2 + y^2 + z^2 = 1``
    holds to rounding.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        """Normalise the components.

        Raises:
            ValueError: If all components are zero
        """
        norm = float(np.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2))
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError("Quaternion must have a finite non-zero norm")
        object.__setattr__(self, "w", self.w / norm)
        object.__setattr__(self, "x", self.x / norm)
        object.__setattr__(self, "y", self.y / norm)
        object.__setattr__(self, "z", self.z / norm)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        """Return the identity rotation."""
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_rotation(cls, matrix: ArrayLike) -> "UnitQuaternion":
        """Build the quaternion of a rotation matrix (w >= 0 branch)."""
        x, y, z, w = Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_quat()
        if w < 0.0:
            x, y, z, w = -x, -y, -z, -w
        return cls(float(w), float(x), float(y), float(z))

    def as_array(self) -> NDArray[np.float64]:
        """Return the components in scalar-first order."""
        return np.array([self.w, self.x, self.y, self.z])


def hat(u: ArrayLike) -> NDArray[np.float64]:
    """Return the skew matrix with ``hat(u) @ z == cross(u, z)``.

    Args:
        u: Vector(s) of shape (..., 3)

    Returns:
        Skew matrices of shape (..., 3, 3)
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros((*u.shape[:-1], 3, 3))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vec(matrix: ArrayLike, tol: float = SKEW_TOL) -> NDArray[np.float64]:
    """Inverse of :func:`hat` applied to the skew part of ``matrix``.

    Args:
        matrix: Matrix or stack of matrices of shape (..., 3, 3)
        tol: Largest accepted asymmetry ``||M + M^T||_F``

    Returns:
        Vectors of shape (..., 3)

    Raises:
        NotSkewError: If any matrix is further than ``tol`` from skew-symmetric
    """
    m = np.asarray(matrix, dtype=float)
    m_t = np.swapaxes(m, -1, -2)
    asymmetry = np.linalg.norm(m + m_t, axis=(-2, -1))
    worst = float(np.max(asymmetry)) if asymmetry.size else 0.0
    if not worst <= tol:
        raise NotSkewError(
            f"Matrix is not skew-symmetric: ||M + M^T|| = {worst:.3e} > {tol:.1e}"
        )
    skew = 0.5 * (m - m_t)
    return np.stack([skew[..., 2, 1], skew[..., 0, 2], skew[..., 1, 0]], axis=-1)


def quat_to_rot(q: UnitQuaternion) -> NDArray[np.float64]:
    """Return the rotation matrix of a unit quaternion."""
    matrix: NDArray[np.float64] = Rotation.from_quat([q.x, q.y, q.z, q.w]).as_matrix()
    return matrix


def rot_step(R: ArrayLike, omega: ArrayLike, dt: float) -> NDArray[np.float64]:
    """Advance ``dR/dt = R hat(omega)`` over one step of length ``dt``.

    The increment is the exact exponential of ``dt * hat(omega)``; passing the
    midpoint angular velocity makes the step second-order accurate for
    time-varying ``omega``. The product is formed on quaternions, which
    renormalises the result onto SO(3).

    Args:
        R: Rotation(s) of shape (..., 3, 3)
        omega: Angular velocity (body frame) of shape (..., 3)
        dt: Step length, must be positive

    Returns:
        Rotation(s) of shape (..., 3, 3)

    Raises:
        ValueError: If dt is not positive
    """
    if dt <= 0.0:
        raise ValueError(f"Step length must be positive, got {dt}")
    R = np.asarray(R, dtype=float)
    omega = np.asarray(omega, dtype=float)
    batch = R.shape[:-2]
    omega = np.broadcast_to(omega, (*batch, 3))
    increment = Rotation.from_rotvec(omega.reshape(-1, 3) * dt)
    current = Rotation.from_matrix(R.reshape(-1, 3, 3))
    return (current * increment).as_matrix().reshape(*batch, 3, 3)


def is_rotation(matrix: ArrayLike, tol: float) -> bool:
    """Return True iff every matrix satisfies ``||M^T M - I||_F <= tol`` and ``det M > 0``."""
    m = np.asarray(matrix, dtype=float)
    if m.shape[-2:] != (3, 3) or not np.all(np.isfinite(m)):
        return False
    gram = np.swapaxes(m, -1, -2) @ m - np.eye(3)
    defect = np.linalg.norm(gram, axis=(-2, -1))
    return bool(np.all(defect <= tol) and np.all(np.linalg.det(m) > 0.0))


def orthogonality_defect(matrix: ArrayLike) -> float:
    """Return ``max ||M^T M - I||_F`` over a stack of matrices."""
    m = np.asarray(matrix, dtype=float)
    gram = np.swapaxes(m, -1, -2) @ m - np.eye(3)
    return float(np.max(np.linalg.norm(gram, axis=(-2, -1))))


def bar(R: ArrayLike) -> NDArray[np.float64]:
    """Return the 6x6 block-diagonal lift ``diag(R, R)`` of stacked rotations."""
    R = np.asarray(R, dtype=float)
    out = np.zeros((*R.shape[:-2], 6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    return out
