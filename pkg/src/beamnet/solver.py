"""Characteristic solvers for beam networks.

This module provides:
- Forward-in-time integration of the coupled network in Riemann variables,
  with node maps filling the outgoing characteristics at every beam end
- Sidewise (forward-in-x) integration of a single beam from a trace at one
  end, with velocities imposed at t = 0 and forces at t = T
- Characteristic curves ``t(x) = t0 - int_0^x Lambda`` and masking of
  sampled fields to the domain below such a curve

Both solvers trace characteristics back with linear interpolation and treat
the source ``-B r + L gbar(L^{-1} r)`` by a predictor-corrector (Heun) step,
giving a first-order scheme.

Time Complexity: O(nt * nx) per beam
Space Complexity: O(nt * nx) per beam (stored trajectories)
"""

import logging
import math
import warnings
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from beamnet.beam import DiagonalizedBeam, diagonalize, riemann_rhs
from beamnet.exceptions import (
    BlowUpError,
    CompatibilityWarning,
    TraceDimensionMismatchError,
)
from beamnet.network import (
    Endpoint,
    Incidence,
    NetworkSpec,
    NodeCoupling,
    apply_node,
    assemble_all_couplings,
    endpoint_sample,
    merge_out_in,
    split_out_in,
)

logger = logging.getLogger(__name__)

CORNER_TOL = 1e-6
ALIGN_TOL = 1e-6
DEFAULT_BLOWUP_BOUND = 1e6

FloatArray = NDArray[np.float64]
Forcing = Callable[[ArrayLike, ArrayLike], FloatArray]
ProgressCallback = Callable[[int, int], None]
Direction = Literal["rightward", "leftward"]


def cfl_dt(dbs: Mapping[int, DiagonalizedBeam], cfl: float) -> float:
    """Return ``cfl * min_i,x dx_i / max_k |lambda_i^k(x)|``.

    Raises:
        ValueError: If cfl is outside (0, 1]
    """
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    return cfl * min(db.dx / float(np.max(db.D)) for db in dbs.values())


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t_k = k * dt``, k = 0..nt."""

    dt: float
    nt: int

    def __post_init__(self) -> None:
        """Validate step and count."""
        if not self.dt > 0.0 or self.nt < 1:
            raise ValueError(f"Invalid grid dt={self.dt}, nt={self.nt}")

    @property
    def horizon(self) -> float:
        """Final time."""
        return self.dt * self.nt

    @property
    def t(self) -> FloatArray:
        """Sample times."""
        return np.arange(self.nt + 1) * self.dt

    @classmethod
    def from_cfl(
        cls, dbs: Mapping[int, DiagonalizedBeam], horizon: float, cfl: float = 0.9
    ) -> "Grid":
        """Largest uniform grid reaching ``horizon`` whose step obeys the CFL bound."""
        if not horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        dt_max = cfl_dt(dbs, cfl)
        nt = max(1, math.ceil(horizon / dt_max - 1e-9))
        return cls(dt=horizon / nt, nt=nt)

    def prefix(self, horizon: float) -> "Grid":
        """Grid with the same step covering at least ``horizon``."""
        return Grid(dt=self.dt, nt=min(self.nt, max(1, math.ceil(horizon / self.dt - 1e-9))))


@dataclass(frozen=True)
class BeamField:
    """Physical states of one beam on an (t, x) grid.

    Attributes:
        beam: Beam index
        x: Space samples (nx + 1)
        t: Time samples (nt + 1)
        y: States, shape (nt + 1, nx + 1, 12)
        L: Riemann maps at the x samples, shape (nx + 1, 12, 12)
    """

    beam: int
    x: FloatArray
    t: FloatArray
    y: FloatArray
    L: FloatArray

    @property
    def r(self) -> FloatArray:
        """Riemann view ``r = L y``."""
        return np.einsum("xij,txj->txi", self.L, self.y)

    def trace(self, endpoint: Endpoint) -> FloatArray:
        """Time trace (nt + 1, 12) at a beam end."""
        return self.y[:, 0] if endpoint is Endpoint.START else self.y[:, -1]


@dataclass(frozen=True)
class Trajectory:
    """Network solution: one :class:`BeamField` per beam on a shared time grid."""

    t: FloatArray
    fields: dict[int, BeamField]

    def field(self, beam: int) -> BeamField:
        """Field of ``beam``."""
        return self.fields[beam]

    def endpoint_state(self, inc: Incidence) -> FloatArray:
        """Time trace of the physical state at an incidence's beam end."""
        return self.fields[inc.beam].trace(inc.endpoint)

    def max_abs(self) -> float:
        """Largest absolute state component over all beams."""
        return max(float(np.max(np.abs(f.y))) for f in self.fields.values())


class _CharacteristicTransport:
    """Linear back-tracing of both characteristic families on one beam."""

    def __init__(self, db: DiagonalizedBeam, dt: float) -> None:
        courant = db.D * dt / db.dx
        if float(np.max(courant)) > 1.0 + 1e-12:
            raise ValueError(
                f"Beam {db.index}: time step violates CFL (Courant {float(np.max(courant)):.3f})"
            )
        self.w_minus = courant[:-1]
        self.w_plus = courant[1:]

    def __call__(self, a: FloatArray) -> FloatArray:
        out = a.copy()
        # incoming boundary entries are left for the node conditions
        out[:-1, :6] = (1.0 - self.w_minus) * a[:-1, :6] + self.w_minus * a[1:, :6]
        out[1:, 6:] = (1.0 - self.w_plus) * a[1:, 6:] + self.w_plus * a[:-1, 6:]
        return out


def _fill_nodes(
    couplings: Mapping[int, NodeCoupling],
    dbs: Mapping[int, DiagonalizedBeam],
    states: dict[int, FloatArray],
    data: Mapping[int, FloatArray],
) -> None:
    for n, coupling in couplings.items():
        ends = [endpoint_sample(dbs[inc.beam], inc.endpoint) for inc in coupling.order]
        local = [states[inc.beam][k] for inc, k in zip(coupling.order, ends, strict=True)]
        _, r_in = split_out_in(coupling.order, local)
        r_out = apply_node(coupling, r_in, data[n])
        for inc, k, merged in zip(
            coupling.order, ends, merge_out_in(coupling.order, r_out, r_in), strict=True
        ):
            states[inc.beam][k] = merged


def _corner_mismatch(
    couplings: Mapping[int, NodeCoupling],
    dbs: Mapping[int, DiagonalizedBeam],
    states: Mapping[int, FloatArray],
    data: Mapping[int, FloatArray],
) -> dict[int, float]:
    mismatch: dict[int, float] = {}
    for n, coupling in couplings.items():
        local = [
            states[inc.beam][endpoint_sample(dbs[inc.beam], inc.endpoint)]
            for inc in coupling.order
        ]
        r_out, r_in = split_out_in(coupling.order, local)
        mismatch[n] = float(np.max(np.abs(apply_node(coupling, r_in, data[n]) - r_out)))
    return mismatch


def _check_bound(r: FloatArray, bound: float, where: str) -> None:
    if not np.all(np.abs(r) <= bound):
        raise BlowUpError(f"{where}: state exceeded the bound {bound:.3g}")


def solve_forward(
    network: NetworkSpec,
    dbs: Mapping[int, DiagonalizedBeam],
    y0: Mapping[int, ArrayLike],
    grid: Grid,
    *,
    forcing: Mapping[int, Forcing] | None = None,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
    progress: ProgressCallback | None = None,
    corner_tol: float = CORNER_TOL,
) -> Trajectory:
    """Integrate the network forward in time.

    Node data ``q_n`` are read from ``network`` at each new time level.

    Args:
        network: Network (topology, node kinds, nodal data)
        dbs: Diagonalised beams keyed by index
        y0: Initial physical states per beam, shape (n_samples, 12)
        grid: Time grid obeying the CFL bound
        forcing: Optional physical source per beam, called as ``f(x, t)``
            with the sample array and a time; returns (n_samples, 12)
        blowup_bound: Bound on every Riemann component
        progress: Optional callback ``(step, nt)`` after each step
        corner_tol: Tolerance of the node conditions at t = 0

    Returns:
        Trajectory on ``grid``

    Raises:
        TraceDimensionMismatchError: If an initial state has the wrong shape
        BlowUpError: If the bound is exceeded
    """
    forcing = forcing or {}
    beams = network.beam_indices
    couplings = assemble_all_couplings(network, dbs)
    transport = {i: _CharacteristicTransport(dbs[i], grid.dt) for i in beams}
    t = grid.t

    def node_data(tk: float) -> dict[int, FloatArray]:
        return {n: network.nodal_data(n, tk) for n in network.node_indices}

    def rhs(i: int, r: FloatArray, tk: float) -> FloatArray:
        f = forcing[i](dbs[i].x, tk) if i in forcing else None
        return riemann_rhs(dbs[i], r, forcing=f)

    states: dict[int, FloatArray] = {}
    out: dict[int, FloatArray] = {}
    for i in beams:
        init = np.asarray(y0[i], dtype=float)
        if init.shape != (dbs[i].n_samples, 12):
            raise TraceDimensionMismatchError(
                f"Beam {i}: initial state has shape {init.shape}, "
                f"expected {(dbs[i].n_samples, 12)}"
            )
        states[i] = np.einsum("xij,xj->xi", dbs[i].L, init)
        out[i] = np.empty((grid.nt + 1, dbs[i].n_samples, 12))
        out[i][0] = init

    for n, gap in _corner_mismatch(couplings, dbs, states, node_data(0.0)).items():
        if gap > corner_tol:
            message = f"Node {n}: initial data violate the node condition by {gap:.3e}"
            logger.warning(message)
            warnings.warn(message, CompatibilityWarning, stacklevel=2)

    for k in range(grid.nt):
        t_next = float(t[k + 1])
        data_next = node_data(t_next)
        traced: dict[int, FloatArray] = {}
        traced_src: dict[int, FloatArray] = {}
        predicted: dict[int, FloatArray] = {}
        # predictor: back-trace states and sources, Euler step, then node conditions
        for i in beams:
            traced[i] = transport[i](states[i])
            traced_src[i] = transport[i](rhs(i, states[i], float(t[k])))
            predicted[i] = traced[i] + grid.dt * traced_src[i]
        _fill_nodes(couplings, dbs, predicted, data_next)
        # corrector: trapezoidal source
        for i in beams:
            states[i] = traced[i] + 0.5 * grid.dt * (traced_src[i] + rhs(i, predicted[i], t_next))
        _fill_nodes(couplings, dbs, states, data_next)
        for i in beams:
            _check_bound(states[i], blowup_bound, f"Beam {i} at t={t_next:.6g}")
            out[i][k + 1] = np.einsum("xij,xj->xi", dbs[i].Linv, states[i])
        if progress is not None:
            progress(k + 1, grid.nt)

    logger.info(f"Forward solve finished: {len(beams)} beams, {grid.nt} steps, T={grid.horizon:.6g}")
    fields = {i: BeamField(beam=i, x=dbs[i].x, t=t, y=out[i], L=dbs[i].L) for i in beams}
    return Trajectory(t=t, fields=fields)


def _shift_in_t(values: FloatArray, t: FloatArray, offsets: FloatArray) -> FloatArray:
    """Interpolate column k of ``values`` at ``t - offsets[k]`` (clamped)."""
    out = np.empty_like(values)
    for k in range(values.shape[1]):
        out[:, k] = np.interp(t - offsets[k], t, values[:, k])
    return out


def solve_sidewise(
    db: DiagonalizedBeam,
    direction: Direction,
    t: ArrayLike,
    initial_trace: ArrayLike,
    bc_t0: ArrayLike,
    bc_tT: ArrayLike,
    *,
    forcing: Forcing | None = None,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
    corner_tol: float = CORNER_TOL,
) -> BeamField:
    """Integrate one beam in x from a time trace at one end.

    The x step is refined so that every characteristic foot stays within one
    time step. Marching runs on an inner uniform time grid on which the slowest
    family moves exactly one step per x step; results are resampled onto ``t``
    with cubic splines. Velocities ``bc_t0`` close the entering family at t = 0 and
    forces ``bc_tT`` close the other family at t = T.

    Args:
        db: Diagonalised beam (its samples define the output x grid)
        direction: ``rightward`` (from x = 0) or ``leftward`` (from x = length)
        t: Uniform time samples on [0, T]
        initial_trace: Physical trace (nt + 1, 12) at the starting end
        bc_t0: Velocities v(x, 0), shape (n_samples, 6)
        bc_tT: Forces z(x, T), shape (n_samples, 6)
        forcing: Optional physical source, called as ``f(x, t)`` with a scalar
            position and the time array; returns (nt + 1, 12)
        blowup_bound: Bound on every Riemann component
        corner_tol: Tolerance of the corner checks

    Returns:
        Field on the sample grid of ``db`` and the times ``t``

    Raises:
        TraceDimensionMismatchError: If a trace does not match the grids
        BlowUpError: If the bound is exceeded
    """
    ts = np.asarray(t, dtype=float)
    trace = np.asarray(initial_trace, dtype=float)
    v0 = np.asarray(bc_t0, dtype=float)
    zT = np.asarray(bc_tT, dtype=float)
    nt = len(ts) - 1
    if nt < 1 or trace.shape != (nt + 1, 12):
        raise TraceDimensionMismatchError(
            f"Beam {db.index}: initial trace has shape {trace.shape}, expected {(nt + 1, 12)}"
        )
    for name, arr in (("bc_t0", v0), ("bc_tT", zT)):
        if arr.shape != (db.n_samples, 6):
            raise TraceDimensionMismatchError(
                f"Beam {db.index}: {name} has shape {arr.shape}, expected {(db.n_samples, 6)}"
            )
    if direction not in ("rightward", "leftward"):
        raise ValueError(f"Unknown direction '{direction}'")
    dt = float(ts[1] - ts[0])
    if not np.allclose(np.diff(ts), dt, rtol=1e-9, atol=0.0):
        raise TraceDimensionMismatchError("Sidewise solves need uniform time samples")

    nx_cells = db.n_samples - 1
    refine = max(1, math.ceil(db.dx / (dt * float(np.min(db.D))) - 1e-9))
    fine = db if refine == 1 else diagonalize(db.spec, nx_cells * refine + 1)
    v0_fine = CubicSpline(db.x, v0, axis=0)(fine.x)
    zT_fine = CubicSpline(db.x, zT, axis=0)(fine.x)

    # inner time grid on which the slowest family moves exactly one step per x step
    horizon = float(ts[-1] - ts[0])
    nt_inner = max(nt, math.ceil(horizon * float(np.min(fine.D)) / fine.dx - ALIGN_TOL))
    resampled = nt_inner != nt
    inner_t = ts[0] + np.linspace(0.0, horizon, nt_inner + 1) if resampled else ts
    inner_trace = CubicSpline(ts, trace, axis=0)(inner_t) if resampled else trace

    rightward = direction == "rightward"
    start = 0 if rightward else fine.n_samples - 1
    h = fine.dx if rightward else -fine.dx

    k0 = 0 if rightward else nx_cells
    corner_v = float(np.max(np.abs(trace[0, :6] - v0[k0])))
    corner_z = float(np.max(np.abs(trace[-1, 6:] - zT[k0])))
    if max(corner_v, corner_z) > corner_tol:
        message = (
            f"Beam {db.index}: sidewise corner mismatch (t=0 velocity {corner_v:.3e}, "
            f"t=T force {corner_z:.3e})"
        )
        logger.warning(message)
        warnings.warn(message, CompatibilityWarning, stacklevel=2)

    def x_rhs(s: int, r: FloatArray) -> FloatArray:
        f = forcing(fine.x[s], inner_t) if forcing is not None else None
        return riemann_rhs(fine, r, index=s, forcing=f) / fine.speeds[s]

    def close(s: int, r: FloatArray) -> None:
        # entering family pinned by v at t = 0, the other by z at t = T
        pinned_v = 2.0 * fine.U[s] @ fine.C_invsqrt[s] @ v0_fine[s]
        pinned_z = 2.0 * fine.D[s] * (fine.U[s] @ fine.C_sqrt[s] @ zT_fine[s])
        if rightward:
            r[0, 6:] = pinned_v - r[0, :6]
            r[-1, :6] = r[-1, 6:] + pinned_z
        else:
            r[0, :6] = pinned_v - r[0, 6:]
            r[-1, 6:] = r[-1, :6] - pinned_z

    y = np.empty((nt_inner + 1, db.n_samples, 12))
    y[:, k0] = inner_trace
    r = np.einsum("ij,tj->ti", fine.L[start], inner_trace)
    step = 1 if rightward else -1
    s = start
    for m in range(1, fine.n_samples):
        s_next = s + step
        offsets = h / fine.speeds[s_next]
        # Heun step in x: transport along the characteristics, then correct the source
        src = x_rhs(s, r)
        moved = _shift_in_t(r, inner_t, offsets)
        moved_src = _shift_in_t(src, inner_t, offsets)
        predicted = moved + h * moved_src
        close(s_next, predicted)
        r = moved + 0.5 * h * (moved_src + x_rhs(s_next, predicted))
        close(s_next, r)
        _check_bound(r, blowup_bound, f"Beam {db.index} sidewise at x={fine.x[s_next]:.6g}")
        if m % refine == 0:
            coarse = s_next // refine
            y[:, coarse] = np.einsum("ij,tj->ti", fine.Linv[s_next], r)
        s = s_next

    if resampled:
        y = CubicSpline(inner_t, y, axis=0)(ts)
        y[:, k0] = trace
    logger.info(
        f"Sidewise {direction} solve on beam {db.index}: {nx_cells} cells "
        f"(refinement {refine}), {nt_inner} inner time steps"
    )
    return BeamField(beam=db.index, x=db.x, t=ts, y=y, L=db.L)


def characteristic_curve(db: DiagonalizedBeam, t0: float) -> FloatArray:
    """Samples of ``t(x) = t0 - int_0^x Lambda``, with ``Lambda = 1 / min_k |lambda_k|``."""
    return t0 - cumulative_trapezoid(1.0 / db.min_speed, db.x, initial=0.0)


def restrict_to_characteristic_domain(
    field: BeamField, t_curve: ArrayLike, tol: float = 1e-12
) -> np.ma.MaskedArray:
    """Mask the samples of ``field`` lying above the curve ``t_curve(x)``."""
    curve = np.asarray(t_curve, dtype=float)
    scale = tol * max(1.0, float(np.max(np.abs(field.t))))
    outside = field.t[:, None] > curve[None, :] + scale
    mask = np.broadcast_to(outside[:, :, None], field.y.shape)
    return np.ma.masked_array(field.y, mask=mask)
