"""Superposed phase-space initial data and recovery of ensemble averages.

Kernel conventions (fixed so the continuum recovery integral reproduces the
ensemble mean exactly):

    heat/boltzmann:          (1/M) sum_m 2^{-L} prod_i a_i e^{-a_i |p_i|} * u0
    advection/schrodinger:   (1/M) sum_m prod_i a_i e^{-sqrt(a_i)(p_i+q_i)} * u0

p (and q) grids are cell-centered, so no node sits on the sign discontinuity
at p_i = 0.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass

import numpy as np

from . import assembly
from .coeff import CoefficientModel, SampleSet
from .errors import LayoutError, PositivityError, StateError
from .grid import PhaseSpaceGrid


@dataclass
class LiftedField:
    """Recorded time slices of the lifted solution, flattened row-major over
    (x multi-index, auxiliary multi-index, p multi-index)."""

    kind: str
    grid: PhaseSpaceGrid
    bc_x: str
    dims: dict
    values: np.ndarray           # (n_recorded, state_size)
    slice_indices: np.ndarray    # time indices of the recorded rows

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values))
        self.slice_indices = np.asarray(self.slice_indices, dtype=np.int64)
        if self.values.shape[0] != self.slice_indices.shape[0]:
            raise LayoutError("one recorded row required per slice index")

    @property
    def state_shape(self) -> tuple:
        return (*self.dims["x"], *self.dims["l"], *self.dims["p"])

    @property
    def state_size(self) -> int:
        return int(np.prod(self.state_shape, dtype=np.int64))

    def has_slice(self, n: int) -> bool:
        return bool(np.any(self.slice_indices == n))

    def slice(self, n: int) -> np.ndarray:
        hits = np.where(self.slice_indices == n)[0]
        if len(hits) == 0:
            raise StateError(f"time slice {n} is not populated")
        return self.values[hits[0]]

    def reshape(self, n: int) -> np.ndarray:
        return self.slice(n).reshape(self.state_shape)


@dataclass
class RecoveredField:
    """A recovered physical quantity over the x grid (plus the velocity index
    for boltzmann means)."""

    values: np.ndarray
    quantity: str
    kind: str
    time_index: int


def _eval_u0(u0, xpts, z):
    """Initial data may be shared, u0(x), or per-sample, u0(x, z)."""
    try:
        sig = inspect.signature(u0)
        nargs = len([p for p in sig.parameters.values()
                     if p.default is inspect.Parameter.empty])
    except (TypeError, ValueError):
        nargs = 1
    if nargs >= 2:
        return np.asarray(u0(xpts, z))
    return np.asarray(u0(xpts))


def _check_positive(a_mat):
    M, L = a_mat.shape
    for m in range(M):
        for i in range(L):
            if not (a_mat[m, i] > 0):
                raise PositivityError(i + 1, m + 1, float(a_mat[m, i]))


def _sym_kernel(a_row, p_nodes):
    """prod_i (1/2) a_i exp(-a_i |p_i|) over the p tensor grid."""
    L = len(a_row)
    arr = None
    for i in range(L):
        g = 0.5 * a_row[i] * np.exp(-a_row[i] * np.abs(p_nodes))
        arr = g if arr is None else arr[..., None] * g
    return arr


def _oneside_kernel(a_row, q_nodes, p_nodes):
    """prod_i a_i exp(-sqrt(a_i)(p_i + q_i)) over the (q, p) tensor grid,
    q axes first."""
    L = len(a_row)
    shape = (len(q_nodes),) * L + (len(p_nodes),) * L
    arr = np.ones(shape)
    for i in range(L):
        s = np.sqrt(a_row[i])
        gq = np.exp(-s * q_nodes)
        gp = a_row[i] * np.exp(-s * p_nodes)
        qshape = [1] * (2 * L)
        qshape[i] = len(q_nodes)
        pshape = [1] * (2 * L)
        pshape[L + i] = len(p_nodes)
        arr = arr * gq.reshape(qshape) * gp.reshape(pshape)
    return arr


def lift_initial(
    kind: str,
    model: CoefficientModel,
    samples: SampleSet,
    u0,
    grid: PhaseSpaceGrid,
    bc_x: str | None = None,
    quad=None,
    v_profile=None,
) -> LiftedField:
    """Build the superposed t=0 slice for the requested kind."""
    bc_x = bc_x or assembly.DEFAULT_BC[kind]
    a_mat = model.coeff_matrix(samples)
    _check_positive(a_mat)
    xpts = assembly.x_points(grid, bc_x)
    dims = assembly.state_dims(grid, bc_x)
    p_nodes = grid.p_nodes()
    M = samples.M

    acc = None
    for m in range(M):
        ux = _eval_u0(u0, xpts, samples.samples[m])
        if kind in ("heat", "boltzmann"):
            kern = _sym_kernel(a_mat[m], p_nodes).ravel()
            if kind == "heat":
                contrib = np.multiply.outer(ux, kern)
            else:
                vprof = np.ones(int(np.prod(dims["l"])))
                if v_profile is not None:
                    vprof = np.asarray(v_profile(quad.tensor_nodes(grid.d)))
                contrib = np.multiply.outer(ux, np.multiply.outer(vprof, kern))
        elif kind in ("advection", "schrodinger"):
            kern = _oneside_kernel(a_mat[m], grid.q_nodes(), p_nodes).ravel()
            contrib = np.multiply.outer(ux, kern)
        else:
            raise StateError(f"unknown kind {kind!r}")
        acc = contrib if acc is None else acc + contrib
    values = (acc / M).reshape(1, -1)
    return LiftedField(kind=kind, grid=grid, bc_x=bc_x, dims=dims,
                       values=values, slice_indices=np.array([0]))


def recover_mean(field: LiftedField, n: int) -> RecoveredField:
    """Quadrature recovery of the ensemble mean: cell-volume-weighted sums over
    the auxiliary indices.  Boltzmann means keep the velocity index."""
    grid = field.grid
    state = field.slice(n).reshape(field.state_shape)
    Lp = grid.L
    p_axes = tuple(range(state.ndim - Lp, state.ndim))
    if field.kind == "heat":
        vals = state.sum(axis=p_axes) * grid.dp**Lp
        return RecoveredField(vals, "mean", field.kind, n)
    if field.kind == "boltzmann":
        vals = state.sum(axis=p_axes) * grid.dp**Lp
        return RecoveredField(vals, "mean", field.kind, n)
    # advection / schrodinger: integrate q and p boxes
    ql_axes = tuple(range(len(field.dims["x"]), len(field.dims["x"]) + Lp))
    vals = state.sum(axis=p_axes + ql_axes) * (grid.dp**Lp) * (grid.dq**Lp)
    return RecoveredField(vals, "mean", field.kind, n)


def recover_boltzmann_moments(field: LiftedField, n: int, quad):
    """(density, flux, energy) by the velocity quadrature; flux carries one
    component per spatial dimension."""
    if field.kind != "boltzmann":
        raise StateError(f"moments require a boltzmann field, got {field.kind!r}")
    grid = field.grid
    fbar = recover_mean(field, n).values            # (x..., l...) already dp-weighted
    nx = int(np.prod(field.dims["x"]))
    nl = int(np.prod(field.dims["l"]))
    flat = fbar.reshape(nx, nl)
    w = quad.tensor_weights(grid.d)
    v = quad.tensor_nodes(grid.d)
    xshape = field.dims["x"]
    rho = (flat @ w).reshape(xshape)
    J = np.stack([(flat @ (w * v[:, al])).reshape(xshape) for al in range(grid.d)])
    E = (flat @ (w * 0.5 * np.sum(v * v, axis=1))).reshape(xshape)
    return (
        RecoveredField(rho, "density", field.kind, n),
        RecoveredField(J, "flux", field.kind, n),
        RecoveredField(E, "energy", field.kind, n),
    )


def verify_lift_identity(kind, model, samples, u0, grid, bc_x=None, quad=None,
                         v_profile=None) -> float:
    """Max-abs defect of quadrature recovery against the plain sample mean of
    the initial data at t = 0."""
    bc_x = bc_x or assembly.DEFAULT_BC[kind]
    field = lift_initial(kind, model, samples, u0, grid, bc_x=bc_x, quad=quad,
                         v_profile=v_profile)
    rec = recover_mean(field, 0).values
    xpts = assembly.x_points(grid, bc_x)
    ux = np.mean([_eval_u0(u0, xpts, z) for z in samples.samples], axis=0)
    if kind == "boltzmann":
        nl = int(np.prod(field.dims["l"]))
        vprof = np.ones(nl)
        if v_profile is not None:
            vprof = np.asarray(v_profile(quad.tensor_nodes(grid.d)))
        target = np.multiply.outer(ux, vprof).reshape(rec.shape)
    else:
        target = ux.reshape(rec.shape)
    return float(np.max(np.abs(rec - target)))


def ensemble_variance_advection(model, samples, u0, grid, t_final,
                                bc_x="periodic", **solver_kw) -> RecoveredField:
    """Ensemble variance of the advected solution from two lifted solves (mean
    of squares minus squared mean), clamped at zero.

    A degenerate ensemble (all samples identical) has zero variance by
    definition and short-circuits the solves.
    """
    from . import solve as _solve

    if np.all(samples.samples == samples.samples[0]):
        nx = assembly.x_point_count(grid, bc_x) ** grid.d
        return RecoveredField(np.zeros((nx,)).reshape(
            (assembly.x_point_count(grid, bc_x),) * grid.d), "variance", "advection", -1)

    def u0_sq(x, z=None):
        xpts = np.atleast_2d(x)
        vals = _eval_u0(u0, xpts, z)
        return vals * vals

    mean_field, info = _solve.solve_lifted_advection(
        model, samples, u0, grid, t_final, bc_x=bc_x, **solver_kw)
    m2_field, _ = _solve.solve_lifted_advection(
        model, samples, u0_sq, grid, t_final, bc_x=bc_x, **solver_kw)
    n = int(info["n_final"])
    mean = recover_mean(mean_field, n).values
    m2 = recover_mean(m2_field, n).values
    var = np.clip(m2 - mean * mean, 0.0, None)
    return RecoveredField(var, "variance", "advection", n)
