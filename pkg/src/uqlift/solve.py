"""Time marching of the lifted systems, the global block solve, and the
per-sample direct solvers used as validation oracles.

Heat and boltzmann march explicitly (the schemes are dissipative under their
CFL bounds).  Schrodinger and the advection validation path use the implicit
midpoint rule: their lifted generators have (near-)imaginary spectra that
forward Euler amplifies.  The advection validation solver additionally
represents the q-direction in a fixed exponential basis; each basis function
turns the reflection condition at p_i = 0 into a symmetric Robin closure that
carries the transported bound state (a purely local difference closure either
loses the transport or is unstable; see the decisions ledger).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, kernels
from .assembly import LinearSystem, VelocityQuadrature
from .coeff import CoefficientModel, SampleSet
from .errors import CFLError, ConfigError, PositivityError, StateError
from .grid import PhaseSpaceGrid, check_cfl
from .lift import LiftedField, _eval_u0, lift_initial


def _record_indices(n_steps: int, record) -> list[int]:
    if record == "all":
        return list(range(n_steps + 1))
    if record == "final":
        return [0, n_steps]
    if isinstance(record, int):
        idx = list(range(0, n_steps + 1, record))
        if idx[-1] != n_steps:
            idx.append(n_steps)
        return idx
    return sorted(set(int(r) for r in record))


def march_explicit(system: LinearSystem, initial: np.ndarray, n_steps: int | None = None,
                   record="all") -> LiftedField:
    """Explicit march u^{n+1} = B u^n + f; aborts on the first non-finite step."""
    ok, diag = check_cfl(system.grid)
    if not ok:
        raise CFLError(f"CFL violated: {diag}")
    n_steps = system.n_steps if n_steps is None else int(n_steps)
    rec = _record_indices(n_steps, record)
    out = kernels.march(system.B, system.f, np.asarray(initial), n_steps, rec)
    return LiftedField(kind=system.kind, grid=system.grid, bc_x=system.bc_x,
                       dims=system.dims, values=out,
                       slice_indices=np.asarray(rec))


def solve_block_forward(system: LinearSystem) -> np.ndarray:
    """Solve L U = F by forward block substitution; returns the stacked
    trajectory (n_steps, state) = (u^1, ..., u^{n_steps})."""
    if system.u0 is None:
        raise StateError("rhs requires the initial slice; call rhs_from_initial")
    F = system.rhs_vector()
    m, n = system.block_size, system.n_steps
    out = np.empty((n, m), dtype=F.dtype)
    out[0] = F[:m]
    for i in range(1, n):
        out[i] = system.B @ out[i - 1] + F[i * m:(i + 1) * m]
    return out


def march_trapezoidal(system: LinearSystem, initial: np.ndarray,
                      n_steps: int | None = None, record="all",
                      tau: float | None = None) -> LiftedField:
    """Implicit-midpoint march (I - tau A/2) u^{n+1} = (I + tau A/2) u^n."""
    if system.A is None:
        raise StateError("system carries no generator for implicit stepping")
    n_steps = system.n_steps if n_steps is None else int(n_steps)
    tau = system.grid.tau if tau is None else float(tau)
    I = sp.identity(system.block_size, format="csr", dtype=system.A.dtype)
    P = (I - (tau / 2) * system.A).tocsc()
    Q = (I + (tau / 2) * system.A).tocsr()
    lu = spla.splu(P)
    rec = _record_indices(n_steps, record)
    x = np.asarray(initial, dtype=P.dtype)
    out = np.empty((len(rec), x.shape[0]), dtype=P.dtype)
    r = 0
    if rec and rec[0] == 0:
        out[0] = x
        r = 1
    for step in range(1, n_steps + 1):
        x = lu.solve(Q @ x)
        if r < len(rec) and rec[r] == step:
            out[r] = x
            r += 1
    return LiftedField(kind=system.kind, grid=system.grid, bc_x=system.bc_x,
                       dims=system.dims, values=out, slice_indices=np.asarray(rec))


def march_trapezoidal_schrodinger(system: LinearSystem, initial: np.ndarray,
                                  n_steps: int | None = None, record="all",
                                  tau: float | None = None) -> LiftedField:
    if system.kind != "schrodinger":
        raise ConfigError("stepper reserved for the schrodinger generator")
    return march_trapezoidal(system, initial, n_steps=n_steps, record=record, tau=tau)


# --- advection validation solver ---------------------------------------------

def _advection_beta_grid(model: CoefficientModel, R: int, pad: float = 0.15):
    lo = np.sqrt(model.a_min) * (1 - pad)
    hi = np.sqrt(model.a_max) * (1 + pad)
    return np.linspace(lo, hi, R)


def _fit_exponential_profile(g, s_nodes, betas, rcond):
    """Least-squares fit of g(s) over exp(-beta_r s); returns coefficients and
    the relative fit residual."""
    X = np.exp(-np.outer(s_nodes, betas))
    coef, *_ = np.linalg.lstsq(X, g, rcond=rcond)
    resid = np.linalg.norm(X @ coef - g) / max(np.linalg.norm(g), 1e-300)
    return coef, resid


def solve_lifted_advection(
    model: CoefficientModel,
    samples: SampleSet,
    u0,
    grid: PhaseSpaceGrid,
    t_final: float,
    bc_x: str = "periodic",
    R: int = 12,
    n_steps: int | None = None,
    rcond: float = 1e-8,
    record="final",
    pad: float = 0.15,
) -> tuple[LiftedField, dict]:
    """March the lifted advection problem to t_final and reconstruct the field
    on the (q, p) grid.  Supports L >= 1 via a tensor-product beta grid."""
    if grid.kind != "advection":
        raise ConfigError("grid kind must be advection")
    a_mat = model.coeff_matrix(samples)
    if np.any(a_mat <= 0):
        bad = np.argwhere(a_mat <= 0)[0]
        raise PositivityError(int(bad[1]) + 1, int(bad[0]) + 1,
                              float(a_mat[bad[0], bad[1]]))

    L = grid.L
    betas = _advection_beta_grid(model, R, pad)
    p = grid.p_nodes()
    q = grid.q_nodes()
    xpts = assembly.x_points(grid, bc_x)
    nx = assembly.x_point_count(grid, bc_x)
    dims = assembly.state_dims(grid, bc_x)

    # per-sample tensor fit of the separable s-profiles
    # prod_i a_i exp(-sqrt(a_i) s_i)  over  prod_i exp(-beta_{r_i} s_i),
    # combined with the per-sample initial data into one field per beta node
    sgrid = np.linspace(p[0] + q[0], p[-1] + q[-1], 4 * grid.N_p)
    shape_r = (R,) * L
    design_1d = np.exp(-np.outer(sgrid, betas))         # (ns, R)
    X = design_1d
    for _ in range(L - 1):
        X = np.kron(X, design_1d)
    coef_u = np.zeros(shape_r + (nx**grid.d,))
    fit_resid = 0.0
    for m in range(samples.M):
        target = None
        for i in range(L):
            gi = a_mat[m, i] * np.exp(-np.sqrt(a_mat[m, i]) * sgrid)
            target = gi if target is None else np.multiply.outer(target, gi)
        cm, *_ = np.linalg.lstsq(X, target.ravel(), rcond=rcond)
        fit_resid = max(fit_resid, float(
            np.linalg.norm(X @ cm - target.ravel()) / np.linalg.norm(target)))
        ux_m = _eval_u0(u0, xpts, samples.samples[m])
        coef_u += np.multiply.outer(cm.reshape(shape_r), ux_m) / samples.M

    if n_steps is None:
        n_steps = max(32, int(np.ceil(4 * t_final * model.a_max * grid.d / grid.h)))
    tau = t_final / n_steps

    basis_vals = assembly.eval_basis_on_grid(model, grid, bc_x)
    Gx = None
    for alpha in range(grid.d):
        term = assembly._kron_at([nx] * grid.d, alpha,
                                 assembly.diff1d(nx, grid.h, bc_x, "center"))
        Gx = term if Gx is None else Gx + term

    rec = _record_indices(n_steps, record)
    nq_total = grid.N_q**L
    np_total = grid.N_p**L
    Wslices = np.zeros((len(rec), nx**grid.d, nq_total, np_total))

    for rmulti in np.ndindex(*shape_r):
        ux_r = coef_u[rmulti]
        if not np.any(ux_r):
            continue
        # p-part initial profile and q-part reconstruction weights
        pprof = None
        qprof = None
        for i in range(L):
            b = betas[rmulti[i]]
            gp = np.exp(-b * p)
            gq = np.exp(-b * q)
            pprof = gp if pprof is None else np.multiply.outer(pprof, gp)
            qprof = gq if qprof is None else np.multiply.outer(qprof, gq)
        A = None
        for i in range(L):
            xop = sp.diags(basis_vals[i]) @ Gx
            pop = assembly._kron_at([grid.N_p] * L, i,
                                    assembly.d2_robin(grid.N_p, grid.dp, betas[rmulti[i]]))
            term = sp.kron(xop, pop, format="csr")
            A = term if A is None else A + term
        A = (-A).tocsc()
        I = sp.identity(A.shape[0], format="csc")
        lu = spla.splu((I - tau / 2 * A).tocsc())
        Q = (I + tau / 2 * A).tocsr()
        phi = np.multiply.outer(ux_r, pprof.ravel()).ravel()
        ridx = 0
        if rec and rec[0] == 0:
            Wslices[0] += np.multiply.outer(
                phi.reshape(nx**grid.d, np_total), qprof.ravel()).transpose(0, 2, 1)
            ridx = 1
        for step in range(1, n_steps + 1):
            phi = lu.solve(Q @ phi)
            if ridx < len(rec) and rec[ridx] == step:
                Wslices[ridx] += np.multiply.outer(
                    phi.reshape(nx**grid.d, np_total), qprof.ravel()).transpose(0, 2, 1)
                ridx += 1

    field = LiftedField(kind="advection", grid=grid, bc_x=bc_x, dims=dims,
                        values=Wslices.reshape(len(rec), -1),
                        slice_indices=np.asarray(rec))
    info = {"fit_residual": float(fit_resid), "n_steps": n_steps, "tau": tau,
            "n_final": n_steps, "betas": betas, "R": R}
    return field, info


# --- lifted pipeline driver ----------------------------------------------------

def lifted_solve(kind, model, samples, u0, grid, t_final, bc_x=None, quad=None,
                 record="final", v_profile=None, **kw):
    """Lift, march to t_final with the kind's validated stepper, and return
    (field, info).  info['n_final'] indexes the slice at (or nearest above)
    t_final; info['t_final'] is the time actually reached."""
    bc_x = bc_x or assembly.DEFAULT_BC[kind]
    t0 = time.perf_counter()
    if kind == "advection":
        field, info = solve_lifted_advection(model, samples, u0, grid, t_final,
                                             bc_x=bc_x, record=record, **kw)
        info["t_final"] = t_final
        info["wall_time"] = time.perf_counter() - t0
        return field, info
    basis_vals = assembly.eval_basis_on_grid(model, grid, bc_x)
    system = assembly.assemble(kind, grid, basis_vals, quad=quad, bc_x=bc_x)
    lift_t0 = time.perf_counter()
    init = lift_initial(kind, model, samples, u0, grid, bc_x=bc_x, quad=quad,
                        v_profile=v_profile)
    lift_time = time.perf_counter() - lift_t0
    n_steps = int(round(t_final / grid.tau))
    n_steps = max(n_steps, 1)
    if kind == "schrodinger":
        field = march_trapezoidal(system, init.slice(0).astype(complex),
                                  n_steps=n_steps, record=record)
    else:
        field = march_explicit(system, init.slice(0), n_steps=n_steps, record=record)
    info = {"n_final": n_steps, "t_final": n_steps * grid.tau,
            "lift_time": lift_time, "wall_time": time.perf_counter() - t0,
            "state_size": system.block_size,
            "trajectory_bytes": int(field.values.nbytes)}
    return field, info


# --- direct (non-lifted) solvers -----------------------------------------------

@dataclass
class DirectSolution:
    """Per-sample solution of the original PDE on the (n, j) grid."""

    kind: str
    values: np.ndarray          # (n_recorded, state)
    slice_indices: np.ndarray
    times: np.ndarray
    scheme: str
    bc_x: str

    def slice(self, n: int) -> np.ndarray:
        hits = np.where(self.slice_indices == n)[0]
        if len(hits) == 0:
            raise StateError(f"slice {n} not recorded")
        return self.values[hits[0]]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _coefficient_on_grid(model, grid, bc_x, z):
    from .coeff import coefficient_field

    return coefficient_field(model, assembly.x_points(grid, bc_x), z)


def solve_direct_sample(kind, model, z, u0, grid, t_final=1.0, bc_x=None,
                        quad=None, record="final", hbar=1.0,
                        v_profile=None) -> DirectSolution:
    """Solve the original PDE for one sample with a matching-order scheme."""
    bc_x = bc_x or assembly.DEFAULT_BC[kind]
    a_vals = model.coeff_values(z)
    if np.any(a_vals <= 0):
        i = int(np.argmin(a_vals))
        raise PositivityError(i + 1, 1, float(a_vals[i]))
    ax = _coefficient_on_grid(model, grid, bc_x, z)
    nx = assembly.x_point_count(grid, bc_x)
    xpts = assembly.x_points(grid, bc_x)
    ux = _eval_u0(u0, xpts, z)
    h = grid.h
    amax = float(np.max(ax))

    if kind == "heat":
        lap = assembly._x_laplacian(grid, bc_x, nx)
        A = sp.diags(ax) @ lap
        tau_max = h * h / (4 * grid.d * amax)
        n = max(1, int(np.ceil(t_final / tau_max)))
        tau = t_final / n
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
        rec = _record_indices(n, record)
        out = kernels.march(B, None, ux, n, rec)
        scheme = "forward-euler/center-laplacian"
    elif kind == "advection":
        G = None
        for alpha in range(grid.d):
            term = assembly._kron_at([nx] * grid.d, alpha,
                                     assembly.diff1d(nx, h, bc_x, "backward"))
            G = term if G is None else G + term
        A = -sp.diags(ax) @ G
        tau_max = h / (grid.d * amax)
        n = max(1, int(np.ceil(t_final / tau_max - 1e-12)))
        tau = t_final / n
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
        rec = _record_indices(n, record)
        out = kernels.march(B, None, ux, n, rec)
        scheme = "forward-euler/upwind"
    elif kind == "boltzmann":
        if quad is None:
            raise ConfigError("boltzmann direct solve requires a VelocityQuadrature")
        vnodes = quad.tensor_nodes(grid.d)
        vweights = quad.tensor_weights(grid.d)
        nl = vnodes.shape[0]
        T = None
        for alpha in range(grid.d):
            Db = assembly._kron_at([nx] * grid.d, alpha, assembly.diff1d(nx, h, bc_x, "backward"))
            Df = assembly._kron_at([nx] * grid.d, alpha, assembly.diff1d(nx, h, bc_x, "forward"))
            vp = sp.diags(np.maximum(vnodes[:, alpha], 0.0))
            vm = sp.diags(np.minimum(vnodes[:, alpha], 0.0))
            term = sp.kron(Db, vp) + sp.kron(Df, vm)
            T = term if T is None else T + term
        wavg = sp.csr_matrix(np.tile(vweights / 2**grid.d, (nl, 1)))
        C = sp.kron(sp.diags(ax), wavg - sp.identity(nl))
        A = -T + C
        tau_max = 1.0 / (grid.d / h + 2 * amax)
        n = max(1, int(np.ceil(t_final / tau_max)))
        tau = t_final / n
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
        vprof = np.ones(nl) if v_profile is None else np.asarray(v_profile(vnodes))
        f0 = np.multiply.outer(ux, vprof).ravel()
        rec = _record_indices(n, record)
        out = kernels.march(B, None, f0, n, rec)
        scheme = "forward-euler/upwind+ordinates"
    elif kind == "schrodinger":
        lap = assembly._x_laplacian(grid, bc_x, nx)
        H = (-(hbar**2) / 2) * lap + sp.diags(ax)
        A = (-1j / hbar) * H.tocsr()
        tau_max = h * h / (4 * grid.d)
        n = max(1, int(np.ceil(t_final / tau_max)))
        tau = t_final / n
        I = sp.identity(A.shape[0], format="csc", dtype=complex)
        lu = spla.splu((I - tau / 2 * A).tocsc())
        Q = (I + tau / 2 * A).tocsr()
        rec = _record_indices(n, record)
        x = ux.astype(complex)
        out = np.empty((len(rec), x.shape[0]), dtype=complex)
        r = 0
        if rec and rec[0] == 0:
            out[0] = x
            r = 1
        for step in range(1, n + 1):
            x = lu.solve(Q @ x)
            if r < len(rec) and rec[r] == step:
                out[r] = x
                r += 1
        scheme = "trapezoidal/center"
    else:
        raise ConfigError(f"unknown PDE kind {kind!r}")

    rec = np.asarray(_record_indices(n, record))
    return DirectSolution(kind=kind, values=out, slice_indices=rec,
                          times=rec * tau, scheme=scheme, bc_x=bc_x)


def ensemble_direct(kind, model, samples, u0, grid, t_final=1.0, bc_x=None,
                    quad=None, hbar=1.0, v_profile=None):
    """Arithmetic mean of M direct solutions at t_final, fixed summation
    order; returns (mean_values, per_sample_info)."""
    bc_x = bc_x or assembly.DEFAULT_BC[kind]
    total = None
    infos = []
    for m, z in enumerate(samples.samples):
        t0 = time.perf_counter()
        try:
            sol = solve_direct_sample(kind, model, z, u0, grid, t_final,
                                      bc_x=bc_x, quad=quad, record="final",
                                      hbar=hbar, v_profile=v_profile)
        except Exception as exc:
            raise type(exc)(f"sample {m + 1}: {exc}") from exc
        infos.append({"sample": m + 1, "wall_time": time.perf_counter() - t0})
        total = sol.final.copy() if total is None else total + sol.final
    return total / samples.M, infos
