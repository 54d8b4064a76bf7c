"""Sparse assembly of the lifted time-stepping systems and their global
block-bidiagonal matrices, for all four PDE kinds.

State layout (row-major, slowest to fastest): x multi-index j, auxiliary
multi-index l (velocity ordinates for boltzmann, q for advection/schrodinger),
p multi-index k.  One explicit step is u^{n+1} = B u^n + f; the global system
stacks identity diagonal blocks with -B subdiagonal blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CFLError, ConfigError, ContractError, LayoutError, StateError
from .grid import PhaseSpaceGrid, check_cfl

DEFAULT_BC = {"heat": "dirichlet", "boltzmann": "periodic",
              "advection": "periodic", "schrodinger": "dirichlet"}


# --- velocity quadrature ---------------------------------------------------

@dataclass(frozen=True)
class VelocityQuadrature:
    """Symmetric discrete ordinates: Gauss-Legendre on (0,1) mirrored to
    (-1,0), per dimension; (1/2) sum of weights = 1 and no node at 0."""

    nodes: np.ndarray      # (2*N_ord,) signed, increasing
    weights: np.ndarray    # (2*N_ord,)
    N_ord: int

    def tensor_nodes(self, d: int) -> np.ndarray:
        """All d-dimensional ordinates, shape (count, d), row-major in the
        per-dimension index."""
        grids = np.meshgrid(*([self.nodes] * d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def tensor_weights(self, d: int) -> np.ndarray:
        w = self.weights
        out = w
        for _ in range(d - 1):
            out = np.einsum("i,j->ij", out, w).ravel()
        return out.ravel()


def build_velocity_quadrature(N_ord: int) -> VelocityQuadrature:
    if N_ord < 1:
        raise ConfigError("N_ord must be >= 1")
    x, w = np.polynomial.legendre.leggauss(N_ord)  # on [-1,1], sum w = 2
    vp = (x + 1.0) / 2.0                            # map to (0,1)
    wp = w / 2.0                                    # sum = 1 per half
    nodes = np.concatenate([-vp[::-1], vp])
    weights = np.concatenate([wp[::-1], wp])
    return VelocityQuadrature(nodes=nodes, weights=weights, N_ord=N_ord)


# --- 1-d difference operators ----------------------------------------------

def lap1d(n: int, h: float, bc: str) -> sp.csr_matrix:
    """Second difference (1, -2, 1)/h^2 with homogeneous Dirichlet truncation
    or periodic wrap."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if bc == "periodic" and n > 2:
        A[0, n - 1] = 1.0
        A[n - 1, 0] = 1.0
    return (A.tocsr()) / h**2


def diff1d(n: int, h: float, bc: str, direction: str) -> sp.csr_matrix:
    """One-sided or centered first difference.  Dirichlet drops the missing
    neighbor (zero boundary value); periodic wraps."""
    A = sp.lil_matrix((n, n))
    for j in range(n):
        if direction == "forward":
            A[j, j] = -1.0
            if j + 1 < n:
                A[j, j + 1] = 1.0
            elif bc == "periodic":
                A[j, 0] = 1.0
        elif direction == "backward":
            A[j, j] = 1.0
            if j - 1 >= 0:
                A[j, j - 1] = -1.0
            elif bc == "periodic":
                A[j, n - 1] = -1.0
        elif direction == "center":
            if j + 1 < n:
                A[j, j + 1] = 0.5
            elif bc == "periodic":
                A[j, 0] = 0.5
            if j - 1 >= 0:
                A[j, j - 1] = -0.5
            elif bc == "periodic":
                A[j, n - 1] = -0.5
        else:
            raise ConfigError(f"unknown difference direction {direction!r}")
    return (A.tocsr()) / h


def signed_upwind_p(N_p: int, dp: float, p_nodes: np.ndarray) -> sp.csr_matrix:
    """sign(p) d_p with the upwind neighbor toward +/- infinity: rows with
    p>0 take (k+1)-(k), rows with p<0 take (k-1)-(k); zero Dirichlet data
    beyond the far ends enters through the dropped neighbor."""
    A = sp.lil_matrix((N_p, N_p))
    for k in range(N_p):
        A[k, k] = -1.0
        if p_nodes[k] > 0:
            if k + 1 < N_p:
                A[k, k + 1] = 1.0
        else:
            if k - 1 >= 0:
                A[k, k - 1] = 1.0
    return (A.tocsr()) / dp


def d2_dirichlet(n: int, dp: float) -> sp.csr_matrix:
    return lap1d(n, dp, "dirichlet")


def d2_neumann_sym(n: int, dp: float) -> sp.csr_matrix:
    """Symmetric second difference with reflection (Neumann) closure at the
    left cell face and Dirichlet truncation at the right."""
    main = -2.0 * np.ones(n)
    main[0] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / dp**2


def d2_robin(n: int, dp: float, beta: float) -> sp.csr_matrix:
    """Symmetric second difference with the Robin closure d_p phi = -beta phi
    at the left face (ghost ratio (1+beta dp/2)/(1-beta dp/2)); supports the
    decaying bound state e^{-beta p} with eigenvalue ~ +beta^2."""
    if not (0 < beta * dp / 2 < 1):
        raise ConfigError("Robin closure requires beta*dp/2 in (0,1)")
    main = -2.0 * np.ones(n)
    main[0] += (1 + beta * dp / 2) / (1 - beta * dp / 2)
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / dp**2


def _kron_chain(ops: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    out = ops[0]
    for op in ops[1:]:
        out = sp.kron(out, op, format="csr")
    return out.tocsr()


def _kron_at(sizes: Sequence[int], slot: int, op: sp.spmatrix) -> sp.csr_matrix:
    ops = [sp.identity(s, format="csr") for s in sizes]
    ops[slot] = op
    return _kron_chain(ops)


# --- state geometry ---------------------------------------------------------

def x_point_count(grid: PhaseSpaceGrid, bc_x: str) -> int:
    return grid.N - 1 if bc_x == "dirichlet" else grid.N


def x_points(grid: PhaseSpaceGrid, bc_x: str) -> np.ndarray:
    """All x grid points, shape (n_x^d, d), row-major over dimensions."""
    if bc_x == "dirichlet":
        pts1 = (np.arange(1, grid.N)) * grid.h
    else:
        pts1 = np.arange(grid.N) * grid.h
    grids = np.meshgrid(*([pts1] * grid.d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def state_dims(grid: PhaseSpaceGrid, bc_x: str) -> dict:
    nx = x_point_count(grid, bc_x)
    dims = {"x": (nx,) * grid.d, "p": (grid.N_p,) * grid.L}
    if grid.kind == "boltzmann":
        dims["l"] = (grid.N_v,) * grid.d
    elif grid.kind in ("advection", "schrodinger"):
        dims["l"] = (grid.N_q,) * grid.L
    else:
        dims["l"] = ()
    return dims


def state_size(grid: PhaseSpaceGrid, bc_x: str) -> int:
    dims = state_dims(grid, bc_x)
    return int(np.prod([*dims["x"], *dims["l"], *dims["p"]], dtype=np.int64))


def eval_basis_on_grid(model, grid: PhaseSpaceGrid, bc_x: str) -> np.ndarray:
    """b_i at the x grid points, shape (L, n_x^d); raises unless positive
    (relaxable via the model flag)."""
    bv = model.basis_values(x_points(grid, bc_x))
    if not model.allow_negative_basis and np.any(bv <= 0):
        raise ConfigError("basis functions must be positive on the grid "
                          "(set allow_negative_basis to relax)")
    return bv


# --- linear system -----------------------------------------------------------

@dataclass
class LinearSystem:
    """One explicit time step u^{n+1} = B u^n + f plus the metadata needed to
    materialize the global block lower-bidiagonal matrix L and its rhs F."""

    kind: str
    grid: PhaseSpaceGrid
    B: sp.csr_matrix
    f: np.ndarray | None
    n_steps: int
    bc_x: str
    dims: dict
    A: sp.csr_matrix | None = None        # generator with B = I + tau*A
    H_op: sp.csr_matrix | None = None     # Hermitian spatial operator (schrodinger)
    u0: np.ndarray | None = None
    variant: str = "explicit"

    @property
    def block_size(self) -> int:
        return self.B.shape[0]

    @property
    def matrix_L(self) -> sp.csr_matrix:
        return self.global_matrix()

    @property
    def rhs_F(self) -> np.ndarray:
        return self.rhs_vector()

    def f_vector(self) -> np.ndarray:
        if self.f is None:
            return np.zeros(self.block_size, dtype=self.B.dtype)
        return self.f

    def trapezoidal_pair(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(P, Q) with P u^{n+1} = Q u^n for the implicit-midpoint step."""
        if self.A is None:
            raise StateError("system carries no generator for implicit stepping")
        I = sp.identity(self.block_size, format="csr", dtype=self.A.dtype)
        P = (I - (self.grid.tau / 2) * self.A).tocsc()
        Q = (I + (self.grid.tau / 2) * self.A).tocsr()
        return P, Q

    def global_matrix(self, variant: str | None = None) -> sp.csr_matrix:
        """Block lower-bidiagonal L over n_steps time blocks."""
        variant = variant or self.variant
        m, n = self.block_size, self.n_steps
        if variant == "trapezoidal":
            P, Q = self.trapezoidal_pair()
            diag_block, sub_block = P.tocsr(), (-Q).tocsr()
        else:
            diag_block = sp.identity(m, format="csr", dtype=self.B.dtype)
            sub_block = (-self.B).tocsr()
        rows = []
        for i in range(n):
            row = [None] * n
            row[i] = diag_block
            if i > 0:
                row[i - 1] = sub_block
            rows.append(row)
        return sp.bmat(rows, format="csr")

    def rhs_vector(self, variant: str | None = None) -> np.ndarray:
        """F = [f^1 + B u^0, f, ..., f]; requires u0 (see rhs_from_initial)."""
        if self.u0 is None:
            raise StateError("rhs requires the initial slice; call rhs_from_initial")
        variant = variant or self.variant
        f = self.f_vector()
        if variant == "trapezoidal":
            _, Q = self.trapezoidal_pair()
            first = f + Q @ self.u0
        else:
            first = f + self.B @ self.u0
        out = np.tile(f.astype(first.dtype), self.n_steps)
        out[: self.block_size] = first
        return out


def rhs_from_initial(system: LinearSystem, lifted) -> LinearSystem:
    """Attach the flattened t=0 slice of a LiftedField (or raw vector) as u^0."""
    u0 = lifted if isinstance(lifted, np.ndarray) else lifted.slice(0)
    if u0.shape[0] != system.block_size:
        raise LayoutError(
            f"initial slice size {u0.shape[0]} != state size {system.block_size}")
    return replace(system, u0=np.asarray(u0))


def dilate_to_hermitian(L: sp.spmatrix) -> sp.csr_matrix:
    """H = [[0, L], [L*, 0]]; eigenvalues are +/- the singular values of L."""
    L = L.tocsr()
    return sp.bmat([[None, L], [L.conj().T, None]], format="csr")


# --- assembly ----------------------------------------------------------------

def _x_laplacian(grid, bc_x, nx):
    return sum(
        _kron_at([nx] * grid.d, alpha, lap1d(nx, grid.h, bc_x))
        for alpha in range(grid.d)
    )


def _heat_generator(grid, basis_vals, bc_x):
    nx = x_point_count(grid, bc_x)
    nxs = nx**grid.d
    lap = _x_laplacian(grid, bc_x, nx)
    T = signed_upwind_p(grid.N_p, grid.dp, grid.p_nodes())
    A = None
    for i in range(grid.L):
        xop = sp.diags(basis_vals[i]) @ lap
        term = sp.kron(xop, _kron_at([grid.N_p] * grid.L, i, T), format="csr")
        A = term if A is None else A + term
    return (-A).tocsr(), nxs


def _boltzmann_generator(grid, basis_vals, quad, bc_x):
    nx = x_point_count(grid, bc_x)
    nxs = nx**grid.d
    vnodes = quad.tensor_nodes(grid.d)        # (nl, d)
    vweights = quad.tensor_weights(grid.d)    # (nl,)
    nl = vnodes.shape[0]
    nps = grid.N_p**grid.L
    Ip = sp.identity(nps, format="csr")
    # transport: per dimension, velocity-sign split upwinding in x
    A = None
    for alpha in range(grid.d):
        Db = diff1d(nx, grid.h, bc_x, "backward")
        Df = diff1d(nx, grid.h, bc_x, "forward")
        xb = _kron_at([nx] * grid.d, alpha, Db)
        xf = _kron_at([nx] * grid.d, alpha, Df)
        vp = sp.diags(np.maximum(vnodes[:, alpha], 0.0))
        vm = sp.diags(np.minimum(vnodes[:, alpha], 0.0))
        term = sp.kron(xb, sp.kron(vp, Ip)) + sp.kron(xf, sp.kron(vm, Ip))
        A = -term if A is None else A - term
    # collision: sign-split p-difference at fixed (j, k), all ordinates coupled
    # through the weight average (1/Omega) sum_l w_l = (1/2^d) sum
    wavg = sp.csr_matrix(np.tile(vweights / 2**grid.d, (nl, 1)))
    Icoll = sp.identity(nl, format="csr") - wavg
    T = signed_upwind_p(grid.N_p, grid.dp, grid.p_nodes())
    for i in range(grid.L):
        xop = sp.diags(basis_vals[i])
        pop = _kron_at([grid.N_p] * grid.L, i, T)
        A = A + sp.kron(xop, sp.kron(Icoll, pop))
    return A.tocsr(), nxs


def _advection_generator(grid, basis_vals, bc_x, x_diff, p0_bc):
    nx = x_point_count(grid, bc_x)
    Gx = sum(
        _kron_at([nx] * grid.d, alpha, diff1d(nx, grid.h, bc_x, x_diff))
        for alpha in range(grid.d)
    )
    nq = grid.N_q
    A = None
    for i in range(grid.L):
        xop = sp.diags(basis_vals[i]) @ Gx
        if p0_bc == "neumann_copy":
            D2 = d2_dirichlet(grid.N_p, grid.dp)
        else:
            D2 = d2_neumann_sym(grid.N_p, grid.dp)
        aux = sp.kron(sp.identity(nq**grid.L, format="csr"),
                      _kron_at([grid.N_p] * grid.L, i, D2), format="csr")
        term = sp.kron(xop, aux, format="csr")
        A = term if A is None else A + term
    return (-A).tocsr()


def _apply_neumann_copy(B: sp.csr_matrix, grid, nxs) -> sp.csr_matrix:
    """Replace every row with k_i = 0 by the row at k_i = 1, per p dimension
    (the reduction of the reflection condition used for the analysis matrix)."""
    B = B.tolil()
    nq = grid.N_q**grid.L
    pshape = (grid.N_p,) * grid.L
    for i in range(grid.L):
        for kmulti in np.ndindex(*pshape):
            if kmulti[i] != 0:
                continue
            src = list(kmulti)
            src[i] = 1
            k0 = int(np.ravel_multi_index(kmulti, pshape))
            k1 = int(np.ravel_multi_index(tuple(src), pshape))
            nps = int(np.prod(pshape))
            for j in range(nxs):
                for l in range(nq):
                    row0 = (j * nq + l) * nps + k0
                    row1 = (j * nq + l) * nps + k1
                    B.rows[row0] = list(B.rows[row1])
                    B.data[row0] = list(B.data[row1])
    return B.tocsr()


def _schrodinger_hamiltonian(grid, basis_vals, bc_x, hbar):
    nx = x_point_count(grid, bc_x)
    lap = _x_laplacian(grid, bc_x, nx)
    nq = grid.N_q**grid.L
    nps = grid.N_p**grid.L
    aux_id = sp.identity(nq * nps, format="csr")
    H = sp.kron(-(hbar**2 / 2) * lap, aux_id, format="csr")
    D2 = d2_neumann_sym(grid.N_p, grid.dp)
    for i in range(grid.L):
        xop = sp.diags(basis_vals[i])
        aux = sp.kron(sp.identity(nq, format="csr"),
                      _kron_at([grid.N_p] * grid.L, i, D2), format="csr")
        H = H + sp.kron(xop, aux, format="csr")
    return H.tocsr()


def assemble(
    kind: str,
    grid: PhaseSpaceGrid,
    basis_vals: np.ndarray,
    quad: VelocityQuadrature | None = None,
    bc_x: str | None = None,
    x_boundary=None,
    hbar: float = 1.0,
    p0_bc: str = "neumann_copy",
) -> LinearSystem:
    """Assemble the one-step matrix B (and generator where meaningful) for the
    named explicit scheme.  Refuses CFL-violating grids; tau = 0 is the
    degenerate no-dynamics test mode."""
    if kind != grid.kind:
        raise ConfigError(f"grid kind {grid.kind!r} does not match {kind!r}")
    ok, diag = check_cfl(grid)
    if not ok:
        raise CFLError(f"CFL violated: ratio {diag['ratio']:.3e} > bound {diag['bound']:.3e}")
    if kind == "boltzmann" and quad is None:
        raise ConfigError("boltzmann assembly requires a VelocityQuadrature")
    if kind != "boltzmann" and quad is not None:
        raise ConfigError(f"{kind} assembly takes no VelocityQuadrature")
    bc_x = bc_x or DEFAULT_BC[kind]
    basis_vals = np.atleast_2d(np.asarray(basis_vals, dtype=float))
    dims = state_dims(grid, bc_x)
    nx_total = int(np.prod(dims["x"]))
    if basis_vals.shape != (grid.L, nx_total):
        raise LayoutError(
            f"basis_vals shape {basis_vals.shape} != (L, n_x) = ({grid.L}, {nx_total})")

    tau = grid.tau
    H_op = None
    f = None
    if kind == "heat":
        A, nxs = _heat_generator(grid, basis_vals, bc_x)
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
        if x_boundary is not None:
            f = _heat_boundary_rhs(grid, basis_vals, bc_x, x_boundary)
    elif kind == "boltzmann":
        A, nxs = _boltzmann_generator(grid, basis_vals, quad, bc_x)
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
    elif kind == "advection":
        A = _advection_generator(grid, basis_vals, bc_x, "forward", p0_bc)
        B = (sp.identity(A.shape[0], format="csr") + tau * A).tocsr()
        if p0_bc == "neumann_copy":
            nxs = x_point_count(grid, bc_x)**grid.d
            B = _apply_neumann_copy(B, grid, nxs)
            A = None  # the copy rows are defined on B, not on a generator
    elif kind == "schrodinger":
        H_op = _schrodinger_hamiltonian(grid, basis_vals, bc_x, hbar)
        A = (-1j / hbar) * H_op
        B = (sp.identity(A.shape[0], format="csr", dtype=complex) + tau * A).tocsr()
    else:
        raise ConfigError(f"unknown PDE kind {kind!r}")

    B.sort_indices()
    return LinearSystem(
        kind=kind, grid=grid, B=B, f=f, n_steps=grid.N_t, bc_x=bc_x,
        dims=dims, A=(A.tocsr() if A is not None else None), H_op=H_op,
    )


def _heat_boundary_rhs(grid, basis_vals, bc_x, x_boundary):
    """Dirichlet boundary contributions for the 1-d heat scheme: the missing
    west/east neighbors of the extreme interior rows enter as
    -tau * b(x) * g_boundary(k') / h^2 through the p-upwind difference."""
    if grid.d != 1 or bc_x != "dirichlet":
        raise ConfigError("boundary data supported for 1-d Dirichlet heat only")
    g_left, g_right = (np.asarray(g, dtype=float) for g in x_boundary)
    if g_left.shape != (grid.N_p,) or g_right.shape != (grid.N_p,):
        raise LayoutError("boundary arrays must have shape (N_p,)")
    nx = grid.N - 1
    T = signed_upwind_p(grid.N_p, grid.dp, grid.p_nodes())
    f = np.zeros(nx * grid.N_p)
    for i in range(grid.L):
        contrib_l = -grid.tau * basis_vals[i][0] * (T @ g_left) / grid.h**2
        contrib_r = -grid.tau * basis_vals[i][-1] * (T @ g_right) / grid.h**2
        f[: grid.N_p] += contrib_l
        f[-grid.N_p:] += contrib_r
    return f


# --- hermiticity helper ------------------------------------------------------

def is_hermitian(A: sp.spmatrix, tol: float = 0.0) -> bool:
    A = A.tocsr()
    diff = (A - A.conj().T).tocoo()
    if diff.nnz == 0:
        return True
    return bool(np.max(np.abs(diff.data)) <= tol)
