"""Mesh selection from an accuracy budget and CFL admissibility checks.

Resolution rules (all big-O constants set to 1, CFL safety factors set to the
admissibility bounds under which the spectral estimates hold):

    heat/advection/boltzmann:  N = ceil((L*d/eps)^(1/r))
    schrodinger:               N = ceil(((d+L)/eps)^(1/r))

    heat:        tau = h^3 / (4 d L)        (lambda = tau/h^3 <= 1/(4 d L))
    boltzmann:   tau = h / max(L, d)        (lambda = tau/h   <= 1/max(L, d))
    advection:   tau = h^3 / (4 L d)
    schrodinger: tau = h^2 / (4 (d + L))
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import CapacityError, CFLError, ConfigError

KINDS = ("heat", "boltzmann", "advection", "schrodinger")

# largest admissible total index count (time * state), int64 guard
MAX_INDEX = 2**63 - 1


@dataclass(frozen=True)
class AccuracyBudget:
    epsilon: float
    r: int = 1

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ConfigError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.r < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """All mesh counts and steps for one PDE kind.

    x lives on [0,1]^d with N points per dimension (h = 1/N).  The auxiliary
    p-domain is [-P_max, P_max]^L for heat/boltzmann (cell-centered, dp =
    2 P_max / N_p) and [0, P_max]^L one-sided for advection/schrodinger
    (cell-centered, dp = P_max / N_p, plus a congruent q-domain).  Velocity
    ordinates (boltzmann) count N_v nodes per dimension.
    """

    kind: str
    d: int
    L: int
    N: int
    N_p: int
    N_t: int
    h: float
    dp: float
    tau: float
    P_max: float
    N_q: int = 0
    N_v: int = 0
    dq: float = 0.0
    dv: float = 0.0
    D: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown PDE kind {self.kind!r}")
        object.__setattr__(self, "D", self.d * self.L)

    @property
    def is_symmetric_p(self) -> bool:
        return self.kind in ("heat", "boltzmann")

    def p_nodes(self):
        import numpy as np

        if self.is_symmetric_p:
            return -self.P_max + (np.arange(self.N_p) + 0.5) * self.dp
        return (np.arange(self.N_p) + 0.5) * self.dp

    def q_nodes(self):
        import numpy as np

        return (np.arange(self.N_q) + 0.5) * self.dq

    def with_steps(self, n_steps: int) -> "PhaseSpaceGrid":
        """Same spatial grid, truncated time horizon (T = n_steps * tau <= 1)."""
        return replace(self, N_t=int(n_steps))


def _cfl_bound(kind: str, d: int, L: int) -> tuple[int, float]:
    """(power of h, admissible ratio bound) for tau / h^power."""
    if kind in ("heat", "advection"):
        return 3, 1.0 / (4 * d * L)
    if kind == "boltzmann":
        return 1, 1.0 / max(L, d)
    if kind == "schrodinger":
        return 2, 1.0 / (4 * (d + L))
    raise ConfigError(f"unknown PDE kind {kind!r}")


def check_cfl(grid: PhaseSpaceGrid) -> tuple[bool, dict]:
    """Inclusive CFL admissibility test; diagnostic carries ratio and bound."""
    power, bound = _cfl_bound(grid.kind, grid.d, grid.L)
    ratio = grid.tau / grid.h**power
    ok = ratio <= bound * (1 + 1e-9)
    return ok, {"ratio": ratio, "bound": bound, "h_power": power, "kind": grid.kind}


def select_grid(
    kind: str,
    d: int,
    L: int,
    budget: AccuracyBudget,
    trunc_tol: float,
    a_min: float = 1.0,
) -> PhaseSpaceGrid:
    """Resolution from the error relations, time step from the CFL bound,
    truncation radius from the kernel decay rate (sqrt(a_min) for the
    one-sided kinds)."""
    if kind not in KINDS:
        raise ConfigError(f"unknown PDE kind {kind!r}")
    if not (0 < trunc_tol < 1):
        raise ConfigError("trunc_tol must lie in (0,1)")
    K = (d + L) if kind == "schrodinger" else L * d
    N = math.ceil((K / budget.epsilon) ** (1.0 / budget.r))
    N = max(N, 2)
    h = 1.0 / N

    power, bound = _cfl_bound(kind, d, L)
    # N_t integer with N_t * tau = 1 exactly
    N_t = math.ceil(round(1.0 / (bound * h**power), 9))
    tau = 1.0 / N_t

    rate = math.sqrt(a_min) if kind in ("advection", "schrodinger") else a_min
    P_max = max(1.0, math.log(1.0 / trunc_tol) / rate)

    N_p = N_q = N_v = N
    if kind in ("heat", "boltzmann"):
        dp = 2 * P_max / N_p
    else:
        dp = P_max / N_p
    dq = P_max / N_q if kind in ("advection", "schrodinger") else 0.0
    dv = 2.0 / N_v if kind == "boltzmann" else 0.0

    state = N**d * N_p**L
    if kind == "boltzmann":
        state *= N_v**d
    if kind in ("advection", "schrodinger"):
        state *= N_q**L
    if state * N_t > MAX_INDEX:
        raise CapacityError(
            f"index space {state} x {N_t} exceeds the 64-bit budget"
        )

    grid = PhaseSpaceGrid(
        kind=kind,
        d=d,
        L=L,
        N=N,
        N_p=N_p,
        N_t=N_t,
        h=h,
        dp=dp,
        tau=tau,
        P_max=P_max,
        N_q=N_q if kind in ("advection", "schrodinger") else 0,
        N_v=N_v if kind == "boltzmann" else 0,
        dq=dq,
        dv=dv,
    )
    ok, diag = check_cfl(grid)
    if not ok:
        raise CFLError(f"internal: selected grid violates CFL: {diag}")
    return grid


def make_grid(
    kind: str,
    d: int,
    L: int,
    N: int,
    N_p: int,
    P_max: float,
    tau: float | None = None,
    N_t: int | None = None,
    N_q: int | None = None,
    N_v: int | None = None,
) -> PhaseSpaceGrid:
    """Explicit grid constructor for tests and custom runs; tau defaults to the
    CFL bound, N_t to round(1/tau)."""
    h = 1.0 / N
    power, bound = _cfl_bound(kind, d, L)
    if tau is None:
        tau = bound * h**power
    if N_t is None:
        N_t = max(1, round(1.0 / tau))
    if kind in ("heat", "boltzmann"):
        dp = 2 * P_max / N_p
    else:
        dp = P_max / N_p
    N_q = N_q if N_q is not None else (N_p if kind in ("advection", "schrodinger") else 0)
    N_v = N_v if N_v is not None else (N if kind == "boltzmann" else 0)
    dq = P_max / N_q if N_q else 0.0
    dv = 2.0 / N_v if N_v else 0.0
    return PhaseSpaceGrid(
        kind=kind, d=d, L=L, N=N, N_p=N_p, N_t=int(N_t), h=h, dp=dp,
        tau=float(tau), P_max=P_max, N_q=N_q, N_v=N_v, dq=dq, dv=dv,
    )
