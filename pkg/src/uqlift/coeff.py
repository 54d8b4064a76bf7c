"""Separable uncertain coefficient a(x,z) = sum_i a_i(z) b_i(x) and its sampling.

The model carries a small closed catalog of basis and coefficient functions so
that configurations stay serializable; see `basis_from_config` and
`coeff_fn_from_config`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

Array = np.ndarray


@dataclass
class CoefficientModel:
    """a(x,z) = sum_{i<L} coeff_fns[i](z) * basis[i](x) on x in [0,1]^d.

    a_min/a_max are the configured bounds on every a_i(z); they drive the
    p-domain truncation radius and the advection q-basis, not the sampling law.
    """

    d: int
    L: int
    basis: Sequence[Callable[[Array], Array]]
    coeff_fns: Sequence[Callable[[Array], float]]
    bound_C: float
    a_min: float = 0.5
    a_max: float = 1.5
    n_z: int | None = None
    allow_negative_basis: bool = False

    def __post_init__(self):
        if self.L < 1 or self.d < 1:
            raise ConfigError(f"malformed model: L={self.L}, d={self.d}")
        if len(self.basis) != self.L or len(self.coeff_fns) != self.L:
            raise ConfigError("basis/coeff_fns length must equal L")
        if not (self.bound_C > 0):
            raise ConfigError("bound_C must be positive")
        if self.n_z is None:
            self.n_z = self.L

    def coeff_values(self, z: Array) -> Array:
        """a_i(z) for one sample z, shape (L,)."""
        z = np.asarray(z, dtype=float).ravel()
        return np.array([fn(z) for fn in self.coeff_fns], dtype=float)

    def coeff_matrix(self, samples: "SampleSet") -> Array:
        """a_i(z_m) for all samples, shape (M, L)."""
        return np.array([self.coeff_values(z) for z in samples.samples])

    def basis_values(self, x: Array) -> Array:
        """b_i at points x (shape (m, d)), result shape (L, m)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.array([b(x) for b in self.basis])


@dataclass
class SampleSet:
    """M i.i.d. draws of the random input z; reproducible from (seed, law)."""

    samples: Array
    M: int
    seed: int
    distribution_tag: str

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] != self.M:
            raise ConfigError("sample count does not match M")


@dataclass
class ValidationReport:
    positivity_violations: list = field(default_factory=list)  # (i, m, value)
    bound_violations: list = field(default_factory=list)  # (m, sum_sq)
    basis_violations: list = field(default_factory=list)  # (i, x_index, value)

    @property
    def ok(self) -> bool:
        return not (self.positivity_violations or self.bound_violations or self.basis_violations)


def sample_inputs(model: CoefficientModel, M: int, seed: int, law: dict | None = None) -> SampleSet:
    """Draw M samples of z from the declared law; deterministic in (seed, law, M)."""
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    law = dict(law or {"name": "uniform", "low": 0.5, "high": 1.5})
    name = law.get("name")
    rng = np.random.default_rng(seed)
    if name == "uniform":
        lo, hi = float(law.get("low", 0.5)), float(law.get("high", 1.5))
        z = rng.uniform(lo, hi, size=(M, model.n_z))
    elif name == "normal":
        mu, sigma = float(law.get("mean", 1.0)), float(law.get("std", 0.1))
        z = rng.normal(mu, sigma, size=(M, model.n_z))
    else:
        raise ConfigError(f"unsupported sampling law: {name!r}")
    tag = json.dumps(law, sort_keys=True)
    return SampleSet(samples=z, M=M, seed=seed, distribution_tag=tag)


def validate_model(model: CoefficientModel, probe: SampleSet, x_probe: Array | None = None) -> ValidationReport:
    """List every positivity/bound violation of the invariants on the probe set.

    Sample indices in the report are 1-based to match the (i, m) convention.
    """
    if probe.M < 1 or len(probe.samples) == 0:
        raise ConfigError("probe set must be non-empty")
    report = ValidationReport()
    for m, z in enumerate(probe.samples, start=1):
        a = model.coeff_values(z)
        for i in range(model.L):
            if not (a[i] > 0):
                report.positivity_violations.append((i + 1, m, float(a[i])))
        ssq = float(np.sum(a * a))
        if ssq > model.bound_C * (1 + 1e-12):
            report.bound_violations.append((m, ssq))
    if not model.allow_negative_basis:
        if x_probe is None:
            x_probe = np.linspace(0.0, 1.0, 17)[:, None] * np.ones((1, model.d))
        bv = model.basis_values(x_probe)
        for i in range(model.L):
            bad = np.where(bv[i] <= 0)[0]
            for j in bad:
                report.basis_violations.append((i + 1, int(j), float(bv[i][j])))
    return report


def evaluate_coefficient(model: CoefficientModel, x: Array, z: Array) -> float:
    """a(x,z) as the left-to-right sum of a_i(z) b_i(x) at a single point x."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != model.d:
        raise ConfigError(f"x must have dimension d={model.d}")
    a = model.coeff_values(z)
    total = 0.0
    for i in range(model.L):
        total += float(a[i]) * float(model.basis[i](x)[0])
    return total


def coefficient_field(model: CoefficientModel, x: Array, z: Array) -> Array:
    """a(x,z) at many points x (shape (m, d)); vectorized counterpart."""
    a = model.coeff_values(z)
    bv = model.basis_values(x)
    return np.tensordot(a, bv, axes=(0, 0))


# --- catalogs -------------------------------------------------------------

def basis_from_config(spec: dict, d: int) -> Callable[[Array], Array]:
    """Named basis functions b_i over [0,1]^d; all positive by construction
    unless amplitude pushes them negative (validated elsewhere)."""
    name = spec.get("name")
    if name == "constant":
        c = float(spec.get("value", 1.0))
        return lambda x: np.full(x.shape[0], c)
    if name == "sine_plus":
        # 1 + amp*sin(2 pi k x_axis); positive for |amp| < 1
        k = int(spec.get("mode", 1))
        amp = float(spec.get("amp", 0.5))
        axis = int(spec.get("axis", 0))
        return lambda x: 1.0 + amp * np.sin(2 * np.pi * k * x[:, axis])
    if name == "linear_ramp":
        c0 = float(spec.get("offset", 1.0))
        c1 = float(spec.get("slope", 0.5))
        axis = int(spec.get("axis", 0))
        return lambda x: c0 + c1 * x[:, axis]
    raise ConfigError(f"unknown basis function: {name!r}")


def coeff_fn_from_config(spec: dict) -> Callable[[Array], float]:
    """Named coefficient functions a_i over the random-input space."""
    name = spec.get("name")
    if name == "component":
        i = int(spec.get("index", 0))
        return lambda z: float(z[i])
    if name == "constant":
        c = float(spec.get("value", 1.0))
        return lambda z: c
    if name == "square":
        i = int(spec.get("index", 0))
        return lambda z: float(z[i]) ** 2
    if name == "affine":
        i = int(spec.get("index", 0))
        c0 = float(spec.get("offset", 0.0))
        c1 = float(spec.get("scale", 1.0))
        return lambda z: c0 + c1 * float(z[i])
    raise ConfigError(f"unknown coefficient function: {name!r}")


def model_from_config(cfg: dict) -> CoefficientModel:
    """Build a CoefficientModel from a config dictionary."""
    d, L = int(cfg["d"]), int(cfg["L"])
    basis_cfg = cfg.get("basis") or [{"name": "constant"}] * L
    coeff_cfg = cfg.get("coeff_fns") or [{"name": "component", "index": i} for i in range(L)]
    if len(basis_cfg) != L or len(coeff_cfg) != L:
        raise ConfigError("basis/coeff_fns config lists must have length L")
    return CoefficientModel(
        d=d,
        L=L,
        basis=[basis_from_config(b, d) for b in basis_cfg],
        coeff_fns=[coeff_fn_from_config(c) for c in coeff_cfg],
        bound_C=float(cfg.get("bound_C", L * float(cfg.get("a_max", 1.5)) ** 2)),
        a_min=float(cfg.get("a_min", 0.5)),
        a_max=float(cfg.get("a_max", 1.5)),
        n_z=cfg.get("n_z"),
        allow_negative_basis=bool(cfg.get("allow_negative_basis", False)),
    )


def default_model(d: int = 1, L: int = 1, a_min: float = 0.5, a_max: float = 1.5) -> CoefficientModel:
    """a_i(z) = z_i with constant unit basis; the standard test model."""
    return CoefficientModel(
        d=d,
        L=L,
        basis=[(lambda x: np.ones(x.shape[0])) for _ in range(L)],
        coeff_fns=[(lambda z, i=i: float(z[i])) for i in range(L)],
        bound_C=L * a_max**2 * 1.0001,
        a_min=a_min,
        a_max=a_max,
    )
