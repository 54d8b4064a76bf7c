"""March kernel selection: the compiled extension when importable, the pure
scipy loop otherwise.  Both produce bit-identical trajectories."""
from __future__ import annotations

import numpy as np

from . import _march_py
from .errors import InstabilityError

try:
    from . import _march_cy

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - environment without a C toolchain
    _march_cy = None
    HAVE_COMPILED = False

ACTIVE_KERNEL = "compiled" if HAVE_COMPILED else "python"


def march(B, f, u0, n_steps, record, force_python=False):
    """u^{n+1} = B u^n + f for n_steps steps; returns the slices listed in
    `record` (sorted iterable of step indices, 0 = initial).  Raises
    InstabilityError at the first non-finite step."""
    record = np.asarray(sorted(set(int(r) for r in record)), dtype=np.int64)
    if record.size and (record[0] < 0 or record[-1] > n_steps):
        raise ValueError("record indices must lie in [0, n_steps]")
    u0 = np.asarray(u0)
    use_compiled = (
        HAVE_COMPILED
        and not force_python
        and B.dtype == np.float64
        and not np.iscomplexobj(u0)
        and (f is None or not np.iscomplexobj(f))
    )
    if use_compiled:
        Bc = B.tocsr()
        data = np.asarray(Bc.data, dtype=np.float64)
        indices = np.asarray(Bc.indices, dtype=np.int64)
        indptr = np.asarray(Bc.indptr, dtype=np.int64)
        fv = np.zeros(0, dtype=np.float64) if f is None else np.asarray(f, dtype=np.float64)
        has_f = f is not None
        if not has_f:
            fv = np.zeros(u0.shape[0], dtype=np.float64)
        out = np.empty((len(record), u0.shape[0]), dtype=np.float64)
        bad = _march_cy.march_csr(
            data, indices, indptr, fv, has_f,
            np.asarray(u0, dtype=np.float64), int(n_steps), record, out,
        )
        if bad:
            raise InstabilityError(int(bad))
        return out
    out, bad = _march_py.march_csr(B, f, u0, int(n_steps), record)
    if bad:
        raise InstabilityError(int(bad))
    return out
