"""Pure scipy fallback for the explicit march kernel."""
from __future__ import annotations

import numpy as np


def march_csr(B, f, u0, n_steps, record):
    """Iterate u <- B u + f for n_steps, collecting the slices listed in
    `record` (sorted time indices).  Returns (out, failing_step); failing_step
    is 0 on success, else the first step with a non-finite entry.
    """
    m = u0.shape[0]
    dtype = np.result_type(B.dtype, u0.dtype, f.dtype if f is not None else np.float64)
    x = u0.astype(dtype, copy=True)
    out = np.empty((len(record), m), dtype=dtype)
    r = 0
    if r < len(record) and record[r] == 0:
        out[0] = x
        r += 1
    for step in range(1, n_steps + 1):
        x = B @ x
        if f is not None:
            x += f
        if not np.isfinite(x).all():
            return out, step
        if r < len(record) and record[r] == step:
            out[r] = x
            r += 1
    return out, 0
