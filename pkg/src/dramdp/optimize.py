"""Row-vectorized golden-section search for concave 1-D maximization."""

from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo, hi, tol: float = 1e-10, max_iter: int = 300):
    """Maximize independent concave functions on per-row brackets.

    ``f`` maps an array of abscissae (one per row) to an array of values.
    Returns ``(argmax, max)``; the reported maximum is the best value seen,
    including both bracket ends, so it never exceeds the true supremum.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    best_x = lo.copy()
    best_f = f(lo)
    f_hi = f(hi)
    upd = f_hi > best_f
    best_x[upd], best_f[upd] = hi[upd], f_hi[upd]

    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(hi))):
            break
        right = f2 > f1
        # keep [x1, hi] where f2 wins, [lo, x2] otherwise
        lo = np.where(right, x1, lo)
        hi = np.where(right, hi, x2)
        new_x1 = np.where(right, x2, hi - INV_PHI * (hi - lo))
        new_x2 = np.where(right, lo + INV_PHI * (hi - lo), x1)
        f_new = f(np.where(right, new_x2, new_x1))
        f1, f2 = np.where(right, f2, f_new), np.where(right, f_new, f1)
        x1, x2 = new_x1, new_x2
        for x, fx in ((x1, f1), (x2, f2)):
            upd = fx > best_f
            best_x[upd], best_f[upd] = x[upd], fx[upd]
    return best_x, best_f
