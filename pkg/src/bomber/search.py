"""Grid scan followed by golden-section refinement, vectorised over problems."""

from __future__ import annotations

import numpy as np

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def maximize(g, lo, hi, n_scan=65, tol=1e-10):
    """Maximise ``g`` independently on each interval ``[lo[i], hi[i]]``.

    ``g(y)`` is called with a 2-D array whose row ``i`` holds candidate points
    for interval ``i`` and must return values of the same shape.  A uniform
    scan of ``n_scan`` points (endpoints included) picks the best node, ties
    going to the larger ``y``; golden-section search then refines inside the
    two neighbouring scan cells.  The refined point only replaces the scan
    winner when strictly better.

    Returns ``(argmax, max)`` as 1-D arrays.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    if np.any(hi < lo):
        raise ValueError("maximize needs lo <= hi")
    m = lo.size
    frac = np.linspace(0.0, 1.0, n_scan)
    width = hi - lo
    ys = lo[:, None] + width[:, None] * frac[None, :]
    ys[:, -1] = hi
    vals = np.asarray(g(ys), dtype=float)
    # reversed argmax gives the last (largest-y) maximiser
    k = n_scan - 1 - np.argmax(vals[:, ::-1], axis=1)
    rows = np.arange(m)
    best_y = ys[rows, k]
    best_v = vals[rows, k]

    a = ys[rows, np.maximum(k - 1, 0)]
    b = ys[rows, np.minimum(k + 1, n_scan - 1)]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = g(c[:, None])[:, 0]
    fd = g(d[:, None])[:, 0]
    while np.any(b - a > tol):
        right = fc <= fd
        a = np.where(right, c, a)
        b = np.where(right, b, d)
        new_c = np.where(right, d, b - INV_PHI * (b - a))
        new_d = np.where(right, a + INV_PHI * (b - a), c)
        f_new = g(np.where(right, new_d, new_c)[:, None])[:, 0]
        fc, fd = np.where(right, fd, f_new), np.where(right, f_new, fc)
        c, d = new_c, new_d
    y_ref = 0.5 * (a + b)
    v_ref = g(y_ref[:, None])[:, 0]
    better = v_ref > best_v
    return np.where(better, y_ref, best_y), np.where(better, v_ref, best_v)
