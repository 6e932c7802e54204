"""Pure NumPy implementations of the hot kernels.

These define the reference semantics; the compiled module ``_kernels`` must
agree with them (exactly for selection/thresholding, to rounding for the
restricted Newton solve).
"""

import numpy as np

RIDGE_SCALE = 1e-6


def soft_threshold(z, beta):
    """Elementwise ``sign(z) * max(|z| - beta, 0)`` with ``beta`` broadcast to ``z``."""
    z = np.asarray(z, dtype=np.float64)
    mag = np.abs(z) - beta
    return np.where(mag > 0.0, np.sign(z) * mag, 0.0)


def topl_support(v, L):
    """Indices of the ``L[b]`` largest-magnitude entries of each row of ``v``.

    Ties go to the lower index. Rows are returned sorted ascending and padded
    with -1 up to ``max(L)``.
    """
    v = np.asarray(v, dtype=np.float64)
    L = np.asarray(L, dtype=np.int64)
    lmax = int(L.max())
    order = np.argsort(-np.abs(v), axis=1, kind="stable")[:, :lmax]
    keep = np.arange(lmax)[None, :] < L[:, None]
    big = v.shape[1]
    sel = np.where(keep, order, big)
    sel.sort(axis=1)
    return np.where(sel == big, -1, sel).astype(np.int64)


def _gather_columns(A, support):
    # column -1 hits the appended zero column, so padding contributes nothing
    A_ext = np.concatenate([A, np.zeros((A.shape[0], 1))], axis=1)
    return np.transpose(A_ext[:, support], (1, 0, 2))  # (B, Ny, Lmax)


def pr_newton(A, u, y, support):
    """Restricted gradient/Hessian of the intensity loss and the ridge-Newton direction.

    For each sample with support S (padded by -1), with u = A x:
        g = (1/Ny) A_S^T [(u^2 - y) u]
        H = (1/Ny) A_S^T diag(3u^2 - y) A_S
        (H + mu I) p = g,  mu = 1e-6 * trace(H) / |S|
    Falls back to p = g where the solve fails; ``flags`` marks those samples.
    Padded positions of g, H and p are zero.
    """
    A = np.asarray(A, dtype=np.float64)
    ny = A.shape[0]
    valid = support >= 0
    counts = valid.sum(axis=1)
    AS = _gather_columns(A, support)
    r = (u * u - y) * u
    w = 3.0 * u * u - y
    g = np.einsum("bia,bi->ba", AS, r) / ny
    H = np.einsum("bia,bi,bic->bac", AS, w, AS) / ny
    mu = RIDGE_SCALE * np.trace(H, axis1=1, axis2=2) / counts
    lmax = support.shape[1]
    eye = np.eye(lmax)
    M = H + mu[:, None, None] * eye * valid[:, None, :] + eye * (~valid)[:, None, :]
    flags = np.zeros(len(support), dtype=np.int64)
    try:
        p = np.linalg.solve(M, g[..., None])[..., 0]
    except np.linalg.LinAlgError:
        p = np.empty_like(g)
        for b in range(len(g)):
            try:
                p[b] = np.linalg.solve(M[b], g[b])
            except np.linalg.LinAlgError:
                p[b] = g[b]
                flags[b] = 1
    bad = ~np.all(np.isfinite(p), axis=1)
    if bad.any():
        p[bad] = g[bad]
        flags[bad] = 1
    return g, H, mu, p, flags
