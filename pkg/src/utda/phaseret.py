"""Unrolled two-stage sparse phase retrieval with learnable step sizes.

Each of the K layers takes the current estimate ``x_k`` and

1. picks a support ``S = supp(H_L(x_k - alpha1_k * grad C_A(x_k)))`` where
   ``C_A(x) = ||z - |Ax|||^2 / (2 Ny)`` and ``z = sqrt(y)``;
2. refines amplitudes on ``S`` with a ridge-regularized Newton direction ``p``
   of the intensity loss ``||y - |Ax|^2||^2 / (4 Ny)``:
   ``x_{k+1}(S) = x_k(S) - alpha2_k * p``, zero elsewhere.

The sparsity ``L`` is fixed, supplied per sample, estimated from an auxiliary
Cauchy sketch ``y_c = |A_c x|^2 + noise``, or regressed from ``y`` directly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgument, InvalidState
from .numcore import (MlpSpec, hard_threshold_topl, mlp_backward, mlp_forward, mlp_init,
                      rng_stream, softplus_inv)

SPARSITY_SOURCES = ("fixed", "given", "estimator", "direct")
ESTIMATOR_HIDDEN = (32,)
DIRECT_HIDDEN = (128, 32)
CANDIDATE_FACTOR = 5
INIT_SWEEPS = (20, 11)


@dataclass
class PrProblem:
    A: np.ndarray
    Ac: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        self.Ac = np.ascontiguousarray(self.Ac, dtype=np.float64)
        if self.A.shape[1] != self.Ac.shape[1] or min(self.A.shape[0], self.Ac.shape[0]) == 0:
            raise InvalidArgument("A and A_c need the same Nx and nonzero row counts")

    @property
    def nx(self):
        return self.A.shape[1]

    @property
    def ny(self):
        return self.A.shape[0]

    @property
    def nyc(self):
        return self.Ac.shape[0]


def pr_measure(prob, x, rng=None):
    """Intensity measurements ``(|A x|^2 + eta, |A_c x|^2 + eta_c)`` for a vector or batch."""
    x = np.asarray(x, dtype=np.float64)
    y = (x @ prob.A.T) ** 2
    yc = (x @ prob.Ac.T) ** 2
    if prob.sigma > 0:
        if rng is None:
            raise InvalidArgument("noisy measurements need an rng")
        y = y + prob.sigma * rng.standard_normal(y.shape)
        yc = yc + prob.sigma * rng.standard_normal(yc.shape)
    return y, yc


def amplitude_loss(A, z, x):
    return float(np.sum((z - np.abs(A @ x)) ** 2) / (2 * A.shape[0]))


def amplitude_loss_grad(A, z, x):
    """Gradient of ``||z - |Ax|||^2 / (2 Ny)``; works row-wise on batches."""
    u = x @ A.T
    return ((np.abs(u) - z) * np.sign(u)) @ A / A.shape[0]


def intensity_loss(A, y, x):
    return float(np.sum((y - (A @ x) ** 2) ** 2) / (4 * A.shape[0]))


def support_step(A, z, x_k, alpha1, L):
    if not 1 <= L <= A.shape[1]:
        raise InvalidArgument(f"support size must satisfy 1 <= L <= {A.shape[1]}")
    _, S = hard_threshold_topl(x_k - alpha1 * amplitude_loss_grad(A, z, x_k), L)
    return S


def intensity_grad_hess(A, y, x, S):
    """Gradient and Hessian of the intensity loss restricted to the index set ``S``."""
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        raise InvalidArgument("support must be nonempty")
    u = A @ x
    ny = A.shape[0]
    g = A[:, S].T @ ((u * u - y) * u) / ny
    AS = A[:, S]
    H = AS.T @ ((3 * u * u - y)[:, None] * AS) / ny
    return g, H


def amplitude_step(x_k, S, g_S, H_SS, alpha2):
    """Ridge-Newton amplitude refinement on ``S``. Returns ``(x_next, fell_back)``."""
    S = np.asarray(S, dtype=np.int64)
    n = len(S)
    mu = 1e-6 * np.trace(H_SS) / n
    fell_back = False
    try:
        p = np.linalg.solve(H_SS + mu * np.eye(n), g_S)
        if not np.all(np.isfinite(p)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        p, fell_back = np.asarray(g_S, dtype=np.float64), True
    out = np.zeros_like(np.asarray(x_k, dtype=np.float64))
    out[S] = x_k[S] - alpha2 * p
    return out, fell_back


# --------------------------------------------------------------------------
# sparsity estimation
# --------------------------------------------------------------------------

def sparsity_ratio(y, yc):
    """``median(sqrt|y_c|)^2 * Ny / ||sqrt(y)||^2`` with negative intensities clamped to 0.

    This is the estimate of ``||x||_1^2 / ||x||_2^2`` for unit scale constants.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    yc = np.atleast_2d(np.asarray(yc, dtype=np.float64))
    energy = np.maximum(y, 0.0).sum(axis=1)
    if np.any(energy <= 0):
        raise InvalidArgument("sparsity estimate needs a nonzero measurement vector")
    med = np.median(np.sqrt(np.abs(yc)), axis=1)
    return med ** 2 * y.shape[1] / energy


def sparsity_estimate(y, yc, gamma_c, gamma_g, b, nx=None):
    """Integer sparsity estimate ``ceil(T1^2 / T2^2 + b)`` clamped to ``[1, nx]``."""
    if np.any(np.asarray(gamma_c) <= 0) or np.any(np.asarray(gamma_g) <= 0):
        raise InvalidArgument("scale constants must be positive")
    single = np.asarray(y).ndim == 1
    ratio = sparsity_ratio(y, yc) * (np.asarray(gamma_g) / np.asarray(gamma_c)) ** 2
    est = np.ceil(ratio + b)
    est = np.maximum(est, 1) if nx is None else np.clip(est, 1, nx)
    est = est.astype(np.int64)
    return int(est[0]) if single else est


def estimator_features(y, yc):
    """Input to the scale network: sorted ``log1p`` of the clamped intensities ``[y; y_c]``.

    Rows of each sketch are exchangeable, so the order statistics carry all the
    scale information; sorting lets the network form robust quantile estimates
    instead of relearning them from a fixed row order.
    """
    def part(v):
        return np.sort(np.log1p(np.maximum(v, 0.0)), axis=1)
    return np.concatenate([part(y), part(yc)], axis=1)


# --------------------------------------------------------------------------
# unrolled network
# --------------------------------------------------------------------------

def _gather_cols(A, S):
    A_ext = np.concatenate([A, np.zeros((A.shape[0], 1))], axis=1)
    return np.transpose(A_ext[:, S], (1, 0, 2))


def _sign_fit(AS, z, a, iters):
    """Alternate ``s = sign(A_S a)`` and the least-squares fit ``A_S a ~ z * s``."""
    G = np.einsum("bia,bic->bac", AS, AS)
    for _ in range(iters):
        s = np.sign(np.einsum("bia,ba->bi", AS, a))
        rhs = np.einsum("bia,bi->ba", AS, z * s)
        a = np.linalg.solve(G, rhs[..., None])[..., 0]
    return a


def initial_estimate(A, y, L, candidates=CANDIDATE_FACTOR, sweeps=INIT_SWEEPS):
    """Starting point for the first layer.

    The ``candidates * L`` coordinates with the largest centered marginal
    statistic ``mean_i (y_i - mean y)(A_ij^2 - mean_i A_ij^2)`` form a candidate
    set. The leading eigenvector of ``A_C^T diag(y) A_C`` seeds alternating
    sign / least-squares fits of ``A_C a`` to ``sqrt(y)``; the ``L`` largest
    entries give the support, refit the same way.
    """
    Y = np.atleast_2d(y)
    ny, nx = A.shape
    n = len(Y)
    L = np.broadcast_to(np.asarray(L, dtype=np.int64), (n,))
    z = np.sqrt(np.maximum(Y, 0.0))
    A2 = A * A
    marg = (Y - Y.mean(axis=1, keepdims=True)) @ (A2 - A2.mean(axis=0)) / ny
    X = np.zeros((n, nx + 1))
    # group by sparsity so each group has a dense candidate set
    for l in np.unique(L):
        rows = np.flatnonzero(L == l)
        m = int(min(nx, candidates * l))
        C = kernels.topl_support(marg[rows], np.full(len(rows), m))
        AC = _gather_cols(A, C)
        Q = np.einsum("bia,bi,bic->bac", AC, Y[rows], AC) / ny
        _, vecs = np.linalg.eigh(Q)
        lead = _sign_fit(AC, z[rows], vecs[:, :, -1], sweeps[0])
        wide = np.zeros((len(rows), nx))
        np.put_along_axis(wide, C, lead, axis=1)
        S = kernels.topl_support(wide, np.full(len(rows), l))
        amp = _sign_fit(_gather_cols(A, S), z[rows], np.take_along_axis(wide, S, axis=1),
                        sweeps[1])
        block = np.zeros((len(rows), nx + 1))
        np.put_along_axis(block, S, amp, axis=1)
        X[rows] = block
    return X[:, :nx]


@dataclass
class PrCache:
    generation: int
    Y: np.ndarray
    L: np.ndarray
    layers: list
    single: bool = False
    consumed: bool = False


@dataclass
class PrModel:
    K: int
    source: str
    params: dict
    nx: int
    L_fixed: int = None
    mlp_spec: MlpSpec = None
    generation: int = field(default=0, compare=False)
    fallbacks: int = field(default=0, compare=False)

    kind = "pr"

    def __post_init__(self):
        if self.source not in SPARSITY_SOURCES:
            raise InvalidArgument(f"unknown sparsity source {self.source!r}")
        for name in ("alpha1", "alpha2"):
            if self.params[name].shape != (self.K,):
                raise InvalidArgument(f"{name} must have length K={self.K}")
        if self.source == "fixed" and not (self.L_fixed and 1 <= self.L_fixed <= self.nx):
            raise InvalidArgument("fixed sparsity source needs 1 <= L <= Nx")

    def param_count(self):
        return int(sum(a.size for a in self.params.values()))

    def touch(self):
        self.generation += 1

    def project(self):
        pass

    @property
    def step_blocks(self):
        return ("alpha1", "alpha2")

    @property
    def estimator_blocks(self):
        return tuple(k for k in self.params if k not in self.step_blocks)

    # -- sparsity resolution
    def estimator_raw(self, Y, Yc):
        """Pre-ceiling estimate ``ratio * (gamma_g/gamma_c)^2 + b`` and its pieces."""
        gam, mc = mlp_forward(self.mlp_spec, self.params, estimator_features(Y, Yc),
                              prefix="gamma.")
        ratio = sparsity_ratio(Y, Yc)
        scale = (gam[:, 1] / gam[:, 0]) ** 2
        return ratio * scale + self.params["se_bias"][0], (gam, ratio, scale, mc)

    def direct_raw(self, Y):
        out, mc = mlp_forward(self.mlp_spec, self.params, Y, prefix="direct.")
        return out[:, 0], mc

    def resolve_sparsity(self, Y, Yc=None, L=None):
        n = len(Y)
        if self.source == "fixed":
            return np.full(n, self.L_fixed, dtype=np.int64)
        if self.source == "given":
            if L is None:
                raise InvalidArgument("given-sparsity model needs L per sample")
            return np.broadcast_to(np.asarray(L, dtype=np.int64), (n,)).copy()
        if self.source == "estimator":
            if Yc is None:
                raise InvalidArgument("estimator model needs the Cauchy measurements y_c")
            raw, _ = self.estimator_raw(Y, np.atleast_2d(Yc))
            return np.clip(np.ceil(raw), 1, self.nx).astype(np.int64)
        raw, _ = self.direct_raw(Y)
        return np.clip(np.rint(raw), 1, self.nx).astype(np.int64)

    # -- unrolled pass
    def initial(self, prob, y, yc=None, L=None):
        """Sparsity per sample and the first-layer input; independent of the step sizes."""
        Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if Y.shape[1] != prob.ny or prob.nx != self.nx:
            raise InvalidArgument("measurement/operator dims do not match the model")
        Lhat = self.resolve_sparsity(Y, None if yc is None else np.atleast_2d(yc), L)
        return Lhat, initial_estimate(prob.A, Y, Lhat)

    def forward(self, prob, y, yc=None, L=None, start=None):
        """Run the K layers. ``start`` may carry a precomputed ``initial(...)`` result."""
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        Y = y[None, :] if single else y
        if start is None:
            start = self.initial(prob, Y, yc, L)
        Lhat, X = start
        if len(X) != len(Y) or Y.shape[1] != prob.ny:
            raise InvalidArgument("starting point does not match the measurements")
        A = prob.A
        ny = A.shape[0]
        z = np.sqrt(np.maximum(Y, 0.0))
        a1, a2 = self.params["alpha1"], self.params["alpha2"]
        layers = []
        for k in range(self.K):
            u = X @ A.T
            grad = ((np.abs(u) - z) * np.sign(u)) @ A / ny
            S = kernels.topl_support(X - a1[k] * grad, Lhat)
            g, H, mu, p, flags = kernels.pr_newton(A, u, Y, S)
            self.fallbacks += int(flags.sum())
            valid = S >= 0
            Sx = np.where(valid, S, self.nx)
            X_ext = np.concatenate([X, np.zeros((len(X), 1))], axis=1)
            new_vals = np.take_along_axis(X_ext, Sx, axis=1) - a2[k] * p
            X_next = np.zeros_like(X_ext)
            np.put_along_axis(X_next, Sx, new_vals * valid, axis=1)
            layers.append((u, S, H, mu, p, flags))
            X = X_next[:, :self.nx]
        cache = PrCache(self.generation, Y, Lhat, layers, single)
        return (X[0] if single else X), cache

    def backward(self, prob, cache, grad_x):
        """Gradients for ``alpha1`` and ``alpha2`` of a scalar loss given ``dL/dx_hat``.

        Support selection is piecewise constant in ``alpha1``, so its gradient
        is identically zero; ``alpha2`` receives the exact pathwise gradient
        through every downstream Newton step.
        """
        if not isinstance(cache, PrCache):
            raise InvalidState("backward needs a cache from forward")
        if cache.consumed or cache.generation != self.generation:
            raise InvalidState("stale phase-retrieval cache")
        cache.consumed = True
        A = prob.A
        ny, nx = A.shape
        Y = cache.Y
        gX = np.asarray(grad_x, dtype=np.float64)
        if cache.single:
            gX = gX[None, :]
        a2 = self.params["alpha2"]
        g_a2 = np.zeros(self.K)
        for k in reversed(range(self.K)):
            u, S, H, mu, p, flags = cache.layers[k]
            valid = S >= 0
            Sx = np.where(valid, S, nx)
            gX_ext = np.concatenate([gX, np.zeros((len(gX), 1))], axis=1)
            gS = np.take_along_axis(gX_ext, Sx, axis=1) * valid
            g_a2[k] = -np.sum(gS * p)
            p_bar = -a2[k] * gS
            lmax = S.shape[1]
            eye = np.eye(lmax)
            M = H + mu[:, None, None] * eye * valid[:, None, :] + eye * (~valid)[:, None, :]
            newton = flags == 0
            g_bar = p_bar.copy()
            H_bar = np.zeros_like(H)
            if newton.any():
                q = np.linalg.solve(M[newton], p_bar[newton][..., None])[..., 0]
                g_bar[newton] = q
                M_bar = -q[:, :, None] * p[newton][:, None, :]
                counts = valid[newton].sum(axis=1)
                tr = np.trace(M_bar, axis1=1, axis2=2)
                diag = (1e-6 * tr / counts)[:, None] * valid[newton]
                H_bar[newton] = M_bar + eye * diag[:, None, :]
            AS = _gather_cols(A, S)
            w_bar = np.einsum("bia,bac,bic->bi", AS, H_bar, AS) / ny
            r_bar = np.einsum("bia,ba->bi", AS, g_bar) / ny
            u_bar = r_bar * (3 * u * u - Y) + w_bar * 6 * u
            gX_prev = np.zeros((len(gX), nx + 1))
            np.put_along_axis(gX_prev, Sx, gS, axis=1)
            gX = gX_prev[:, :nx] + u_bar @ A
        return {"alpha1": np.zeros(self.K), "alpha2": g_a2}

    def meta(self):
        return {"model": self.kind, "K": self.K, "source": self.source, "nx": self.nx,
                "L_fixed": self.L_fixed,
                "mlp": None if self.mlp_spec is None else list(self.mlp_spec.layer_sizes)}

    @classmethod
    def from_meta(cls, meta, params):
        spec = None if meta["mlp"] is None else MlpSpec(tuple(meta["mlp"]), "softplus")
        return cls(meta["K"], meta["source"], params, meta["nx"], meta["L_fixed"], spec)


def pr_init(prob, K, source="given", L=None, rng=None, alpha1=1.0, alpha2=1.0,
            hidden=None):
    params = {"alpha1": np.full(K, float(alpha1)), "alpha2": np.full(K, float(alpha2))}
    spec = None
    rng = rng if rng is not None else rng_stream(0)
    if source == "estimator":
        spec = MlpSpec((prob.ny + prob.nyc, *(hidden or ESTIMATOR_HIDDEN), 2), "softplus")
        params.update(mlp_init(spec, rng, prefix="gamma.", out_scale=1e-2,
                               out_bias=float(softplus_inv(1.0))))
        params["se_bias"] = np.zeros(1)
    elif source == "direct":
        spec = MlpSpec((prob.ny, *(hidden or DIRECT_HIDDEN), 1), "softplus")
        params.update(mlp_init(spec, rng, prefix="direct."))
    elif source not in ("fixed", "given"):
        raise InvalidArgument(f"unknown sparsity source {source!r}")
    return PrModel(K, source, params, prob.nx, L if source == "fixed" else None, spec)


def pr_forward(model, prob, y, yc=None, L=None):
    return model.forward(prob, y, yc, L)


# --------------------------------------------------------------------------
# sparsity-network training objectives (the separate first stage)
# --------------------------------------------------------------------------

def estimator_loss_grad(model, Y, Yc, L_true):
    """Mean squared error of the pre-ceiling estimate against the true sparsity."""
    raw, (gam, ratio, scale, mc) = model.estimator_raw(Y, Yc)
    err = raw - L_true
    n = len(Y)
    d_raw = 2.0 * err / n
    g_gam = np.empty_like(gam)
    g_gam[:, 0] = d_raw * ratio * scale * (-2.0 / gam[:, 0])
    g_gam[:, 1] = d_raw * ratio * scale * (2.0 / gam[:, 1])
    _, grads = mlp_backward(mc, g_gam)
    grads["se_bias"] = np.array([d_raw.sum()])
    return float(np.mean(err ** 2)), grads


def direct_loss_grad(model, Y, L_true):
    raw, mc = model.direct_raw(Y)
    err = raw - L_true
    _, grads = mlp_backward(mc, (2.0 * err / len(Y))[:, None])
    return float(np.mean(err ** 2)), grads
