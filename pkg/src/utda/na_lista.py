"""ISTA, tied-weight LISTA and its noise-adaptive threshold predictors.

The unrolled network computes, from ``x^0 = 0``,

    x^{k+1} = S_{beta_k}(W1 y + W2 x^k),   k = 0..K-1

where the thresholds come from one of three sources:

``fixed``
    a per-element vector ``beta`` (length Nx) shared by all layers.
``ptda``
    an MLP over ``[y; sigma]`` emitting K positive per-layer scalars.
``ddtda``
    an MLP over ``y`` alone emitting K positive per-layer scalars.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState
from .numcore import (MlpSpec, mlp_backward, mlp_forward, mlp_init, rng_stream,
                      soft_threshold, softplus_inv, spectral_norm_sq)

THRESHOLD_SOURCES = ("fixed", "ptda", "ddtda")
DEFAULT_HIDDEN = (64, 32)
INIT_LAMBDA = 0.1
KAPPA_FACTOR = 1.001


@dataclass
class CsProblem:
    """Linear compressed-sensing operator ``A`` (Ny x Nx) and step constant ``kappa``."""

    A: np.ndarray
    kappa: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        ny, nx = self.A.shape
        if ny > nx:
            raise InvalidArgument(f"compressed sensing needs Ny <= Nx, got {ny}x{nx}")
        if not self.kappa > spectral_norm_sq(self.A):
            raise InvalidArgument("kappa must exceed the largest eigenvalue of A^T A")

    @classmethod
    def from_matrix(cls, A, factor=KAPPA_FACTOR):
        return cls(A, factor * spectral_norm_sq(A))

    @property
    def nx(self):
        return self.A.shape[1]

    @property
    def ny(self):
        return self.A.shape[0]


def ista_solve(prob, y, lam, iters):
    """Plain ISTA from zero: ``x <- S_{lam/kappa}(A^T y / kappa + (I - A^T A / kappa) x)``."""
    if lam <= 0 or iters < 1:
        raise InvalidArgument("ista_solve needs lam > 0 and iters >= 1")
    A, kappa = prob.A, prob.kappa
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != A.shape[0]:
        raise InvalidArgument(f"measurement length {y.shape[-1]} != Ny={A.shape[0]}")
    x = np.zeros(y.shape[:-1] + (A.shape[1],))
    thr = lam / kappa
    for _ in range(iters):
        step = x - ((x @ A.T - y) @ A) / kappa
        x = np.sign(step) * np.maximum(np.abs(step) - thr, 0.0)
    return x


def ista_iterates(prob, y, lam, iters):
    """Every ISTA iterate x^1..x^iters, computed with the textbook W1/W2 splitting."""
    A, kappa = prob.A, prob.kappa
    W1 = A.T / kappa
    W2 = np.eye(A.shape[1]) - A.T @ A / kappa
    x = np.zeros(A.shape[1])
    out = []
    for _ in range(iters):
        v = W1 @ y + W2 @ x
        x = np.sign(v) * np.maximum(np.abs(v) - lam / kappa, 0.0)
        out.append(x)
    return out


def visushrink_beta(sigma, nx, kappa):
    """Universal threshold ``sigma * sqrt(2 ln Nx) / kappa``."""
    if sigma < 0 or kappa <= 0:
        raise InvalidArgument("visushrink needs sigma >= 0 and kappa > 0")
    return sigma * np.sqrt(2.0 * np.log(nx)) / kappa


@dataclass
class ListaCache:
    generation: int
    y: np.ndarray
    Z: list
    X_in: list
    beta: list
    mlp_cache: object = None
    single: bool = False
    consumed: bool = False


@dataclass
class ListaModel:
    K: int
    source: str
    params: dict
    kappa: float
    mlp_spec: MlpSpec = None
    generation: int = field(default=0, compare=False)

    kind = "lista"

    def __post_init__(self):
        if self.source not in THRESHOLD_SOURCES:
            raise InvalidArgument(f"unknown threshold source {self.source!r}")
        if self.K < 1:
            raise InvalidArgument("LISTA needs K >= 1")
        W1, W2 = self.params["W1"], self.params["W2"]
        nx, ny = W1.shape
        if W2.shape != (nx, nx):
            raise InvalidArgument("W2 must be Nx x Nx")
        if self.source == "fixed":
            if self.params["beta"].shape != (nx,):
                raise InvalidArgument("fixed threshold vector must have length Nx")
        else:
            expected_in = ny + 1 if self.source == "ptda" else ny
            s = self.mlp_spec
            if s is None or s.layer_sizes[0] != expected_in or s.layer_sizes[-1] != self.K \
                    or s.output_activation != "softplus":
                raise InvalidArgument("threshold predictor must map "
                                      f"{expected_in} inputs to K={self.K} softplus outputs")

    @property
    def nx(self):
        return self.params["W1"].shape[0]

    @property
    def ny(self):
        return self.params["W1"].shape[1]

    def param_count(self):
        return int(sum(a.size for a in self.params.values()))

    def touch(self):
        """Record an in-place parameter update (invalidates outstanding caches)."""
        self.generation += 1

    def project(self):
        if self.source == "fixed":
            np.maximum(self.params["beta"], 0.0, out=self.params["beta"])

    def thresholds(self, y, sigma=None):
        """Per-layer thresholds for a batch: list of K arrays broadcastable to (B, Nx)."""
        beta, _ = self._thresholds(np.atleast_2d(y), sigma)
        return beta

    def _thresholds(self, Y, sigma):
        if self.source == "fixed":
            return [self.params["beta"][None, :]] * self.K, None
        if self.source == "ptda":
            if sigma is None:
                raise InvalidArgument("P-TDA thresholds need the noise level sigma")
            sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64).reshape(-1), (len(Y),))
            inp = np.concatenate([Y, sig[:, None]], axis=1)
        else:
            inp = Y
        out, mc = mlp_forward(self.mlp_spec, self.params, inp, prefix="thr.")
        return [out[:, k:k + 1] for k in range(self.K)], mc

    def forward(self, y, sigma=None):
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        Y = y[None, :] if single else y
        if Y.shape[1] != self.ny:
            raise InvalidArgument(f"measurement length {Y.shape[1]} != Ny={self.ny}")
        betas, mc = self._thresholds(Y, sigma)
        W1, W2 = self.params["W1"], self.params["W2"]
        drive = Y @ W1.T
        X = np.zeros((len(Y), self.nx))
        Zs, Xin = [], []
        for k in range(self.K):
            Xin.append(X)
            Z = drive + X @ W2.T
            Zs.append(Z)
            X = soft_threshold(Z, betas[k])
        cache = ListaCache(self.generation, Y, Zs, Xin, betas, mc, single)
        return (X[0] if single else X), cache

    def backward(self, cache, grad_x):
        """Gradients of a scalar loss given ``dL/dx_hat``. Returns ``(grads, grad_y)``."""
        if not isinstance(cache, ListaCache):
            raise InvalidState("backward needs a cache from forward")
        if cache.consumed or cache.generation != self.generation:
            raise InvalidState("stale LISTA cache: parameters changed or cache reused")
        cache.consumed = True
        g = np.asarray(grad_x, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        W1, W2 = self.params["W1"], self.params["W2"]
        gW2 = np.zeros_like(W2)
        gz_sum = np.zeros_like(g)
        fixed = self.source == "fixed"
        g_beta = np.zeros(self.nx) if fixed else np.zeros((len(g), self.K))
        for k in reversed(range(self.K)):
            Z = cache.Z[k]
            gz = g * (np.abs(Z) > cache.beta[k])
            shrink = -np.sign(Z) * gz
            if fixed:
                g_beta += shrink.sum(axis=0)
            else:
                g_beta[:, k] = shrink.sum(axis=1)
            gW2 += gz.T @ cache.X_in[k]
            gz_sum += gz
            g = gz @ W2
        grads = {"W1": gz_sum.T @ cache.y, "W2": gW2}
        grad_y = gz_sum @ W1
        if fixed:
            grads["beta"] = g_beta
        else:
            g_in, mlp_grads = mlp_backward(cache.mlp_cache, g_beta)
            grads.update(mlp_grads)
            grad_y = grad_y + g_in[:, :self.ny]
        return grads, (grad_y[0] if cache.single else grad_y)

    # -- serialization hooks
    def meta(self):
        return {"model": self.kind, "K": self.K, "source": self.source, "kappa": self.kappa,
                "mlp": None if self.mlp_spec is None else list(self.mlp_spec.layer_sizes)}

    @classmethod
    def from_meta(cls, meta, params):
        spec = None if meta["mlp"] is None else MlpSpec(tuple(meta["mlp"]), "softplus")
        return cls(meta["K"], meta["source"], params, meta["kappa"], spec)


def predictor_spec(source, ny, K, hidden=DEFAULT_HIDDEN):
    n_in = ny + 1 if source == "ptda" else ny
    return MlpSpec((n_in, *hidden, K), "softplus")


def lista_init(prob, K, source="fixed", hidden=DEFAULT_HIDDEN, rng=None, lam=INIT_LAMBDA):
    """LISTA initialized at ISTA: ``W1 = A^T/kappa``, ``W2 = I - A^T A/kappa``, thresholds ``lam/kappa``.

    Predictor sources start with a near-zero output layer whose bias puts every
    predicted threshold at ``lam/kappa``.
    """
    A, kappa = prob.A, prob.kappa
    # contiguous so a reloaded model takes the same BLAS path
    params = {"W1": np.ascontiguousarray(A.T / kappa), "W2": np.eye(prob.nx) - A.T @ A / kappa}
    beta0 = lam / kappa
    spec = None
    if source == "fixed":
        params["beta"] = np.full(prob.nx, beta0)
    elif source in ("ptda", "ddtda"):
        spec = predictor_spec(source, prob.ny, K, hidden)
        rng = rng if rng is not None else rng_stream(0)
        params.update(mlp_init(spec, rng, prefix="thr.", out_scale=1e-2,
                               out_bias=float(softplus_inv(beta0))))
    else:
        raise InvalidArgument(f"unknown threshold source {source!r}")
    return ListaModel(K, source, params, kappa, spec)


def lista_forward(model, y, sigma=None):
    return model.forward(y, sigma)


def lista_backward(model, cache, grad_x):
    return model.backward(cache, grad_x)
