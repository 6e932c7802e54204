"""Numeric building blocks: thresholding, sampling, small MLPs and Adam.

Dense matrices and vectors are plain float64 NumPy arrays; batches are 2-D
arrays with one sample per row.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument, InvalidState, NumericError


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------

def rng_stream(seed, *path):
    """A PCG64 generator keyed by ``seed`` and an optional integer path.

    Distinct paths give statistically independent streams; the same
    ``(seed, path)`` always yields the same sequence.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def sample_matrix(rng, rows, cols, dist="standard_gaussian", column_normalize=False,
                  low=None, high=None):
    if rows <= 0 or cols <= 0:
        raise InvalidArgument(f"matrix dims must be positive, got {rows}x{cols}")
    if dist == "standard_gaussian":
        M = rng.standard_normal((rows, cols))
    elif dist == "standard_cauchy":
        M = rng.standard_cauchy((rows, cols))
    elif dist == "uniform":
        if low is None or high is None or not low < high:
            raise InvalidArgument("uniform sampling needs low < high")
        M = rng.uniform(low, high, (rows, cols))
    else:
        raise InvalidArgument(f"unknown distribution {dist!r}")
    if column_normalize:
        M = M / np.linalg.norm(M, axis=0, keepdims=True)
    return M


# --------------------------------------------------------------------------
# proximal / selection operators
# --------------------------------------------------------------------------

def soft_threshold(v, beta):
    """``sign(v) * max(|v| - beta, 0)``; ``beta`` is a scalar or broadcasts against ``v``."""
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(beta < 0):
        raise InvalidArgument("soft-threshold requires beta >= 0")
    return kernels.soft_threshold(v, beta)


def hard_threshold_topl(v, L):
    """Keep the ``L`` largest-magnitude entries of ``v`` (lowest index wins ties).

    Returns ``(values, support)`` where ``support`` is a sorted index array.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgument("hard_threshold_topl expects a vector")
    if not 0 < L <= v.size:
        raise InvalidArgument(f"need 0 < L <= {v.size}, got L={L}")
    support = kernels.topl_support(v[None, :], np.array([L]))[0]
    out = np.zeros_like(v)
    out[support] = v[support]
    return out, support


def spectral_norm_sq(M, tol=1e-10, max_iter=1000):
    """Largest eigenvalue of ``M.T @ M`` by power iteration."""
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        raise InvalidArgument("spectral_norm_sq of an empty matrix")
    v = rng_stream(0x5EED).standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        Mv = M @ v
        lam_new = float(Mv @ Mv)
        w = M.T @ Mv
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * lam_new:
            # one more Rayleigh quotient with the refined vector
            Mv = M @ v
            return max(lam_new, float(Mv @ Mv))
        lam = lam_new
    raise NumericError("power iteration did not converge", last_iterate=(lam, v))


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------
# MLP
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    output_activation: str = "identity"  # or "softplus"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) <= 0:
            raise InvalidArgument(f"bad MLP layer sizes {self.layer_sizes}")
        if self.output_activation not in ("identity", "softplus"):
            raise InvalidArgument(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    def param_count(self):
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    def flops(self):
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] for i in range(len(s) - 1))

    def block_names(self, prefix=""):
        names = []
        for i in range(self.n_layers):
            names += [f"{prefix}W{i}", f"{prefix}b{i}"]
        return names


def mlp_init(spec, rng, prefix="", out_scale=1.0, out_bias=0.0):
    """He-initialized weights; the output layer is scaled by ``out_scale``."""
    params = {}
    s = spec.layer_sizes
    for i in range(spec.n_layers):
        W = rng.standard_normal((s[i + 1], s[i])) * np.sqrt(2.0 / s[i])
        b = np.zeros(s[i + 1])
        if i == spec.n_layers - 1:
            W *= out_scale
            b += out_bias
        params[f"{prefix}W{i}"] = W
        params[f"{prefix}b{i}"] = b
    return params


@dataclass
class MlpCache:
    spec: MlpSpec
    params: dict
    prefix: str
    acts: list      # inputs to each affine layer
    pre: list       # pre-activations
    single: bool = False
    consumed: bool = False


def _check_params(spec, params, prefix):
    s = spec.layer_sizes
    for i in range(spec.n_layers):
        W = params.get(f"{prefix}W{i}")
        b = params.get(f"{prefix}b{i}")
        if W is None or b is None or W.shape != (s[i + 1], s[i]) or b.shape != (s[i + 1],):
            raise InvalidArgument(f"MLP parameter block {prefix}W{i}/b{i} does not match {s}")


def mlp_forward(spec, params, x, prefix=""):
    """Apply the MLP to a vector or a batch (rows). Returns ``(output, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != spec.layer_sizes[0]:
        raise InvalidArgument(f"MLP input has {h.shape[1]} features, expected {spec.layer_sizes[0]}")
    _check_params(spec, params, prefix)
    acts, pre = [], []
    for i in range(spec.n_layers):
        acts.append(h)
        z = h @ params[f"{prefix}W{i}"].T + params[f"{prefix}b{i}"]
        pre.append(z)
        if i < spec.n_layers - 1:
            h = np.maximum(z, 0.0)
        elif spec.output_activation == "softplus":
            h = softplus(z)
        else:
            h = z
    cache = MlpCache(spec, params, prefix, acts, pre, single)
    return (h[0] if single else h), cache


def mlp_backward(cache, grad_output):
    """Reverse pass. Returns ``(grad_input, grads)`` with grads keyed like the params."""
    if not isinstance(cache, MlpCache):
        raise InvalidState("mlp_backward needs a cache from mlp_forward")
    if cache.consumed:
        raise InvalidState("MLP cache already used by a backward pass")
    spec, params, prefix = cache.spec, cache.params, cache.prefix
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise InvalidState(f"grad_output shape {g.shape} does not match cache {cache.pre[-1].shape}")
    cache.consumed = True
    grads = {}
    for i in reversed(range(spec.n_layers)):
        z = cache.pre[i]
        if i == spec.n_layers - 1:
            if spec.output_activation == "softplus":
                g = g * sigmoid(z)
        else:
            g = g * (z > 0.0)
        grads[f"{prefix}W{i}"] = g.T @ cache.acts[i]
        grads[f"{prefix}b{i}"] = g.sum(axis=0)
        g = g @ params[f"{prefix}W{i}"]
    return (g[0] if cache.single else g), grads


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

class Adam:
    """Adam with bias correction over a dict of named parameter arrays (updated in place)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        for name, g in grads.items():
            if name not in params:
                raise InvalidArgument(f"gradient for unknown block {name!r}")
            if np.shape(g) != np.shape(params[name]):
                raise InvalidArgument(f"gradient shape mismatch for block {name!r}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in block {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": {k: a.copy() for k, a in self.m.items()},
                "v": {k: a.copy() for k, a in self.v.items()}}
