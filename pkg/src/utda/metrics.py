"""Recovery metrics, the cross-domain deviation score and complexity accounting."""

import numpy as np

from .errors import InvalidArgument
from .numcore import MlpSpec

DB_FLOOR = -100.0
HR_TOL_LISTA = 0.3
HR_TOL_PR = 0.05


def _pair(x_true, x_hat):
    x_true = np.atleast_2d(np.asarray(x_true, dtype=np.float64))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
    if x_true.shape != x_hat.shape:
        raise InvalidArgument(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    ref = np.sum(x_true ** 2, axis=1)
    if np.any(ref == 0):
        raise InvalidArgument("reference signal has zero norm")
    return x_true, x_hat, ref


def to_db(ratio, factor=10.0):
    ratio = np.asarray(ratio, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.maximum(factor * np.log10(ratio), DB_FLOOR)


def nmse_linear(x_true, x_hat):
    """Per-sample ``||x - x_hat||^2 / ||x||^2``."""
    x_true, x_hat, ref = _pair(x_true, x_hat)
    return np.sum((x_true - x_hat) ** 2, axis=1) / ref


def nmse_db(x_true, x_hat):
    """NMSE in dB. For a batch this is the dB value of the mean per-sample ratio."""
    return float(to_db(np.mean(nmse_linear(x_true, x_hat))))


def hit_rate(x_true, x_hat, t=HR_TOL_LISTA, L=None):
    """Fraction of true-support entries with ``|x - x_hat| <= t |x|``, averaged over samples."""
    if t <= 0:
        raise InvalidArgument("hit-rate tolerance must be positive")
    if L is not None and L <= 0:
        raise InvalidArgument("hit-rate sparsity L must be positive")
    x_true = np.atleast_2d(np.asarray(x_true, dtype=np.float64))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
    if x_true.shape != x_hat.shape:
        raise InvalidArgument(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    support = x_true != 0
    counts = support.sum(axis=1)
    if L is not None and np.any(counts != L):
        raise InvalidArgument(f"reference sparsity does not equal L={L}")
    if np.any(counts == 0):
        raise InvalidArgument("hit rate needs at least one nonzero reference entry")
    hits = (np.abs(x_true - x_hat) <= t * np.abs(x_true)) & support
    return float(np.mean(hits.sum(axis=1) / counts))


def relative_error_linear(x_true, x_hat):
    """Per-sample sign-folded ``min(||x_hat - x||, ||x_hat + x||) / ||x||``."""
    x_true, x_hat, ref = _pair(x_true, x_hat)
    minus = np.sum((x_hat - x_true) ** 2, axis=1)
    plus = np.sum((x_hat + x_true) ** 2, axis=1)
    return np.sqrt(np.minimum(minus, plus) / ref)


def relative_error_pr(x_true, x_hat):
    """Phase-retrieval relative error in dB (``20 log10``), mean ratio over a batch."""
    return float(to_db(np.mean(relative_error_linear(x_true, x_hat)), factor=20.0))


def sign_align(x_true, x_hat):
    """Flip each estimate's global sign toward the reference (for hit rates in PR)."""
    x_true = np.atleast_2d(x_true)
    x_hat = np.atleast_2d(x_hat)
    flip = np.sum((x_hat + x_true) ** 2, axis=1) < np.sum((x_hat - x_true) ** 2, axis=1)
    return np.where(flip[:, None], -x_hat, x_hat)


def domain_snr_db(clean, sigma):
    """Average of per-sample ``10 log10((||A x||^2 / Ny) / sigma^2)`` over a domain."""
    clean = np.atleast_2d(np.asarray(clean, dtype=np.float64))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (len(clean),))
    if np.any(sigma <= 0):
        raise InvalidArgument("domain SNR needs a positive noise std")
    power = np.sum(clean ** 2, axis=1) / clean.shape[1]
    return float(np.mean(10.0 * np.log10(power / sigma ** 2)))


def snr_db(clean, noisy):
    """Per-sample ``10 log10(||y_clean||^2 / ||y - y_clean||^2)``."""
    clean = np.atleast_2d(np.asarray(clean, dtype=np.float64))
    noise = np.atleast_2d(np.asarray(noisy, dtype=np.float64)) - clean
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.sum(clean ** 2, axis=1) / np.sum(noise ** 2, axis=1))


def delta_m(blocks_per_domain, eps=1e-12):
    """Normalized cross-domain deviation of each named parameter block.

    ``blocks_per_domain`` is a list (one entry per domain) of ``{name: array}``.
    Returns ``{name: mean_j ||phi_j - phi_bar|| / (||phi_bar|| + eps)}``.
    """
    if len(blocks_per_domain) < 2:
        raise InvalidArgument("delta_m needs at least two domains")
    names = list(blocks_per_domain[0])
    for d in blocks_per_domain[1:]:
        if set(d) != set(names):
            raise InvalidArgument("parameter blocks are not name-aligned across domains")
    out = {}
    for name in names:
        stack = [np.asarray(d[name], dtype=np.float64) for d in blocks_per_domain]
        if any(s.shape != stack[0].shape for s in stack):
            raise InvalidArgument(f"block {name!r} has different shapes across domains")
        stack = np.stack(stack)
        # offsets from the first domain keep identical blocks at exactly zero
        diff = stack - stack[0]
        shift = diff.mean(axis=0)
        mean = stack[0] + shift
        dev = np.sqrt(np.sum((diff - shift) ** 2, axis=tuple(range(1, stack.ndim))))
        out[name] = float(np.mean(dev) / (np.linalg.norm(mean) + eps))
    return out


def s_metric(W):
    W = np.asarray(W, dtype=np.float64)
    peak = np.max(np.abs(W)) if W.size else 0.0
    if peak == 0:
        raise InvalidArgument("s_metric of a zero matrix")
    return float(np.linalg.norm(W) / peak)


# --------------------------------------------------------------------------
# complexity
# --------------------------------------------------------------------------

def _descriptor(model):
    if isinstance(model, dict):
        return model
    kind = getattr(model, "kind", None)
    if kind == "lista":
        return {"model": "lista", "nx": model.nx, "ny": model.ny, "K": model.K,
                "threshold": model.source,
                "predictor": None if model.mlp_spec is None else model.mlp_spec.layer_sizes}
    if kind == "gaincal":
        return {"model": "gaincal", "nx": model.nx, "ny": model.ny, "K": model.K,
                "comp": model.comp_source,
                "predictor": None if model.mlp_spec is None else model.mlp_spec.layer_sizes}
    if kind == "pr":
        return {"model": "pr", "nx": model.nx, "K": model.K, "source": model.source,
                "predictor": None if model.mlp_spec is None else model.mlp_spec.layer_sizes}
    raise InvalidArgument(f"cannot describe {model!r}")


def count_params_flops(model):
    """``(params, flops)`` per inference for a model or a descriptor dict.

    LISTA core: ``n*m + n^2`` parameters and one multiply-accumulate per matrix
    entry per layer, ``K*(n*m + n^2)`` FLOPs. Predictor MLPs add their
    parameter count and ``sum_i size_i * size_{i+1}`` FLOPs. A fixed threshold
    vector adds ``n`` parameters; a learned compensation vector adds ``m``
    parameters and ``m`` FLOPs. Threshold operations are not counted here
    (see :func:`threshold_ops`).
    """
    d = _descriptor(model)
    kind = d.get("model")
    pred = d.get("predictor")
    mlp_params = mlp_flops = 0
    if pred is not None:
        spec = MlpSpec(tuple(pred))
        mlp_params, mlp_flops = spec.param_count(), spec.flops()
    if kind in ("lista", "gaincal"):
        n, m, K = int(d["nx"]), int(d["ny"]), int(d["K"])
        if min(n, m, K) <= 0:
            raise InvalidArgument("dims and K must be positive")
        core = n * m + n * n
        params = core + mlp_params
        flops = K * core + mlp_flops
        if kind == "lista" and d.get("threshold", "fixed") == "fixed":
            params += n
        if kind == "gaincal":
            params += n  # fixed threshold vector of the core
            flops += m
            if d.get("comp", "learned") == "learned":
                params += m
        return int(params), int(flops)
    if kind == "pr":
        K = int(d["K"])
        ny, nx = int(d.get("ny", 0)), int(d["nx"])
        L = int(d.get("L", 0))
        params = 2 * K + mlp_params + (1 if d.get("source") == "estimator" else 0)
        # two products with A (forward and adjoint), restricted gradient/Hessian
        flops = K * (2 * ny * nx + ny * L * L + L ** 3) + mlp_flops
        return int(params), int(flops)
    raise InvalidArgument(f"unknown model kind {kind!r}")


def threshold_ops(model):
    """Elementwise thresholding operations per inference (``K * n``), reported separately."""
    d = _descriptor(model)
    return int(d["K"]) * int(d["nx"])


def table_descriptor(kind, nx, ny, K, hidden=None):
    """Descriptor for the three compressed-sensing configurations.

    ``kind`` is ``lista`` (fixed per-element threshold), ``ptda`` or ``ddtda``;
    ``hidden`` lists the predictor's hidden sizes.
    """
    if kind == "lista":
        return {"model": "lista", "nx": nx, "ny": ny, "K": K, "threshold": "fixed",
                "predictor": None}
    if kind not in ("ptda", "ddtda"):
        raise InvalidArgument(f"unknown configuration {kind!r}")
    if hidden is None:
        raise InvalidArgument("predictor configuration needs hidden sizes")
    n_in = ny + 1 if kind == "ptda" else ny
    return {"model": "lista", "nx": nx, "ny": ny, "K": K, "threshold": kind,
            "predictor": (n_in, *hidden, K)}
