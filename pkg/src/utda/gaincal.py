"""LISTA with a learned per-measurement gain compensation for blind calibration.

Measurements ``y = diag(c) A x + noise`` are rescaled once, ``y_tilde = b_hat * y``,
and passed through a tied LISTA core with a fixed threshold vector. The
compensation ``b_hat`` is either a learned vector, an MLP over ``[y; c]``
(parametric) or an MLP over ``y`` (data-driven).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState
from .na_lista import ListaModel, lista_init
from .numcore import MlpSpec, mlp_backward, mlp_forward, mlp_init, rng_stream

COMP_SOURCES = ("learned", "ptda", "ddtda")
STRUCTURED_A = 0.5
STRUCTURED_OFFSET = 0.6
RANDOM_RANGE = (0.1, 1.3)


def structured_gain(n, freq, phase, a=STRUCTURED_A, offset=STRUCTURED_OFFSET):
    idx = np.arange(n)
    return np.abs(a * np.sin(2.0 * np.pi * freq * idx + phase) + offset)


def gen_gain(rng, kind, ny, a=STRUCTURED_A, offset=STRUCTURED_OFFSET, low=RANDOM_RANGE[0],
             high=RANDOM_RANGE[1]):
    """Draw one gain vector. Returns ``(c, info)``; ``info`` records the draw."""
    if kind == "structured":
        # (0, 1]: reflect the half-open [0, 1) draw
        f, phi = 1.0 - rng.random(2)
        return structured_gain(ny, f, phi, a, offset), {"kind": kind, "f": f, "phi": phi}
    if kind == "random":
        return rng.uniform(low, high, ny), {"kind": kind}
    raise InvalidArgument(f"unknown gain kind {kind!r}")


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise InvalidArgument("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


@dataclass
class GainCache:
    generation: int
    y: np.ndarray
    comp: np.ndarray
    lista_cache: object
    mlp_cache: object = None
    single: bool = False
    consumed: bool = False


@dataclass
class GainCalModel:
    lista: ListaModel
    comp_source: str
    comp_params: dict
    mlp_spec: MlpSpec = None
    generation: int = field(default=0, compare=False)

    kind = "gaincal"

    def __post_init__(self):
        if self.comp_source not in COMP_SOURCES:
            raise InvalidArgument(f"unknown compensation source {self.comp_source!r}")
        if self.lista.source != "fixed":
            raise InvalidArgument("gain calibration uses a fixed-threshold LISTA core")
        ny = self.lista.ny
        if self.comp_source == "learned":
            if self.comp_params["b"].shape != (ny,):
                raise InvalidArgument("compensation vector must have length Ny")
        else:
            n_in = 2 * ny if self.comp_source == "ptda" else ny
            s = self.mlp_spec
            if s is None or s.layer_sizes[0] != n_in or s.layer_sizes[-1] != ny:
                raise InvalidArgument(f"compensation predictor must map {n_in} -> {ny}")

    @property
    def params(self):
        """Flat view of every parameter block (core blocks prefixed ``core.``)."""
        out = {f"core.{k}": v for k, v in self.lista.params.items()}
        out.update(self.comp_params)
        return out

    @property
    def K(self):
        return self.lista.K

    @property
    def nx(self):
        return self.lista.nx

    @property
    def ny(self):
        return self.lista.ny

    def param_count(self):
        return int(sum(a.size for a in self.params.values()))

    def touch(self):
        self.generation += 1
        self.lista.touch()

    def project(self):
        self.lista.project()

    def compensation(self, Y, c=None):
        if self.comp_source == "learned":
            return np.broadcast_to(self.comp_params["b"], Y.shape), None
        if self.comp_source == "ptda":
            if c is None:
                raise InvalidArgument("P-TDA compensation needs the gain vector c")
            C = np.broadcast_to(np.asarray(c, dtype=np.float64), Y.shape)
            inp = np.concatenate([Y, C], axis=1)
        else:
            inp = Y
        return mlp_forward(self.mlp_spec, self.comp_params, inp, prefix="comp.")

    def forward(self, y, c=None):
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        Y = y[None, :] if single else y
        if Y.shape[1] != self.ny:
            raise InvalidArgument(f"measurement length {Y.shape[1]} != Ny={self.ny}")
        comp, mc = self.compensation(Y, c)
        X, lc = self.lista.forward(comp * Y)
        cache = GainCache(self.generation, Y, np.array(comp), lc, mc, single)
        return (X[0] if single else X), cache

    def backward(self, cache, grad_x):
        if not isinstance(cache, GainCache):
            raise InvalidState("backward needs a cache from forward")
        if cache.consumed or cache.generation != self.generation:
            raise InvalidState("stale gain-calibration cache")
        cache.consumed = True
        g = np.asarray(grad_x, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        core_grads, g_ytilde = self.lista.backward(cache.lista_cache, g)
        grads = {f"core.{k}": v for k, v in core_grads.items()}
        g_comp = g_ytilde * cache.y
        if self.comp_source == "learned":
            grads["b"] = g_comp.sum(axis=0)
        else:
            _, mlp_grads = mlp_backward(cache.mlp_cache, g_comp)
            grads.update(mlp_grads)
        return grads

    def meta(self):
        m = self.lista.meta()
        return {"model": self.kind, "core": m, "comp_source": self.comp_source,
                "mlp": None if self.mlp_spec is None else list(self.mlp_spec.layer_sizes)}

    @classmethod
    def from_meta(cls, meta, params):
        core = {k[5:]: v for k, v in params.items() if k.startswith("core.")}
        comp = {k: v for k, v in params.items() if not k.startswith("core.")}
        lista = ListaModel.from_meta(meta["core"], core)
        spec = None if meta["mlp"] is None else MlpSpec(tuple(meta["mlp"]), "identity")
        return cls(lista, meta["comp_source"], comp, spec)


def comp_spec(source, ny):
    n_in = 2 * ny if source == "ptda" else ny
    return MlpSpec((n_in, 4 * ny, 2 * ny, ny), "identity")


def gaincal_init(prob, K, comp_source="learned", rng=None):
    """Gain-calibration model starting from ISTA-initialized LISTA and unit compensation."""
    lista = lista_init(prob, K, "fixed")
    spec = None
    if comp_source == "learned":
        comp = {"b": np.ones(prob.ny)}
    elif comp_source in ("ptda", "ddtda"):
        spec = comp_spec(comp_source, prob.ny)
        rng = rng if rng is not None else rng_stream(0)
        comp = mlp_init(spec, rng, prefix="comp.", out_scale=1e-2, out_bias=1.0)
    else:
        raise InvalidArgument(f"unknown compensation source {comp_source!r}")
    return GainCalModel(lista, comp_source, comp, spec)


def gaincal_forward(model, y, c=None):
    return model.forward(y, c)
