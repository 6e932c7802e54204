"""Fully connected regression baseline and its staged (partial) retraining."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidArgument, InvalidState
from ..numcore import MlpSpec, mlp_backward, mlp_forward, mlp_init, rng_stream
from .training import FreezeMask, evaluate, train


@dataclass
class DenseNet:
    spec: MlpSpec
    params: dict
    generation: int = field(default=0, compare=False)

    kind = "mlp"

    def touch(self):
        self.generation += 1

    def project(self):
        pass

    def param_count(self):
        return self.spec.param_count()

    def forward(self, y):
        out, cache = mlp_forward(self.spec, self.params, y)
        return out, (self.generation, cache)

    def backward(self, cache, grad_x):
        generation, inner = cache
        if generation != self.generation:
            raise InvalidState("stale network cache")
        return mlp_backward(inner, grad_x)[1]

    def copy(self):
        return DenseNet(self.spec, {k: v.copy() for k, v in self.params.items()})

    def layer_blocks(self, last):
        """Block names of the last ``last`` affine layers."""
        n = self.spec.n_layers
        if not 0 <= last <= n:
            raise InvalidArgument(f"network has {n} layers, asked for the last {last}")
        names = []
        for i in range(n - last, n):
            names += [f"W{i}", f"b{i}"]
        return names


def dense_init(ny, nx, hidden=(256, 512, 256), rng=None):
    spec = MlpSpec((ny, *hidden, nx), "identity")
    rng = rng if rng is not None else rng_stream(0)
    return DenseNet(spec, mlp_init(spec, rng))


def staged_retrain(base, ds, stages, config):
    """Retrain only the unfrozen blocks of a jointly trained base, separately per domain.

    ``stages`` maps a stage label to a :class:`FreezeMask` or a list of trainable
    block names. Returns ``{stage: {domain: metrics}}``: test-split metrics plus
    the final ``train_loss`` on that domain's training split.
    """
    out = {}
    for label, stage in stages.items():
        mask = stage if isinstance(stage, FreezeMask) else FreezeMask.only(base, stage)
        mask.check(base)
        per_domain = {}
        for j in range(ds.n_domains):
            model = base.copy()
            if any(mask.trainable.values()):
                cfg = replace(config, regime="PT", domain=j)
                train(model, ds, cfg, mask)
            sub = ds.select(domain=j)
            metrics = evaluate(model, sub)[j]
            tr = sub.select("train")
            pred = model.forward(tr.Y)[0]
            metrics["train_loss"] = float(np.mean(np.sum((pred - tr.X) ** 2, axis=1)))
            per_domain[j] = metrics
        out[label] = per_domain
    return out
