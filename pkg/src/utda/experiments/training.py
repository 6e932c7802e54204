"""Mini-batch training with Adam, early stopping and best-validation restore."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidArgument, NumericError
from ..metrics import HR_TOL_LISTA, HR_TOL_PR, hit_rate, nmse_db, relative_error_pr, sign_align
from ..numcore import Adam, rng_stream
from ..phaseret import PrProblem, direct_loss_grad, estimator_loss_grad

REGIMES = ("PT", "JT", "P-TDA", "DD-TDA")
EVAL_CHUNK = 1024


@dataclass
class TrainConfig:
    regime: str = "JT"
    domain: int = None           # PT target domain
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    patience: int = 10
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidArgument(f"unknown regime {self.regime!r}")
        if self.regime == "PT" and self.domain is None:
            raise InvalidArgument("PT training needs a target domain")
        if self.epochs < 0 or self.batch_size <= 0 or self.lr <= 0 or self.patience <= 0:
            raise InvalidArgument("training hyperparameters must be positive")

    def as_dict(self):
        return asdict(self)


@dataclass
class FreezeMask:
    """Trainable flag per named parameter block."""

    trainable: dict

    @classmethod
    def all_trainable(cls, model):
        return cls({name: True for name in model.params})

    @classmethod
    def only(cls, model, names):
        names = set(names)
        unknown = names - set(model.params)
        if unknown:
            raise InvalidArgument(f"mask names unknown blocks {sorted(unknown)}")
        return cls({name: name in names for name in model.params})

    def check(self, model):
        if set(self.trainable) != set(model.params):
            missing = set(model.params) ^ set(self.trainable)
            raise InvalidArgument(f"freeze mask does not match model blocks: {sorted(missing)}")

    def filter(self, grads):
        return {k: g for k, g in grads.items() if self.trainable.get(k, False)}


@dataclass
class History:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def val_losses(self):
        return [v for _, _, v in self.epochs]


# --------------------------------------------------------------------------
# model-kind dispatch
# --------------------------------------------------------------------------

def pr_problem(ds):
    return PrProblem(ds.A, ds.Ac, float(ds.provenance.get("sigma", 0.0)))


class _Batches:
    """Per-dataset inputs for one model, with any step-size independent work done once."""

    def __init__(self, model, ds):
        self.model = model
        self.ds = ds
        self.start = None
        if model.kind == "pr":
            self.prob = pr_problem(ds)
            L = ds.side_info() if model.source == "given" else None
            self.start = model.initial(self.prob, ds.Y, ds.Yc, L)

    def forward(self, idx):
        m, ds = self.model, self.ds
        Y = ds.Y[idx]
        if m.kind == "lista":
            return m.forward(Y, ds.sigma[idx] if m.source == "ptda" else None)
        if m.kind == "gaincal":
            return m.forward(Y, ds.side_info(idx) if m.comp_source == "ptda" else None)
        if m.kind == "pr":
            start = (self.start[0][idx], self.start[1][idx])
            return m.forward(self.prob, Y, start=start)
        return m.forward(Y)

    def backward(self, cache, grad_x):
        m = self.model
        if m.kind == "lista":
            return m.backward(cache, grad_x)[0]
        if m.kind == "pr":
            return m.backward(self.prob, cache, grad_x)
        return m.backward(cache, grad_x)

    def loss_grad(self, idx):
        Xh, cache = self.forward(idx)
        target = self.ds.X[idx]
        if self.model.kind == "pr":
            target = sign_align(Xh, target)
        diff = Xh - target
        loss = float(np.mean(np.sum(diff ** 2, axis=1)))
        return loss, cache, 2.0 * diff / len(idx)

    def predict(self):
        n = self.ds.n
        out = [self.forward(np.arange(i, min(n, i + EVAL_CHUNK)))[0]
               for i in range(0, n, EVAL_CHUNK)]
        return np.concatenate(out) if out else np.zeros((0, self.ds.nx))

    def loss(self):
        if self.ds.n == 0:
            return float("nan")
        Xh = self.predict()
        target = sign_align(Xh, self.ds.X) if self.model.kind == "pr" else self.ds.X
        return float(np.mean(np.sum((Xh - target) ** 2, axis=1)))


def _snapshot(model):
    return {k: v.copy() for k, v in model.params.items()}


def _restore(model, snap):
    params = model.params
    for k, v in snap.items():
        params[k][...] = v
    model.touch()


def fit(model, train_loss_grad, val_loss, n_train, config, mask=None, train_loss=None):
    """Generic loop. ``train_loss_grad(idx) -> (loss, grads)`` over training rows."""
    mask = mask or FreezeMask.all_trainable(model)
    mask.check(model)
    hist = History()
    best = val_loss()
    hist.epochs.append((0, float("nan") if train_loss is None else train_loss(), best))
    if config.epochs == 0 or n_train == 0:
        return model, hist
    snap = _snapshot(model)
    opt = Adam(lr=config.lr)
    rng = rng_stream(config.seed, 0x7A11)
    bad = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_train)
        total = 0.0
        for b, start in enumerate(range(0, n_train, config.batch_size)):
            idx = np.sort(order[start:start + config.batch_size])
            loss, grads = train_loss_grad(idx)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}",
                                   last_iterate=_snapshot(model))
            try:
                opt.step(model.params, mask.filter(grads))
            except NumericError as exc:
                raise NumericError(f"{exc} at epoch {epoch}, batch {b}",
                                   last_iterate=_snapshot(model)) from None
            model.project()
            model.touch()
            total += loss * len(idx)
        val = val_loss()
        hist.epochs.append((epoch, total / n_train, val))
        if val < best:
            best, bad, snap = val, 0, _snapshot(model)
            hist.best_epoch = epoch
        else:
            bad += 1
            if bad >= config.patience:
                hist.stopped_early = True
                break
    _restore(model, snap)
    return model, hist


def _regime_view(ds, config):
    if config.regime == "PT":
        return ds.select(domain=config.domain)
    return ds


def train(model, ds, config, mask=None):
    """Minimize the batch-mean ``||x - x_hat||^2`` (sign-folded for phase retrieval)."""
    ds = _regime_view(ds, config)
    tr, va = ds.select("train"), ds.select("val")
    if tr.n == 0:
        raise InvalidArgument("dataset has no training samples for this regime")
    btr, bva = _Batches(model, tr), _Batches(model, va)

    def step(idx):
        loss, cache, g = btr.loss_grad(idx)
        return loss, btr.backward(cache, g)

    return fit(model, step, bva.loss, tr.n, config, mask)


def train_sparsity_net(model, ds, config):
    """Separate first stage for the estimator or direct sparsity network."""
    if model.kind != "pr" or model.source not in ("estimator", "direct"):
        raise InvalidArgument("only estimator/direct phase-retrieval models have a sparsity net")
    tr, va = ds.select("train"), ds.select("val")
    Ltr = tr.side_info().astype(np.float64)
    Lva = va.side_info().astype(np.float64)

    if model.source == "estimator":
        def step(idx):
            return estimator_loss_grad(model, tr.Y[idx], tr.Yc[idx], Ltr[idx])

        def val():
            return estimator_loss_grad(model, va.Y, va.Yc, Lva)[0]
    else:
        def step(idx):
            return direct_loss_grad(model, tr.Y[idx], Ltr[idx])

        def val():
            return direct_loss_grad(model, va.Y, Lva)[0]

    mask = FreezeMask.only(model, model.estimator_blocks)
    return fit(model, step, val, tr.n, config, mask)


def step_size_mask(model):
    """Freeze everything but the per-layer step sizes (the second phase-retrieval stage)."""
    return FreezeMask.only(model, model.step_blocks)


def predict(model, ds):
    return _Batches(model, ds).predict()


def evaluate(model, ds, split="test"):
    """Per-domain metrics on one split: ``{domain: {metric: value}}``."""
    part = ds.select(split) if split else ds
    out = {}
    for j in range(ds.n_domains):
        sub = part.select(domain=j)
        if sub.n == 0:
            continue
        Xh = predict(model, sub)
        if ds.kind == "phase_retrieval":
            out[j] = {"RE_dB": relative_error_pr(sub.X, Xh),
                      "HR": 100.0 * hit_rate(sub.X, sign_align(sub.X, Xh), HR_TOL_PR)}
        else:
            out[j] = {"NMSE_dB": nmse_db(sub.X, Xh),
                      "HR": 100.0 * hit_rate(sub.X, Xh, HR_TOL_LISTA)}
    return out
