"""Experiment recipes: data generation, training of every regime and per-domain evaluation."""

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..config import Config
from ..datagen import (SparseSignalSpec, gen_gain_domains, gen_mnist_domains, gen_noise_domains,
                       gen_pr_domains, load_mnist_idx)
from ..errors import InvalidArgument
from ..gaincal import cosine_similarity, gaincal_init, gen_gain
from ..metrics import nmse_linear, s_metric
from ..na_lista import CsProblem, lista_init
from ..numcore import rng_stream, sample_matrix
from ..phaseret import PrProblem, pr_init
from .baseline import dense_init, staged_retrain
from .diagnose import diagnose_beta_split
from .training import (TrainConfig, evaluate, predict, step_size_mask, train,
                       train_sparsity_net)

RECIPES = ("na_broad_snr", "na_narrow_snr", "na_generalization", "mnist_cs", "gain_structured",
           "gain_random", "gain_generalization_45", "pr_three_domains", "pr_no_cauchy")
CSV_FIELDS = ("recipe", "regime", "domain", "metric", "value", "seed", "config_hash")

# stream ids under the run seed
_S_MATRIX, _S_POOL, _S_PT, _S_INIT, _S_GAIN, _S_CAUCHY = 1, 2, 3, 4, 5, 6
GEN_SPLITS = (0.7, 0.2, 0.1)


@dataclass
class RecipeResult:
    name: str
    rows: list
    diagnostics: dict = field(default_factory=dict)
    csv_path: str = None
    diagnostics_path: str = None

    def csv_text(self):
        return rows_to_csv(self.rows)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r[k] for k in CSV_FIELDS])
    return buf.getvalue()


class _Run:
    def __init__(self, name, cfg, seed, deterministic):
        self.name = name
        self.cfg = cfg
        self.seed = seed
        self.deterministic = deterministic
        self.hash = cfg.hash()
        self.rows = []
        self.diag = {}

    def train_config(self, regime, domain=None, section=None):
        c = self.cfg

        def pick(key, conv):
            if section and c.has(section, key):
                return conv(section, key)
            return conv("train", key)

        return TrainConfig(regime, domain, pick("epochs", c.int), pick("batch_size", c.int),
                           pick("lr", c.float), pick("patience", c.int), self.seed,
                           self.deterministic)

    def record(self, regime, results, labels, only=None):
        for j, metrics in results.items():
            if only is not None and j not in only:
                continue
            for metric, value in metrics.items():
                self.rows.append({"recipe": self.name, "regime": regime, "domain": labels[j],
                                  "metric": metric, "value": f"{value:.6f}", "seed": self.seed,
                                  "config_hash": self.hash})


def _labels(n, start=1):
    return [f"D{j + start}" for j in range(n)]


def _cs_problem(seed, ny, nx):
    return CsProblem.from_matrix(sample_matrix(rng_stream(seed, _S_MATRIX), ny, nx,
                                               column_normalize=True))


# --------------------------------------------------------------------------
# noise-adaptive LISTA
# --------------------------------------------------------------------------

def _mixed_models(run, prob, K, hidden, pool, init, section=None):
    out = {}
    for regime, source in (("JT", "fixed"), ("P-TDA", "ptda"), ("DD-TDA", "ddtda")):
        model = init(prob, K, source, hidden, rng_stream(run.seed, _S_INIT))
        _, hist = train(model, pool, run.train_config(regime, section=section))
        run.diag.setdefault("best_epoch", {})[regime] = hist.best_epoch
        out[regime] = model
    return out


def _lista_init(prob, K, source, hidden, rng):
    return lista_init(prob, K, source, hidden, rng)


def _na_setup(run):
    c = run.cfg
    prob = _cs_problem(run.seed, c.int("na", "ny"), c.int("na", "nx"))
    return prob, SparseSignalSpec(c.int("na", "nx"), c.int("na", "L"))


def _na_snr_data(run, sigma_key):
    prob, spec = _na_setup(run)
    sigmas = run.cfg.floats("na", sigma_key)
    return prob, spec, sigmas, gen_noise_domains(rng_stream(run.seed, _S_POOL), prob.A, spec,
                                                 sigmas=sigmas,
                                                 n_per_domain=run.cfg.int("na", "n_per_domain"),
                                                 seed=run.seed)


def _na_snr(run, sigma_key):
    c = run.cfg
    K, hidden = c.int("na", "K"), tuple(c.ints("na", "hidden"))
    prob, spec, sigmas, pool = _na_snr_data(run, sigma_key)
    n = c.int("na", "n_per_domain")
    # the same signal and noise draws for every specialist set; only sigma differs
    pt_sets = [gen_noise_domains(rng_stream(run.seed, _S_PT), prob.A, spec, sigmas=[s],
                                 n_per_domain=n * len(sigmas), seed=run.seed) for s in sigmas]
    labels = _labels(len(sigmas))
    pts = []
    for j, ds in enumerate(pt_sets):
        model = lista_init(prob, K, "fixed")
        _, hist = train(model, ds, run.train_config("JT"))
        run.diag.setdefault("best_epoch", {})[f"PT-{labels[j]}"] = hist.best_epoch
        run.record(f"PT-{labels[j]}", evaluate(model, pool), labels)
        pts.append(model)
    for regime, model in _mixed_models(run, prob, K, hidden, pool, _lista_init).items():
        run.record(regime, evaluate(model, pool), labels)
    report = diagnose_beta_split(pts, rel=c.float("na", "split_rel"))
    run.diag.update({
        "sigmas": sigmas,
        "delta_m": report.scores,
        "proposed_beta": report.beta,
        "mean_beta": [float(m.params["beta"].mean()) for m in pts],
        "S_W1": [s_metric(m.params["W1"]) for m in pts],
        "S_W2": [s_metric(m.params["W2"]) for m in pts],
    })
    if c.bool("na", "staged_dnn"):
        run.diag["staged_dnn"] = _staged_dnn(run, pool)
    return pts


def _staged_dnn(run, pool):
    c = run.cfg
    base = dense_init(pool.ny, pool.nx, tuple(c.ints("na", "dnn_hidden")),
                      rng_stream(run.seed, _S_INIT))
    train(base, pool, run.train_config("JT"))
    n = base.spec.n_layers
    stages = {"joint": [], "last_layer": base.layer_blocks(1),
              "last_3_layers": base.layer_blocks(min(3, n))}
    result = staged_retrain(base, pool, stages, run.train_config("JT"))
    return {stage: {f"D{j + 1}": m for j, m in per.items()} for stage, per in result.items()}


def _na_generalization_data(run):
    snrs = run.cfg.floats("na", "snrs_generalization")
    if len(snrs) < 2:
        raise InvalidArgument("generalization needs at least two SNR domains")
    prob, spec = _na_setup(run)
    return prob, snrs, gen_noise_domains(rng_stream(run.seed, _S_POOL), prob.A, spec,
                                         snrs_db=snrs,
                                         n_per_domain=run.cfg.int("na", "n_per_domain"),
                                         seed=run.seed)


def _na_generalization(run):
    c = run.cfg
    K, hidden = c.int("na", "K"), tuple(c.ints("na", "hidden"))
    prob, snrs, ds = _na_generalization_data(run)
    seen = list(range(0, len(snrs), 2))
    unseen = list(range(1, len(snrs), 2))
    labels = _labels(len(snrs))
    for j in unseen:
        model = lista_init(prob, K, "fixed")
        train(model, ds, run.train_config("PT", j))
        run.record(f"PT-{labels[j]}", evaluate(model, ds), labels, only=unseen)
    mixed = ds.select(domain=seen)
    for regime, model in _mixed_models(run, prob, K, hidden, mixed, _lista_init).items():
        run.record(regime, evaluate(model, ds), labels, only=unseen)
    run.diag.update({"snrs_db": snrs, "train_domains": [labels[j] for j in seen],
                     "test_domains": [labels[j] for j in unseen]})


# --------------------------------------------------------------------------
# gain calibration
# --------------------------------------------------------------------------

def _gain_init(prob, K, source, hidden, rng):
    comp = {"fixed": "learned", "ptda": "ptda", "ddtda": "ddtda"}[source]
    return gaincal_init(prob, K, comp, rng)


def _gain_setup(run, kind, J):
    c = run.cfg
    ny = c.int("gain", "ny")
    prob = _cs_problem(run.seed, ny, c.int("gain", "nx"))
    grng = rng_stream(run.seed, _S_GAIN)
    draws = [gen_gain(grng, kind, ny) for _ in range(J)]
    return prob, SparseSignalSpec(c.int("gain", "nx"), c.int("gain", "L")), draws


def _gain_data(run, kind):
    c = run.cfg
    prob, spec, draws = _gain_setup(run, kind, c.int("gain", "n_domains"))
    pool = gen_gain_domains(rng_stream(run.seed, _S_POOL), prob.A, spec, [g for g, _ in draws],
                            c.float("gain", "sigma"), c.int("gain", "n_per_domain"),
                            seed=run.seed, gain_info=[info for _, info in draws])
    return prob, spec, draws, pool


def _gain(run, kind):
    c = run.cfg
    K, sigma, n = c.int("gain", "K"), c.float("gain", "sigma"), c.int("gain", "n_per_domain")
    prob, spec, draws, pool = _gain_data(run, kind)
    gains = [g for g, _ in draws]
    J = len(gains)
    labels = _labels(J)
    corr = []
    for j in range(J):
        ds = gen_gain_domains(rng_stream(run.seed, _S_PT), prob.A, spec, [gains[j]], sigma, n * J,
                              seed=run.seed)
        model = gaincal_init(prob, K, "learned")
        train(model, ds, run.train_config("JT"))
        run.record(f"PT-{labels[j]}", evaluate(model, pool), labels)
        corr.append(_corr(model.comp_params["b"], 1.0 / gains[j]))
    for regime, model in _mixed_models(run, prob, K, None, pool, _gain_init).items():
        run.record(regime, evaluate(model, pool), labels)
    run.diag.update({
        "kind": kind,
        "cosine": [[cosine_similarity(a, b) for b in gains] for a in gains],
        "corr_b_inv_c": corr,
        "gains": [dict(info) for _, info in draws],
    })


def _gain_generalization_data(run):
    c = run.cfg
    n_dom = c.int("gain", "gen_train_domains") + c.int("gain", "gen_test_domains")
    prob, spec, draws = _gain_setup(run, "structured", n_dom)
    ds = gen_gain_domains(rng_stream(run.seed, _S_POOL), prob.A, spec, [g for g, _ in draws],
                          c.float("gain", "sigma"), c.int("gain", "gen_n_per_domain"),
                          GEN_SPLITS, run.seed, [info for _, info in draws])
    return prob, spec, draws, ds


def _gain_generalization(run):
    c = run.cfg
    K, sigma = c.int("gain", "K"), c.float("gain", "sigma")
    n_tr, n_te = c.int("gain", "gen_train_domains"), c.int("gain", "gen_test_domains")
    prob, spec, draws, ds = _gain_generalization_data(run)
    gains = [g for g, _ in draws]
    fractions = GEN_SPLITS
    labels = _labels(n_tr + n_te)
    unseen = list(range(n_tr, n_tr + n_te))
    for j in unseen:
        pt = gen_gain_domains(rng_stream(run.seed, _S_PT, j), prob.A, spec, [gains[j]], sigma,
                              c.int("gain", "gen_pt_n_per_domain"), fractions, run.seed)
        model = gaincal_init(prob, K, "learned")
        train(model, pt, run.train_config("JT"))
        run.record("PT", {j: evaluate(model, pt)[0]}, labels)
    mixed = ds.select(domain=list(range(n_tr)))
    for regime, model in _mixed_models(run, prob, K, None, mixed, _gain_init).items():
        run.record(regime, evaluate(model, ds), labels, only=unseen)
    run.diag.update({"n_train_domains": n_tr, "test_domains": [labels[j] for j in unseen],
                     "gains": [dict(info) for _, info in draws]})


# --------------------------------------------------------------------------
# phase retrieval
# --------------------------------------------------------------------------

def _pr_setup(run):
    c = run.cfg
    nx, ny, nyc = c.int("pr", "nx"), c.int("pr", "ny"), c.int("pr", "nyc")
    A = sample_matrix(rng_stream(run.seed, _S_MATRIX), ny, nx)
    Ac = sample_matrix(rng_stream(run.seed, _S_CAUCHY), nyc, nx, "standard_cauchy")
    prob = PrProblem(A, Ac, c.float("pr", "sigma"))
    Ls = c.ints("pr", "L")
    n = c.int("pr", "n_per_domain")
    pool = gen_pr_domains(rng_stream(run.seed, _S_POOL), prob, Ls, n, seed=run.seed)
    return prob, Ls, pool


def _pr_sparsity_model(run, prob, pool, source):
    c = run.cfg
    model = pr_init(prob, c.int("pr", "K"), source, rng=rng_stream(run.seed, _S_INIT))
    cfg = run.train_config("JT", section="pr")
    cfg.epochs = c.int("pr", "estimator_epochs")
    cfg.patience = c.int("pr", "estimator_patience")
    _, hist = train_sparsity_net(model, pool, cfg)
    run.diag.setdefault("sparsity_net_best_epoch", {})[source] = hist.best_epoch
    train(model, pool, run.train_config("JT", section="pr"), step_size_mask(model))
    return model


def _sparsity_accuracy(model, pool):
    test = pool.select("test")
    L_hat = model.resolve_sparsity(test.Y, test.Yc)
    L_true = test.side_info()
    return {f"D{j + 1}": float(np.mean(np.abs(L_hat - L_true)[test.domain == j] <= 1))
            for j in range(pool.n_domains)}


def _pr_three_domains(run):
    c = run.cfg
    prob, Ls, pool = _pr_setup(run)
    K = c.int("pr", "K")
    labels = _labels(len(Ls))
    cross = {}
    for j, L in enumerate(Ls):
        pt = gen_pr_domains(rng_stream(run.seed, _S_PT, j), prob, [L],
                            c.int("pr", "n_per_domain") * len(Ls), seed=run.seed)
        model = pr_init(prob, K, "fixed", L=L)
        train(model, pt, run.train_config("JT", section="pr"))
        res = evaluate(model, pool)
        run.record("PT", res, labels, only=[j])
        cross[f"PT-{labels[j]}"] = {labels[i]: m for i, m in res.items()}
    jt = pr_init(prob, K, "fixed", L=max(Ls))
    train(jt, pool, run.train_config("JT", section="pr"))
    run.record("JT", evaluate(jt, pool), labels)
    given = pr_init(prob, K, "given")
    train(given, pool, run.train_config("P-TDA", section="pr"))
    run.record("P-TDA", evaluate(given, pool), labels)
    est = _pr_sparsity_model(run, prob, pool, "estimator")
    run.record("DD-TDA", evaluate(est, pool), labels)
    run.diag.update({"L": Ls, "pt_cross_domain": cross,
                     "estimator_within_one": _sparsity_accuracy(est, pool),
                     "step_sizes": {"JT": jt.params["alpha2"].tolist(),
                                    "P-TDA": given.params["alpha2"].tolist(),
                                    "DD-TDA": est.params["alpha2"].tolist()}})


def _pr_no_cauchy(run):
    prob, Ls, pool = _pr_setup(run)
    labels = _labels(len(Ls))
    for regime, source in (("DD-TDA", "estimator"), ("DD-TDA-Base", "direct")):
        model = _pr_sparsity_model(run, prob, pool, source)
        run.record(regime, evaluate(model, pool), labels)
        run.diag.setdefault("sparsity_within_one", {})[regime] = _sparsity_accuracy(model, pool)
    run.diag["L"] = Ls


# --------------------------------------------------------------------------
# MNIST compressed sensing
# --------------------------------------------------------------------------

def _mnist_data(run):
    c = run.cfg
    paths = {k: c.get("mnist", k) for k in ("images", "labels", "test_images", "test_labels")}
    if not paths["images"] or not paths["test_images"]:
        raise InvalidArgument("mnist_cs needs mnist.images and mnist.test_images paths")
    train_imgs, _ = load_mnist_idx(paths["images"], paths["labels"] or None)
    test_imgs, _ = load_mnist_idx(paths["test_images"], paths["test_labels"] or None)
    m = c.int("mnist", "m")
    snrs = c.floats("mnist", "snrs")
    J = len(snrs)
    A = sample_matrix(rng_stream(run.seed, _S_MATRIX), m, train_imgs.shape[1])
    prob = CsProblem.from_matrix(A)
    rng = rng_stream(run.seed, _S_POOL)
    train_ds = gen_mnist_domains(rng, train_imgs, A, snrs, c.int("mnist", "n_train") // J,
                                 (0.8, 0.2, 0.0), run.seed)
    test_ds = gen_mnist_domains(rng, test_imgs, A, snrs, c.int("mnist", "n_test") // J,
                                (0.0, 0.0, 1.0), run.seed)
    return prob, snrs, train_ds, test_ds


def _mnist(run):
    c = run.cfg
    K = c.int("mnist", "K")
    prob, snrs, train_ds, test_ds = _mnist_data(run)
    J = len(snrs)
    hidden = tuple(c.ints("mnist", "hidden_ddtda"))
    tcfg = run.train_config("JT", section="mnist")
    labels = [f"{s:g}dB" for s in snrs]
    for regime, source, hid in (("JT", "fixed", None), ("P-TDA", "ptda", (hidden[0] + 1, *hidden[1:])),
                                ("DD-TDA", "ddtda", hidden)):
        model = lista_init(prob, K, source, hid or hidden, rng_stream(run.seed, _S_INIT))
        train(model, train_ds, tcfg)
        res = {}
        for j in range(J):
            sub = test_ds.select(domain=j)
            Xh = predict(model, sub)
            mse = np.mean((Xh - sub.X) ** 2, axis=1)
            res[j] = {"NMSE_dB": float(10 * np.log10(np.mean(nmse_linear(sub.X, Xh)))),
                      "PSNR_dB": float(np.mean(10 * np.log10(1.0 / np.maximum(mse, 1e-12))))}
        run.record(regime, res, labels)


_DISPATCH = {
    "na_broad_snr": lambda run: _na_snr(run, "sigmas_broad"),
    "na_narrow_snr": lambda run: _na_snr(run, "sigmas_narrow"),
    "na_generalization": _na_generalization,
    "mnist_cs": _mnist,
    "gain_structured": lambda run: _gain(run, "structured"),
    "gain_random": lambda run: _gain(run, "random"),
    "gain_generalization_45": _gain_generalization,
    "pr_three_domains": _pr_three_domains,
    "pr_no_cauchy": _pr_no_cauchy,
}


_DATA = {
    "na_broad_snr": lambda run: _na_snr_data(run, "sigmas_broad")[-1],
    "na_narrow_snr": lambda run: _na_snr_data(run, "sigmas_narrow")[-1],
    "na_generalization": lambda run: _na_generalization_data(run)[-1],
    "mnist_cs": lambda run: _mnist_data(run)[2],
    "gain_structured": lambda run: _gain_data(run, "structured")[-1],
    "gain_random": lambda run: _gain_data(run, "random")[-1],
    "gain_generalization_45": lambda run: _gain_generalization_data(run)[-1],
    "pr_three_domains": lambda run: _pr_setup(run)[-1],
    "pr_no_cauchy": lambda run: _pr_setup(run)[-1],
}


def _check_name(name):
    if name not in _DISPATCH:
        raise InvalidArgument(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")


def recipe_dataset(name, cfg=None, seed=None):
    """The pooled multi-domain dataset a recipe trains its mixed-domain regimes on."""
    _check_name(name)
    cfg = cfg or Config()
    seed = cfg.int("general", "seed") if seed is None else int(seed)
    return _DATA[name](_Run(name, cfg, seed, False))


def run_recipe(name, cfg=None, out_dir=None, seed=None, deterministic=None):
    """Run one named experiment; writes ``<name>.csv`` and ``<name>.diagnostics.json``."""
    _check_name(name)
    cfg = cfg or Config()
    seed = cfg.int("general", "seed") if seed is None else int(seed)
    det = cfg.bool("general", "deterministic") if deterministic is None else bool(deterministic)
    run = _Run(name, cfg, seed, det)
    _DISPATCH[name](run)
    result = RecipeResult(name, run.rows, run.diag)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.csv_path = os.path.join(out_dir, f"{name}.csv")
        with open(result.csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.csv_text())
        result.diagnostics_path = os.path.join(out_dir, f"{name}.diagnostics.json")
        with open(result.diagnostics_path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(run.diag), fh, indent=2, sort_keys=True)
    return result


def _corr(u, v):
    # None when either vector is constant (the coefficient is undefined)
    if np.ptp(u) == 0 or np.ptp(v) == 0:
        return None
    return float(np.corrcoef(u, v)[0, 1])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
