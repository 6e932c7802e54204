"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

import argparse
import csv
import io
import os
import sys

from . import datagen, metrics, modelio
from .config import Config
from .errors import FormatError, InvalidArgument, InvalidState, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# figure id -> recipes whose results it plots
FIGURES = {
    "fig2": ("na_broad_snr", "na_narrow_snr"),
    "fig4": ("na_generalization",),
    "fig6": ("gain_structured", "gain_random"),
    "fig7": ("gain_generalization_45",),
    "fig8": ("pr_three_domains",),
    "pr_no_cauchy": ("pr_no_cauchy",),
}
_DEFAULT_HIDDEN = {"ptda": (751, 375, 125, 64), "ddtda": (750, 375, 125, 64)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="INI file overlaying the built-in defaults")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--deterministic", action="store_true")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--full-scale", dest="full_scale", action="store_true", default=None)
    scale.add_argument("--desk-scale", dest="full_scale", action="store_false")


def build_parser():
    parser = _Parser(prog="utda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write a recipe's pooled dataset as a UTDS file")
    p.add_argument("--recipe", required=True)
    p.add_argument("--out", help="output path (default <out-dir>/<recipe>.utds)")
    _common(p)

    p = sub.add_parser("train", help="train one model on a UTDS dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, choices=("lista", "gaincal", "pr"))
    p.add_argument("--source", default=None,
                   help="lista: fixed|ptda|ddtda; gaincal: learned|ptda|ddtda; "
                        "pr: fixed|given|estimator|direct")
    p.add_argument("--regime", default="JT", choices=("PT", "JT", "P-TDA", "DD-TDA"))
    p.add_argument("--domain", type=int, help="target domain index for PT")
    p.add_argument("--k", type=int)
    p.add_argument("--L", type=int, help="sparsity of a fixed-L phase-retrieval model")
    p.add_argument("--out", required=True, help="UTDA model path")
    _common(p)

    p = sub.add_parser("eval", help="per-domain metrics of a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=datagen.SPLITS)
    p.add_argument("--regime", default="model")
    _common(p)

    p = sub.add_parser("recipe", help="run a named experiment and write its results CSV")
    p.add_argument("name")
    _common(p)

    p = sub.add_parser("diagnose", help="rank blocks of domain-specialist models")
    p.add_argument("models", nargs="+")
    p.add_argument("--threshold", type=float)
    p.add_argument("--rel", type=float, default=0.75)
    _common(p)

    p = sub.add_parser("complexity", help="parameter and FLOP counts")
    p.add_argument("--model", required=True, help="lista, ptda, ddtda, or a UTDA model file")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--hidden", help="comma-separated predictor hidden sizes")
    _common(p)

    p = sub.add_parser("export-plot", help="plot-ready CSV series from a results CSV")
    p.add_argument("csv")
    p.add_argument("figure")
    _common(p)
    return parser


def _config(args):
    cfg = Config.load(args.config, args.set, args.full_scale)
    if args.seed is not None:
        cfg.override(f"general.seed={args.seed}")
    if args.deterministic:
        cfg.override("general.deterministic=true")
    return cfg


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InvalidArgument(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_gen_data(args, cfg, out):
    from .experiments.recipes import recipe_dataset
    ds = recipe_dataset(args.recipe, cfg)
    path = args.out or os.path.join(args.out_dir, f"{args.recipe}.utds")
    datagen.save_dataset(path, ds)
    print(f"wrote {ds.n} samples in {ds.n_domains} domains to {path}", file=out)


def _new_model(args, ds, K):
    from .experiments.training import pr_problem
    from .gaincal import gaincal_init
    from .na_lista import CsProblem, lista_init
    from .numcore import rng_stream
    from .phaseret import pr_init

    rng = rng_stream(int(ds.seed), 4)
    if args.model == "pr":
        if ds.kind != "phase_retrieval":
            raise InvalidArgument("phase-retrieval model needs a phase_retrieval dataset")
        return pr_init(pr_problem(ds), K, args.source or "given", L=args.L, rng=rng)
    if ds.kind == "phase_retrieval":
        raise InvalidArgument(f"{args.model} model cannot train on phase-retrieval data")
    prob = CsProblem.from_matrix(ds.A)
    if args.model == "gaincal":
        return gaincal_init(prob, K, args.source or "learned", rng)
    return lista_init(prob, K, args.source or "fixed", rng=rng)


def cmd_train(args, cfg, out):
    from .experiments.training import TrainConfig, step_size_mask, train, train_sparsity_net

    ds = datagen.load_dataset(args.data)
    section = {"lista": "na", "gaincal": "gain", "pr": "pr"}[args.model]
    K = args.k or cfg.int(section, "K")
    model = _new_model(args, ds, K)

    def pick(key, conv):
        return conv(section, key) if cfg.has(section, key) else conv("train", key)

    tcfg = TrainConfig(args.regime, args.domain, pick("epochs", cfg.int),
                       pick("batch_size", cfg.int), pick("lr", cfg.float),
                       pick("patience", cfg.int), cfg.int("general", "seed"),
                       cfg.bool("general", "deterministic"))
    mask = None
    if model.kind == "pr" and model.source in ("estimator", "direct"):
        train_sparsity_net(model, ds, TrainConfig("JT", None, cfg.int("pr", "estimator_epochs"),
                                                  tcfg.batch_size, tcfg.lr,
                                                  cfg.int("pr", "estimator_patience"),
                                                  tcfg.seed, tcfg.deterministic))
        mask = step_size_mask(model)
    _, hist = train(model, ds, tcfg, mask)
    modelio.save_model(args.out, model)
    print(f"best epoch {hist.best_epoch}, val loss {min(hist.val_losses):.6g}; wrote {args.out}",
          file=out)


def cmd_eval(args, cfg, out):
    from .experiments.recipes import CSV_FIELDS
    from .experiments.training import evaluate

    model = modelio.load_model(args.model)
    ds = datagen.load_dataset(args.data)
    res = evaluate(model, ds, args.split)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for j, m in res.items():
        for metric, value in m.items():
            w.writerow(["eval", args.regime, f"D{j + 1}", metric, f"{value:.6f}",
                        ds.seed, ds.config_hash])


def cmd_recipe(args, cfg, out):
    from .experiments.recipes import run_recipe
    res = run_recipe(args.name, cfg, args.out_dir)
    print(f"wrote {len(res.rows)} rows to {res.csv_path}", file=out)


def cmd_diagnose(args, cfg, out):
    from .experiments.diagnose import diagnose_beta_split
    models = [modelio.load_model(p) for p in args.models]
    report = diagnose_beta_split(models, args.threshold, args.rel)
    for line in report.lines():
        print(line, file=out)


def cmd_complexity(args, cfg, out):
    if os.path.exists(args.model):
        model = modelio.load_model(args.model)
    else:
        if args.model not in ("lista", "ptda", "ddtda"):
            raise InvalidArgument("--model must be lista, ptda, ddtda or a model file")
        if None in (args.nx, args.ny, args.k):
            raise InvalidArgument("--nx, --ny and --k are required for a named configuration")
        hidden = _ints(args.hidden) if args.hidden else _DEFAULT_HIDDEN.get(args.model)
        model = metrics.table_descriptor(args.model, args.nx, args.ny, args.k, hidden)
    params, flops = metrics.count_params_flops(model)
    print(f"params {params}", file=out)
    print(f"flops {flops}", file=out)
    if getattr(model, "kind", None) != "pr" and not (isinstance(model, dict)
                                                     and model.get("model") == "pr"):
        print(f"threshold_ops {metrics.threshold_ops(model)}", file=out)


def export_plot(csv_path, figure, out_dir):
    """Write one CSV per (recipe, metric): rows are domains, columns are regimes.

    Cell values are copied verbatim from the results file.
    """
    if figure not in FIGURES:
        raise UsageError(f"unknown figure id {figure!r}; choose from {', '.join(FIGURES)}")
    with open(csv_path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    need = {"recipe", "regime", "domain", "metric", "value"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise FormatError(f"{csv_path}: missing columns {sorted(need - set(reader.fieldnames or []))}",
                          offset=0)
    tables = {}
    for row in reader:
        if row["recipe"] not in FIGURES[figure]:
            continue
        key = (row["recipe"], row["metric"])
        tables.setdefault(key, {}).setdefault(row["domain"], {})[row["regime"]] = row["value"]
    if not tables:
        raise FormatError(f"{csv_path}: no rows for {figure} ({', '.join(FIGURES[figure])})",
                          offset=0)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for (recipe, metric), cells in tables.items():
        regimes = []
        for per in cells.values():
            regimes += [r for r in per if r not in regimes]
        path = os.path.join(out_dir, f"{figure}_{recipe}_{metric}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["domain", *regimes])
            for domain, per in cells.items():
                w.writerow([domain, *(per.get(r, "") for r in regimes)])
        written.append(path)
    return written


def cmd_export_plot(args, cfg, out):
    for path in export_plot(args.csv, args.figure, args.out_dir):
        print(f"wrote {path}", file=out)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "recipe": cmd_recipe,
    "diagnose": cmd_diagnose,
    "complexity": cmd_complexity,
    "export-plot": cmd_export_plot,
}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        COMMANDS[args.command](args, cfg, out)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"utda: invalid argument: {exc}", file=err)
        return EXIT_USAGE
    except (FormatError, InvalidState, OSError) as exc:
        print(f"utda: data error: {exc}", file=err)
        return EXIT_DATA
    except NumericError as exc:
        print(f"utda: numeric failure: {exc}", file=err)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
