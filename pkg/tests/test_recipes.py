import csv
import json

import pytest

from utda.config import Config
from utda.errors import InvalidArgument
from utda.experiments import recipes
from utda.experiments.recipes import CSV_FIELDS, RECIPES, recipe_dataset, run_recipe

SHAPES = {
    "na_broad_snr": ({"PT-D1", "PT-D2", "PT-D3", "JT", "P-TDA", "DD-TDA"}, ["D1", "D2", "D3"]),
    "na_narrow_snr": ({"PT-D1", "PT-D2", "PT-D3", "JT", "P-TDA", "DD-TDA"}, ["D1", "D2", "D3"]),
    "na_generalization": ({"PT-D2", "PT-D4", "PT-D6", "JT", "P-TDA", "DD-TDA"},
                          ["D2", "D4", "D6"]),
    "mnist_cs": ({"JT", "P-TDA", "DD-TDA"}, ["-10dB", "-5dB", "0dB", "10dB", "5dB"]),
    "gain_structured": ({"PT-D1", "PT-D2", "PT-D3", "JT", "P-TDA", "DD-TDA"}, ["D1", "D2", "D3"]),
    "gain_random": ({"PT-D1", "PT-D2", "PT-D3", "JT", "P-TDA", "DD-TDA"}, ["D1", "D2", "D3"]),
    "gain_generalization_45": ({"PT", "JT", "P-TDA", "DD-TDA"},
                               ["D46", "D47", "D48", "D49", "D50"]),
    "pr_three_domains": ({"PT", "JT", "P-TDA", "DD-TDA"}, ["D1", "D2", "D3"]),
    "pr_no_cauchy": ({"DD-TDA", "DD-TDA-Base"}, ["D1", "D2", "D3"]),
}


def test_recipe_list():
    assert set(RECIPES) == set(SHAPES)


@pytest.mark.parametrize("name", RECIPES)
def test_recipe_rows(tmp_path, tiny, name):
    res = run_recipe(name, Config.load(overrides=tiny), tmp_path, seed=1, deterministic=True)
    regimes, domains = SHAPES[name]
    assert {r["regime"] for r in res.rows} == regimes
    assert sorted({r["domain"] for r in res.rows}) == domains
    n_metrics = 2
    assert len(res.rows) == len(regimes) * len(domains) * n_metrics
    with open(res.csv_path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(CSV_FIELDS)
    assert all(r["recipe"] == name and r["seed"] == "1" for r in rows)
    assert len({r["config_hash"] for r in rows}) == 1
    with open(res.diagnostics_path, encoding="utf-8") as fh:
        json.load(fh)


def test_recipe_deterministic(tmp_path, tiny):
    texts = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        out.mkdir()
        res = run_recipe("na_broad_snr", Config.load(overrides=tiny), out, seed=7,
                         deterministic=True)
        texts.append(open(res.csv_path, "rb").read())
    assert texts[0] == texts[1]


def test_unknown_recipe(tmp_path):
    with pytest.raises(InvalidArgument):
        run_recipe("na_wide_snr", Config.load(), tmp_path)
    with pytest.raises(InvalidArgument):
        recipe_dataset("nope", Config.load())


def test_domain_definitions():
    cfg = Config.load()
    assert cfg.floats("na", "sigmas_broad") == [0.1, 0.03, 0.005]
    full = Config.load(full_scale=True)
    assert full.ints("pr", "L") == [10, 7, 4]
    ds = recipe_dataset("na_broad_snr", Config.load(overrides=["na.n_per_domain=10"]), 1)
    assert sorted(set(ds.sigma)) == [0.005, 0.03, 0.1]


def test_generalization_split(tmp_path, tiny, monkeypatch):
    seen = []
    real = recipes.train

    def spy(model, ds, config, mask=None):
        seen.append((config.regime, sorted(set(ds.domain.tolist()))))
        return real(model, ds, config, mask)

    monkeypatch.setattr(recipes, "train", spy)
    run_recipe("gain_generalization_45", Config.load(overrides=tiny), tmp_path, seed=2)
    mixed = [d for r, d in seen if r != "PT" and len(d) > 1]
    assert mixed and all(d == list(range(45)) for d in mixed)


def test_equal_budget(tmp_path, tiny, monkeypatch):
    sizes = []
    real = recipes.train

    def spy(model, ds, config, mask=None):
        sizes.append((config.regime, ds.n, ds.n_domains))
        return real(model, ds, config, mask)

    monkeypatch.setattr(recipes, "train", spy)
    run_recipe("na_broad_snr", Config.load(overrides=tiny), tmp_path, seed=3)
    # N = 40 per domain, J = 3: each PT set is one domain of N x J, mixed sets are J x N
    single = [n for _, n, j in sizes if j == 1]
    mixed = [n for _, n, j in sizes if j == 3]
    assert len(single) == 3 and all(n == 120 for n in single)
    assert len(mixed) == 3 and all(n == 120 for n in mixed)
