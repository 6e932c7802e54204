import csv
import io

import pytest

from utda.cli import FIGURES, main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_complexity_table_values():
    code, out, _ = run("complexity", "--model", "lista", "--nx", "784", "--ny", "500", "--k", "15")
    assert code == 0
    assert "params 1007440" in out and "flops 15099840" in out
    assert "params 1721697" in run("complexity", "--model", "ptda", "--nx", "784", "--ny", "500",
                                   "--k", "15")[1]
    assert "params 1720070" in run("complexity", "--model", "ddtda", "--nx", "784", "--ny", "500",
                                   "--k", "15")[1]


def test_usage_errors():
    assert run()[0] == 1
    code, _, err = run("frobnicate")
    assert code == 1 and "invalid choice" in err
    assert run("complexity", "--model", "lista", "--bogus")[0] == 1
    assert run("complexity", "--model", "lista")[0] == 1
    assert run("complexity", "--full-scale", "--desk-scale", "--model", "lista")[0] == 1
    assert run("--help")[0] == 0


def test_gen_data_is_reproducible(tmp_path):
    paths = [tmp_path / "a.utds", tmp_path / "b.utds"]
    for p in paths:
        code, out, _ = run("gen-data", "--recipe", "na_broad_snr", "--seed", "7",
                           "--set", "na.n_per_domain=30", "--out", str(p))
        assert code == 0 and "90 samples in 3 domains" in out
    assert paths[0].read_bytes() == paths[1].read_bytes()
    code, _, _ = run("gen-data", "--recipe", "na_broad_snr", "--seed", "8",
                     "--set", "na.n_per_domain=30", "--out-dir", str(tmp_path))
    assert code == 0
    assert (tmp_path / "na_broad_snr.utds").read_bytes() != paths[0].read_bytes()


def test_train_eval_diagnose_flow(tmp_path):
    data = tmp_path / "d.utds"
    small = ["--set", "na.n_per_domain=40", "--set", "na.nx=20", "--set", "na.ny=8",
             "--set", "na.L=2", "--set", "train.epochs=2", "--seed", "3"]
    assert run("gen-data", "--recipe", "na_broad_snr", "--out", str(data), *small)[0] == 0
    models = []
    for j in range(2):
        path = tmp_path / f"pt{j}.utda"
        code, out, err = run("train", "--data", str(data), "--model", "lista", "--regime", "PT",
                             "--domain", str(j), "--k", "3", "--out", str(path), *small)
        assert code == 0, err
        models.append(str(path))
    code, out, _ = run("eval", "--model", models[0], "--data", str(data), "--regime", "PT-D1")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 6 and {r["metric"] for r in rows} == {"NMSE_dB", "HR"}
    code, out, _ = run("diagnose", *models)
    assert code == 0 and out.startswith("cut =") and "beta" in out
    code, out, _ = run("complexity", "--model", models[0])
    assert code == 0 and "threshold_ops" in out


def test_train_rejects_mismatched_model(tmp_path):
    data = tmp_path / "pr.utds"
    small = ["--set", "pr.nx=20", "--set", "pr.ny=30", "--set", "pr.nyc=10",
             "--set", "pr.n_per_domain=10", "--set", "pr.L=1,2,3"]
    assert run("gen-data", "--recipe", "pr_three_domains", "--out", str(data), *small)[0] == 0
    code, _, err = run("train", "--data", str(data), "--model", "lista", "--out",
                       str(tmp_path / "m.utda"))
    assert code == 1 and "phase-retrieval" in err
    code, _, err = run("train", "--data", str(data), "--model", "pr", "--source", "fixed",
                       "--L", "2", "--set", "pr.epochs=1", "--out", str(tmp_path / "m.utda"))
    assert code == 0, err


def test_recipe_and_export(tmp_path, tiny):
    sets = [a for o in tiny for a in ("--set", o)]
    code, out, err = run("recipe", "pr_three_domains", "--deterministic", "--seed", "2",
                         "--out-dir", str(tmp_path), *sets)
    assert code == 0, err
    assert "24 rows" in out
    src = tmp_path / "pr_three_domains.csv"
    code, out, _ = run("export-plot", str(src), "fig8", "--out-dir", str(tmp_path / "plots"))
    assert code == 0
    files = sorted((tmp_path / "plots").iterdir())
    assert [f.name for f in files] == ["fig8_pr_three_domains_HR.csv",
                                      "fig8_pr_three_domains_RE_dB.csv"]
    values = {r["value"] for r in csv.DictReader(open(src))}
    for f in files:
        rows = list(csv.reader(open(f)))
        assert rows[0] == ["domain", "PT", "JT", "P-TDA", "DD-TDA"]
        assert [r[0] for r in rows[1:]] == ["D1", "D2", "D3"]
        assert all(cell in values for r in rows[1:] for cell in r[1:])


def test_export_na_two_files(tmp_path, tiny):
    sets = [a for o in tiny for a in ("--set", o)]
    assert run("recipe", "na_broad_snr", "--out-dir", str(tmp_path), *sets)[0] == 0
    code, _, _ = run("export-plot", str(tmp_path / "na_broad_snr.csv"), "fig2",
                     "--out-dir", str(tmp_path / "p"))
    assert code == 0
    files = list((tmp_path / "p").iterdir())
    assert len(files) == 2
    for f in files:
        rows = list(csv.reader(open(f)))
        assert len(rows) == 4 and len(rows[0]) == 7


def test_export_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("export-plot", str(empty), "fig2")[0] == 2
    assert run("export-plot", str(tmp_path / "missing.csv"), "fig2")[0] == 2
    code, _, err = run("export-plot", str(empty), "fig99")
    assert code == 1 and "fig99" in err
    assert set(FIGURES) >= {"fig2", "fig6", "fig8"}


def test_recipe_unknown_and_bad_model_file(tmp_path):
    assert run("recipe", "nope", "--out-dir", str(tmp_path))[0] == 1
    bad = tmp_path / "bad.utda"
    bad.write_bytes(b"UTDA\x01\x00garbage")
    assert run("complexity", "--model", str(bad))[0] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(tmp_path):
    data = tmp_path / "d.utds"
    small = ["--set", "na.n_per_domain=20", "--set", "na.nx=20", "--set", "na.ny=8",
             "--set", "na.L=2"]
    assert run("gen-data", "--recipe", "na_broad_snr", "--out", str(data), *small)[0] == 0
    code, _, err = run("train", "--data", str(data), "--model", "lista", "--k", "2",
                       "--set", "train.lr=1e300", "--set", "train.epochs=3",
                       "--out", str(tmp_path / "m.utda"), *small)
    assert code == 3, err
