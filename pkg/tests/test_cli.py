import csv
import json

import pytest

from socialctx import synth
from socialctx.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate -> featurize on a small overlapping cohort, shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--profiles", "overlapping", "--min-participants", "3", "--seed", "3",
                 "--out", str(root / "data")]) == 0
    assert main(["featurize", "--dataset", str(root / "data"), "--out", str(root / "feat")]) == 0
    return root


def test_generate_is_byte_identical(tmp_path):
    args = ["generate", "--profiles", "overlapping", "--min-participants", "1", "--study-days", "5", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("events.jsonl", "reports.csv", "participants.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["master_seed"] == 5
    assert len(manifest["profile_hash"]) == 16


def test_missing_output_directory_is_created(tmp_path):
    out = tmp_path / "deep" / "er" / "dir"
    assert main(["generate", "--profiles", "overlapping", "--min-participants", "1", "--study-days", "2",
                 "--format", "csv", "--out", str(out)]) == 0
    assert (out / "events.csv").exists()
    assert (out / "resolved_config.generate.json").exists()


def test_invalid_profile_exits_2(tmp_path, capsys):
    cfg = synth.GeneratorConfig([synth.CountryProfile("UK", 2, 0.5)]).to_dict()
    cfg["profiles"][0]["alone_prevalence"] = 1.2
    path = tmp_path / "profile.json"
    path.write_text(json.dumps(cfg))
    assert main(["generate", "--profile-file", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "profiles.UK.alone_prevalence" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main(["experiment", "--approach", "sideways"]) == 2
    assert main(["experiment", "--out", str(tmp_path), "--features", str(tmp_path / "nope.csv")]) == 2
    assert main(["featurize", "--out", str(tmp_path)]) == 2


def test_window_bounds(pipeline, tmp_path):
    assert main(["featurize", "--dataset", str(pipeline / "data"), "--window", "30", "--out", str(tmp_path / "a")]) == 2
    assert main(["featurize", "--dataset", str(pipeline / "data"), "--window", "1200", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "features.csv").exists()


def test_experiment_screen_report(pipeline):
    feats = str(pipeline / "feat" / "features.csv")
    exp = pipeline / "exp"
    assert main(["experiment", "--features", feats, "--models", "majority_baseline,logistic_l2", "--n-seeds", "2",
                 "--grid", "fast", "--approach", "country_agnostic_one_to_many", "--out", str(exp)]) == 0
    rows = list(csv.DictReader(open(exp / "results.csv")))
    assert len(rows) == 2 * 2 * (5 + 5 * 4)
    assert (exp / "matrix_logistic_l2.csv").exists() and (exp / "summary.csv").exists()
    doc = json.loads((exp / "results.json").read_text())
    assert doc["config"]["approach"] == "country_agnostic_one_to_many"

    scr = pipeline / "scr"
    assert main(["screen", "--features", feats, "--scope", "all", "--top-k", "3", "--out", str(scr)]) == 0
    ranking = list(csv.DictReader(open(scr / "screening.csv")))
    assert [r["rank"] for r in ranking] == ["1", "2", "3"]

    rep = pipeline / "rep"
    assert main(["report", "--results", str(exp / "results.csv"), "--out", str(rep)]) == 0
    for name in ("auc_by_country.svg", "matrix_logistic_l2.svg", "summary.txt"):
        assert (rep / name).exists()
    assert (rep / "auc_by_country.svg").read_text().lstrip().startswith("<?xml")
    # re-rendering gives identical SVG bytes
    first = (rep / "matrix_logistic_l2.svg").read_bytes()
    assert main(["report", "--results", str(exp / "results.csv"), "--out", str(rep)]) == 0
    assert (rep / "matrix_logistic_l2.svg").read_bytes() == first


def test_report_on_empty_results_exits_2(tmp_path):
    empty = tmp_path / "results.csv"
    empty.write_text("approach,train_countries,test_country,model,personalization,feature_selection,seed,auc,f1,"
                     "n_train,n_test,n_features,hyperparameters\n")
    assert main(["report", "--results", str(empty), "--out", str(tmp_path / "r")]) == 2
    assert main(["report", "--out", str(tmp_path / "r")]) == 2


def test_config_precedence_and_echo(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 11\n\n[generate]\nprofiles = overlapping\nmin_participants = 1\nstudy_days = 3\n")
    out = tmp_path / "o"
    assert main(["generate", "--config", str(ini), "--study-days", "2", "--out", str(out)]) == 0
    echo = json.loads((out / "resolved_config.generate.json").read_text())
    assert echo["seed"] == 11  # from the file
    assert echo["profiles"] == "overlapping"
    assert echo["study_days"] == 2  # flag beats file
    assert echo["scale"] == 0.1  # built-in default
    assert json.loads((out / "manifest.json").read_text())["master_seed"] == 11


def test_bad_config_file(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[generate]\nnonsense = 1\n")
    assert main(["generate", "--config", str(ini), "--out", str(tmp_path)]) == 2
    ini.write_text("[generate]\nscale = lots\n")
    assert main(["generate", "--config", str(ini), "--out", str(tmp_path)]) == 2
