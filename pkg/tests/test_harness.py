import dataclasses

import numpy as np
import pytest

from fictsc.data import TimeSeriesDataset, load_dataset
from fictsc.harness.cli import main
from fictsc.harness.config import ConfigError, ExperimentConfig, load_config, parse_config_text
from fictsc.harness.suite import arm_config, run_comparison_suite
from fictsc.harness.synthetic import SyntheticShiftRecipe, generate_synthetic_shift
from fictsc.harness.train import evaluate, train
from fictsc.shift import class_dissimilarity_matrix, class_values, wasserstein1
from fictsc.toys import separable_points


def tiny(**over):
    """A fast configuration for plumbing tests."""
    values = {"recipe.n_train": "24", "recipe.n_test": "24", "recipe.length": "16", "width": "8",
              "epochs": "2", "batch_size": "8", "sharpness": "0"}
    values.update({k: str(v) for k, v in over.items()})
    return load_config(overrides=values)


# ----------------------------------------------------------------- config

def test_config_text_parsing(tmp_path):
    text = "# experiment\noptimizer = sam   # two passes\nrho=0.1\n\nrecipe.offset = 3\nrecipe.levels = [1, 2, 3]\nzscore = no\n"
    vals = parse_config_text(text)
    assert vals == {"optimizer": "sam", "rho": "0.1", "recipe.offset": "3", "recipe.levels": "[1, 2, 3]",
                    "zscore": "no"}
    p = tmp_path / "run.cfg"
    p.write_text(text)
    cfg = load_config(p, {"seed": "4"})
    assert (cfg.optimizer, cfg.rho, cfg.recipe.offset, cfg.zscore, cfg.seed) == ("sam", 0.1, 3.0, False, 4)
    assert cfg.recipe.levels == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("overrides", [{"optimizer": "adam"}, {"batch_size": "0"}, {"nope": "1"},
                                       {"epochs": "many"}, {"zscore": "maybe"}, {"recipe.classes": "4"},
                                       {"train_path": "a.csv"}])
def test_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_config_line_without_equals():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("a = 1\njunk\n")


def test_snapshot_has_dotted_recipe_keys():
    snap = ExperimentConfig().snapshot()
    assert snap["recipe.offset"] == 1.5 and snap["optimizer"] == "fic" and "recipe" not in snap


# -------------------------------------------------------------- synthetic

def test_canonical_recipe_values():
    r = SyntheticShiftRecipe()
    assert (r.classes, r.channels, r.length, r.offset, r.scale_drift, r.noise, r.n_train, r.n_test) == \
        (3, 2, 96, 1.5, 0.3, 0.5, 300, 300)
    train, test = generate_synthetic_shift(r)
    assert train.series.shape == (300, 2, 96) and test.series.shape == (300, 2, 96)
    assert np.bincount(train.labels).tolist() == [100, 100, 100]


def test_synthetic_deterministic_in_seed():
    a = generate_synthetic_shift(SyntheticShiftRecipe(seed=3))
    b = generate_synthetic_shift(SyntheticShiftRecipe(seed=3))
    c = generate_synthetic_shift(SyntheticShiftRecipe(seed=4))
    assert np.array_equal(a[1].series, b[1].series) and not np.array_equal(a[0].series, c[0].series)


def test_zero_shift_is_within_resampling_noise():
    rec = SyntheticShiftRecipe(offset=0.0, scale_drift=0.0, seed=1)
    train, test = generate_synthetic_shift(rec)
    other, _ = generate_synthetic_shift(dataclasses.replace(rec, seed=2))
    for c in range(rec.classes):
        shift = wasserstein1(class_values(train, c, 0), class_values(test, c, 0))
        resample = wasserstein1(class_values(train, c, 0), class_values(other, c, 0))
        assert shift < 3 * resample


def test_offset_three_moves_every_class_by_three():
    train, test = generate_synthetic_shift(SyntheticShiftRecipe(offset=3.0, scale_drift=0.0))
    diag = np.diag(class_dissimilarity_matrix(train, test).values)
    assert np.all(np.abs(diag - 3.0) < 0.3)


def test_two_frequencies_without_shift_are_learnable():
    cfg = load_config(overrides={"recipe.classes": "2", "recipe.frequencies": "2,5", "recipe.amplitudes": "1,1",
                                 "recipe.levels": "0,0", "recipe.offset": "0", "recipe.scale_drift": "0",
                                 "recipe.n_train": "200", "recipe.n_test": "200", "epochs": "10",
                                 "optimizer": "plain", "sharpness": "0"})
    assert train(cfg).metrics.accuracy > 0.95


# ------------------------------------------------------------------ train

@pytest.mark.parametrize("optimizer", ["plain", "fic"])
@pytest.mark.parametrize("seed", range(3))
def test_linear_separable_reaches_perfect_accuracy(optimizer, seed):
    X, y = separable_points(n=200, seed=seed)
    Xt, yt = separable_points(n=200, seed=seed + 100)
    data = (TimeSeriesDataset(X, y, ["a", "b"]), TimeSeriesDataset(Xt, yt, ["a", "b"], split="test"))
    cfg = load_config(overrides={"architecture": "linear", "epochs": "50", "batch_size": "8",
                                 "optimizer": optimizer, "seed": str(seed), "sharpness": "0"})
    assert train(cfg, data=data).metrics.accuracy == 1.0


def test_zero_epochs_reports_untrained_chance_level():
    accs = []
    for s in range(5):
        rep = train(load_config(overrides={"epochs": "0", "seed": str(s), "recipe.seed": str(s),
                                           "sharpness": "0"}))
        assert rep.steps == 0 and rep.loss_curve == [] and rep.trigger_rate == 0.0
        accs.append(rep.metrics.accuracy)
    assert abs(np.median(accs) - 1 / 3) < 0.05


def test_runs_are_deterministic():
    a = train(tiny(optimizer="fic", sharpness=1))
    b = train(tiny(optimizer="fic", sharpness=1))
    assert a.records(include_time=False) == b.records(include_time=False)
    assert a.time_per_iter > 0 and 0.0 <= a.trigger_rate <= 1.0


def test_report_files(tmp_path):
    rep = train(tiny(optimizer="sam"))
    rep.write(tmp_path / "r.txt", tmp_path / "loss.txt")
    lines = (tmp_path / "r.txt").read_text().splitlines()
    keys = dict(l.split("=", 1) for l in lines)
    assert keys["optimizer"] == "sam" and int(keys["backward_passes"]) == 2 * int(keys["steps"])
    loss = (tmp_path / "loss.txt").read_text().splitlines()
    assert loss[0] == "step loss" and len(loss) == rep.steps + 1
    assert "test accuracy" in rep.summary()


def test_non_finite_loss_gives_partial_report():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 1, 4))
    X[7, 0, 1] = np.nan
    y = np.arange(12) % 2
    data = (TimeSeriesDataset(X, y, ["a", "b"]), TimeSeriesDataset(X[:6], y[:6], ["a", "b"], split="test"))
    cfg = load_config(overrides={"architecture": "linear", "batch_size": "2", "epochs": "3"})
    rep = train(cfg, data=data)
    assert rep.aborted and "non-finite" in rep.error
    assert 0 <= rep.steps < 6 and len(rep.loss_curve) == rep.steps
    assert "aborted=1" in rep.records()


def test_evaluate_counts_model_classes():
    rep = train(tiny(epochs=0))
    m = evaluate(rep.model, generate_synthetic_shift(tiny().recipe)[1])
    assert 0.0 <= m.accuracy <= 1.0


def test_file_based_config(tmp_path):
    tr, te = generate_synthetic_shift(tiny().recipe)
    from fictsc.data import save_csv
    save_csv(tr, tmp_path / "tr.csv")
    save_csv(te, tmp_path / "te.csv")
    cfg = tiny(train_path=tmp_path / "tr.csv", test_path=tmp_path / "te.csv")
    a = train(cfg)
    b = train(tiny())
    assert a.metrics == b.metrics


# ------------------------------------------------------------------ suite

def test_arm_configs():
    base = tiny()
    assert arm_config(base, "in-ablation").instance_norm and arm_config(base, "in-ablation").optimizer == "plain"
    assert arm_config(base, "sam").optimizer == "sam"
    with pytest.raises(ValueError):
        arm_config(base, "adam")
    with pytest.raises(ValueError):
        run_comparison_suite(base, range(5))


def test_infinite_epsilon_matches_baseline_and_sam_doubles_passes():
    rep = run_comparison_suite(tiny(epsilon=1e300), range(10), ["baseline", "fic", "sam"])
    for b, f, s in zip(rep.runs["baseline"], rep.runs["fic"], rep.runs["sam"]):
        assert b.loss_curve == f.loss_curve and b.metrics == f.metrics and f.trigger_rate == 0.0
        assert s.backward_passes == 2 * f.backward_passes
    assert "fic_vs_baseline" in rep.tests and "sam_vs_baseline" in rep.tests


def test_suite_is_reproducible():
    a = run_comparison_suite(tiny(), range(10), ["baseline", "fic", "in-ablation"])
    b = run_comparison_suite(tiny(), range(10), ["baseline", "fic", "in-ablation"])
    assert a.records(include_time=False) == b.records(include_time=False)
    assert "in_vs_baseline" in a.tests and "wilcoxon" in a.summary()


# -------------------------------------------------------------------- CLI

def _cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# tiny run\nrecipe.n_train = 24\nrecipe.n_test = 24\nrecipe.length = 16\nwidth = 8\n"
                 "epochs = 2\nbatch_size = 8\n")
    return p


def test_cli_train_happy_path(tmp_path, capsys):
    out = tmp_path / "report.txt"
    code = main(["train", "--config", str(_cfg_file(tmp_path)), "--optimizer", "fic", "--epsilon", "2",
                 "--batch", "64", "--out", str(out), "--checkpoint", str(tmp_path / "m.ckpt"),
                 "--log", str(tmp_path / "diag.log")])
    assert code == 0 and out.exists()
    keys = dict(l.split("=", 1) for l in out.read_text().splitlines())
    assert keys["batch_size"] == "64" and keys["optimizer"] == "fic" and keys["epsilon"] == "2.0"
    assert len((tmp_path / "diag.log").read_text().splitlines()) == int(keys["steps"])
    assert "report written" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["train", "--optimizer", "bogus"], ["train", "--frobnicate"], [],
                                  ["analyze-shift"], ["compare", "--seeds", "3"]])
def test_cli_usage_errors(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_conflicting_flags(capsys):
    assert main(["train", "--optimizer", "plain", "--epsilon", "2"]) == 1
    assert "--epsilon only applies" in capsys.readouterr().err
    assert main(["train", "--optimizer", "fic", "--rho", "0.1"]) == 1
    assert main(["train", "--train", "x.csv"]) == 1
    assert main(["train", "--set", "optimizer=adam"]) == 1


def _offset_fixture(path):
    lines = ["#d=1,T=4,classes=lo,hi"]
    rng = np.random.default_rng(0)
    for i in range(6):
        lab = ["lo", "hi"][i % 2]
        vals = rng.normal(size=4) + (3.0 if lab == "hi" else 0.0)
        lines.append(",".join([lab] + [repr(float(v)) for v in vals]))
    path.write_text("\n".join(lines) + "\n")


def test_cli_analyze_shift_matches_library(tmp_path):
    fx = tmp_path / "fixture.csv"
    _offset_fixture(fx)
    out = tmp_path / "shift.txt"
    assert main(["analyze-shift", "--data", str(fx), "--channel", "0", "--out", str(out)]) == 0
    ds = load_dataset(fx)
    expect = class_dissimilarity_matrix(ds, ds).values
    rec = [l for l in out.read_text().splitlines() if l.startswith("matrix=raw_train-vs-test_before-IN ")][0]
    got = dict(tok.split("=") for tok in rec.split()[1:])
    for i in range(2):
        for j in range(2):
            assert float(got[f"m{i}_{j}"]) == expect[i, j]


def test_cli_data_errors(tmp_path, capsys):
    assert main(["analyze-shift", "--data", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("#d=1,T=2,classes=a\nzz,1,2\n")
    assert main(["analyze-shift", "--data", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["train", "--train", str(bad), "--test", str(bad)]) == 2
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"x" * 20)
    assert main(["sharpness", "--checkpoint", str(junk), "--data", str(bad)]) == 2


def test_cli_bench_synth_sharpness_and_compare(tmp_path, capsys):
    cfg = _cfg_file(tmp_path)
    assert main(["bench-synth", "--config", str(cfg), "--out-dir", str(tmp_path / "fx"), "--seed", "3"]) == 0
    tr = load_dataset(tmp_path / "fx" / "train.csv")
    assert tr.n == 24 and tr.T == 16
    assert main(["train", "--config", str(cfg), "--train", str(tmp_path / "fx" / "train.csv"),
                 "--test", str(tmp_path / "fx" / "test.csv"), "--no-zscore", "--no-sharpness",
                 "--checkpoint", str(tmp_path / "m.ckpt"), "--out", str(tmp_path / "r.txt")]) == 0
    sl = tmp_path / "slice.txt"
    assert main(["sharpness", "--checkpoint", str(tmp_path / "m.ckpt"), "--data", str(tmp_path / "fx" / "train.csv"),
                 "--slice", str(sl), "--resolution", "3", "--out", str(tmp_path / "s.txt")]) == 0
    text = (tmp_path / "s.txt").read_text()
    assert "estimator=per-sample" in text and "estimator=batch-mean" in text and sl.exists()
    out = tmp_path / "cmp.txt"
    assert main(["compare", "--config", str(cfg), "--set", "sharpness=0", "--seeds", "10",
                 "--arms", "baseline,fic", "--quiet", "--out", str(out)]) == 0
    assert "test=fic_vs_baseline" in out.read_text()
    assert main(["compare", "--arms", "baseline,adam"]) == 1
