import math

import numpy as np
import pytest

from rrsim.cli import cli_main
from rrsim.config import ExperimentConfig
from rrsim.data import LibsvmParseError, PartitionRule, load_libsvm, make_synthetic, normalize_label, partition
from rrsim.diagnostics import hetero_constants
from rrsim.harness import (
    SweepError,
    build_problem,
    build_sampler,
    lambda_for_condition_number,
    resolve_method,
    run,
    sweep,
)
from rrsim.objective import DataPoint
from rrsim.rng import RngStream


def synth_cfg(**extra):
    base = {
        "dataset.kind": "synthetic", "dataset.M": 3, "dataset.n": 4, "dataset.d": 5,
        "dataset.heterogeneity": 0.8, "dataset.lambda": 0.1,
        "compressor.kind": "rand_k", "compressor.k": 2,
        "method.name": "qrr", "method.stepsize_preset": "theory",
        "epochs": 10, "seed": 5,
    }
    base.update(extra)
    return ExperimentConfig().replace(**base)


# -- libsvm parsing ------------------------------------------------------------


def test_load_libsvm_basic(tmp_path):
    path = tmp_path / "toy"
    path.write_text("+1 1:0.5 3:2.0\n0 2:1.0\n2 1:-1.0 2:0.25\n")
    points, d = load_libsvm(path)
    assert d == 3
    assert points[0].label == 1.0
    assert points[0].indices == (0, 2)
    assert points[0].values == (0.5, 2.0)
    assert points[1].label == -1.0  # label 0 maps to -1
    assert points[2].label == -1.0  # label 2 maps to -1


def test_load_libsvm_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.write_text("")
    with pytest.raises(LibsvmParseError):
        load_libsvm(empty)
    bad = tmp_path / "bad"
    bad.write_text("+1 1:0.5\n+1 junk\n")
    with pytest.raises(LibsvmParseError) as err:
        load_libsvm(bad)
    assert err.value.lineno == 2


def test_normalize_label():
    assert normalize_label("-1") == -1.0
    assert normalize_label("0") == -1.0
    assert normalize_label("2") == -1.0
    assert normalize_label("+1") == 1.0
    assert normalize_label("1") == 1.0
    assert normalize_label("3") == 1.0
    with pytest.raises(ValueError):
        normalize_label("spam")


# -- partitioning ----------------------------------------------------------------


def _points(labels):
    return [DataPoint((0,), (1.0,), float(l)) for l in labels]


def test_partition_one_point_each():
    pts = _points([1, -1, 1])
    clients = partition(pts, PartitionRule("sorted_equal_split", 3))
    assert [c.n for c in clients] == [1, 1, 1]


def test_partition_sorted_split_counts():
    pts = _points([-1] * 5 + [1] * 6)
    clients = partition(pts, PartitionRule("sorted_equal_split", 3))
    assert [c.n for c in clients] == [3, 3, 5]  # floor(11/3) each, remainder last
    labels = [[p.label for p in c.points] for c in clients]
    assert labels[0] == [-1.0] * 3
    assert labels[1] == [-1.0, -1.0, 1.0]
    assert labels[2] == [1.0] * 5


def test_partition_requires_enough_points():
    with pytest.raises(ValueError):
        partition(_points([1]), PartitionRule("sorted_equal_split", 2))


def test_partition_iid_needs_rng():
    pts = _points([1, -1, 1, -1])
    with pytest.raises(ValueError):
        partition(pts, PartitionRule("iid_shuffle_split", 2))
    clients = partition(pts, PartitionRule("iid_shuffle_split", 2),
                        RngStream(3).child("part").generator())
    assert [c.n for c in clients] == [2, 2]


# -- synthetic problems -----------------------------------------------------------


def test_synthetic_identical_clients():
    p = make_synthetic(M=3, n=4, d=5, heterogeneity=0.0, kind="logistic", lam=0.2, seed=9)
    h = hetero_constants(p, p.reference(1e-10))
    assert h.zeta_star_sq <= 1e-18


def test_synthetic_single_sample():
    p = make_synthetic(M=3, n=1, d=5, heterogeneity=1.0, kind="logistic", lam=0.2, seed=9)
    h = hetero_constants(p, p.reference(1e-10))
    assert h.sigma_star_sq <= 1e-20


def test_synthetic_quadratic_reference_matches_mean():
    p = make_synthetic(M=3, n=4, d=5, heterogeneity=0.9, kind="quadratic", seed=10)
    centers = np.concatenate([p.rows(m, np.arange(p.n)) for m in range(p.M)])
    assert np.linalg.norm(p.reference(1e-12) - centers.mean(axis=0)) <= 1e-10


def test_condition_number_rule():
    builder = lambda lam: make_synthetic(M=2, n=6, d=4, heterogeneity=0.5,
                                         kind="logistic", lam=lam, seed=12)
    lam = lambda_for_condition_number(builder, kappa=100.0)
    c = builder(lam).constants
    assert c.L / c.mu == pytest.approx(100.0, rel=1e-3)


def test_build_problem_with_condition_number():
    cfg = synth_cfg(**{"dataset.lambda": None, "dataset.condition_number": 50.0})
    p = build_problem(cfg)
    assert p.constants.L / p.constants.mu == pytest.approx(50.0, rel=1e-3)


# -- method resolution and runs -----------------------------------------------------


def test_resolve_method_theory_and_multiplier():
    cfg = synth_cfg(**{"method.multiplier": 0.5})
    p = build_problem(cfg)
    sampler = build_sampler(cfg, p)
    import rrsim.stepsizes as sz
    spec = resolve_method(cfg, p, sampler)
    expected = 0.5 * sz.preset_qrr(p.constants, 5.0 / 2.0 - 1.0, p.M)
    assert spec.gamma == pytest.approx(expected, rel=1e-12)
    assert spec.policy == "rr_every_epoch"


def test_default_policy_per_method():
    cfg = synth_cfg(**{"method.name": "diana_rr"})
    p = build_problem(cfg)
    spec = resolve_method(cfg, p, build_sampler(cfg, p))
    assert spec.policy == "rr_once"
    cfg2 = synth_cfg(**{"method.name": "qsgd"})
    spec2 = resolve_method(cfg2, p, build_sampler(cfg2, p))
    assert spec2.policy == "with_replacement"


def test_run_writes_csv_and_is_deterministic(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    run(synth_cfg(out=str(out1)))
    run(synth_cfg(out=str(out2)))
    assert out1.read_bytes() == out2.read_bytes()
    run(synth_cfg(out=str(out2), seed=6))
    assert out1.read_bytes() != out2.read_bytes()


def test_sweep_single_multiplier():
    cfg = synth_cfg(epochs=5)
    best, entries = sweep(cfg, [1.0])
    assert best == 1.0
    assert len(entries) == 1
    assert math.isfinite(entries[0].final_f_gap)


def test_sweep_all_diverged():
    cfg = synth_cfg(epochs=5)
    with pytest.raises(SweepError) as err:
        sweep(cfg, [1e9, 1e10])
    assert set(err.value.rounds) == {1e9, 1e10}


def test_sweep_deterministic():
    cfg = synth_cfg(epochs=5)
    first = sweep(cfg, [0.5, 1.0, 2.0])
    second = sweep(cfg, [0.5, 1.0, 2.0])
    assert first == second


def test_sweep_best_matches_rerun_oracle():
    cfg = synth_cfg(**{"dataset.problem": "quadratic", "dataset.lambda": 0.0,
                       "compressor.kind": "identity", "compressor.k": None,
                       "method.name": "fedrr", "epochs": 8})
    grid = (0.5, 1.0, 2.0)
    best, entries = sweep(cfg, grid)
    finals = {}
    for mult in grid:
        records = run(cfg.replace(**{"method.multiplier": mult}))
        finals[mult] = records[-1].f_gap
    expected = min(grid, key=lambda m: (finals[m], m))
    assert best == expected
    for e in entries:
        assert e.final_f_gap == pytest.approx(finals[e.multiplier], rel=1e-12)


# -- CLI ---------------------------------------------------------------------------


def write_cfg(tmp_path, extra=""):
    text = (
        "dataset.kind = synthetic\ndataset.M = 3\ndataset.n = 4\ndataset.d = 5\n"
        "dataset.heterogeneity = 0.8\ndataset.lambda = 0.1\n"
        "compressor.kind = rand_k\ncompressor.k = 2\n"
        "method.name = qrr\nmethod.stepsize_preset = theory\n"
        "epochs = 5\nseed = 5\n" + extra
    )
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


def test_cli_run_and_determinism(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out1 = tmp_path / "r1.csv"
    out2 = tmp_path / "r2.csv"
    assert cli_main(["run", str(cfg), "--out", str(out1)]) == 0
    assert cli_main(["run", str(cfg), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    captured = capsys.readouterr()
    assert "f_gap=" in captured.out


def test_cli_missing_config_is_io_error(tmp_path):
    assert cli_main(["run", str(tmp_path / "absent.cfg")]) == 3


def test_cli_bad_config_is_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("method.name = qrr\n")  # synthetic without n, d
    assert cli_main(["run", str(path)]) == 1


def test_cli_divergence_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "method.multiplier = 1000000\n")
    assert cli_main(["run", str(cfg)]) == 2


def test_cli_constants(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert cli_main(["constants", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "L_max" in out and "mu = " in out


def test_cli_certify_compressor(capsys):
    assert cli_main(["certify-compressor", "--kind", "rand_k", "--d", "8",
                     "--k", "2", "--exhaustive"]) == 0
    out = capsys.readouterr().out
    assert "empirical_omega = 3" in out
    assert "ok = True" in out


def test_cli_sweep(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert cli_main(["sweep", str(cfg), "--multipliers", "0.5,1"]) == 0
    out = capsys.readouterr().out
    assert "best multiplier" in out


def test_cli_reproduce_missing_data(tmp_path):
    assert cli_main(["reproduce", "exp1", "--data-dir", str(tmp_path)]) == 3


# -- reproduction plumbing on a miniature dataset ------------------------------------


def make_mini_libsvm(path, n_points=60, d=6, seed=123):
    rng = RngStream(seed).child("mini").generator()
    w = rng.standard_normal(d)
    lines = []
    for _ in range(n_points):
        row = rng.standard_normal(d)
        row *= 2.0 / np.linalg.norm(row)
        label = "+1" if row @ w >= 0 else "-1"
        feats = " ".join(f"{j + 1}:{row[j]:.6f}" for j in range(d))
        lines.append(f"{label} {feats}")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_reproduce_exp1_plumbing(tmp_path):
    from rrsim.harness import reproduce_exp1

    data = make_mini_libsvm(tmp_path / "mini")
    out = tmp_path / "runs"
    out.mkdir()
    results = reproduce_exp1(data, out_dir=out, seeds=1, epochs=3, grid=(0.5, 1.0))
    assert set(results) == {"qrr", "diana_rr", "qsgd", "diana"}
    for name, info in results.items():
        assert math.isfinite(info["final_f_gap"])
        assert info["best_multiplier"] in (0.5, 1.0)
        assert (out / f"{name}.csv").exists()


def test_reproduce_exp2_plumbing(tmp_path):
    from rrsim.harness import reproduce_exp2

    data = make_mini_libsvm(tmp_path / "mini")
    results = reproduce_exp2(data, seeds=1, epochs=3, grid=(1.0,))
    assert set(results) == {"q_nastya", "diana_nastya", "local_sgd_q"}
    for info in results.values():
        assert math.isfinite(info["final_f_gap"])
