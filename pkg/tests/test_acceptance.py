"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to see them).

Criteria 4, 5, and 7 audit a real 2000-sample Fashion-MNIST subset and
skip, with instructions, when the IDX files are not available; synthetic
stand-ins covering the same directional claims always run (criteria 4s,
5s, 7s below).
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import micro_conv_net, require_fashion_mnist
from leakaudit.attacks import SalemAttacker, advantage, sorted_posterior_features, yeom_decisions
from leakaudit.cli import main as cli_main
from leakaudit.dp import DpConfig, clip_gradient, flatten_norm, rdp_epsilon, rdp_subsampled_gaussian
from leakaudit.dtc import dtc_gap
from leakaudit.harness.config import RunConfig
from leakaudit.harness.records import RunStore
from leakaudit.harness.runner import run_single
from leakaudit.nn import gradient_check, one_hot


def verdict(number, name, ok, detail=""):
    print(f"\nACCEPTANCE {number} ({name}): {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"acceptance {number} ({name}) failed: {detail}"


def mean(values):
    return sum(values) / len(values)


# -- 1: formula fidelity ------------------------------------------------------


def test_1_formula_fidelity():
    started = time.monotonic()
    n = 2000
    truths = np.arange(n) < n // 2
    checks = []
    for inf_target, adv_target in [(0.679, 0.358), (0.7495, 0.499)]:
        decisions = truths.copy()
        wrong = int(round(n * (1 - inf_target)))
        decisions[:wrong] = ~decisions[:wrong]
        checks.append(abs(advantage(decisions, truths).adv - adv_target) < 1e-12)
    for mean_d, mean_s, target in [(8.0, 1.1, 0.862), (5.2, 2.8, 0.461), (2.2, 1.0, 0.545)]:
        checks.append(abs(dtc_gap(mean_d, mean_s) - target) <= 1e-3)  # 0.1pt rounding
    elapsed = time.monotonic() - started
    verdict(1, "formula fidelity", all(checks) and elapsed < 1.0, f"elapsed {elapsed * 1000:.1f}ms")


# -- 2: gradient correctness --------------------------------------------------


def test_2_gradient_correctness():
    started = time.monotonic()
    gen = np.random.default_rng(0)
    worst = 0.0
    nets = [
        micro_conv_net(seed=1),
        micro_conv_net(seed=2, dropout=0.4).eval(),
        micro_conv_net(seed=3, spatial=0.3).eval(),
    ]
    for net in nets:
        assert net.parameter_count() <= 5000
        x = gen.random((3, 1, 8, 8))
        t = one_hot(gen.integers(0, 3, size=3), 3, np.float64)
        worst = max(worst, gradient_check(net, x, t))
    elapsed = time.monotonic() - started
    verdict(2, "gradient correctness", worst < 1e-4 and elapsed < 10.0, f"max rel err {worst:.2e}, {elapsed:.1f}s")


# -- 3: attack oracle equivalence --------------------------------------------


def _posterior_rows(gen, n, member, num_classes=10):
    top = gen.uniform(0.99, 0.999, n) if member else gen.uniform(0.3, 0.6, n)
    rest = gen.random((n, num_classes - 1))
    rest = rest / rest.sum(axis=1, keepdims=True) * (1 - top)[:, None]
    rows = np.column_stack([top, rest])
    idx = np.argsort(gen.random(rows.shape), axis=1)
    return np.take_along_axis(rows, idx, axis=1)


def test_3_attack_oracle_equivalence():
    started = time.monotonic()
    gen = np.random.default_rng(1)

    # loss-threshold rule vs exhaustive counting
    n = 2000
    membership = np.arange(n) < n // 2
    losses = np.where(membership, gen.normal(0.1, 0.05, n), gen.normal(2.0, 0.5, n))
    threshold = 0.15
    oracle = mean([1.0 if (loss < threshold) == member else 0.0 for loss, member in zip(losses, membership)])
    rule_inf = advantage(yeom_decisions(losses, threshold), membership).inf
    yeom_ok = abs(rule_inf - oracle) < 1e-12

    # posterior classifier: separable and signal-free cases, 2000-sample evals
    feats = sorted_posterior_features(np.vstack([_posterior_rows(gen, 400, True), _posterior_rows(gen, 400, False)]), 3)
    bits = np.arange(800) < 400
    attacker = SalemAttacker(k=3, seed=0).fit(feats, bits)
    eval_feats = sorted_posterior_features(
        np.vstack([_posterior_rows(gen, 1000, True), _posterior_rows(gen, 1000, False)]), 3
    )
    eval_bits = np.arange(2000) < 1000
    separable_adv = advantage(attacker.predict(eval_feats), eval_bits).adv

    flat_feats = sorted_posterior_features(
        np.vstack([_posterior_rows(gen, 400, False), _posterior_rows(gen, 400, False)]), 3
    )
    flat_attacker = SalemAttacker(k=3, seed=1).fit(flat_feats, bits)
    flat_eval = sorted_posterior_features(
        np.vstack([_posterior_rows(gen, 1000, False), _posterior_rows(gen, 1000, False)]), 3
    )
    flat_adv = advantage(flat_attacker.predict(flat_eval), eval_bits).adv

    elapsed = time.monotonic() - started
    ok = yeom_ok and separable_adv >= 0.9 and abs(flat_adv) <= 0.05 and elapsed < 30.0
    verdict(3, "attack oracle equivalence", ok, f"separable adv {separable_adv:.3f}, flat adv {flat_adv:+.3f}, {elapsed:.1f}s")


# -- 4/5/7: Fashion-MNIST battery (skips without the IDX files) ---------------


def fmnist_config(data_dir):
    return RunConfig(
        dataset="fmnist",
        data_dir=data_dir,
        subset_n=2000,
        depth=4,
        epochs=30,
        batch=32,
        lr=1e-3,
        eval_n=1000,
        attacker_fraction=0.2,
        dtc_n=300,
        seeds=[0, 1, 2],
    )


@pytest.fixture(scope="module")
def fmnist_store(tmp_path_factory):
    return RunStore(tmp_path_factory.mktemp("fmnist_runs"))


@pytest.fixture(scope="module")
def fmnist_baseline(fmnist_store):
    cfg = fmnist_config(require_fashion_mnist())
    records = []
    for seed in cfg.seeds:
        record = run_single(cfg, seed, fmnist_store)
        fmnist_store.append(record)
        assert record.status == "ok", record.error
        records.append(record)
    return cfg, records


def test_4_overfitting_leakage_battery(fmnist_baseline):
    started = time.monotonic()
    _, records = fmnist_baseline
    train_acc = mean([r.train_acc for r in records])
    val_acc = mean([r.val_acc for r in records])
    adv = mean([r.adv("yeom") for r in records])
    gap = mean([r.dtc["gap"] for r in records])
    elapsed = time.monotonic() - started
    ok = train_acc >= 0.99 and val_acc <= 0.93 and adv >= 0.15 and gap >= 0.20
    verdict(
        4,
        "overfitting-leakage battery",
        ok,
        f"train {train_acc:.3f}, val {val_acc:.3f}, adv {adv:.3f}, gap {gap:.3f} (battery reused, +{elapsed:.0f}s)",
    )


def test_5_mitigation_direction(fmnist_baseline, fmnist_store):
    started = time.monotonic()
    cfg, baseline_records = fmnist_baseline
    baseline_adv = mean([r.adv("yeom") for r in baseline_records])
    reductions = {}
    for mechanism, value in (("early_stop", 1), ("random_crop", 4)):
        point = replace(cfg, mechanism=mechanism, value=float(value))
        advs = []
        for seed in cfg.seeds:
            record = run_single(point, seed, fmnist_store)
            fmnist_store.append(record)
            assert record.status == "ok", record.error
            advs.append(record.adv("yeom"))
        reductions[mechanism] = (baseline_adv - mean(advs)) / baseline_adv
    elapsed = time.monotonic() - started
    ok = all(r >= 0.5 for r in reductions.values()) and elapsed <= 30 * 60
    detail = ", ".join(f"{m} cut {r * 100:.0f}%" for m, r in reductions.items())
    verdict(5, "mitigation direction", ok, f"{detail}, {elapsed:.0f}s")


def count_inversions(ordered_gaps):
    return sum(
        1
        for i in range(len(ordered_gaps))
        for j in range(i + 1, len(ordered_gaps))
        if ordered_gaps[i] < ordered_gaps[j]
    )


def test_7_dp_vs_dtc_trend(fmnist_baseline, fmnist_store):
    started = time.monotonic()
    cfg, _ = fmnist_baseline
    sigmas = [0.25, 0.5, 1.0, 2.5, 5.0]
    gaps, advs = [], []
    for sigma in sigmas:
        point = replace(cfg, dp_sigma=sigma)
        record = run_single(point, cfg.seeds[0], fmnist_store)
        fmnist_store.append(record)
        assert record.status == "ok", record.error
        gaps.append(record.dtc["gap"])
        advs.append(record.adv("yeom"))
    rho = float(spearmanr(sigmas, gaps).statistic)
    inversions = count_inversions(gaps)
    quiet = all(adv <= 0.05 for sigma, adv in zip(sigmas, advs) if sigma >= 1.0)
    elapsed = time.monotonic() - started
    ok = rho < 0 and inversions <= 1 and quiet and elapsed <= 45 * 60
    verdict(7, "dp-vs-dtc trend", ok, f"rho {rho:.2f}, inversions {inversions}, advs {advs}, {elapsed:.0f}s")


# -- 4s/5s/7s: synthetic stand-ins for the desk battery (always run) ----------


def synthetic_config():
    return RunConfig(
        dataset="synthetic",
        synthetic_n=400,
        synthetic_val_n=400,
        synthetic_classes=10,
        synthetic_margin=1.0,
        synthetic_size=8,
        depth=4,
        epochs=25,
        batch=16,
        lr=1e-3,
        eval_n=150,
        dtc_n=120,
        attacker_fraction=0.2,
        seeds=[0, 1],
    )


@pytest.fixture(scope="module")
def synthetic_store(tmp_path_factory):
    return RunStore(tmp_path_factory.mktemp("synthetic_runs"))


@pytest.fixture(scope="module")
def synthetic_baseline(synthetic_store):
    cfg = synthetic_config()
    records = []
    for seed in cfg.seeds:
        record = run_single(cfg, seed, synthetic_store)
        synthetic_store.append(record)
        assert record.status == "ok", record.error
        records.append(record)
    return cfg, records


def test_4s_overfit_battery_synthetic(synthetic_baseline):
    # overfit victim: large generalization gap forces leakage both ways
    _, records = synthetic_baseline
    train_acc = mean([r.train_acc for r in records])
    val_acc = mean([r.val_acc for r in records])
    adv = mean([r.adv("yeom") for r in records])
    gap = mean([r.dtc["gap"] for r in records])
    ok = (train_acc - val_acc) >= 0.2 and adv >= 0.10 and gap >= 0.20
    verdict(
        "4s",
        "overfit battery (synthetic stand-in)",
        ok,
        f"train {train_acc:.3f}, val {val_acc:.3f}, adv {adv:.3f}, gap {gap:.3f}",
    )


def test_5s_mitigation_direction_synthetic(synthetic_baseline, synthetic_store):
    cfg, baseline_records = synthetic_baseline
    baseline_adv = mean([r.adv("yeom") for r in baseline_records])
    reductions = {}
    for mechanism, value in (("early_stop", 1), ("random_crop", 2)):
        point = replace(cfg, mechanism=mechanism, value=float(value))
        advs = []
        for seed in cfg.seeds:
            record = run_single(point, seed, synthetic_store)
            synthetic_store.append(record)
            assert record.status == "ok", record.error
            advs.append(record.adv("yeom"))
        reductions[mechanism] = (baseline_adv - mean(advs)) / baseline_adv
    ok = all(r >= 0.5 for r in reductions.values())
    detail = ", ".join(f"{m} cut {r * 100:.0f}%" for m, r in reductions.items())
    verdict("5s", "mitigation direction (synthetic stand-in)", ok, detail)


def test_7s_dp_trend_synthetic(synthetic_baseline, synthetic_store):
    cfg, baseline_records = synthetic_baseline
    baseline_adv = mean([r.adv("yeom") for r in baseline_records])
    gaps, advs, epsilons = [], [], []
    for sigma in (0.25, 1.0, 4.0):
        point = replace(cfg, dp_sigma=sigma)
        record = run_single(point, cfg.seeds[0], synthetic_store)
        synthetic_store.append(record)
        assert record.status == "ok", record.error
        gaps.append(record.dtc["gap"])
        advs.append(record.adv("yeom"))
        epsilons.append(record.privacy["epsilon"])
    ok = (
        gaps[0] > gaps[1] > gaps[2]
        and epsilons[0] > epsilons[1] > epsilons[2]
        and abs(advs[-1]) <= 0.15
        and advs[-1] < baseline_adv
    )
    verdict(
        "7s",
        "dp trend (synthetic stand-in)",
        ok,
        f"gaps {[round(g, 3) for g in gaps]}, eps {[round(e, 2) for e in epsilons]}, advs {[round(a, 3) for a in advs]}",
    )


# -- 6: differential-privacy properties ---------------------------------------


def test_6_dp_properties():
    started = time.monotonic()
    gen = np.random.default_rng(2)
    clip_ok = True
    for _ in range(1000):
        grads = [{"g": gen.normal(size=20) * gen.uniform(0, 10)}]
        clipped, _ = clip_gradient(grads, 0.9)
        clip_ok &= flatten_norm(clipped) <= 0.9 + 1e-9

    epsilons = [
        rdp_epsilon(DpConfig(noise_multiplier=s, sample_rate=128 / 2000, steps=480)).epsilon
        for s in (0.25, 0.5, 1.0, 2.5, 5.0, 10.0)
    ]
    decreasing = all(a > b for a, b in zip(epsilons, epsilons[1:]))
    exact = rdp_subsampled_gaussian(1.0, 1.0, 2.0) == 1.0
    strong_ok = epsilons[-1] < 1.0  # sigma=10 at desk scale reaches eps < 1
    elapsed = time.monotonic() - started
    ok = clip_ok and decreasing and exact and strong_ok and elapsed < 60.0
    verdict(6, "dp properties", ok, f"eps(sigma=10) {epsilons[-1]:.3f}, {elapsed:.1f}s")


# -- 8: determinism ------------------------------------------------------------


def test_8_cli_rerun_determinism(tmp_path, capsys):
    cfg_text = """
    dataset = synthetic
    synthetic.n = 200
    synthetic.val_n = 200
    synthetic.classes = 5
    synthetic.margin = 1.2
    synthetic.size = 8
    depth = 4
    mechanism = early_stop
    value = 2
    epochs = 3
    batch = 64
    lr = 0.001
    eval_n = 50
    dtc_n = 40
    seeds = 0,1
    """
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(cfg_text)
    views = []
    summaries = []
    for out in (tmp_path / "a", tmp_path / "b"):
        assert cli_main(["attack", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert cli_main(["dtc", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert cli_main(["report", "--out", str(out)]) == 0
        records = RunStore(out).load()
        views.append([json.dumps(r.metric_view(), sort_keys=True) for r in records])
        with open(out / "summary.csv", "rb") as f:
            summaries.append(f.read())
    ok = views[0] == views[1] and summaries[0] == summaries[1]
    verdict(8, "rerun determinism", ok, f"{len(views[0])} records compared")
