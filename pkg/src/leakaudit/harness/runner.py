"""Run orchestration: single runs, sweeps, pairs, DP sweeps, scenarios."""

import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .. import rng as rngmod
from ..attacks import salem_attack, salem_train, yeom_attack
from ..data import build_mia_eval_set, load_cifar, load_idx, make_synthetic
from ..dp import DpConfig, dp_sgd_train
from ..dtc import DtcConfig, dtc_report
from ..nn import TaskSpec, build_network
from ..regularizers import RegularizerSpec
from ..training import TrainConfig, loss_stats, train_model
from .config import RunConfig, config_from_dict, config_to_dict
from .records import RunRecord, RunStore

_FMNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

_dataset_cache = {}


def _find_file(data_dir, subdir, filename):
    for base in (os.path.join(data_dir, subdir), data_dir):
        for suffix in ("", ".gz"):
            path = os.path.join(base, filename + suffix)
            if os.path.exists(path):
                return path
    raise FileNotFoundError(f"{filename}[.gz] not found under {data_dir} (or {data_dir}/{subdir})")


def load_base_datasets(cfg: RunConfig):
    """The full (train pool, validation pool) for the configured dataset."""
    if cfg.dataset == "synthetic":
        key = ("synthetic", cfg.synthetic_n, cfg.synthetic_val_n, cfg.synthetic_classes, cfg.synthetic_margin, cfg.synthetic_size)
        if key not in _dataset_cache:
            total = cfg.synthetic_n + cfg.synthetic_val_n
            shape = (1, cfg.synthetic_size, cfg.synthetic_size)
            full = make_synthetic(total, cfg.synthetic_classes, cfg.synthetic_margin, seed=0, image_shape=shape)
            train = full.take(np.arange(cfg.synthetic_n))
            val = full.take(np.arange(cfg.synthetic_n, total))
            _dataset_cache[key] = (train, val)
        return _dataset_cache[key]
    data_dir = cfg.resolved_data_dir
    key = (cfg.dataset, data_dir)
    if key in _dataset_cache:
        return _dataset_cache[key]
    if cfg.dataset == "fmnist":
        train = load_idx(
            _find_file(data_dir, "fashion-mnist", _FMNIST_FILES["train_images"]),
            _find_file(data_dir, "fashion-mnist", _FMNIST_FILES["train_labels"]),
            name="fmnist",
            num_classes=10,
        )
        val = load_idx(
            _find_file(data_dir, "fashion-mnist", _FMNIST_FILES["test_images"]),
            _find_file(data_dir, "fashion-mnist", _FMNIST_FILES["test_labels"]),
            name="fmnist",
            num_classes=10,
        )
    elif cfg.dataset == "cifar10":
        batches = [_find_file(data_dir, "cifar-10-batches-bin", f"data_batch_{i}.bin") for i in range(1, 6)]
        train = load_cifar(batches, 10)
        val = load_cifar([_find_file(data_dir, "cifar-10-batches-bin", "test_batch.bin")], 10)
    elif cfg.dataset == "cifar100":
        train = load_cifar([_find_file(data_dir, "cifar-100-binary", "train.bin")], 100)
        val = load_cifar([_find_file(data_dir, "cifar-100-binary", "test.bin")], 100)
    else:
        raise ValueError(f"unknown dataset {cfg.dataset!r}")
    _dataset_cache[key] = (train, val)
    return train, val


def load_run_datasets(cfg: RunConfig, seed):
    """(private training set S, unseen pool D) for one run."""
    train, val = load_base_datasets(cfg)
    if cfg.subset_n:
        train = train.subset(cfg.subset_n, seed)
    return train, val


def rad(acc_baseline, acc_mechanism):
    """Relative accuracy drop; negative when the mechanism helps accuracy."""
    if acc_baseline <= 0:
        raise ValueError("baseline accuracy must be positive")
    return (acc_baseline - acc_mechanism) / acc_baseline


def _train_config(cfg: RunConfig, seed):
    return TrainConfig(
        depth=cfg.depth,
        epochs=cfg.epochs,
        lr=cfg.lr,
        batch_size=cfg.batch,
        weight_decay=cfg.weight_decay,
        seed=seed,
        dtype=cfg.precision,
    )


def _build_for_config(cfg: RunConfig, train_set, seed):
    rates = dict(cfg.mechanisms())
    spec = TaskSpec(
        input_shape=train_set.image_shape,
        num_classes=train_set.num_classes,
        depth=cfg.depth,
        dropout=rates.get("dropout", 0.0),
        spatial_dropout=rates.get("spatial_dropout", 0.0),
    )
    return build_network(spec, seed, dtype=np.dtype(cfg.precision))


def _find_train_record(store: RunStore, fingerprint):
    for record in reversed(store.load()):
        if record.fingerprint == fingerprint and record.status == "ok" and record.train_acc is not None:
            return record
    return None


def run_single(cfg: RunConfig, seed, store: RunStore, stages=("train", "attack", "dtc")) -> RunRecord:
    """Full pipeline for one config+seed; errors become a failed record."""
    stages = frozenset(stages)
    fingerprint = cfg.training_fingerprint(seed)
    run_id = fingerprint + "-" + "".join(s[0] for s in ("train", "attack", "dtc") if s in stages)
    started = time.monotonic()
    record = RunRecord(
        run_id=run_id,
        status="ok",
        dataset=cfg.dataset,
        subset_n=cfg.subset_n,
        depth=cfg.depth,
        mechanisms=[list(m) for m in cfg.mechanisms()],
        seed=seed,
        fingerprint=fingerprint,
        dp=None if cfg.dp_sigma is None else {"sigma": cfg.dp_sigma, "clip": cfg.dp_clip, "delta": cfg.dp_delta},
    )
    try:
        _execute(cfg, seed, store, stages, record)
    except Exception as exc:  # noqa: BLE001 - failed runs become records, never silent drops
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        record.trace = traceback.format_exc(limit=8)
    record.wall_clock = time.monotonic() - started
    return record


def _execute(cfg, seed, store, stages, record: RunRecord):
    train_set, val_set = load_run_datasets(cfg, seed)
    snapshot = store.snapshot_path(record.fingerprint)
    prior = _find_train_record(store, record.fingerprint)
    privacy = None
    if prior is not None and os.path.exists(snapshot):
        net = _build_for_config(cfg, train_set, seed)
        net.load_params(snapshot)
        net.eval()
        stats = loss_stats(net, train_set)
        record.epochs_run = prior.epochs_run
        record.train_acc = prior.train_acc
        record.val_acc = prior.val_acc
        record.history = prior.history
        record.loss_mean = stats.mean
        record.loss_median = stats.median
        record.privacy = prior.privacy
    else:
        train_cfg = _train_config(cfg, seed)
        if cfg.dp_sigma is not None:
            dp = DpConfig(noise_multiplier=cfg.dp_sigma, clip_norm=cfg.dp_clip, delta=cfg.dp_delta)
            result, privacy = dp_sgd_train(train_set, train_cfg, dp, val_set)
            record.privacy = {
                "sigma_dp": privacy.noise_multiplier,
                "clip": privacy.clip_norm,
                "delta": privacy.delta,
                "steps": privacy.steps,
                "epsilon": privacy.epsilon,
                "alpha_star": privacy.alpha_star,
            }
        else:
            regs = [RegularizerSpec(m, v) for m, v in cfg.mechanisms()]
            result = train_model(train_set, regs, train_cfg, val_set)
        net = result.network
        stats = result.loss_stats
        record.epochs_run = result.epochs_run
        record.train_acc = result.train_acc
        record.val_acc = result.val_acc
        record.history = [[h.train_acc, h.val_acc, h.mean_loss] for h in result.history]
        record.loss_mean = stats.mean
        record.loss_median = stats.median
        net.save_params(snapshot)

    if "attack" in stages:
        eval_set = build_mia_eval_set(train_set, val_set, cfg.eval_n, cfg.attacker_fraction, seed)
        yeom = yeom_attack(net, stats, eval_set)
        attacks = {"yeom": {"inf": yeom.inf, "adv": yeom.adv, "n_eval": yeom.n_eval}}
        if len(eval_set.attacker_idx):
            attacker = salem_train(net, eval_set, k=cfg.salem_k, seed=rngmod.derive_seed(seed, rngmod.ATTACK))
            salem = salem_attack(attacker, net, eval_set)
            attacks["salem"] = {"inf": salem.inf, "adv": salem.adv, "n_eval": salem.n_eval}
        record.attacks = attacks

    if "dtc" in stages:
        gen = rngmod.spawn(seed, rngmod.DTC)
        s_idx = gen.choice(len(train_set), size=min(cfg.dtc_n, len(train_set)), replace=False)
        d_idx = gen.choice(len(val_set), size=min(cfg.dtc_n, len(val_set)), replace=False)
        report = dtc_report(
            net,
            train_set.images[s_idx],
            train_set.labels[s_idx],
            val_set.images[d_idx],
            val_set.labels[d_idx],
            stats,
            DtcConfig(),
        )
        record.dtc = {
            "mean_s": report.mean_s,
            "mean_d": report.mean_d,
            "gap": report.gap,
            "mean_s_excl": report.mean_s_excl,
            "mean_d_excl": report.mean_d_excl,
            "frac_confident_s": report.frac_confident_s,
            "frac_confident_d": report.frac_confident_d,
            "frac_capped_s": report.frac_capped_s,
            "frac_capped_d": report.frac_capped_d,
            "n_s": report.n_s,
            "n_d": report.n_d,
        }


def _job(payload):
    cfg_dict, seed, stages, out_dir = payload
    cfg = config_from_dict(cfg_dict)
    store = RunStore(out_dir)
    return run_single(cfg, seed, store, stages)


def run_jobs(jobs, store: RunStore, workers=1):
    """Execute (cfg, seed, stages) jobs; append records in submission order."""
    payloads = [(config_to_dict(cfg), seed, tuple(stages), store.out_dir) for cfg, seed, stages in jobs]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_job, payloads))
    else:
        records = [_job(p) for p in payloads]
    for record in records:
        store.append(record)
    return records


def _sweep_jobs(cfg: RunConfig, values, seeds, include_baseline=True):
    jobs = []
    if include_baseline and cfg.mechanism != "none":
        baseline = replace(cfg, mechanism="none", value=0.0, pair_mechanism=None, pair_value=0.0)
        jobs += [(baseline, seed, ("train", "attack", "dtc")) for seed in seeds]
    for value in values:
        point = replace(cfg, value=float(value))
        jobs += [(point, seed, ("train", "attack", "dtc")) for seed in seeds]
    return jobs


def run_sweep(cfg: RunConfig, store: RunStore, workers=1):
    """One mechanism over its value grid (plus the baseline), all seeds."""
    if cfg.mechanism == "none":
        raise ValueError("sweep needs a mechanism; got 'none'")
    if not cfg.sweep_values:
        raise ValueError("sweep.values is empty")
    return run_jobs(_sweep_jobs(cfg, cfg.sweep_values, cfg.seeds), store, workers)


def run_pairs(cfg: RunConfig, store: RunStore, workers=1):
    """The anchor mechanism alone and paired with each configured partner."""
    if cfg.mechanism == "none":
        raise ValueError("pairs needs an anchor mechanism; got 'none'")
    if not cfg.pair_partners:
        raise ValueError("pairs.partners is empty")
    jobs = [(replace(cfg, pair_mechanism=None, pair_value=0.0), seed, ("train", "attack", "dtc")) for seed in cfg.seeds]
    for partner, value in cfg.pair_partners:
        paired = replace(cfg, pair_mechanism=partner, pair_value=value)
        jobs += [(paired, seed, ("train", "attack", "dtc")) for seed in cfg.seeds]
    return run_jobs(jobs, store, workers)


def run_dp_sweep(cfg: RunConfig, store: RunStore, workers=1):
    """DP pipeline per noise level; returns (records, trend rows)."""
    sigmas = cfg.dp_sweep_sigmas
    if not sigmas:
        raise ValueError("dp_sweep.sigmas is empty")
    if list(sigmas) != sorted(sigmas):
        raise ValueError("dp_sweep.sigmas must be sorted ascending")
    jobs = []
    for sigma in sigmas:
        point = replace(cfg, dp_sigma=float(sigma), mechanism="none", value=0.0, pair_mechanism=None)
        jobs += [(point, seed, ("train", "attack", "dtc")) for seed in cfg.seeds]
    records = run_jobs(jobs, store, workers)
    return records, dp_trend(records)


def dp_trend(records):
    """Aggregate DP records into (sigma, epsilon, adv_yeom, adv_salem, dtc_gap) rows."""
    by_sigma = {}
    for r in records:
        if r.status != "ok" or not r.dp:
            continue
        by_sigma.setdefault(r.dp["sigma"], []).append(r)
    rows = []
    for sigma in sorted(by_sigma):
        group = by_sigma[sigma]
        rows.append(
            {
                "sigma_dp": sigma,
                "epsilon": _mean(r.privacy["epsilon"] for r in group if r.privacy),
                "adv_yeom": _mean(r.adv("yeom") for r in group),
                "adv_salem": _mean(r.adv("salem") for r in group),
                "dtc_gap": _mean(r.dtc["gap"] for r in group if r.dtc),
            }
        )
    return rows


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


# -- utility scenarios -------------------------------------------------------

SCENARIOS = ("max", "rad<0.05", "rad<0.15")


def parse_scenario(scenario):
    if scenario == "max":
        return "max", None
    if scenario.startswith("rad<"):
        return "rad", float(scenario[4:])
    raise ValueError(f"unknown scenario {scenario!r}; expected 'max' or 'rad<BOUND'")


@dataclass
class SweepPoint:
    """Per-configuration means over seeds within one sweep."""

    mechanisms: tuple  # ((name, value), ...)
    acc: float
    adv_yeom: float | None
    adv_salem: float | None
    dtc_gap: float | None
    n_seeds: int

    @property
    def value(self):
        return self.mechanisms[0][1] if self.mechanisms else 0.0


def aggregate_records(records):
    """Group ok-records by their mechanism tuple and average the metrics.

    'none' entries drop out of the key, so the baseline groups under ()
    and a pair with a 'none' partner groups with the single run.
    """
    groups = {}
    for r in records:
        if r.status != "ok":
            continue
        key = tuple((m, v) for m, v in r.mechanisms if m != "none")
        groups.setdefault(key, []).append(r)
    points = []
    for key, group in sorted(groups.items()):
        points.append(
            SweepPoint(
                mechanisms=key,
                acc=_mean(r.val_acc for r in group),
                adv_yeom=_mean(r.adv("yeom") for r in group),
                adv_salem=_mean(r.adv("salem") for r in group),
                dtc_gap=_mean(r.dtc["gap"] for r in group if r.dtc),
                n_seeds=len(group),
            )
        )
    return points


@dataclass
class ScenarioSelection:
    scenario: str
    mechanism: str
    empty: bool
    value: float | None = None
    acc: float | None = None
    adv_yeom: float | None = None
    adv_salem: float | None = None
    rad: float | None = None
    delta_acc_pct: float | None = None
    delta_adv_yeom_pct: float | None = None
    delta_adv_salem_pct: float | None = None


def select_scenario(sweep_points, baseline: SweepPoint, scenario) -> ScenarioSelection:
    """Pick the sweep setting for a utility scenario.

    'max' takes the highest-accuracy setting; 'rad<x' takes the smallest
    Yeom advantage among settings within the accuracy budget. Ties break
    toward the smaller hyperparameter value.
    """
    kind, limit = parse_scenario(scenario)
    mechanism = sweep_points[0].mechanisms[0][0] if sweep_points else ""
    if kind == "max":
        candidates = list(sweep_points)
        key = lambda p: (-p.acc, p.value)  # noqa: E731
    else:
        candidates = [p for p in sweep_points if rad(baseline.acc, p.acc) <= limit]
        key = lambda p: (p.adv_yeom, p.value)  # noqa: E731
    if not candidates:
        return ScenarioSelection(scenario=scenario, mechanism=mechanism, empty=True)
    chosen = min(candidates, key=key)
    return ScenarioSelection(
        scenario=scenario,
        mechanism=mechanism,
        empty=False,
        value=chosen.value,
        acc=chosen.acc,
        adv_yeom=chosen.adv_yeom,
        adv_salem=chosen.adv_salem,
        rad=rad(baseline.acc, chosen.acc),
        delta_acc_pct=_relative_pct(baseline.acc, chosen.acc),
        delta_adv_yeom_pct=_relative_pct(baseline.adv_yeom, chosen.adv_yeom),
        delta_adv_salem_pct=_relative_pct(baseline.adv_salem, chosen.adv_salem),
    )


def _relative_pct(base, new):
    if base is None or new is None or base == 0:
        return None
    return (new - base) / abs(base) * 100.0
