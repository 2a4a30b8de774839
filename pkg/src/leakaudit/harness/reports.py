"""Report emission: delimited tables plus a rendered trend figure.

All outputs are deterministic functions of the record set: floats are
written with repr formatting, the SVG is rendered with a fixed hash salt
and no date metadata.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .records import RunRecord
from .runner import SCENARIOS, aggregate_records, dp_trend, select_scenario

SUMMARY_COLUMNS = [
    "run_id",
    "status",
    "dataset",
    "subset_n",
    "depth",
    "mechanism",
    "value",
    "pair_mechanism",
    "pair_value",
    "dp_sigma",
    "seed",
    "epochs_run",
    "train_acc",
    "val_acc",
    "loss_mean",
    "loss_median",
    "inf_yeom",
    "adv_yeom",
    "inf_salem",
    "adv_salem",
    "dtc_mean_s",
    "dtc_mean_d",
    "dtc_gap",
    "frac_confident_s",
    "frac_confident_d",
    "frac_capped_s",
    "frac_capped_d",
    "epsilon",
    "alpha_star",
    "error",
]

DP_TREND_COLUMNS = ["sigma_dp", "epsilon", "adv_yeom", "adv_salem", "dtc_gap"]

SCENARIO_COLUMNS = [
    "dataset",
    "depth",
    "mechanism",
    "scenario",
    "value",
    "acc",
    "adv_yeom",
    "adv_salem",
    "rad",
    "delta_acc_pct",
    "delta_adv_yeom_pct",
    "delta_adv_salem_pct",
    "empty",
]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _summary_row(r: RunRecord):
    mech = r.mechanisms[0] if r.mechanisms else ["none", 0.0]
    pair = r.mechanisms[1] if len(r.mechanisms) > 1 else [None, None]
    attacks = r.attacks or {}
    yeom = attacks.get("yeom", {})
    salem = attacks.get("salem", {})
    dtc = r.dtc or {}
    privacy = r.privacy or {}
    return {
        "run_id": r.run_id,
        "status": r.status,
        "dataset": r.dataset,
        "subset_n": r.subset_n,
        "depth": r.depth,
        "mechanism": mech[0],
        "value": mech[1],
        "pair_mechanism": pair[0],
        "pair_value": pair[1],
        "dp_sigma": (r.dp or {}).get("sigma"),
        "seed": r.seed,
        "epochs_run": r.epochs_run,
        "train_acc": r.train_acc,
        "val_acc": r.val_acc,
        "loss_mean": r.loss_mean,
        "loss_median": r.loss_median,
        "inf_yeom": yeom.get("inf"),
        "adv_yeom": yeom.get("adv"),
        "inf_salem": salem.get("inf"),
        "adv_salem": salem.get("adv"),
        "dtc_mean_s": dtc.get("mean_s"),
        "dtc_mean_d": dtc.get("mean_d"),
        "dtc_gap": dtc.get("gap"),
        "frac_confident_s": dtc.get("frac_confident_s"),
        "frac_confident_d": dtc.get("frac_confident_d"),
        "frac_capped_s": dtc.get("frac_capped_s"),
        "frac_capped_d": dtc.get("frac_capped_d"),
        "epsilon": privacy.get("epsilon"),
        "alpha_star": privacy.get("alpha_star"),
        "error": r.error,
    }


def _scenario_rows(records):
    """Scenario selections per (dataset, depth, mechanism) that has a baseline."""
    rows = []
    eligible = [r for r in records if r.status == "ok" and not r.dp and r.attacks]
    by_task = {}
    for r in eligible:
        by_task.setdefault((r.dataset, r.subset_n, r.depth), []).append(r)
    for (dataset, _, depth), group in sorted(by_task.items()):
        points = aggregate_records(group)
        baselines = [p for p in points if p.mechanisms == ()]
        if not baselines:
            continue
        baseline = baselines[0]
        by_mechanism = {}
        for p in points:
            if len(p.mechanisms) == 1:  # single-mechanism runs only
                by_mechanism.setdefault(p.mechanisms[0][0], []).append(p)
        for mechanism in sorted(by_mechanism):
            sweep = by_mechanism[mechanism]
            if len(sweep) < 1 or any(p.adv_yeom is None for p in sweep):
                continue
            for scenario in SCENARIOS:
                sel = select_scenario(sweep, baseline, scenario)
                rows.append(
                    {
                        "dataset": dataset,
                        "depth": depth,
                        "mechanism": mechanism,
                        "scenario": sel.scenario,
                        "value": sel.value,
                        "acc": sel.acc,
                        "adv_yeom": sel.adv_yeom,
                        "adv_salem": sel.adv_salem,
                        "rad": sel.rad,
                        "delta_acc_pct": sel.delta_acc_pct,
                        "delta_adv_yeom_pct": sel.delta_adv_yeom_pct,
                        "delta_adv_salem_pct": sel.delta_adv_salem_pct,
                        "empty": sel.empty,
                    }
                )
    return rows


def render_dp_figure(trend_rows, path):
    """Line chart of the distance gap and Yeom advantage against noise, log-x."""
    plt.rcParams["svg.hashsalt"] = "leakaudit"
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    sigmas = [row["sigma_dp"] for row in trend_rows]
    if sigmas:
        gaps = [row["dtc_gap"] for row in trend_rows]
        advs = [row["adv_yeom"] for row in trend_rows]
        ax.plot(sigmas, gaps, marker="o", label="distance-to-confident gap")
        ax.plot(sigmas, advs, marker="s", label="Yeom advantage")
        ax.legend()
    ax.set_xscale("log")
    ax.set_xlabel("noise multiplier")
    ax.set_ylabel("gap / advantage")
    ax.set_title("Residual leakage under differentially private training")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_reports(records, out_dir):
    """Write summary.csv, scenarios.csv, dp_trend.csv, and dp_dtc.svg."""
    if not records:
        raise ValueError("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(out_dir, "summary.csv"),
        "scenarios": os.path.join(out_dir, "scenarios.csv"),
        "dp_trend": os.path.join(out_dir, "dp_trend.csv"),
        "dp_dtc": os.path.join(out_dir, "dp_dtc.svg"),
    }
    write_csv(paths["summary"], SUMMARY_COLUMNS, [_summary_row(r) for r in records])
    write_csv(paths["scenarios"], SCENARIO_COLUMNS, _scenario_rows(records))
    trend = dp_trend(records)
    write_csv(paths["dp_trend"], DP_TREND_COLUMNS, trend)
    render_dp_figure(trend, paths["dp_dtc"])
    return paths
