"""Run records and the append-only JSON-lines store."""

import json
import math
import os
from dataclasses import asdict, dataclass, field


@dataclass
class RunRecord:
    """Everything one audited training run produced.

    A record is immutable once appended; rerunning the same config and
    seed reproduces every metric field exactly (wall_clock excepted).
    """

    run_id: str
    status: str  # ok | failed
    dataset: str
    subset_n: int
    depth: int
    mechanisms: list  # [[name, value], ...]
    seed: int
    fingerprint: str | None = None
    dp: dict | None = None
    error: str | None = None
    trace: str | None = None
    epochs_run: int | None = None
    train_acc: float | None = None
    val_acc: float | None = None
    loss_mean: float | None = None
    loss_median: float | None = None
    history: list = field(default_factory=list)  # [[train_acc, val_acc, mean_loss], ...]
    attacks: dict | None = None  # attack name -> {inf, adv, n_eval}
    dtc: dict | None = None
    privacy: dict | None = None
    wall_clock: float | None = None

    METRIC_FIELDS = (
        "status",
        "epochs_run",
        "train_acc",
        "val_acc",
        "loss_mean",
        "loss_median",
        "history",
        "attacks",
        "dtc",
        "privacy",
    )

    def metric_view(self):
        """The deterministic part of the record (drops wall clock and error text)."""
        d = asdict(self)
        return {k: d[k] for k in self.METRIC_FIELDS}

    def adv(self, attack):
        if not self.attacks or attack not in self.attacks:
            return None
        return self.attacks[attack]["adv"]

    def to_json(self):
        return json.dumps(_jsonable(asdict(self)), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line):
        data = json.loads(line)
        privacy = data.get("privacy")
        if privacy and isinstance(privacy.get("epsilon"), str):
            privacy["epsilon"] = float(privacy["epsilon"])  # "inf"/"-inf"
        return cls(**data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


class RunStore:
    """Append-only runs.jsonl in an output directory, one record per line."""

    FILENAME = "runs.jsonl"

    def __init__(self, out_dir):
        self.out_dir = str(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.path = os.path.join(self.out_dir, self.FILENAME)

    def append(self, record: RunRecord):
        # one write call per line keeps concurrent appends intact
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(record.to_json() + "\n")

    def load(self):
        if not os.path.exists(self.path):
            return []
        records = []
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(RunRecord.from_json(line))
        return records

    def ids(self):
        return {r.run_id for r in self.load()}

    def snapshot_path(self, fingerprint):
        snap_dir = os.path.join(self.out_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        return os.path.join(snap_dir, f"{fingerprint}.params")
