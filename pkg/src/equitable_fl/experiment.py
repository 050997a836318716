"""Experiment configuration, orchestration and result files.

Config files are flat ``key = value`` text, one key per line, ``#`` starts a
comment. See ``configs/mnist_like.cfg`` for every key. The partition is
written as ``;``-separated clusters of ``clients:labels:per_label``, with
labels as ``a-b`` ranges or comma lists, e.g. ``4:0-3:800; 6:4-9:800``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import (ClusterSpec, Dataset, PartitionSpec, generate_synthetic,
                   load_idx, mnist_partition_spec, partition_planted)
from .errors import ContractViolation, DivergenceError
from .federation import ALGORITHMS, HyperParams, ServerState, run_round, stream
from .metrics import RoundRecord, evaluate
from .model import init_mlp

__all__ = [
    "ExperimentConfig",
    "RunSummary",
    "CSV_HEADER",
    "parse_partition",
    "format_partition",
    "load_config",
    "parse_config",
    "build_state",
    "run_experiment",
    "write_records",
    "read_records",
    "sweep",
]

CSV_HEADER = ["round", "algo", "global_acc", "mean_client_loss", "cd",
              "sigma_acc", "nmi", "seed"]

# stream purposes; federation uses 1-3
_TRAIN_POOL, _TEST_POOL, _PARTITION, _INIT = 11, 12, 13, 14


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    num_classes: int = 10
    dim: int = 20
    per_class: int = 0  # 0: just enough for the partition
    test_per_class: int = 0
    separation: float = 3.0
    noise: float = 1.0
    images_path: str = ""
    labels_path: str = ""
    test_images_path: str = ""
    test_labels_path: str = ""
    partition: PartitionSpec = field(default_factory=lambda: mnist_partition_spec(40))
    test_per_label: int = 20
    hidden: tuple[int, ...] = (32,)
    hp: HyperParams = field(default_factory=HyperParams)
    seed: int = 0
    output_dir: str = ""
    eval_every: int = 1
    workers: int = 1

    def validate(self) -> None:
        if self.dataset not in ("synthetic", "idx"):
            raise ContractViolation(f"dataset: unknown kind {self.dataset!r}")
        if self.eval_every < 1:
            raise ContractViolation(f"eval_every: must be >= 1, got {self.eval_every}")
        if self.workers < 1:
            raise ContractViolation(f"workers: must be >= 1, got {self.workers}")
        if self.test_per_label < 1:
            raise ContractViolation(
                f"test_per_label: must be >= 1, got {self.test_per_label}")
        if any(h < 1 for h in self.hidden):
            raise ContractViolation(f"hidden: sizes must be >= 1, got {self.hidden}")
        labels = [l for c in self.partition.clusters for l in c.label_set]
        if max(labels) >= self.num_classes or min(labels) < 0:
            raise ContractViolation(
                f"partition: labels must lie in [0, {self.num_classes})")
        if self.dataset == "idx":
            for name in ("images_path", "labels_path", "test_images_path",
                         "test_labels_path"):
                p = getattr(self, name)
                if not p or not Path(p).is_file():
                    raise ContractViolation(f"{name}: file {p!r} does not exist")
        self.hp.validate(self.partition.num_clients)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        hp_keys = {f.name for f in fields(HyperParams)}
        hp_kw = {k: v for k, v in kw.items() if k in hp_keys}
        top_kw = {k: v for k, v in kw.items() if k not in hp_keys}
        cfg = replace(self, **top_kw)
        return replace(cfg, hp=replace(cfg.hp, **hp_kw)) if hp_kw else cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["partition"] = format_partition(self.partition)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class RunSummary:
    records: list[RoundRecord]
    final_accuracy: float
    mean_cd_final: float
    mean_sigma_acc_final: float
    mean_nmi: float
    config: dict
    runtime: float
    csv_path: str = ""


def _parse_labels(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def parse_partition(text: str) -> PartitionSpec:
    clusters = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            clients, labels, per = chunk.split(":")
            clusters.append(ClusterSpec(int(clients), _parse_labels(labels), int(per)))
        except ValueError as err:
            raise ContractViolation(f"partition: cannot parse {chunk!r}") from err
    if not clusters:
        raise ContractViolation("partition: no clusters given")
    return PartitionSpec(tuple(clusters))


def format_partition(spec: PartitionSpec) -> str:
    return "; ".join(
        f"{c.client_count}:{','.join(map(str, c.label_set))}:{c.samples_per_label_per_client}"
        for c in spec.clusters
    )


def _to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    top = {f.name: f.type for f in fields(ExperimentConfig)}
    hp_types = {f.name: f.type for f in fields(HyperParams)}
    kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "partition":
            kw[key] = parse_partition(value)
        elif key == "hidden":
            kw[key] = tuple(int(v) for v in value.split(",") if v.strip())
        elif key in top or key in hp_types:
            typ = top.get(key) or hp_types[key]
            try:
                if typ in ("int", int):
                    kw[key] = int(value)
                elif typ in ("float", float):
                    kw[key] = float(value)
                elif typ in ("bool", bool):
                    kw[key] = _to_bool(value)
                else:
                    kw[key] = value
            except ValueError as err:
                raise ContractViolation(f"{key}: bad value {value!r}") from err
        else:
            raise ContractViolation(f"config line {lineno}: unknown key {key!r}")
    return ExperimentConfig().with_overrides(**kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _pool_need(spec: PartitionSpec, num_classes: int) -> int:
    need = np.zeros(num_classes, dtype=int)
    for c in spec.clusters:
        for lab in c.label_set:
            need[lab] += c.client_count * c.samples_per_label_per_client
    return int(need.max())


def build_state(cfg: ExperimentConfig) -> ServerState:
    """Data, partitions and initial model for ``cfg``; depends only on the seed."""
    seed = cfg.seed
    test_spec = cfg.partition.with_per_label(cfg.test_per_label)
    if cfg.dataset == "synthetic":
        per = cfg.per_class or _pool_need(cfg.partition, cfg.num_classes)
        tper = cfg.test_per_class or _pool_need(test_spec, cfg.num_classes)
        train = generate_synthetic(cfg.num_classes, cfg.dim, per, cfg.separation,
                                   cfg.noise, stream(seed, _TRAIN_POOL))
        test = generate_synthetic(cfg.num_classes, cfg.dim, tper, cfg.separation,
                                  cfg.noise, stream(seed, _TEST_POOL))
    else:
        train = load_idx(cfg.images_path, cfg.labels_path, cfg.num_classes)
        test = load_idx(cfg.test_images_path, cfg.test_labels_path, cfg.num_classes)
    clients = partition_planted(train, cfg.partition, stream(seed, _PARTITION, 0))
    test_clients = partition_planted(test, test_spec, stream(seed, _PARTITION, 1))
    sizes = (train.dim, *cfg.hidden, cfg.num_classes)
    return ServerState(
        params=init_mlp(sizes, stream(seed, _INIT)),
        clients=clients,
        test_shards=[c.shard for c in test_clients],
        global_test=test,
        seed=seed,
    )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_records(records, path) -> None:
    """CSV summary at ``path`` plus full per-client detail in a sibling ``.json``."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in records:
                w.writerow([r.round, r.algo, _fmt(r.global_acc),
                            _fmt(r.mean_client_loss), _fmt(r.cd),
                            _fmt(r.sigma_acc), _fmt(r.nmi), r.seed])
        detail = [asdict(r) for r in records]
        for d in detail:
            if isinstance(d["nmi"], float) and math.isnan(d["nmi"]):
                d["nmi"] = None
        path.with_suffix(".json").write_text(json.dumps(detail, indent=1))
    except OSError as err:
        raise OSError(f"writing records to {path}: {err}") from err


def read_records(path) -> list[dict]:
    """Parse a records CSV back into dicts of typed values."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for row in rows:
        out.append({
            "round": int(row["round"]),
            "algo": row["algo"],
            "seed": int(row["seed"]),
            **{k: float(row[k]) for k in
               ("global_acc", "mean_client_loss", "cd", "sigma_acc", "nmi")},
        })
    return out


def _evaluated(k: int, K: int, every: int) -> bool:
    return (k + 1) % every == 0 or k == K - 1


def _summarize(records, initial_acc, cfg, runtime, csv_path="") -> RunSummary:
    if records:
        tail = records[-max(1, math.ceil(0.2 * len(records))):]
        nmis = [r.nmi for r in records if not math.isnan(r.nmi)]
        return RunSummary(
            records, records[-1].global_acc,
            float(np.mean([r.cd for r in tail])),
            float(np.mean([r.sigma_acc for r in tail])),
            float(np.mean(nmis)) if nmis else float("nan"),
            cfg.to_dict(), runtime, csv_path,
        )
    return RunSummary([], initial_acc, float("nan"), float("nan"), float("nan"),
                      cfg.to_dict(), runtime, csv_path)


def run_experiment(cfg: ExperimentConfig, state: ServerState | None = None) -> RunSummary:
    """Run ``cfg.hp.rounds`` rounds and write results if ``output_dir`` is set.

    A prebuilt ``state`` (from :func:`build_state`) may be passed to reuse the
    same data across algorithms.
    """
    cfg.validate()
    t0 = time.perf_counter()
    if state is None:
        state = build_state(cfg)
    K = cfg.hp.rounds
    _, _, initial_acc = evaluate(state.params, state.test_shards[:1], state.global_test)

    csv_path = ""
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = str(out / f"{cfg.hp.algorithm}_seed{cfg.seed}.csv")

    records: list[RoundRecord] = []
    try:
        for k in range(K):
            state, rec = run_round(state, cfg.hp, workers=cfg.workers,
                                   evaluate=_evaluated(k, K, cfg.eval_every))
            if rec is not None:
                records.append(rec)
    except DivergenceError:
        if csv_path:
            write_records(records, csv_path)
        raise
    if csv_path:
        write_records(records, csv_path)
    return _summarize(records, initial_acc, cfg, time.perf_counter() - t0, csv_path)


def sweep(cfg: ExperimentConfig, seeds, algorithms=ALGORITHMS) -> dict:
    """Run every algorithm for every seed on shared data.

    Returns ``{algo: [RunSummary per seed]}`` and, when ``output_dir`` is set,
    writes ``sweep_summary.csv`` with mean and sample std per metric.
    """
    results: dict[str, list[RunSummary]] = {a: [] for a in algorithms}
    for seed in seeds:
        base = cfg.with_overrides(seed=int(seed))
        state = build_state(base)
        for algo in algorithms:
            run_cfg = base.with_overrides(algorithm=algo)
            results[algo].append(run_experiment(run_cfg, state))
    if cfg.output_dir:
        _write_sweep_summary(results, Path(cfg.output_dir) / "sweep_summary.csv")
    return results


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _write_sweep_summary(results, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [("final_acc", "final_accuracy"), ("cd", "mean_cd_final"),
            ("sigma_acc", "mean_sigma_acc_final"), ("nmi", "mean_nmi")]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["algo", "n_seeds"] + [f"{c}_{s}" for c, _ in cols
                                          for s in ("mean", "std")])
        for algo, runs in results.items():
            row = [algo, len(runs)]
            for _, attr in cols:
                m, s = _mean_std([getattr(r, attr) for r in runs])
                row += [_fmt(m), _fmt(s)]
            w.writerow(row)
