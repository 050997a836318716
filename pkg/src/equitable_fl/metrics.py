"""Fairness and clustering-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .model import ModelParams, log_softmax, forward, Batch

__all__ = [
    "RoundRecord",
    "client_disagreement",
    "sigma_acc",
    "nmi",
    "evaluate",
]


@dataclass
class RoundRecord:
    round: int
    algo: str
    seed: int
    cohort: list[int]
    client_losses: list[float]
    client_accs: list[float]
    global_acc: float
    cd: float
    sigma_acc: float
    nmi: float  # NaN for algorithms that do not cluster
    weights: list[float]
    cluster_labels: list[int] = field(default_factory=list)
    train_losses: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def mean_client_loss(self) -> float:
        return float(np.mean(self.client_losses))


def client_disagreement(losses) -> float:
    """Mean absolute loss gap over unordered pairs of participants.

    Each pair is counted once and the sum divided by ``r choose 2``.
    """
    f = np.asarray(losses, dtype=np.float64)
    r = f.size
    if r < 2:
        raise ContractViolation(f"client disagreement needs >= 2 participants, got {r}")
    i, j = np.triu_indices(r, k=1)
    return float(np.sum(np.abs(f[i] - f[j])) / (r * (r - 1) / 2))


def sigma_acc(client_accs, global_acc: float) -> float:
    """RMS deviation of client accuracies about the global accuracy."""
    a = np.asarray(client_accs, dtype=np.float64)
    if a.size == 0:
        raise ContractViolation("sigma_acc of an empty client list")
    return float(np.sqrt(np.mean((a - global_acc) ** 2)))


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth, average: str = "geometric") -> float:
    """Normalized mutual information between two labelings (natural log).

    Two single-cluster labelings score 1; a single-cluster labeling against
    a split one scores 0.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ContractViolation(
            f"label vectors differ in shape: {pred.shape} vs {truth.shape}"
        )
    n = pred.size
    if n == 0:
        raise ContractViolation("nmi of empty labelings")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(table, (pi, ti), 1.0)
    hp = _entropy(table.sum(axis=1), n)
    ht = _entropy(table.sum(axis=0), n)
    if hp == 0.0 and ht == 0.0:
        return 1.0
    if hp == 0.0 or ht == 0.0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    if average == "geometric":
        denom = np.sqrt(hp * ht)
    elif average == "arithmetic":
        denom = 0.5 * (hp + ht)
    else:
        raise ContractViolation(f"unknown average {average!r}")
    return float(min(max(mi / denom, 0.0), 1.0))


def _loss_acc(params: ModelParams, features, labels):
    logits, _ = forward(params, Batch(features, labels))
    logp = log_softmax(logits)
    idx = np.arange(labels.size)
    return (float(-np.mean(logp[idx, labels])),
            float(np.mean(np.argmax(logits, axis=1) == labels)))


def evaluate(params: ModelParams, shards, global_test):
    """Per-shard cross-entropy and accuracy, plus accuracy on ``global_test``.

    ``shards`` holds objects with ``features``/``labels`` (datasets) or
    ``shard`` attributes (client datasets).
    """
    losses, accs = [], []
    if len(shards) == 0:
        raise ContractViolation("no shards to evaluate")
    for s in shards:
        ds = getattr(s, "shard", s)
        if len(ds.labels) == 0:
            raise ContractViolation("cannot evaluate on an empty shard")
        l, a = _loss_acc(params, ds.features, ds.labels)
        losses.append(l)
        accs.append(a)
    _, gacc = _loss_acc(params, global_test.features, global_test.labels)
    return losses, accs, gacc
