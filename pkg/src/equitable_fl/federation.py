"""The federated round loop.

One round: sample a cohort, broadcast the global model, run proximal local
SGD on every cohort member, pick aggregation weights (sample-proportional for
the baselines, cluster-equitable for ``equitable``), average, evaluate.

Every random draw comes from a stream keyed on ``(seed, purpose, round,
client)``, so results do not depend on how many worker threads run the
local updates or in which order they finish.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import clustering, metrics
from .data import ClientDataset, Dataset
from .errors import ContractViolation, DivergenceError
from .model import Batch, ModelParams, activation_vector, loss, loss_and_grad

__all__ = [
    "ALGORITHMS",
    "HyperParams",
    "ClientUpdate",
    "ServerState",
    "stream",
    "proximal_sgd",
    "local_update",
    "sample_uniform",
    "sample_powd",
    "aggregate",
    "sample_weights",
    "run_round",
]

ALGORITHMS = ("fedavg", "fedprox", "equitable", "fedprox_powd")

# stream purposes
_SAMPLING, _CLIENT, _CLUSTER = 1, 2, 3


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class HyperParams:
    eta: float = 0.05
    mu: float = 0.01
    local_epochs: int = 5
    batch_size: int = 32
    rounds: int = 50
    cohort_size: int = 4
    num_clusters: int = 2
    powd_candidates: int = 6
    algorithm: str = "equitable"
    probe_size: int = 64
    normalize_similarity: bool = False
    activation_layer: str = "penultimate"
    weighting: str = "samples"  # baseline weights: "samples" or "uniform"
    kmeans_restarts: int = 20

    def validate(self, n_clients: int | None = None) -> None:
        def bad(field, why):
            raise ContractViolation(f"{field}: {why}")

        if self.algorithm not in ALGORITHMS:
            bad("algorithm", f"must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.eta > 0:
            bad("eta", f"must be > 0, got {self.eta}")
        if not self.mu >= 0:
            bad("mu", f"must be >= 0, got {self.mu}")
        for name in ("local_epochs", "batch_size", "cohort_size", "num_clusters",
                     "probe_size", "kmeans_restarts"):
            if getattr(self, name) < 1:
                bad(name, f"must be >= 1, got {getattr(self, name)}")
        if self.rounds < 0:
            bad("rounds", f"must be >= 0, got {self.rounds}")
        if n_clients is not None and self.cohort_size > n_clients:
            bad("cohort_size", f"{self.cohort_size} exceeds client count {n_clients}")
        if self.algorithm == "fedprox_powd":
            if self.powd_candidates < self.cohort_size:
                bad("powd_candidates",
                    f"{self.powd_candidates} is below cohort_size {self.cohort_size}")
            if n_clients is not None and self.powd_candidates > n_clients:
                bad("powd_candidates",
                    f"{self.powd_candidates} exceeds client count {n_clients}")
        if self.algorithm == "equitable" and self.num_clusters > self.cohort_size:
            bad("num_clusters",
                f"{self.num_clusters} exceeds cohort_size {self.cohort_size}")
        if self.activation_layer not in ("penultimate", "final"):
            bad("activation_layer", f"unknown layer {self.activation_layer!r}")
        if self.weighting not in ("samples", "uniform"):
            bad("weighting", f"unknown weighting {self.weighting!r}")

    @property
    def effective_mu(self) -> float:
        return 0.0 if self.algorithm == "fedavg" else self.mu


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: ModelParams
    activation: np.ndarray
    train_loss: float
    sample_count: int


@dataclass
class ServerState:
    params: ModelParams
    clients: list[ClientDataset]
    test_shards: list[Dataset]
    global_test: Dataset
    seed: int
    round: int = 0


def proximal_sgd(w0, grad_fn, batches, eta: float, mu: float) -> np.ndarray:
    """Run ``w <- w - eta * (grad(w, batch) + mu * (w - w0))`` over ``batches``.

    ``grad_fn(w, batch)`` returns ``(loss, grad)``. With ``mu = 0`` this is
    plain mini-batch SGD.
    """
    anchor = np.asarray(w0, dtype=np.float64)
    w = anchor.copy()
    for step, batch in enumerate(batches):
        value, g = grad_fn(w, batch)
        if not (np.isfinite(value) and np.all(np.isfinite(g))):
            raise DivergenceError("non-finite loss or gradient", step)
        if mu:
            g = g + mu * (w - anchor)
        w = w - eta * g
    return w


def _epoch_batches(n: int, batch_size: int, epochs: int, rng: np.random.Generator):
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def local_update(client: ClientDataset, global_params: ModelParams, hp: HyperParams,
                 rng: np.random.Generator) -> ClientUpdate:
    shard = client.shard
    if len(shard) == 0:
        raise ContractViolation(f"client {client.client_id} has an empty shard")
    x, y = shard.features, shard.labels
    sizes = global_params.layer_sizes

    def grad_fn(w, idx):
        return loss_and_grad(ModelParams(sizes, w), Batch(x[idx], y[idx]))

    batches = _epoch_batches(len(shard), hp.batch_size, hp.local_epochs, rng)
    try:
        w = proximal_sgd(global_params.vector, grad_fn, batches, hp.eta, hp.effective_mu)
    except DivergenceError as err:
        raise DivergenceError("local training diverged", err.step,
                              client_id=client.client_id) from err
    params = ModelParams(sizes, w)
    probe = Batch(x[:hp.probe_size], y[:hp.probe_size])
    return ClientUpdate(
        client_id=client.client_id,
        params=params,
        activation=activation_vector(params, probe, hp.activation_layer),
        train_loss=loss(params, shard.as_batch()),
        sample_count=len(shard),
    )


def sample_uniform(n: int, r: int, rng: np.random.Generator) -> list[int]:
    """``r`` distinct client ids, uniformly at random, returned sorted."""
    if not 0 <= r <= n:
        raise ContractViolation(f"cannot draw {r} of {n} clients")
    return sorted(int(i) for i in rng.choice(n, size=r, replace=False))


def sample_powd(n: int, d: int, r: int, losses, rng: np.random.Generator) -> list[int]:
    """Power-of-choice: draw ``d`` candidates, keep the ``r`` with highest loss.

    ``losses`` is either indexable by client id or a callable ``loss(cid)``;
    only the candidates' losses are looked up. Ties go to the lower id.
    """
    if r > d:
        raise ContractViolation(f"r={r} exceeds d={d} candidates")
    if d > n:
        raise ContractViolation(f"d={d} exceeds client count {n}")
    cands = sample_uniform(n, d, rng)
    lookup = losses if callable(losses) else (lambda cid: losses[cid])
    scored = sorted(cands, key=lambda cid: (-float(lookup(cid)), cid))
    return sorted(scored[:r])


def aggregate(updates, weights) -> ModelParams:
    w = np.asarray(weights, dtype=np.float64)
    if len(updates) == 0:
        raise ContractViolation("nothing to aggregate")
    if w.shape != (len(updates),):
        raise ContractViolation(
            f"{w.size} weights for {len(updates)} updates"
        )
    if np.any(w < 0):
        raise ContractViolation("aggregation weights must be non-negative")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ContractViolation(f"aggregation weights sum to {total!r}, not 1")
    out = np.zeros_like(updates[0].params.vector)
    for wi, u in zip(w, updates):
        out += wi * u.params.vector
    return updates[0].params.with_vector(out)


def sample_weights(counts, mode: str = "samples") -> np.ndarray:
    """Baseline aggregation weights renormalized over the cohort."""
    counts = np.asarray(counts, dtype=np.float64)
    if mode == "uniform":
        return np.full(counts.size, 1.0 / counts.size)
    return counts / counts.sum()


def _select_cohort(state: ServerState, hp: HyperParams) -> list[int]:
    n = len(state.clients)
    rng = stream(state.seed, _SAMPLING, state.round)
    if hp.algorithm == "fedprox_powd":
        batches = [c.shard.as_batch() for c in state.clients]
        return sample_powd(n, hp.powd_candidates, hp.cohort_size,
                           lambda cid: loss(state.params, batches[cid]), rng)
    return sample_uniform(n, hp.cohort_size, rng)


def run_round(state: ServerState, hp: HyperParams, workers: int = 1,
              evaluate: bool = True):
    """Advance ``state`` by one round.

    Returns ``(new_state, record)``; ``record`` is ``None`` when
    ``evaluate`` is false.
    """
    t0 = time.perf_counter()
    k = state.round
    hp.validate(len(state.clients))
    cohort = _select_cohort(state, hp)

    def work(cid):
        try:
            return local_update(state.clients[cid], state.params, hp,
                                stream(state.seed, _CLIENT, k, cid))
        except DivergenceError as err:
            raise DivergenceError("local training diverged", err.step, k, cid) from err

    if workers > 1 and len(cohort) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(work, cohort))
    else:
        updates = [work(cid) for cid in cohort]

    labels: list[int] = []
    if hp.algorithm == "equitable":
        assignment = clustering.cluster_cohort(
            np.stack([u.activation for u in updates]), hp.num_clusters,
            stream(state.seed, _CLUSTER, k), normalize=hp.normalize_similarity,
            restarts=hp.kmeans_restarts,
        )
        weights = assignment.weights
        labels = assignment.labels.tolist()
    else:
        weights = sample_weights([u.sample_count for u in updates], hp.weighting)

    new_params = aggregate(updates, weights)
    new_state = replace(state, params=new_params, round=k + 1)

    record = None
    if evaluate:
        losses, accs, gacc = metrics.evaluate(
            new_params, [state.test_shards[c] for c in cohort], state.global_test
        )
        truth = [state.clients[c].true_cluster for c in cohort]
        record = metrics.RoundRecord(
            round=k + 1,
            algo=hp.algorithm,
            seed=state.seed,
            cohort=list(cohort),
            client_losses=losses,
            client_accs=accs,
            global_acc=gacc,
            cd=metrics.client_disagreement(losses) if len(cohort) > 1 else 0.0,
            sigma_acc=metrics.sigma_acc(accs, gacc),
            nmi=metrics.nmi(labels, truth) if labels else float("nan"),
            weights=[float(w) for w in weights],
            cluster_labels=labels,
            train_losses=[u.train_loss for u in updates],
            wall_time=time.perf_counter() - t0,
        )
    return new_state, record
