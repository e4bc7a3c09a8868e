"""Adaptive batch-normalization candidate selection.

Clients refresh the BN moving statistics of every coarse-pruned candidate on
their local development data (weights frozen throughout), the server
aggregates the statistics and redistributes them, clients score each
candidate by eval-mode loss, and the candidate with the lowest weighted loss
wins. ``vanilla_select`` is the ablation that skips the statistics refresh.

No operation in this module ever changes a parameter value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import Array, Network, cross_entropy, forward, update_bn_stats


@dataclass
class BNReport:
    """One client's refreshed BN statistics for one candidate."""

    candidate_id: int
    means: list[Array]
    variances: list[Array]
    samples: int

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("a BN report needs at least one sample")
        for v in self.variances:
            if np.any(v < 0.0):
                raise ValueError("reported variances must be nonnegative")


@dataclass
class ScoreReport:
    candidate_id: int
    loss: float
    samples: int

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise ValueError("candidate score must be finite")


def iter_batches(ds: Dataset, batch_size: int):
    """Insertion-order batches of the dataset; the tail may be short."""
    for start in range(0, len(ds), batch_size):
        yield (ds.features[start:start + batch_size],
               ds.labels[start:start + batch_size])


def client_bn_pass(candidate: Network, dev: Dataset,
                   batch_size: int = 64) -> BNReport:
    """Refresh BN moving statistics over the development set with frozen
    weights; the candidate itself is left untouched."""
    if len(dev) < 1:
        raise ValueError("development dataset is empty")
    probe = candidate.clone()
    for x, _ in iter_batches(dev, batch_size):
        update_bn_stats(probe, x)
    means = [bn.state.mean.copy() for _, bn in probe.bn_layers()]
    variances = [bn.state.var.copy() for _, bn in probe.bn_layers()]
    return BNReport(-1, means, variances, len(dev))


def aggregate_bn(reports: list[BNReport], average_std: bool = True):
    """Dev-size-weighted aggregation of client BN statistics.

    With ``average_std`` the spread statistics are combined as standard
    deviations (sigma-bar squared becomes the global variance); otherwise
    variances are averaged directly.
    """
    if not reports:
        raise ValueError("need at least one BN report")
    n_layers = len(reports[0].means)
    for rep in reports:
        if len(rep.means) != n_layers or len(rep.variances) != n_layers:
            raise ValueError("BN reports disagree on layer count")
        for a, b in zip(rep.means, reports[0].means):
            if a.shape != b.shape:
                raise ValueError("BN reports disagree on layer shapes")
    total = sum(rep.samples for rep in reports)
    weights = [rep.samples / total for rep in reports]
    means = []
    variances = []
    for layer in range(n_layers):
        mu = sum(w * rep.means[layer] for w, rep in zip(weights, reports))
        if average_std:
            sigma = sum(w * np.sqrt(rep.variances[layer])
                        for w, rep in zip(weights, reports))
            var = sigma ** 2
        else:
            var = sum(w * rep.variances[layer]
                      for w, rep in zip(weights, reports))
        means.append(mu)
        variances.append(var)
    return means, variances


def install_bn(net: Network, means: list[Array],
               variances: list[Array]) -> None:
    """Overwrite the running statistics of every BN layer (statistics only;
    the affine parameters stay as they are)."""
    bn = net.bn_layers()
    if len(bn) != len(means):
        raise ValueError("statistics do not match the network's BN layers")
    for (_, layer), mu, var in zip(bn, means, variances):
        if layer.state.mean.shape != mu.shape:
            raise ValueError("BN statistics shape mismatch")
        layer.state.mean = np.asarray(mu, dtype=np.float64).copy()
        layer.state.var = np.asarray(var, dtype=np.float64).copy()


def client_score(candidate: Network, dev: Dataset,
                 batch_size: int = 64) -> ScoreReport:
    """Eval-mode cross-entropy of the candidate over the development set."""
    if len(dev) < 1:
        raise ValueError("development dataset is empty")
    total = 0.0
    for x, y in iter_batches(dev, batch_size):
        logits, _ = forward(candidate, x, "eval")
        total += cross_entropy(logits, y) * len(y)
    return ScoreReport(-1, total / len(dev), len(dev))


def select(scores: dict[int, list[float]], dev_sizes: list[int]) -> int:
    """argmin over candidates of the dev-size-weighted mean loss; ties go to
    the lowest candidate id."""
    if not scores:
        raise ValueError("no candidates to select from")
    total = sum(dev_sizes)
    best_id = None
    best_score = None
    for cid in sorted(scores):
        per_client = scores[cid]
        if len(per_client) != len(dev_sizes):
            raise ValueError(f"candidate {cid}: expected {len(dev_sizes)} "
                             f"client scores, got {len(per_client)}")
        agg = sum(n / total * s for n, s in zip(dev_sizes, per_client))
        if best_score is None or agg < best_score:
            best_id, best_score = cid, agg
    return best_id


def adaptive_select(candidates: list[tuple[int, Network]],
                    dev_sets: list[Dataset], batch_size: int = 64,
                    average_std: bool = True):
    """Full selection protocol. Returns the winning candidate id, the winner's
    network with the aggregated global statistics installed, and the
    per-candidate aggregated scores."""
    dev_sizes = [len(dev) for dev in dev_sets]
    refreshed: dict[int, Network] = {}
    for cid, net in candidates:
        reports = []
        for dev in dev_sets:
            rep = client_bn_pass(net, dev, batch_size)
            rep.candidate_id = cid
            reports.append(rep)
        means, variances = aggregate_bn(reports, average_std=average_std)
        updated = net.clone()
        install_bn(updated, means, variances)
        refreshed[cid] = updated
    scores = {cid: [client_score(refreshed[cid], dev, batch_size).loss
                    for dev in dev_sets]
              for cid, _ in candidates}
    winner = select(scores, dev_sizes)
    return winner, refreshed[winner], _aggregate_scores(scores, dev_sizes)


def vanilla_select(candidates: list[tuple[int, Network]],
                   dev_sets: list[Dataset], batch_size: int = 64):
    """Ablation variant: score candidates with their original BN statistics
    (no refresh, no aggregation)."""
    dev_sizes = [len(dev) for dev in dev_sets]
    scores = {cid: [client_score(net, dev, batch_size).loss
                    for dev in dev_sets]
              for cid, net in candidates}
    winner = select(scores, dev_sizes)
    winner_net = next(net for cid, net in candidates if cid == winner)
    return winner, winner_net.clone(), _aggregate_scores(scores, dev_sizes)


def _aggregate_scores(scores: dict[int, list[float]],
                      dev_sizes: list[int]) -> dict[int, float]:
    total = sum(dev_sizes)
    return {cid: sum(n / total * s for n, s in zip(dev_sizes, per_client))
            for cid, per_client in scores.items()}
