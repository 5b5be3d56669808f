"""Ensemble self-training: k GCNs on edge-dropped views feed a consensus GCN.

Each epoch the members predict, their high-confidence unlabeled nodes are
compared (intersection over union), that agreement ratio sets how many
pseudo-labels each member trains on and moves the confidence threshold,
and unanimous (or beta-majority) predictions become training labels for a
consensus model on the original graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import gcn
from .augment import make_views
from .config import ExperimentConfig, VariantFlags
from .data import Dataset, inject_noisy_edges, make_label_rate_split, row_normalize
from .graph import SparseGraph, build_graph, normalize_adjacency
from .rng import Stream, make_rng

UNLABELED = -1


# ---------------------------------------------------------------- set logic

@dataclass
class PseudoLabelSets:
    members: list[np.ndarray]
    labels: list[np.ndarray]
    intersection: np.ndarray
    union: np.ndarray


@dataclass
class ConsensusSet:
    nodes: np.ndarray
    labels: np.ndarray
    agree: np.ndarray
    # majority label for every node, in or out of the set
    vote: np.ndarray


def high_confidence_set(pred_labels: np.ndarray, confidence: np.ndarray, theta: float,
                        labeled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unlabeled nodes with confidence >= theta, with their argmax labels."""
    ok = confidence >= theta
    ok[np.asarray(labeled, dtype=np.int64)] = False
    ids = np.flatnonzero(ok)
    return ids, pred_labels[ids]


def pseudo_label_sets(pred_labels: np.ndarray, confidence: np.ndarray, theta: float,
                      labeled: np.ndarray, label_aware: bool = False) -> PseudoLabelSets:
    """Per-model high-confidence sets plus their intersection and union.

    ``pred_labels`` and ``confidence`` are ``(k, N)``.  With ``label_aware`` a
    node only counts toward the intersection when every model also predicts
    the same class for it.
    """
    k, n = pred_labels.shape
    ids, labs = [], []
    inside = np.zeros((k, n), dtype=bool)
    for i in range(k):
        h, y = high_confidence_set(pred_labels[i], confidence[i], theta, labeled)
        ids.append(h)
        labs.append(y)
        inside[i, h] = True
    inter = inside.all(axis=0)
    if label_aware:
        inter &= (pred_labels == pred_labels[0]).all(axis=0)
    return PseudoLabelSets(ids, labs, np.flatnonzero(inter), np.flatnonzero(inside.any(axis=0)))


def agreement_ratio(sets: PseudoLabelSets) -> float:
    """|intersection| / |union|, or 0 when the union is empty."""
    if sets.union.size == 0:
        return 0.0
    return sets.intersection.size / sets.union.size


def update_threshold(theta: float, s_prev: float, s_curr: float, alpha: float,
                     theta_min: float, theta_max: float) -> float:
    """Rising agreement lowers the threshold; the result is clamped."""
    return min(max(theta + alpha * (s_prev - s_curr), theta_min), theta_max)


def subset_size(s: float, pool: int) -> int:
    # tolerance keeps e.g. 0.29 * 100 from flooring to 28
    return min(pool, int(math.floor(s * pool + 1e-9)))


def sample_training_set(labeled: np.ndarray, labeled_y: np.ndarray, pseudo: np.ndarray,
                        pseudo_y: np.ndarray, s: float, rng: np.random.Generator,
                        num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """All of ``labeled`` plus a uniform ``floor(s * |pseudo|)`` draw from ``pseudo``.

    Returns sorted node ids and an N-length target array (``-1`` off the set).
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"subset ratio must be in [0, 1], got {s}")
    n_pick = subset_size(s, pseudo.size)
    targets = np.full(num_nodes, UNLABELED, dtype=np.int64)
    if n_pick:
        pick = rng.choice(pseudo.size, size=n_pick, replace=False)
        targets[pseudo[pick]] = pseudo_y[pick]
    targets[labeled] = labeled_y
    return np.flatnonzero(targets != UNLABELED), targets


def votes_needed(beta: float, k: int) -> int:
    # tolerance keeps ceil(0.7 * 10) at 7
    return max(1, math.ceil(beta * k - 1e-9))


def consensus_vote(pred_labels: np.ndarray, probs: np.ndarray, beta: float) -> ConsensusSet:
    """Majority vote over ``k`` models.

    ``pred_labels`` is ``(k, N)`` and ``probs`` is ``(k, N, C)``.  A node joins
    the set when its most-voted class has at least ``ceil(beta * k)`` votes.
    Tied classes are separated by mean probability, then by lower index.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must be in (0, 1]")
    k, n = pred_labels.shape
    c = probs.shape[2]
    counts = np.zeros((n, c), dtype=np.int64)
    for i in range(k):
        np.add.at(counts, (np.arange(n), pred_labels[i]), 1)
    agree = counts.max(axis=1)
    score = np.where(counts == agree[:, None], probs.mean(axis=0), -np.inf)
    vote = score.argmax(axis=1)
    nodes = np.flatnonzero(agree >= votes_needed(beta, k))
    return ConsensusSet(nodes, vote[nodes], agree, vote)


# ---------------------------------------------------------------- training loop

@dataclass
class EpochMetrics:
    epoch: int
    agreement: float
    theta: float
    n_intersection: int
    n_union: int
    n_consensus: int
    consensus_loss: float
    consensus_train_size: int
    val_acc: float
    test_acc: float
    member_acc_mean: float
    member_acc_std: float
    pseudo_correct_ratio: float
    member_test_acc: list[float] = field(default_factory=list)


@dataclass
class TrialResult:
    seed: int
    test_acc: float
    val_acc: float
    final_epoch_test_acc: float
    best_val_epoch: int
    member_test_acc: list[float]
    epochs: list[EpochMetrics]


@dataclass
class EnsembleState:
    theta: float
    alpha: float
    beta: float
    theta_min: float
    theta_max: float
    flags: VariantFlags
    members: list[gcn.GcnModel]
    views: list[SparseGraph]
    consensus_model: gcn.GcnModel
    graph: SparseGraph
    subset_rngs: list[np.random.Generator]
    label_aware: bool = False
    s_history: list[float] = field(default_factory=list)
    last_sets: PseudoLabelSets | None = None
    last_consensus: ConsensusSet | None = None


def _accuracy(pred: np.ndarray, truth: np.ndarray, ids: np.ndarray) -> float:
    if ids.size == 0:
        return float("nan")
    return float(np.mean(pred[ids] == truth[ids]))


def run_epoch(state: EnsembleState, x, labels: np.ndarray, train: np.ndarray,
              val: np.ndarray, test: np.ndarray, epoch: int) -> EpochMetrics:
    """One outer iteration.  ``labels`` is only read on ``train`` for training;
    val/test/pseudo-label scores use it for evaluation only."""
    n = labels.shape[0]
    train_y = labels[train]
    flags = state.flags
    k = len(state.members)

    n_inter = n_union = 0
    s = 0.0
    member_acc: list[float] = []
    consensus = None
    if flags.members:
        preds, confs, probs = [], [], []
        for model, view in zip(state.members, state.views):
            p, c, pr = gcn.predict(model, view, x)
            preds.append(p)
            confs.append(c)
            probs.append(pr)
        preds, confs, probs = np.stack(preds), np.stack(confs), np.stack(probs)
        member_acc = [_accuracy(p, labels, test) for p in preds]

        sets = pseudo_label_sets(preds, confs, state.theta, train, state.label_aware)
        s = agreement_ratio(sets)
        state.s_history.append(s)
        n_inter, n_union = sets.intersection.size, sets.union.size
        state.last_sets = sets

        ratio = s if flags.adaptive_sampling else 1.0
        for i, (model, view) in enumerate(zip(state.members, state.views)):
            if flags.member_pseudo:
                ids, targets = sample_training_set(train, train_y, sets.members[i], sets.labels[i],
                                                   ratio, state.subset_rngs[i], n)
            else:
                ids = train
                targets = np.full(n, UNLABELED, dtype=np.int64)
                targets[train] = train_y
            gcn.train_step(model, view, x, targets, ids)

        if flags.adaptive_theta and len(state.s_history) >= 2:
            state.theta = update_threshold(state.theta, state.s_history[-2], state.s_history[-1],
                                           state.alpha, state.theta_min, state.theta_max)

        consensus = consensus_vote(preds, probs, state.beta)
        state.last_consensus = consensus

    targets = np.full(n, UNLABELED, dtype=np.int64)
    pseudo_nodes = np.empty(0, dtype=np.int64)
    if flags.consensus_pseudo and consensus is not None:
        nodes, votes = consensus.nodes, consensus.labels
        if flags.conservative:
            keep = np.isin(nodes, state.last_sets.intersection)
            nodes, votes = nodes[keep], votes[keep]
        targets[nodes] = votes
        pseudo_nodes = nodes[~np.isin(nodes, train)]
    targets[train] = train_y
    ids = np.flatnonzero(targets != UNLABELED)
    loss = gcn.train_step(state.consensus_model, state.graph, x, targets, ids)

    cons_pred, _, _ = gcn.predict(state.consensus_model, state.graph, x)
    correct = (float(np.mean(targets[pseudo_nodes] == labels[pseudo_nodes]))
               if pseudo_nodes.size else float("nan"))
    return EpochMetrics(
        epoch=epoch,
        agreement=s,
        theta=state.theta,
        n_intersection=n_inter,
        n_union=n_union,
        n_consensus=int(consensus.nodes.size) if consensus is not None else 0,
        consensus_loss=loss,
        consensus_train_size=int(ids.size),
        val_acc=_accuracy(cons_pred, labels, val),
        test_acc=_accuracy(cons_pred, labels, test),
        member_acc_mean=float(np.mean(member_acc)) if member_acc else float("nan"),
        member_acc_std=float(np.std(member_acc)) if member_acc else float("nan"),
        pseudo_correct_ratio=correct,
        member_test_acc=member_acc,
    )


def prepare_dataset(config: ExperimentConfig, ds: Dataset, seed: int) -> Dataset:
    """Apply the per-trial label-rate split and noisy-edge injection."""
    if config.per_class is not None:
        ds = make_label_rate_split(ds, config.per_class, make_rng(seed, Stream.SPLIT))
    if config.noise_q is not None:
        ds = inject_noisy_edges(ds, config.noise_q, make_rng(seed, Stream.NOISE))
    return ds


def feature_matrix(ds: Dataset, normalize: bool):
    x = row_normalize(ds.features) if normalize else ds.features
    # bag-of-words features are mostly zero; CSR makes dropout and X @ W cheap
    if x.size and np.count_nonzero(x) < 0.3 * x.size:
        return sp.csr_matrix(x)
    return x


def init_state(config: ExperimentConfig, ds: Dataset, seed: int) -> EnsembleState:
    flags = config.flags
    n, d, c = ds.num_nodes, ds.feature_dim, ds.num_classes
    model_kw = dict(lr=config.lr, weight_decay=config.weight_decay, dropout_p=config.dropout,
                    input_dropout=config.input_dropout, weight_decay_mode=config.weight_decay_mode)
    k = config.k if flags.members else 0
    views = make_views(ds.edges, n, k, config.p_drop, seed) if k else []
    members = [gcn.make_model(d, config.hidden_dim, c, make_rng(seed, Stream.MEMBER_INIT, i),
                              make_rng(seed, Stream.MEMBER_DROPOUT, i), **model_kw) for i in range(k)]
    consensus_model = gcn.make_model(d, config.hidden_dim, c, make_rng(seed, Stream.CONSENSUS_INIT),
                                     make_rng(seed, Stream.CONSENSUS_DROPOUT), **model_kw)
    return EnsembleState(
        theta=config.theta_init,
        alpha=config.alpha if flags.adaptive_theta else 0.0,
        beta=config.beta,
        theta_min=config.theta_min,
        theta_max=config.theta_max,
        flags=flags,
        members=members,
        views=views,
        consensus_model=consensus_model,
        graph=normalize_adjacency(build_graph(n, ds.edges)),
        subset_rngs=[make_rng(seed, Stream.SUBSET, i) for i in range(k)],
        label_aware=config.label_aware_agreement,
    )


EpochHook = Callable[[EnsembleState, EpochMetrics], bool | None]


def run_trial(config: ExperimentConfig, ds: Dataset, seed: int,
              on_epoch: EpochHook | None = None) -> TrialResult:
    """Train one ensemble for ``max_epochs``.  ``on_epoch`` may return True to stop early."""
    ds = prepare_dataset(config, ds, seed)
    x = feature_matrix(ds, config.normalize_features)
    state = init_state(config, ds, seed)
    history = []
    for epoch in range(1, config.max_epochs + 1):
        m = run_epoch(state, x, ds.labels, ds.train, ds.val, ds.test, epoch)
        history.append(m)
        if on_epoch is not None and on_epoch(state, m):
            break

    final = history[-1]
    vals = np.array([-1.0 if np.isnan(h.val_acc) else h.val_acc for h in history])
    best = int(np.argmax(vals))
    chosen = history[best] if config.select_best_val else final
    member_acc = []
    for model, view in zip(state.members, state.views):
        pred, _, _ = gcn.predict(model, view, x)
        member_acc.append(_accuracy(pred, ds.labels, ds.test))
    return TrialResult(seed=seed, test_acc=chosen.test_acc, val_acc=chosen.val_acc,
                       final_epoch_test_acc=final.test_acc, best_val_epoch=best + 1,
                       member_test_acc=member_acc, epochs=history)
