"""Linear graph surrogates trained under a fixed weight-update budget.

Two families are provided. ``pointwise-linear`` predicts each node from its
own features, ``one-hop-aggregated-linear`` adds the mean of its lattice
neighbours' features. Both are trained by plain gradient descent on the
mean squared error, one update per epoch on a randomly drawn batch of
graphs, inside k-fold cross-validation with early stopping.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import FieldGraph, Snapshot, fit_normalization, to_graph

FAMILIES = ("pointwise-linear", "one-hop-aggregated-linear")


class ConfigError(ValueError):
    """Invalid surrogate or training configuration."""


@dataclass(frozen=True)
class SurrogateConfig:
    family: str = "pointwise-linear"
    ridge_lambda: float = 0.0
    learning_rate: float = 0.05
    n_features: int = 10

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")

    @property
    def param_count(self) -> int:
        f = self.n_features
        return f + 1 if self.family == "pointwise-linear" else 2 * f + 1


@dataclass(frozen=True)
class TrainConfig:
    budget_updates: int = 2000
    folds: int = 4
    batch_graphs: int = 128
    patience: int = 50
    trials: int = 6

    def __post_init__(self):
        for name in ("budget_updates", "folds", "batch_graphs", "patience", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2 to leave a validation split")


@dataclass
class FoldHistory:
    fold: int
    updates: int
    best_epoch: int
    best_val: float
    val_loss: list[float] = field(default_factory=list)


@dataclass
class TrainedSurrogate:
    config: SurrogateConfig
    weights: np.ndarray
    histories: list[FoldHistory]

    def predict(self, graph: FieldGraph) -> np.ndarray:
        phi = design_matrix(graph, self.config)
        if phi.shape[1] != len(self.weights):
            raise ConfigError(f"feature dimension {phi.shape[1]} does not match model ({len(self.weights)})")
        return phi @ self.weights


@dataclass
class MseRecord:
    model_size: int
    dataset_size: int
    seed: int
    test_mse: float
    family: str = "pointwise-linear"
    histories: list[FoldHistory] = field(default_factory=list)


# --------------------------------------------------------------------------
# Design matrices
# --------------------------------------------------------------------------

def neighbour_mean(graph: FieldGraph) -> np.ndarray:
    """Mean of each node's neighbours' features (zero for isolated nodes)."""
    n = graph.num_nodes
    e = graph.edge_list
    acc = np.zeros_like(graph.node_features)
    deg = np.zeros(n)
    np.add.at(acc, e[:, 0], graph.node_features[e[:, 1]])
    np.add.at(acc, e[:, 1], graph.node_features[e[:, 0]])
    np.add.at(deg, e[:, 0], 1.0)
    np.add.at(deg, e[:, 1], 1.0)
    return acc / np.maximum(deg, 1.0)[:, None]


def design_matrix(graph: FieldGraph, config: SurrogateConfig) -> np.ndarray:
    x = graph.node_features
    if x.shape[1] != config.n_features:
        raise ConfigError(f"graph has {x.shape[1]} features, model expects {config.n_features}")
    ones = np.ones((len(x), 1))
    if config.family == "pointwise-linear":
        return np.hstack([x, ones])
    return np.hstack([x, neighbour_mean(graph), ones])


@dataclass
class _Moments:
    """Per-graph sufficient statistics of the squared-error loss."""

    gram: np.ndarray    # (G, p, p)
    cross: np.ndarray   # (G, p)
    sq: np.ndarray      # (G,)
    nodes: np.ndarray   # (G,)

    def loss(self, idx, w) -> float:
        g = self.gram[idx].sum(axis=0)
        b = self.cross[idx].sum(axis=0)
        c = self.sq[idx].sum()
        return float((w @ g @ w - 2.0 * w @ b + c) / self.nodes[idx].sum())

    def grad(self, idx, w) -> np.ndarray:
        g = self.gram[idx].sum(axis=0)
        b = self.cross[idx].sum(axis=0)
        return 2.0 * (g @ w - b) / self.nodes[idx].sum()


def _moments(graphs, config: SurrogateConfig) -> _Moments:
    grams, cross, sq, nodes = [], [], [], []
    for g in graphs:
        if g.target is None:
            raise ConfigError(f"graph {g.call_sign}@{g.aoa_deg:g} has no target")
        phi = design_matrix(g, config)
        grams.append(phi.T @ phi)
        cross.append(phi.T @ g.target)
        sq.append(float(g.target @ g.target))
        nodes.append(len(g.target))
    return _Moments(np.array(grams), np.array(cross), np.array(sq), np.array(nodes, dtype=float))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

class EarlyStopper:
    """Stop when the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.epoch = -1

    def step(self, value: float) -> bool:
        """Record one epoch; return True when training should stop."""
        self.epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self.epoch
        return self.epoch - self.best_epoch >= self.patience


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into ``folds`` validation blocks."""
    if n < folds:
        raise ConfigError(f"dataset size {n} is smaller than fold count {folds}")
    perm = np.random.default_rng([seed, 0xF01D]).permutation(n)
    return np.array_split(perm, folds)


def _draw_batch(train_idx: np.ndarray, batch: int, seed: int, fold: int, epoch: int) -> np.ndarray:
    rng = np.random.default_rng([seed, fold, epoch])
    if len(train_idx) < batch:
        return np.sort(rng.choice(train_idx, size=batch, replace=True))
    return np.sort(rng.choice(train_idx, size=batch, replace=False))


def _ridge_mask(config: SurrogateConfig) -> np.ndarray:
    mask = np.ones(config.param_count)
    mask[-1] = 0.0
    return mask


def train_kfold(graphs, sconf: SurrogateConfig, tconf: TrainConfig, seed: int) -> TrainedSurrogate:
    """k-fold gradient-descent training; returns the mean of the folds' best weights."""
    graphs = list(graphs)
    mom = _moments(graphs, sconf)
    blocks = fold_indices(len(graphs), tconf.folds, seed)
    mask = _ridge_mask(sconf)
    lam = sconf.ridge_lambda
    best_weights, histories = [], []
    for fold, val_idx in enumerate(blocks):
        if len(val_idx) == 0:
            raise ConfigError(f"fold {fold} has an empty validation split")
        train_idx = np.sort(np.concatenate([b for k, b in enumerate(blocks) if k != fold]))
        val_idx = np.sort(val_idx)
        w = np.zeros(sconf.param_count)
        stopper = EarlyStopper(tconf.patience)
        best_w = w.copy()
        hist = []
        updates = 0
        for epoch in range(tconf.budget_updates):
            batch = _draw_batch(train_idx, tconf.batch_graphs, seed, fold, epoch)
            w = w - sconf.learning_rate * (mom.grad(batch, w) + 2.0 * lam * mask * w)
            updates += 1
            val = mom.loss(val_idx, w)
            if not math.isfinite(val):
                raise FloatingPointError(f"training diverged in fold {fold} at epoch {epoch}; lower learning_rate")
            hist.append(val)
            stop = stopper.step(val)
            if stopper.best_epoch == epoch:
                best_w = w.copy()
            if stop:
                break
        best_weights.append(best_w)
        histories.append(FoldHistory(fold, updates, stopper.best_epoch, stopper.best, hist))
    return TrainedSurrogate(sconf, np.mean(best_weights, axis=0), histories)


def evaluate_mse(model: TrainedSurrogate, graphs) -> float:
    """Mean squared error over every node of every graph."""
    graphs = list(graphs)
    if not graphs:
        raise ConfigError("holdout set is empty")
    sse = 0.0
    count = 0
    for g in graphs:
        r = model.predict(g) - g.target
        sse += float(r @ r)
        count += len(r)
    return sse / count


def training_mse(model: TrainedSurrogate, graphs) -> float:
    return evaluate_mse(model, graphs)


# --------------------------------------------------------------------------
# Scaling experiment
# --------------------------------------------------------------------------

def level_graphs(train: list[Snapshot], holdout: list[Snapshot]):
    """Graphs for one level; normalization is fitted on the training snapshots only."""
    norm = fit_normalization(train)
    return [to_graph(s, norm) for s in train], [to_graph(s, norm) for s in holdout]


def _run_tuple(args) -> MseRecord:
    train_graphs, holdout_graphs, sconf, tconf, seed = args
    model = train_kfold(train_graphs, sconf, tconf, seed)
    mse = evaluate_mse(model, holdout_graphs)
    return MseRecord(sconf.param_count, len(train_graphs), seed, mse, sconf.family, model.histories)


def run_scaling_experiment(levels: dict, holdout: list[Snapshot], model_configs, tconf: TrainConfig = TrainConfig(),
                           seeds=None, jobs: int = 1) -> list[MseRecord]:
    """Full factorial over model configs x levels x seeds.

    ``levels`` maps a level label to its training snapshots. Records come
    back ordered by (model, level, seed) whatever the worker count.
    """
    seeds = list(range(tconf.trials)) if seeds is None else list(seeds)
    tasks = []
    for sconf in model_configs:
        for label in sorted(levels):
            tr, ho = level_graphs(levels[label], holdout)
            for seed in seeds:
                tasks.append((tr, ho, sconf, tconf, seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_tuple, tasks))
    return [_run_tuple(t) for t in tasks]


def write_mse_csv(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "D", "seed", "mse"])
        for r in records:
            w.writerow([r.model_size, r.dataset_size, r.seed, repr(float(r.test_mse))])
    return path


def read_mse_csv(path) -> list[MseRecord]:
    with Path(path).open() as fh:
        return [MseRecord(int(float(r["N"])), int(r["D"]), int(r["seed"]), float(r["mse"]))
                for r in csv.DictReader(fh)]
