"""Pairwise neural comparator over working-set statistics, and tournament ranking.

The network sees one pair of variants as eight numbers (four working-set
sizes each, divided by their joint sum) and produces two softmax outputs.
An output above the threshold declares that side the winner; otherwise the
game is a draw.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .cachefit import CacheFitResult

__all__ = [
    "Outcome",
    "VariantStats",
    "PairwiseRanker",
    "TrainResult",
    "DegeneratePair",
    "EmptyDataset",
    "MissingWeights",
    "WeightsFileError",
    "normalize_pair",
    "pair_features",
    "compare",
    "tournament",
    "tournament_rank",
    "asymmetry",
    "train",
    "loss_and_grads",
    "gradient_check",
    "synthetic_dataset",
    "save_weights",
    "load_weights",
    "parse_weights",
    "weights_text",
    "accuracy",
    "split_sizes",
    "LAYER_DIMS",
    "ACTIVATIONS",
]

LAYER_DIMS = (8, 64, 32, 16, 8, 2)
ACTIVATIONS = ("relu", "relu", "softsign", "relu", "softmax")
THRESHOLD = 0.6


class DegeneratePair(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class MissingWeights(FileNotFoundError):
    pass


class WeightsFileError(ValueError):
    pass


class Outcome(enum.Enum):
    WIN_A = "A"
    WIN_B = "B"
    DRAW = "draw"

    def mirrored(self) -> "Outcome":
        return {Outcome.WIN_A: Outcome.WIN_B, Outcome.WIN_B: Outcome.WIN_A}.get(self, self)


@dataclass(frozen=True)
class VariantStats:
    ws_l1: int
    ws_l2: int
    ws_l3: int
    ws_mem: int

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ValueError(f"negative statistic in {self}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.ws_l1, self.ws_l2, self.ws_l3, self.ws_mem)

    @classmethod
    def from_fit(cls, fit: CacheFitResult) -> "VariantStats":
        """First three cache levels as L1-L3; any further levels are added to L3."""
        levels = list(fit.per_level_ws) + [0, 0, 0]
        return cls(levels[0], levels[1], sum(levels[2:]), fit.mem_ws)


def normalize_pair(a: VariantStats, b: VariantStats) -> tuple[Fraction, ...]:
    """All eight statistics divided by their joint sum (exact)."""
    values = a.as_tuple() + b.as_tuple()
    total = sum(values)
    if total == 0:
        raise DegeneratePair("both variants have all-zero statistics")
    return tuple(Fraction(v, total) for v in values)


def pair_features(a: VariantStats, b: VariantStats) -> np.ndarray:
    return np.array([float(x) for x in normalize_pair(a, b)], dtype=np.float64)


# --- network ----------------------------------------------------------------------


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softsign":
        return z / (1.0 + np.abs(z))
    if name == "softmax":
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "softsign":
        return 1.0 / (1.0 + np.abs(z)) ** 2
    raise ValueError(f"no elementwise derivative for {name!r}")


@dataclass
class PairwiseRanker:
    weights: list[np.ndarray]  # weights[i] has shape (out, in)
    biases: list[np.ndarray]
    threshold: float = THRESHOLD
    activations: tuple[str, ...] = ACTIVATIONS

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(self.biases) or len(self.activations) != len(self.weights):
            raise ValueError("weights, biases and activations must have one entry per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape} and {b.shape}")
        if self.activations[-1] != "softmax" or dims[-1] != 2:
            raise ValueError("the last layer must be a two-way softmax")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @classmethod
    def initialize(cls, seed: int = 0, dims: Sequence[int] = LAYER_DIMS, threshold: float = THRESHOLD) -> "PairwiseRanker":
        """He-style uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, threshold)

    def copy(self) -> "PairwiseRanker":
        return PairwiseRanker([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.threshold, self.activations)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _act(act, h @ w.T + b)
        return h

    def decide(self, probs: np.ndarray) -> Outcome:
        if probs[0] > self.threshold:
            return Outcome.WIN_A
        if probs[1] > self.threshold:
            return Outcome.WIN_B
        return Outcome.DRAW


def compare(r: PairwiseRanker, a: VariantStats, b: VariantStats) -> Outcome:
    return r.decide(r.forward(pair_features(a, b)))


def _canonical_order(ids: Sequence[str]) -> list[int]:
    return sorted(range(len(ids)), key=lambda i: ids[i])


def tournament(r: PairwiseRanker, stats: Sequence[VariantStats], ids: Sequence[str]) -> dict[str, int]:
    """Win counts from playing every unordered pair once, lower id as side A.

    An all-zero pair cannot be normalized and counts as a draw.
    """
    if len(ids) != len(stats):
        raise ValueError("one id per variant is required")
    if len(set(ids)) != len(ids):
        raise ValueError("variant ids must be distinct")
    wins = {i: 0 for i in ids}
    order = _canonical_order(ids)
    for x, i in enumerate(order):
        for j in order[x + 1:]:
            try:
                res = compare(r, stats[i], stats[j])
            except DegeneratePair:
                res = Outcome.DRAW
            if res is Outcome.WIN_A:
                wins[ids[i]] += 1
            elif res is Outcome.WIN_B:
                wins[ids[j]] += 1
    return wins


def tournament_rank(
    r: PairwiseRanker,
    stats: Sequence[VariantStats],
    k: int = 1,
    costs: Sequence[Fraction] | None = None,
    ids: Sequence[str] | None = None,
) -> list[str]:
    """Most wins first, then lower cost, then id; at most ``k`` ids."""
    if not stats:
        raise ValueError("no variants to rank")
    if k < 1:
        raise ValueError("k must be at least 1")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(stats))]
    costs = list(costs) if costs is not None else [0] * len(stats)
    wins = tournament(r, stats, ids)
    order = sorted(range(len(ids)), key=lambda i: (-wins[ids[i]], costs[i], ids[i]))
    return [ids[i] for i in order[:k]]


def asymmetry(r: PairwiseRanker, stats: Sequence[VariantStats]) -> float:
    """Fraction of unordered pairs on which swapping the sides gives the mirrored result."""
    agree = total = 0
    for i in range(len(stats)):
        for j in range(i + 1, len(stats)):
            try:
                ab = compare(r, stats[i], stats[j])
                ba = compare(r, stats[j], stats[i])
            except DegeneratePair:
                continue
            total += 1
            agree += ab.mirrored() is ba
    return agree / total if total else 1.0


# --- training -----------------------------------------------------------------------


Example = tuple[VariantStats, VariantStats, Outcome]


def _arrays(rows: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([pair_features(a, b) for a, b, _ in rows], dtype=np.float64).reshape(len(rows), 8)
    y = np.array([0 if lab is Outcome.WIN_A else 1 for _, _, lab in rows], dtype=np.int64)
    return X, y


def loss_and_grads(r: PairwiseRanker, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of the softmax pair and its gradients (weights, biases)."""
    zs, hs = [], [X]
    h = X
    for w, b, act in zip(r.weights, r.biases, r.activations):
        z = h @ w.T + b
        h = _act(act, z)
        zs.append(z)
        hs.append(h)
    n = X.shape[0]
    probs = hs[-1]
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(r.weights)
    gb = [None] * len(r.weights)
    for i in range(len(r.weights) - 1, -1, -1):
        gw[i] = delta.T @ hs[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ r.weights[i]) * _act_grad(r.activations[i - 1], zs[i - 1])
    return loss, gw, gb


def gradient_check(r: PairwiseRanker, X: np.ndarray, y: np.ndarray, eps: float = 1e-6, samples: int = 40, seed: int = 0) -> float:
    """Relative error ||g - g_fd|| / (||g|| + ||g_fd||) over randomly sampled parameters."""
    _, gw, gb = loss_and_grads(r, X, y)
    rng = np.random.default_rng(seed)
    params = [(r.weights, gw), (r.biases, gb)]
    analytic, numeric = [], []
    for _ in range(samples):
        group, grads = params[rng.integers(2)]
        li = int(rng.integers(len(group)))
        idx = tuple(int(rng.integers(s)) for s in group[li].shape)
        old = group[li][idx]
        group[li][idx] = old + eps
        plus = loss_and_grads(r, X, y)[0]
        group[li][idx] = old - eps
        minus = loss_and_grads(r, X, y)[0]
        group[li][idx] = old
        analytic.append(grads[li][idx])
        numeric.append((plus - minus) / (2 * eps))
    a, n = np.array(analytic), np.array(numeric)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    return float(np.linalg.norm(a - n) / denom) if denom else 0.0


def accuracy(r: PairwiseRanker, rows: Sequence[Example]) -> float:
    """Share of pairs whose larger output names the labelled winner."""
    if not rows:
        return float("nan")
    X, y = _arrays(rows)
    return float(np.mean(np.argmax(r.forward(X), axis=1) == y))


@dataclass
class TrainResult:
    ranker: PairwiseRanker
    train_accuracy: float
    heldout_accuracy: float
    n_train: int
    n_heldout: int
    losses: list[float] = field(default_factory=list)


def split_sizes(n: int, split: float) -> tuple[int, int]:
    """(train, held-out) counts; the held-out count is rounded down."""
    if not 0 < split <= 1:
        raise ValueError("split must be in (0, 1]")
    held = math.floor(n * (1 - Fraction(str(split))))
    return n - held, held


def train(
    dataset: Sequence[Example],
    epochs: int = 200,
    learning_rate: float = 0.1,
    seed: int = 0,
    batch_size: int = 32,
    split: float = 0.7,
    initial: PairwiseRanker | None = None,
) -> TrainResult:
    """Mini-batch gradient descent on cross-entropy; deterministic for a seed."""
    if not dataset:
        raise EmptyDataset("training needs at least one labelled pair")
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")
    for _, _, lab in dataset:
        if lab is Outcome.DRAW:
            raise ValueError("training labels must be WIN_A or WIN_B")
    rng = np.random.default_rng(seed)
    ranker = initial.copy() if initial is not None else PairwiseRanker.initialize(seed)
    order = rng.permutation(len(dataset))
    n_train, _ = split_sizes(len(dataset), split)
    train_rows = [dataset[i] for i in order[:n_train]]
    held_rows = [dataset[i] for i in order[n_train:]]
    X, y = _arrays(train_rows)
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            batch = perm[start:start + batch_size]
            loss, gw, gb = loss_and_grads(ranker, X[batch], y[batch])
            total += loss * len(batch)
            for i in range(len(ranker.weights)):
                ranker.weights[i] -= learning_rate * gw[i]
                ranker.biases[i] -= learning_rate * gb[i]
        losses.append(total / max(len(X), 1))
    return TrainResult(
        ranker,
        accuracy(ranker, train_rows),
        accuracy(ranker, held_rows),
        len(train_rows),
        len(held_rows),
        losses,
    )


def synthetic_dataset(n: int, seed: int = 0, high: int = 10_000) -> list[Example]:
    """Random pairs labelled by which side has the smaller memory working set."""
    rng = np.random.default_rng(seed)
    rows: list[Example] = []
    while len(rows) < n:
        a = VariantStats(*(int(v) for v in rng.integers(0, high, size=4)))
        b = VariantStats(*(int(v) for v in rng.integers(0, high, size=4)))
        if a.ws_mem == b.ws_mem:
            continue
        rows.append((a, b, Outcome.WIN_A if a.ws_mem < b.ws_mem else Outcome.WIN_B))
    return rows


# --- weights file ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def weights_text(r: PairwiseRanker) -> str:
    lines = [
        "pairwise-ranker 1",
        "layer_dims " + " ".join(map(str, r.layer_dims)),
        "activations " + " ".join(r.activations),
        "threshold " + _fmt(r.threshold),
    ]
    for i, (w, b) in enumerate(zip(r.weights, r.biases)):
        lines.append(f"weights {i} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
        lines.append(f"bias {i} {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def save_weights(r: PairwiseRanker, path: str | Path) -> None:
    Path(path).write_text(weights_text(r))


def parse_weights(text: str) -> PairwiseRanker:
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    pos = 0

    def take(prefix: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise WeightsFileError(f"unexpected end of file, expected {prefix!r}")
        toks = lines[pos].split()
        if toks[0] != prefix:
            raise WeightsFileError(f"line {pos + 1}: expected {prefix!r}, got {toks[0]!r}")
        pos += 1
        return toks[1:]

    def floats(n: int) -> np.ndarray:
        nonlocal pos
        if pos >= len(lines):
            raise WeightsFileError("unexpected end of file in a matrix")
        try:
            vals = [float(t) for t in lines[pos].split()]
        except ValueError:
            raise WeightsFileError(f"line {pos + 1}: bad number") from None
        if len(vals) != n:
            raise WeightsFileError(f"line {pos + 1}: expected {n} values, got {len(vals)}")
        pos += 1
        return np.array(vals, dtype=np.float64)

    take("pairwise-ranker")
    try:
        dims = [int(t) for t in take("layer_dims")]
        acts = tuple(take("activations"))
        threshold = float(take("threshold")[0])
        weights, biases = [], []
        for i in range(len(dims) - 1):
            _, rows, cols = (int(t) for t in take("weights"))
            if (rows, cols) != (dims[i + 1], dims[i]):
                raise WeightsFileError(f"layer {i} shape {rows}x{cols} disagrees with layer_dims")
            weights.append(np.stack([floats(cols) for _ in range(rows)]))
            _, size = (int(t) for t in take("bias"))
            biases.append(floats(size))
        return PairwiseRanker(weights, biases, threshold, acts)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, WeightsFileError):
            raise
        raise WeightsFileError(str(exc)) from None


def load_weights(path: str | Path | None) -> PairwiseRanker:
    if path is None:
        raise MissingWeights("the dnn ranker needs a weights file")
    p = Path(path)
    if not p.is_file():
        raise MissingWeights(f"weights file not found: {p}")
    return parse_weights(p.read_text())
