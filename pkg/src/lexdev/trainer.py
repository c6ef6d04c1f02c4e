"""Skip-gram negative-sampling machinery.

Vocabulary construction, frequency subsampling, negative-sample tables and
the gradient step for the two supported objectives:

* ``pairwise``: every (target, context) pair is scored independently,
  sigmoid(u_ctx . c_tgt) is pushed to 1 and sigmoid(u_neg . c_tgt) to 0.
* ``mean-context``: the mean of the context rows of C is scored against
  the target row of U, with the gradient split equally over the context
  rows.  This is the objective used for frozen-compass fine-tuning.

``train_epochs`` runs the epoch loop through a compiled kernel
(:mod:`lexdev._kernels`); the RNG protocol it follows is documented there
so that tests can mirror it step for step.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .corpus import SlicedCorpus
from .errors import ConfigError, EmptyCorpusError

OBJECTIVES = {"pairwise": 0, "mean-context": 1, "mean_context": 1}


@dataclass
class Vocabulary:
    """Dense word-id space ordered by descending corpus count."""

    words: list[str]
    counts: np.ndarray  # int64, aligned with words
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts <= 0):
            raise ConfigError("vocabulary counts must be strictly positive")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word) -> bool:
        return word in self.index

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Map tokens to ids, dropping out-of-vocabulary tokens."""
        idx = self.index
        return np.fromiter(
            (idx[t] for t in tokens if t in idx), dtype=np.int32
        )


def build_vocabulary(corpus, min_count: int = 1) -> Vocabulary:
    """Count words over a corpus (or iterable of token lists).

    Ordering is deterministic: descending count, ties broken
    lexicographically.
    """
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    utterances = corpus.token_lists() if isinstance(corpus, SlicedCorpus) else corpus
    counter: Counter = Counter()
    for tokens in utterances:
        counter.update(tokens)
    items = [(w, c) for w, c in counter.items() if c >= min_count]
    if not items:
        raise EmptyCorpusError(
            f"no words with count >= {min_count}; vocabulary would be empty"
        )
    items.sort(key=lambda wc: (-wc[1], wc[0]))
    return Vocabulary([w for w, _ in items], np.array([c for _, c in items]))


@dataclass
class TrainConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    subsample_threshold: float = 1e-3
    epochs: int = 5
    initial_learning_rate: float = 0.025
    seed: int = 0
    min_count: int = 5
    table_size: int = 10_000_000

    def validate(self) -> "TrainConfig":
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if not self.subsample_threshold > 0:
            raise ConfigError("subsample_threshold must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.initial_learning_rate > 0:
            raise ConfigError("initial_learning_rate must be > 0")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if self.table_size < 1:
            raise ConfigError("table_size must be >= 1")
        return self


def subsample_keep_probability(freq_fraction: float, threshold: float) -> float:
    """Keep probability sqrt(threshold / freq), clamped to [0, 1].

    The complementary discard probability 1 - sqrt(t/f) is the standard
    frequent-word subsampling rule; words rarer than the threshold are
    always kept.
    """
    if not freq_fraction > 0:
        raise ConfigError(f"freq_fraction must be > 0, got {freq_fraction}")
    if not threshold > 0:
        raise ConfigError(f"threshold must be > 0, got {threshold}")
    return min(1.0, np.sqrt(threshold / freq_fraction))


def keep_probabilities(counts: np.ndarray, threshold: float) -> np.ndarray:
    """Vector of per-word keep probabilities for the given unit counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    keep = np.ones_like(counts)
    seen = counts > 0
    keep[seen] = np.minimum(1.0, np.sqrt(threshold * total / counts[seen]))
    return keep


def build_negative_table(
    counts: np.ndarray,
    table_size: int,
    power: float = 0.75,
    exclude: Iterable[int] = (),
) -> np.ndarray:
    """Unigram^power sampling table of word ids.

    ``exclude`` removes word ids from the table entirely (used by tests to
    rule out negative-sample side effects on specific rows).
    """
    weights = np.asarray(counts, dtype=np.float64) ** power
    for i in exclude:
        weights[i] = 0.0
    if weights.sum() <= 0:
        raise ConfigError("negative table would be empty")
    cum = np.cumsum(weights)
    targets = (np.arange(1, table_size + 1) / table_size) * cum[-1]
    table = np.searchsorted(cum, targets, side="left")
    return np.minimum(table, len(weights) - 1).astype(np.int32)


def init_matrices(vocab_size: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fresh (C, U): C uniform in [-0.5/d, +0.5/d], U zero."""
    rng = np.random.RandomState(seed)
    C = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))
    U = np.zeros((vocab_size, dim))
    return C, U


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _log_sigmoid(x: float) -> float:
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


def _resolve_objective(objective) -> int:
    try:
        return OBJECTIVES[objective]
    except KeyError:
        raise ConfigError(
            f"unknown objective {objective!r}; expected one of {sorted(set(OBJECTIVES))}"
        )


def _check_ids(ids, size, what):
    for i in ids:
        if not 0 <= i < size:
            raise IndexError(f"{what} id {i} out of range [0, {size})")


def sgns_loss(
    target_id: int,
    context_ids: Sequence[int],
    C: np.ndarray,
    U: np.ndarray,
    negatives: Sequence[int],
    objective: str = "pairwise",
) -> float:
    """Negative-sampling loss of one training item, no update."""
    loss, _, _ = _item_loss_and_grads(target_id, context_ids, C, U, negatives, objective)
    return loss


def _item_loss_and_grads(target_id, context_ids, C, U, negatives, objective):
    """Loss and parameter gradients of one item at the current values.

    Returns ``(loss, dC, dU)`` with the gradients as sparse ``{row: vec}``
    maps; duplicate rows accumulate.
    """
    code = _resolve_objective(objective)
    vocab_size = C.shape[0]
    _check_ids([target_id], vocab_size, "target")
    _check_ids(context_ids, vocab_size, "context")
    _check_ids(negatives, vocab_size, "negative")

    dC: dict[int, np.ndarray] = {}
    dU: dict[int, np.ndarray] = {}

    def add(store, row, vec):
        if row in store:
            store[row] = store[row] + vec
        else:
            store[row] = vec

    loss = 0.0
    if code == 0:  # pairwise
        c_t = C[target_id]
        for ctx in context_ids:
            x_pos = float(U[ctx] @ c_t)
            loss -= _log_sigmoid(x_pos)
            g_pos = _sigmoid(x_pos) - 1.0
            add(dU, ctx, g_pos * c_t)
            e = g_pos * U[ctx]
            for neg in negatives:
                x_neg = float(U[neg] @ c_t)
                loss -= _log_sigmoid(-x_neg)
                g_neg = _sigmoid(x_neg)
                add(dU, neg, g_neg * c_t)
                e = e + g_neg * U[neg]
            add(dC, target_id, e)
    else:  # mean-context
        if len(context_ids) == 0:
            raise ConfigError("mean-context objective needs at least one context id")
        m = len(context_ids)
        cbar = C[list(context_ids)].mean(axis=0)
        x_pos = float(U[target_id] @ cbar)
        loss -= _log_sigmoid(x_pos)
        g_pos = _sigmoid(x_pos) - 1.0
        add(dU, target_id, g_pos * cbar)
        g = g_pos * U[target_id]
        for neg in negatives:
            x_neg = float(U[neg] @ cbar)
            loss -= _log_sigmoid(-x_neg)
            g_neg = _sigmoid(x_neg)
            add(dU, neg, g_neg * cbar)
            g = g + g_neg * U[neg]
        for ctx in context_ids:
            add(dC, ctx, g / m)
    return loss, dC, dU


def sgns_step(
    target_id: int,
    context_ids: Sequence[int],
    C: np.ndarray,
    U: np.ndarray,
    negatives: Sequence[int],
    lr: float,
    objective: str = "pairwise",
    freeze_U: bool = False,
) -> float:
    """One gradient step of the item loss, applied in place.

    Gradients are evaluated at the current parameter values and then
    applied once, so the step is exactly the gradient of
    :func:`sgns_loss`.  With ``freeze_U`` only C rows move.  Returns the
    pre-update loss.
    """
    loss, dC, dU = _item_loss_and_grads(target_id, context_ids, C, U, negatives, objective)
    if lr == 0.0:
        return loss
    for row, vec in dC.items():
        C[row] -= lr * vec
    if not freeze_U:
        for row, vec in dU.items():
            U[row] -= lr * vec
    return loss


@dataclass
class TrainResult:
    C: np.ndarray
    U: np.ndarray
    epoch_losses: list[float]
    items_processed: int
    pairs_processed: int
    duration_s: float


def _encode_corpus(utterances, vocab: Vocabulary):
    encoded = [vocab.encode(u) for u in utterances]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    for i, e in enumerate(encoded):
        offsets[i + 1] = offsets[i] + len(e)
    flat = (
        np.concatenate(encoded).astype(np.int32)
        if offsets[-1] > 0
        else np.zeros(0, dtype=np.int32)
    )
    return flat, offsets


def train_epochs(
    utterances: Iterable[Sequence[str]] | SlicedCorpus,
    vocab: Vocabulary,
    config: TrainConfig,
    C: np.ndarray | None = None,
    U: np.ndarray | None = None,
    *,
    objective: str = "pairwise",
    freeze_U: bool = False,
    resume: bool = False,
    epochs: int | None = None,
    seed: int | None = None,
    neg_table: np.ndarray | None = None,
    workers: int = 1,
) -> TrainResult:
    """Run SGD epochs over the utterances.

    ``workers=1`` is the deterministic mode: identical inputs and seed give
    bit-identical matrices.  ``workers>1`` shards utterances over threads
    that update the shared matrices without synchronization; results then
    vary run to run and must not be used where reproducibility matters.

    ``epochs`` overrides ``config.epochs`` and may be 0 (no-op).  With
    ``resume`` unset, fresh matrices are drawn from the initialization
    rule; otherwise ``C`` and ``U`` are updated in place.
    """
    config.validate()
    code = _resolve_objective(objective)
    if isinstance(utterances, SlicedCorpus):
        utterances = utterances.token_lists()
    else:
        utterances = list(utterances)
    n_epochs = config.epochs if epochs is None else epochs
    if n_epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if seed is None:
        seed = config.seed

    if resume:
        if C is None or U is None:
            raise ConfigError("resume=True requires existing C and U matrices")
        if C.shape != (len(vocab), config.dim) or U.shape != (len(vocab), config.dim):
            raise ConfigError(
                f"matrix shapes {C.shape}/{U.shape} do not match "
                f"({len(vocab)}, {config.dim})"
            )
    else:
        C, U = init_matrices(len(vocab), config.dim, seed)

    flat, offsets = _encode_corpus(utterances, vocab)
    started = time.perf_counter()
    if n_epochs == 0 or len(flat) == 0:
        return TrainResult(C, U, [], 0, 0, time.perf_counter() - started)

    unit_counts = np.bincount(flat, minlength=len(vocab))
    keep = keep_probabilities(unit_counts, config.subsample_threshold)
    if neg_table is None:
        neg_table = build_negative_table(vocab.counts, config.table_size)

    lr_start = config.initial_learning_rate
    lr_floor = lr_start * 1e-4

    total_positions = int(offsets[-1])
    losses = []
    items_total = 0
    pairs_total = 0

    if workers <= 1:
        state = _kernels.init_state(seed, 0)
        done = 0
        sched = n_epochs * total_positions
        for _ in range(n_epochs):
            loss_sum, n_items, n_pairs, done, state = _kernels.run_epoch(
                flat, offsets, C, U, neg_table, keep,
                config.window, config.negatives, code, freeze_U,
                lr_start, lr_floor, sched, done, state,
            )
            losses.append(loss_sum / n_items if n_items else 0.0)
            items_total += n_items
            pairs_total += n_pairs
    else:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, len(offsets) - 1, workers + 1).astype(np.int64)
        chunks = [
            (offsets[bounds[w]: bounds[w + 1] + 1], int(offsets[bounds[w + 1]] - offsets[bounds[w]]))
            for w in range(workers)
        ]
        states = [_kernels.init_state(seed, w + 1) for w in range(workers)]
        dones = [0] * workers
        scheds = [n_epochs * c[1] for c in chunks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in range(n_epochs):
                futures = [
                    pool.submit(
                        _kernels.run_epoch,
                        flat, chunks[w][0], C, U, neg_table, keep,
                        config.window, config.negatives, code, freeze_U,
                        lr_start, lr_floor, scheds[w], dones[w], states[w],
                    )
                    for w in range(workers)
                ]
                loss_sum = 0.0
                n_items = 0
                for w, fut in enumerate(futures):
                    ls, ni, npairs, dones[w], states[w] = fut.result()
                    loss_sum += ls
                    n_items += ni
                    pairs_total += npairs
                losses.append(loss_sum / n_items if n_items else 0.0)
                items_total += n_items

    return TrainResult(C, U, losses, items_total, pairs_total, time.perf_counter() - started)
