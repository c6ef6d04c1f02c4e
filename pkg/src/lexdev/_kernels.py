"""Compiled SGD epoch loop.

The kernel follows a fixed RNG protocol so that a pure-Python mirror can
reproduce a training run draw for draw:

* state update: ``s <- s * 6364136223846793005 + 1442695040888963407 mod 2^64``
* uniform draw: ``(s >> 11) / 2^53``
* negative-table draw: ``table[(s >> 16) mod len(table)]``
* the initial state for (seed, stream) is two state updates applied to
  ``(seed + 1) * 0x9E3779B97F4A7C15 + (stream + 1) * 0xD1B54A32D192ED03 mod 2^64``

Per utterance: the learning rate is computed once from the number of
positions processed so far, one uniform is drawn per in-vocabulary token
position (kept iff ``u < keep[word]``), then for each kept center, in
order, pairwise items draw ``k`` negatives per (target, context) pair and
mean-context items draw ``k`` negatives per center.  Gradients of an item
are evaluated before any of its updates are applied, so every item is one
exact gradient step of its loss.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
LCG_MUL = np.uint64(6364136223846793005)
LCG_INC = np.uint64(1442695040888963407)
SEED_MUL = np.uint64(0x9E3779B97F4A7C15)
STREAM_MUL = np.uint64(0xD1B54A32D192ED03)
INV_2_53 = np.float64(1.0 / 9007199254740992.0)
SHIFT_11 = np.uint64(11)
SHIFT_16 = np.uint64(16)


def init_state(seed: int, stream: int) -> np.uint64:
    """Initial LCG state for a (seed, stream) pair."""
    mask = (1 << 64) - 1
    s = ((seed % (1 << 64)) + 1) * 0x9E3779B97F4A7C15 & mask
    s = (s + ((stream % (1 << 64)) + 1) * 0xD1B54A32D192ED03) & mask
    s = (s * 6364136223846793005 + 1442695040888963407) & mask
    s = (s * 6364136223846793005 + 1442695040888963407) & mask
    return np.uint64(s)


@njit(cache=True, inline="always")
def _next(state):
    return state * LCG_MUL + LCG_INC


@njit(cache=True, inline="always")
def _uniform(state):
    return np.float64(state >> SHIFT_11) * INV_2_53


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _log_sigmoid(x):
    if x >= 0.0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@njit(cache=True, nogil=True)
def run_epoch(
    tokens, offsets, C, U, neg_table, keep,
    window, n_neg, objective, freeze_u,
    lr_start, lr_floor, sched_total, items_done, state,
):
    """One pass over the utterances delimited by ``offsets``.

    Returns ``(loss_sum, n_items, n_pairs, items_done, state)`` where
    ``n_items`` counts loss terms (pairs for the pairwise objective,
    centers for mean-context) and ``n_pairs`` counts (target, context)
    pairs touched.
    """
    dim = C.shape[1]
    table_len = np.uint64(len(neg_table))
    n_utt = len(offsets) - 1

    max_len = 0
    for s in range(n_utt):
        length = np.int64(offsets[s + 1] - offsets[s])
        if length > max_len:
            max_len = length

    kept = np.empty(max_len if max_len > 0 else 1, dtype=np.int32)
    negs = np.empty(n_neg, dtype=np.int64)
    gneg = np.empty(n_neg, dtype=np.float64)
    grad = np.empty(dim, dtype=np.float64)
    cbar = np.empty(dim, dtype=np.float64)

    loss_sum = 0.0
    n_items = 0
    n_pairs = 0

    for s in range(n_utt):
        start = offsets[s]
        end = offsets[s + 1]
        if sched_total > 0:
            lr = lr_start * (1.0 - np.float64(items_done) / np.float64(sched_total))
            if lr < lr_floor:
                lr = lr_floor
        else:
            lr = lr_start

        m = 0
        for p in range(start, end):
            w = tokens[p]
            state = _next(state)
            if _uniform(state) < keep[w]:
                kept[m] = w
                m += 1
        items_done += end - start
        if m < 2:
            continue

        for i in range(m):
            t = kept[i]
            lo = i - window
            if lo < 0:
                lo = 0
            hi = i + window
            if hi > m - 1:
                hi = m - 1

            if objective == 0:
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    o = kept[j]
                    for n in range(n_neg):
                        state = _next(state)
                        negs[n] = np.int64(neg_table[np.int64((state >> SHIFT_16) % table_len)])

                    x_pos = 0.0
                    for d in range(dim):
                        x_pos += U[o, d] * C[t, d]
                    g_pos = _sigmoid(x_pos) - 1.0
                    loss_sum -= _log_sigmoid(x_pos)
                    for d in range(dim):
                        grad[d] = g_pos * U[o, d]
                    for n in range(n_neg):
                        x_neg = 0.0
                        for d in range(dim):
                            x_neg += U[negs[n], d] * C[t, d]
                        gneg[n] = _sigmoid(x_neg)
                        loss_sum -= _log_sigmoid(-x_neg)
                        for d in range(dim):
                            grad[d] += gneg[n] * U[negs[n], d]
                    if not freeze_u:
                        for d in range(dim):
                            U[o, d] -= lr * g_pos * C[t, d]
                        for n in range(n_neg):
                            for d in range(dim):
                                U[negs[n], d] -= lr * gneg[n] * C[t, d]
                    for d in range(dim):
                        C[t, d] -= lr * grad[d]
                    n_items += 1
                    n_pairs += 1
            else:
                n_ctx = hi - lo  # window always brackets i, which is excluded
                if n_ctx < 1:
                    continue
                inv_m = 1.0 / np.float64(n_ctx)
                for d in range(dim):
                    cbar[d] = 0.0
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    for d in range(dim):
                        cbar[d] += C[kept[j], d]
                for d in range(dim):
                    cbar[d] *= inv_m

                for n in range(n_neg):
                    state = _next(state)
                    negs[n] = np.int64(neg_table[np.int64((state >> SHIFT_16) % table_len)])

                x_pos = 0.0
                for d in range(dim):
                    x_pos += U[t, d] * cbar[d]
                g_pos = _sigmoid(x_pos) - 1.0
                loss_sum -= _log_sigmoid(x_pos)
                for d in range(dim):
                    grad[d] = g_pos * U[t, d]
                for n in range(n_neg):
                    x_neg = 0.0
                    for d in range(dim):
                        x_neg += U[negs[n], d] * cbar[d]
                    gneg[n] = _sigmoid(x_neg)
                    loss_sum -= _log_sigmoid(-x_neg)
                    for d in range(dim):
                        grad[d] += gneg[n] * U[negs[n], d]
                if not freeze_u:
                    for d in range(dim):
                        U[t, d] -= lr * g_pos * cbar[d]
                    for n in range(n_neg):
                        for d in range(dim):
                            U[negs[n], d] -= lr * gneg[n] * cbar[d]
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    for d in range(dim):
                        C[kept[j], d] -= lr * grad[d] * inv_m
                n_items += 1
                n_pairs += n_ctx

    return loss_sum, n_items, n_pairs, items_done, state
