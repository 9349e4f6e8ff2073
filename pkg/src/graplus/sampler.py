"""Half-real / half-fake batch construction with epoch-rotated repeats."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


class SamplerConfigError(ValueError):
    pass


def _fill(pool: Sequence[int], slots: int, epoch: int, rng: np.random.Generator, base: np.ndarray) -> list[int]:
    """``slots`` ids from ``pool``: one shuffled pass, then repeat passes.

    No id repeats before every id has been used once. Repeat passes walk a fixed
    base order rotated by the epoch number, and a trailing partial pass takes a
    window of that order that slides by its own length each epoch, so which ids
    repeat (and which ids share a batch when repeating) rotates across epochs.
    """
    n = len(pool)
    if slots < n:
        start = (epoch * slots) % n
        return [pool[base[(start + k) % n]] for k in range(slots)]
    full, rest = divmod(slots, n)
    out = [pool[i] for i in rng.permutation(n)]
    for k in range(1, full):
        shift = (epoch + k - 1) % n
        out.extend(pool[base[(shift + i) % n]] for i in range(n))
    if rest:
        start = (epoch * rest) % n
        window = [base[(start + i) % n] for i in range(rest)]
        out.extend(pool[window[i]] for i in rng.permutation(rest))
    return out


def balanced_batches(real_ids: Sequence[int], fake_ids: Sequence[int], epoch: int, batch_size: int,
                     seed: int = 0) -> list[list[int]]:
    """One epoch of batches, each ``batch_size/2`` reals followed by ``batch_size/2`` fakes.

    The epoch length covers the larger pool once; the smaller pool is cycled.
    Deterministic in ``(seed, epoch)``.
    """
    if batch_size % 2 or batch_size < 2:
        raise SamplerConfigError(f"batch size must be even and >= 2, got {batch_size}")
    if not real_ids or not fake_ids:
        raise SamplerConfigError("need at least one real and one fake sample")
    half = batch_size // 2
    n_batches = math.ceil(max(len(real_ids), len(fake_ids)) / half)
    base_rng = np.random.default_rng([seed, 0])
    real_base = base_rng.permutation(len(real_ids))
    fake_base = base_rng.permutation(len(fake_ids))
    rng = np.random.default_rng([seed, 1, epoch])
    reals = _fill(real_ids, n_batches * half, epoch, rng, real_base)
    fakes = _fill(fake_ids, n_batches * half, epoch, rng, fake_base)
    return [reals[b * half:(b + 1) * half] + fakes[b * half:(b + 1) * half] for b in range(n_batches)]


def random_batches(real_ids: Sequence[int], fake_ids: Sequence[int], epoch: int, batch_size: int,
                   seed: int = 0) -> list[list[int]]:
    """Plain shuffled batches with no real/fake balancing (ablation baseline).

    Batches are still ordered reals-first so the trainer can split them.
    """
    ids = list(real_ids) + list(fake_ids)
    is_real = set(real_ids)
    order = np.random.default_rng([seed, 2, epoch]).permutation(len(ids))
    out = []
    for b in range(0, len(ids) - batch_size + 1, batch_size):
        chunk = [ids[i] for i in order[b:b + batch_size]]
        out.append([i for i in chunk if i in is_real] + [i for i in chunk if i not in is_real])
    return out


class BatchStream:
    """Endless iterator over epochs of batches with a resumable ``(epoch, index)`` cursor."""

    def __init__(self, real_ids, fake_ids, batch_size: int, seed: int = 0, balanced: bool = True,
                 epoch: int = 0, index: int = 0):
        self.real_ids, self.fake_ids = list(real_ids), list(fake_ids)
        self.batch_size, self.seed, self.balanced = batch_size, seed, balanced
        self.epoch, self.index = epoch, index
        self._cache: dict[int, list[list[int]]] = {}

    def epoch_batches(self, epoch: int) -> list[list[int]]:
        if epoch not in self._cache:
            make = balanced_batches if self.balanced else random_batches
            self._cache[epoch] = make(self.real_ids, self.fake_ids, epoch, self.batch_size, self.seed)
            if len(self._cache) > 2:
                del self._cache[min(self._cache)]
            if not self._cache[epoch]:
                raise SamplerConfigError("dataset too small for one batch")
        return self._cache[epoch]

    def peek(self, ahead: int = 0) -> list[int]:
        epoch, index = self.epoch, self.index + ahead
        while index >= len(self.epoch_batches(epoch)):
            index -= len(self.epoch_batches(epoch))
            epoch += 1
        return self.epoch_batches(epoch)[index]

    def __iter__(self):
        return self

    def __next__(self) -> list[int]:
        batch = self.peek()
        self.index += 1
        if self.index >= len(self.epoch_batches(self.epoch)):
            self.epoch, self.index = self.epoch + 1, 0
        return batch

    def state(self) -> dict:
        return {"epoch": self.epoch, "index": self.index}
