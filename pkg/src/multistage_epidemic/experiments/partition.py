from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rng
from ..ctmc import ModelParams
from ..ctmc import _kernels

_LABEL_STREAM = 0xFFFF


@dataclass(frozen=True, eq=False)
class PartitionResult:
    """Blocks in order of exploration; ``counters[s, k-1]`` = individuals of block s ever in stage k."""

    sizes: np.ndarray
    counters: np.ndarray
    labels: list | None = None

    @property
    def blocks(self) -> int:
        return self.sizes.size

    def size_biased_mean(self) -> float:
        """Mean size of the block containing a uniform individual: ``sum |B|^2 / n``."""
        return float((self.sizes.astype(float) ** 2).sum() / self.sizes.sum())

    def largest_squared_over_n(self) -> float:
        return float(self.sizes.max() ** 2 / self.sizes.sum())


def random_partition(params: ModelParams, seed=None, labels: bool = False) -> PartitionResult:
    """Split the population into epidemic clusters by sequential exploration.

    Repeatedly one unexplored individual is infected (stage 1) while everyone
    in earlier blocks counts as removed; the individuals infected before
    absorption form the next block. With ``labels=True`` the blocks are also
    returned as sets of labels in ``0..n-1``: by exchangeability each block is
    a uniform subset of the unexplored labels, drawn from an independent
    stream of the same seed.
    """
    seed = rng.as_seed(seed)
    n, K = params.n, params.K
    sizes = np.empty(n, dtype=np.int64)
    counters = np.empty((n, K), dtype=np.int64)
    S = _kernels.run_partition(seed.state(), n, K, np.asarray(params.progression_factors, dtype=float),
                               np.asarray(params.infection_factors, dtype=float), sizes, counters)
    sizes = sizes[:S].copy()
    counters = counters[:S].copy()
    blocks = None
    if labels:
        perm = rng.ReplicaSeed(seed.master_seed, seed.stream + (_LABEL_STREAM,), seed.replica).generator().permutation(n)
        blocks = np.split(perm, np.cumsum(sizes)[:-1])
    return PartitionResult(sizes, counters, blocks)
