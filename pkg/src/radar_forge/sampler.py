"""Inverse-transform sampling of signal pixel positions from a grid.

Sampling is two-step: a column is drawn from the marginal over u, then a
row from the conditional p(v | u).  Conditional CDFs are built lazily per
visited column and cached, so a sparse draw touches O(w + n_distinct * h)
cells instead of precomputing the full w*h table.
"""

from __future__ import annotations

import numpy as np

from .errors import AllZeroGrid, InvalidGrid, OutOfRange
from .gt_distribution import ProbabilityGrid


class SeededRng:
    """Deterministic PCG64 (permuted congruential) generator.

    Identified by a 64-bit seed plus a stream counter; identical
    (seed, stream) pairs yield identical sequences on every platform.
    Instances are not thread-safe; derive one stream per unit of parallel
    work instead of sharing.
    """

    algorithm = "pcg64"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,)))
        )

    def derive(self, stream: int) -> "SeededRng":
        """Independent stream with the same seed; used for frame-parallel work."""
        return SeededRng(self.seed, stream)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def grid_from_grayscale(img) -> ProbabilityGrid:
    """Reconstruct a distribution from any nonnegative grid by sum-normalizing.

    Scale-free: multiplying the input by any c > 0 yields the same grid.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidGrid(f"expected a 2D grayscale array, got shape {arr.shape}")
    if np.any(arr < 0):
        raise InvalidGrid("grayscale values must be nonnegative")
    total = arr.sum()
    if total <= 0:
        raise AllZeroGrid("all-zero grid defines no distribution")
    return ProbabilityGrid(arr / total)


def sample_signals(grid: ProbabilityGrid, n: int, rng: SeededRng, jitter: bool = False) -> np.ndarray:
    """Draw n pixel positions from the grid via two-step inverse CDF.

    Returns an (n, 2) float array of [u, v].  Without jitter the samples
    sit on integer pixel indices; with jitter a uniform offset in [0, 1)^2
    is added, so pixel i owns the interval [i, i + 1).  The draw order is
    fixed (u, v[, ju, jv] per sample), making output a pure function of
    (grid, n, rng state).
    """
    if not isinstance(grid, ProbabilityGrid):
        raise InvalidGrid("sample_signals requires a ProbabilityGrid")
    if n < 0:
        raise InvalidGrid(f"sample count must be nonnegative, got {n}")
    h, w = grid.mass.shape
    out = np.empty((n, 2), dtype=np.float64)
    if n == 0:
        return out
    col_mass = grid.mass.sum(axis=0)
    cdf_u = np.cumsum(col_mass)
    cdf_u /= cdf_u[-1]
    cond_cdfs: dict[int, np.ndarray] = {}
    for k in range(n):
        ru = rng.gen.random()
        u = min(int(np.searchsorted(cdf_u, ru, side="right")), w - 1)
        cdf_v = cond_cdfs.get(u)
        if cdf_v is None:
            col = np.cumsum(grid.mass[:, u])
            col /= col[-1]
            cond_cdfs[u] = cdf_v = col
        rv = rng.gen.random()
        v = min(int(np.searchsorted(cdf_v, rv, side="right")), h - 1)
        if jitter:
            out[k, 0] = u + rng.gen.random()
            out[k, 1] = v + rng.gen.random()
        else:
            out[k, 0] = u
            out[k, 1] = v
    return out


def denormalize_count(sigmoid_out: float, n_max: int) -> int:
    """Map a sigmoid-normalized count back to a positive integer.

    Uses half-up rounding of sigmoid_out * n_max, floored at 1.  The
    scaling by a dataset-level n_max is this artifact's convention; record
    n_max in run metadata wherever the result is persisted.
    """
    if not (0.0 < sigmoid_out < 1.0):
        raise OutOfRange(f"sigmoid output must lie in (0, 1), got {sigmoid_out}")
    if n_max <= 0:
        raise OutOfRange(f"n_max must be positive, got {n_max}")
    return max(1, int(np.floor(sigmoid_out * n_max + 0.5)))
