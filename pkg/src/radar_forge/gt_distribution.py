"""Ground-truth radar-signal distribution over the image plane.

Builds a per-pixel probability mass function from projected radar
reflections as a normalized 2D Gaussian mixture evaluated at integer
pixel centers, plus the distribution/count losses used to score
predictors against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core_geometry as geom
from .errors import (
    DimensionMismatch,
    EmptyInput,
    EmptyPointSet,
    InsufficientData,
    InvalidGrid,
    NonPositiveCount,
)

# Flooring applied to both grids before the log in the KL divergence,
# which is undefined on empty cells.
KL_EPS = 1e-12

# Smallest admissible covariance eigenvalue (px^2); keeps sigma positive
# definite when all annotations are collinear or identical.
SIGMA_EIGENVALUE_FLOOR = 0.25

GRID_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ProbabilityGrid:
    """Normalized probability mass over a height x width pixel grid.

    ``mass[v, u]`` is the probability of a signal at pixel column u, row v.
    """

    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        if m.ndim != 2 or m.size == 0:
            raise InvalidGrid(f"grid must be a non-empty 2D array, got shape {m.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise InvalidGrid("grid cells must be finite and nonnegative")
        total = m.sum()
        if abs(total - 1.0) > GRID_SUM_TOL:
            raise InvalidGrid(f"grid mass sums to {total!r}, expected 1")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @property
    def width(self) -> int:
        return self.mass.shape[1]

    @property
    def height(self) -> int:
        return self.mass.shape[0]

    @staticmethod
    def from_unnormalized(raw) -> "ProbabilityGrid":
        """Normalize any nonnegative array into a grid (scale-free)."""
        raw = np.asarray(raw, dtype=np.float64)
        total = raw.sum()
        if total <= 0:
            raise InvalidGrid("cannot normalize a grid with zero total mass")
        return ProbabilityGrid(raw / total)


@dataclass(frozen=True)
class ProjectedDatagram:
    """Projection of a datagram onto the image: kept pixels plus drop audit."""

    uv: np.ndarray                   # (m, 2) pixel coords of kept signals
    kept_indices: np.ndarray         # (m,) indices into the source datagram
    dropped_behind: int
    dropped_outside: int

    @property
    def count(self) -> int:
        return len(self.uv)

    @property
    def dropped(self) -> int:
        return self.dropped_behind + self.dropped_outside


@dataclass(frozen=True)
class DisLossReport:
    kl: float
    count_loss: float
    alpha: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.kl + self.alpha * self.count_loss)


def project_datagram(datagram, intrinsics, cam_from_radar, width, height) -> ProjectedDatagram:
    """Project every signal of a datagram; drop behind-camera and out-of-image.

    Dropping is reported in the result, never fatal.
    """
    n = len(datagram)
    if n == 0:
        return ProjectedDatagram(np.empty((0, 2)), np.empty(0, dtype=int), 0, 0)
    points = geom.spherical_to_cartesian(datagram.spherical())
    uv, depth = geom.project_points(intrinsics, cam_from_radar, points)
    in_front = depth > geom.MIN_CAMERA_DEPTH
    inside = geom.in_image(uv, width, height) & in_front
    kept = np.flatnonzero(inside)
    return ProjectedDatagram(
        uv=uv[kept],
        kept_indices=kept,
        dropped_behind=int(np.sum(~in_front)),
        dropped_outside=int(np.sum(in_front & ~inside)),
    )


def estimate_sigma(groups) -> np.ndarray:
    """Pooled within-group sample covariance of 2D pixel points.

    Each group's centroid is removed, outer products are accumulated, and
    the sum is divided by (N - #groups).  The result is symmetrized and
    its eigenvalues floored at SIGMA_EIGENVALUE_FLOOR.
    """
    arrays = [np.asarray(g, dtype=np.float64).reshape(-1, 2) for g in groups if len(g) > 0]
    n_total = sum(len(g) for g in arrays)
    if n_total < 2:
        raise InsufficientData(f"need >= 2 points to estimate sigma, got {n_total}")
    scatter = np.zeros((2, 2))
    for g in arrays:
        centered = g - g.mean(axis=0)
        scatter += centered.T @ centered
    denom = n_total - len(arrays)
    if denom <= 0:
        raise InsufficientData("every group has a single point; covariance undefined")
    sigma = scatter / denom
    sigma = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sigma)
    eigvals = np.maximum(eigvals, SIGMA_EIGENVALUE_FLOOR)
    return (eigvecs * eigvals) @ eigvecs.T


def validate_sigma(sigma) -> np.ndarray:
    """Check a 2x2 covariance: symmetric within 1e-12, positive definite."""
    s = np.asarray(sigma, dtype=np.float64)
    if s.shape != (2, 2):
        raise InvalidGrid(f"sigma must be 2x2, got {s.shape}")
    if np.abs(s - s.T).max() > 1e-12:
        raise InvalidGrid("sigma must be symmetric")
    eigvals = np.linalg.eigvalsh(s)
    if eigvals.min() <= 0:
        raise InvalidGrid(f"sigma must be positive definite, eigenvalues {eigvals}")
    return s


def rasterize_mixture(points, sigma, width: int, height: int) -> ProbabilityGrid:
    """Aggregate one Gaussian per projected point and normalize to unit mass.

    The mixture is evaluated at integer pixel centers.  The per-component
    normalizing constant cancels in the global normalization, so only the
    exponential is computed.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyPointSet("rasterize_mixture needs at least one point")
    if width <= 0 or height <= 0:
        raise InvalidGrid(f"grid dims must be positive, got {width}x{height}")
    s = validate_sigma(sigma)
    # Closed-form 2x2 inverse keeps the quadratic form cheap and exact.
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    inv = np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det
    us = np.arange(width, dtype=np.float64)
    vs = np.arange(height, dtype=np.float64)
    raw = np.zeros((height, width))
    # Chunk over points to bound the (chunk, h, w) temporaries.
    chunk = max(1, int(4e6 // (width * height)))
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        du = us[None, None, :] - block[:, 0, None, None]      # (c, 1, w)
        dv = vs[None, :, None] - block[:, 1, None, None]      # (c, h, 1)
        quad = (
            inv[0, 0] * du * du
            + (inv[0, 1] + inv[1, 0]) * du * dv
            + inv[1, 1] * dv * dv
        )
        raw += np.exp(-0.5 * quad).sum(axis=0)
    return ProbabilityGrid.from_unnormalized(raw)


def kl_divergence(p_true: ProbabilityGrid, q_pred: ProbabilityGrid) -> float:
    """KL(p || q) with both grids floored at KL_EPS and renormalized."""
    if p_true.mass.shape != q_pred.mass.shape:
        raise DimensionMismatch(
            f"grid shapes differ: {p_true.mass.shape} vs {q_pred.mass.shape}"
        )
    p = np.maximum(p_true.mass, KL_EPS)
    q = np.maximum(q_pred.mass, KL_EPS)
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))


def count_loss(pairs, per_frame: bool = False) -> float:
    """Normalized relative count error over (predicted, true) pairs.

    Default form squares the summed relative differences, so opposite
    per-frame errors cancel; ``per_frame=True`` squares each frame's
    relative difference before averaging instead.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("count_loss needs at least one (n_hat, n) pair")
    rel = []
    for n_hat, n in pairs:
        if n <= 0:
            raise NonPositiveCount(f"true count must be positive, got {n}")
        rel.append((float(n_hat) - float(n)) / float(n))
    rel = np.asarray(rel)
    m = len(rel)
    if per_frame:
        return float(np.sum(rel**2) / m)
    return float(rel.sum() ** 2 / m)


def total_loss(kl: float, count: float, alpha: float) -> DisLossReport:
    """Combined distribution + count loss with weighting coefficient alpha."""
    if alpha < 0:
        raise InvalidGrid(f"alpha must be >= 0, got {alpha}")
    return DisLossReport(kl=float(kl), count_loss=float(count), alpha=float(alpha))


# Scale for the lossless-enough integer interchange mode: probabilities in
# [0, 1] quantized over the full u32 range.
SUM_SCALE_FACTOR = 2**32 - 1


def export_grayscale(grid: ProbabilityGrid, mode: str = "max-norm"):
    """Quantize a grid to integers, returning (array, scale_factor).

    ``max-norm`` maps the max cell to 255 (uint8, PGM-friendly, for
    visualization).  ``sum-scale`` stores round(p * (2^32 - 1)) as uint32
    for near-lossless interchange.  Either array reconstructs the same
    distribution after sum-normalization, up to quantization error.
    """
    if mode == "max-norm":
        peak = grid.mass.max()
        scale = 255.0 / peak
        return np.rint(grid.mass * scale).astype(np.uint8), scale
    if mode == "sum-scale":
        scale = float(SUM_SCALE_FACTOR)
        return np.rint(grid.mass * scale).astype(np.uint32), scale
    raise ValueError(f"unknown export mode: {mode!r}")
