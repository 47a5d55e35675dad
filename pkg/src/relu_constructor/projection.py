"""Random linear projections, distortion audits and covering-number dimension estimates."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import net as nc
from .net import Network

PROJECTOR_KINDS = ("rademacher_scaled", "ortho_scaled")


@dataclass(frozen=True, eq=False)
class ProjectionMap:
    """Linear map ``x -> A x`` from ``R^d`` to ``R^{d0}``."""

    matrix: np.ndarray
    kind: str
    seed: int
    d: int
    d0: int

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.matrix.T

    def as_network(self) -> Network:
        """The projection as a one-layer linear network (no hidden layers)."""
        return nc.linear(self.matrix)

    def serialize(self) -> bytes:
        return nc.serialize(self.as_network())


def make_projector(kind: str, d: int, d0: int, seed: int) -> ProjectionMap:
    """Seeded random projection.

    ``rademacher_scaled`` has i.i.d. entries ``+-1/sqrt(d0)``.  ``ortho_scaled``
    orthonormalizes ``d0`` Gaussian rows and scales them by ``sqrt(d/d0)`` so that
    ``A A^T = (d/d0) I``.
    """
    if kind not in PROJECTOR_KINDS:
        raise ValueError(f"unknown projector kind {kind!r}; choose from {PROJECTOR_KINDS}")
    if d < 1 or d0 < 1:
        raise ValueError("dimensions must be positive")
    if d0 > d:
        raise ValueError(f"target dimension d0={d0} exceeds ambient dimension d={d}")
    rng = np.random.default_rng(seed)
    if kind == "rademacher_scaled":
        mat = rng.choice((-1.0, 1.0), size=(d0, d)) / math.sqrt(d0)
    else:
        q, r = np.linalg.qr(rng.normal(size=(d, d0)))
        # fix signs so the draw is a deterministic function of the seed
        q = q * np.sign(np.diag(r))
        mat = q.T * math.sqrt(d / d0)
    mat.setflags(write=False)
    return ProjectionMap(mat, kind, seed, d, d0)


def projection_dim(d_M: int, d: int, delta: float, c: float) -> int:
    """Target dimension ``ceil(c d_M log(d/delta) / delta^2)``, capped at ``d``.

    ``c`` has no default: the constant is not fixed by the theory.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if c <= 0 or d_M < 1 or d < 1:
        raise ValueError("c, d_M and d must be positive")
    return min(d, math.ceil(c * d_M * math.log(d / delta) / delta ** 2))


@dataclass(frozen=True)
class DistortionReport:
    min_ratio: float
    max_ratio: float
    n_pairs: int
    n_skipped: int

    @property
    def spread(self) -> float:
        return self.max_ratio - self.min_ratio

    def __iter__(self):
        return iter((self.min_ratio, self.max_ratio))


def distortion_audit(proj: ProjectionMap, a, b) -> DistortionReport:
    """Extremes of ``|A(a-b)|^2 / |a-b|^2`` over row pairs; coincident pairs are skipped and counted."""
    diff = np.atleast_2d(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    if diff.shape[1] != proj.d:
        raise ValueError(f"pairs have dimension {diff.shape[1]}, projector expects {proj.d}")
    den = (diff ** 2).sum(axis=1)
    keep = den > 0
    skipped = int((~keep).sum())
    if not keep.any():
        raise ValueError("all pairs coincide")
    ratios = (proj(diff[keep]) ** 2).sum(axis=1) / den[keep]
    return DistortionReport(float(ratios.min()), float(ratios.max()), int(keep.sum()), skipped)


def random_pairs(points: np.ndarray, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), size=m)
    j = rng.integers(0, len(points), size=m)
    return points[i], points[j]


def covering_number(points, eps: float) -> int:
    """Size of a greedy farthest-point ``eps``-net of ``points`` (first point seeds the net)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if eps <= 0:
        raise ValueError("eps must be positive")
    if len(pts) == 0:
        return 0
    gap = np.sqrt(((pts - pts[0]) ** 2).sum(axis=1))
    count = 1
    while True:
        far = int(np.argmax(gap))
        if gap[far] <= eps:
            return count
        count += 1
        np.minimum(gap, np.sqrt(((pts - pts[far]) ** 2).sum(axis=1)), out=gap)


@dataclass(frozen=True)
class MinkowskiEstimate:
    slope: float
    intercept: float
    radii: tuple
    counts: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("radius,count\n")
        for r, c in zip(self.radii, self.counts):
            buf.write(f"{r!r},{c}\n")
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "radii": list(self.radii), "counts": list(self.counts)}


def estimate_minkowski_dim(points, radii) -> MinkowskiEstimate:
    """Least-squares slope of ``log N(eps)`` against ``log(1/eps)`` over greedy covering counts."""
    radii = [float(r) for r in radii]
    if len(radii) < 2:
        raise ValueError("need at least two radii")
    if any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    counts = [covering_number(points, r) for r in radii]
    x = np.log(1.0 / np.array(radii))
    y = np.log(np.array(counts, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    return MinkowskiEstimate(float(slope), float(intercept), tuple(radii), tuple(counts))
