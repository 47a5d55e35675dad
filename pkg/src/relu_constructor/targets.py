"""Hölder targets, covariate samplers and noise models for ``Y = f0(X) + eta``."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

BUILTIN_TARGETS = ("constant", "affine", "cosine_product", "poly", "abs_power")


def smoothness_split(beta: float) -> tuple[int, float]:
    """Return ``(s, r)`` with ``s`` the largest integer strictly below beta and ``r = beta - s``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    s = math.ceil(beta) - 1
    return s, beta - s


def multi_indices(d: int, max_order: int, min_order: int = 0) -> list[tuple[int, ...]]:
    """All multi-indices of length ``d`` with ``min_order <= |alpha| <= max_order``, graded order."""
    out = []
    for k in range(min_order, max_order + 1):
        out.extend(_indices_of_order(d, k))
    return out


def _indices_of_order(d: int, k: int) -> list[tuple[int, ...]]:
    if d == 1:
        return [(k,)]
    res = []
    for first in range(k, -1, -1):
        for rest in _indices_of_order(d - 1, k - first):
            res.append((first,) + rest)
    return res


@dataclass
class HolderTarget:
    """A function on ``[0,1]^d`` declared to lie in the Hölder ball of radius ``B0``.

    ``partials`` maps a multi-index to a vectorized evaluator of the
    corresponding partial derivative.  Evaluators take an ``(n, d)`` array.
    """

    d: int
    beta: float
    B0: float
    eval: Callable[[np.ndarray], np.ndarray]
    partials: dict = field(default_factory=dict)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def s(self) -> int:
        return smoothness_split(self.beta)[0]

    @property
    def r(self) -> float:
        return smoothness_split(self.beta)[1]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.asarray(self.eval(x), dtype=np.float64).reshape(-1)

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "beta": self.beta, "B0": self.B0, **self.params}


def _cos_derivative(t, k):
    return np.cos(t + k * math.pi / 2)


def builtin_target(name: str, d: int, beta: float, B0: float, **params) -> HolderTarget:
    """Instantiate one of :data:`BUILTIN_TARGETS` with norms certified to be ``<= B0``."""
    if name not in BUILTIN_TARGETS:
        raise ValueError(f"unknown target {name!r}; choose from {BUILTIN_TARGETS}")
    if d < 1:
        raise ValueError("d must be >= 1")
    if not B0 > 0:
        raise ValueError("B0 must be positive")
    s, r = smoothness_split(beta)
    alphas = multi_indices(d, s)

    if name == "constant":
        c = float(params.pop("value", min(0.3, B0)))
        if abs(c) > B0:
            raise ValueError("constant value exceeds B0")
        partials = {a: (lambda x, a=a: np.full(len(x), c if sum(a) == 0 else 0.0)) for a in alphas}
        return HolderTarget(d, beta, B0, partials[(0,) * d], partials, name, {"value": c})

    if name == "affine":
        # f = mean(x); sup |f| <= 1, gradient norm 1/sqrt(d) <= 1.
        if B0 < 1:
            raise ValueError("affine target needs B0 >= 1")

        def part(x, a):
            k = sum(a)
            if k == 0:
                return x.mean(axis=1)
            return np.full(len(x), 1.0 / d if k == 1 else 0.0)

        partials = {a: (lambda x, a=a: part(x, a)) for a in alphas}
        return HolderTarget(d, beta, B0, partials[(0,) * d], partials, name, {})

    if name == "cosine_product":
        # Order-k partials are bounded by c*pi^k; the order-s partials have
        # Euclidean gradient norm <= c*pi^(s+1), so their r-Hölder constant is
        # at most c*pi^s * 2^(1-r) * pi^r.
        c = B0 / (math.pi ** s * 2.0 ** (1 - r) * math.pi ** r)

        def part(x, a):
            out = np.full(len(x), c)
            for i, k in enumerate(a):
                out = out * math.pi ** k * _cos_derivative(math.pi * x[:, i], k)
            return out

        partials = {a: (lambda x, a=a: part(x, a)) for a in alphas}
        return HolderTarget(d, beta, B0, partials[(0,) * d], partials, name, {"scale": c})

    if name == "poly":
        # q(x) = mean(x_i^2): |q| <= 1, |dq/dx_i| <= 2/d, d2q/dx_i^2 = 2/d.
        # Hölder constants of the order-s partials: s=0 -> 2^r, s=1 -> 2/d, s>=2 -> 0.
        norms = [1.0] + [2.0 / d] * min(s, 2)
        holder = {0: 2.0 ** r, 1: 2.0 / d}.get(s, 0.0)
        c = B0 / max(max(norms), holder)

        def part(x, a):
            k = sum(a)
            if k == 0:
                return c * (x ** 2).mean(axis=1)
            i = int(np.argmax(a))
            if k == 1:
                return c * 2.0 * x[:, i] / d
            if k == 2 and a[i] == 2:
                return np.full(len(x), c * 2.0 / d)
            return np.zeros(len(x))

        partials = {a: (lambda x, a=a: part(x, a)) for a in alphas}
        return HolderTarget(d, beta, B0, partials[(0,) * d], partials, name, {"scale": c})

    # abs_power: |x - 1/2|^beta is beta-Hölder with constant 1 for beta <= 1.
    if beta > 1:
        raise ValueError("abs_power is only defined for beta in (0, 1]")
    c = B0 / max(1.0, (math.sqrt(d) / 2) ** beta)

    def f(x):
        return c * np.linalg.norm(x - 0.5, axis=1) ** beta

    return HolderTarget(d, beta, B0, f, {(0,) * d: f}, name, {"scale": c})


def finite_difference_partial(f: Callable, alpha: tuple[int, ...], h: float = 1e-5) -> Callable:
    """Mixed central difference of order ``alpha`` with step ``h`` per coordinate."""
    stencils = []
    for k in alpha:
        stencils.append([((-1) ** j * math.comb(k, j), (k / 2 - j) * h) for j in range(k + 1)])
    scale = h ** -sum(alpha)

    def part(x):
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros(len(x))
        for combo in np.ndindex(*[len(st) for st in stencils]):
            weight = 1.0
            shift = np.zeros(len(alpha))
            for i, j in enumerate(combo):
                w, off = stencils[i][j]
                weight *= w
                shift[i] = off
            total += weight * np.asarray(f(x + shift), dtype=np.float64)
        return scale * total

    return part


# --- supports ---------------------------------------------------------------

SUPPORT_KINDS = ("cube", "manifold_neighborhood", "minkowski_set")


@dataclass(frozen=True)
class SupportSpec:
    kind: str = "cube"
    d: int = 1
    intrinsic_dim: int = 1
    embedding_seed: int = 0
    rho: float = 0.0
    cantor: bool = False

    def __post_init__(self):
        if self.kind not in SUPPORT_KINDS:
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.kind == "manifold_neighborhood":
            if self.intrinsic_dim not in (1, 2):
                raise ValueError("manifold intrinsic dimension must be 1 or 2")
            if self.intrinsic_dim >= self.d:
                raise ValueError("intrinsic dimension must be below ambient dimension")
            if not 0 <= self.rho < 1:
                raise ValueError("rho must lie in [0, 1)")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "intrinsic_dim": self.intrinsic_dim,
                "embedding_seed": self.embedding_seed, "rho": self.rho, "cantor": self.cantor}

    @property
    def effective_dim(self) -> int:
        return self.d if self.kind == "cube" else self.intrinsic_dim


class Embedding:
    """Smooth trigonometric map of the circle (``d_M=1``) or torus (``d_M=2``) into ``[0.1, 0.9]^d``.

    Coordinate ``j`` is ``cos(k_j . t + phase_j)`` with small integer
    frequencies, then affinely squeezed into ``[0.1, 0.9]``.  The first
    ``2 d_M`` coordinates use unit frequencies so the map is injective.
    """

    def __init__(self, d: int, d_M: int, seed: int):
        rng = np.random.default_rng([seed, d, d_M, 7919])
        self.d, self.d_M = d, d_M
        freq = rng.integers(1, 3, size=(d, d_M)).astype(float)
        freq[:, :] *= rng.integers(0, 2, size=(d, d_M))
        for row in range(min(2 * d_M, d)):
            freq[row] = np.eye(d_M)[row // 2]
        freq[np.all(freq == 0, axis=1), 0] = 1.0
        self.freq = freq
        self.phase = rng.uniform(0, 2 * math.pi, size=d)
        for row in range(min(2 * d_M, d)):
            self.phase[row] = 0.0 if row % 2 == 0 else -math.pi / 2

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64).reshape(-1, self.d_M)
        return 0.5 + 0.4 * np.cos(t @ self.freq.T + self.phase)

    def _refine(self, t: float, p: np.ndarray, steps: int = 5) -> float:
        # Newton steps on the stationarity condition (e(t) - p) . e'(t) = 0.
        f = self.freq[:, 0]
        for _ in range(steps):
            arg = t * f + self.phase
            e = 0.5 + 0.4 * np.cos(arg)
            de = -0.4 * np.sin(arg) * f
            dde = -0.4 * np.cos(arg) * f * f
            g = float((e - p) @ de)
            dg = float(de @ de + (e - p) @ dde)
            if dg <= 0:
                break
            t -= g / dg
        return t

    def distance(self, x: np.ndarray, grid: int = 2048) -> np.ndarray:
        """Euclidean distance from each row of ``x`` to the embedded manifold."""
        x = np.atleast_2d(x)
        if self.d_M == 1:
            ts = np.linspace(0, 2 * math.pi, grid, endpoint=False)
            curve = self(ts)
            out = np.empty(len(x))
            step = 2 * math.pi / grid
            for i, p in enumerate(x):
                j = int(np.argmin(((curve - p) ** 2).sum(axis=1)))

                def dist2(t, p=p):
                    return float(((self(np.array([t]))[0] - p) ** 2).sum())

                res = minimize_scalar(dist2, bounds=(ts[j] - step, ts[j] + step),
                                      method="bounded", options={"xatol": 1e-12})
                t = self._refine(res.x, p)
                out[i] = math.sqrt(min(dist2(t), res.fun, dist2(ts[j])))
            return out
        side = int(math.sqrt(grid)) * 2
        g = np.linspace(0, 2 * math.pi, side, endpoint=False)
        tt = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        surf = self(tt)
        return np.array([math.sqrt(((surf - p) ** 2).sum(axis=1).min()) for p in x])


def _minkowski_direction(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, d, 104729])
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    return 0.5 - 0.4 * u, 0.8 * u


def sample_X(spec: SupportSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` covariates from the support described by ``spec``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = spec.d
    if spec.kind == "cube":
        return rng.uniform(0.0, 1.0, size=(n, d))
    if spec.kind == "manifold_neighborhood":
        emb = Embedding(d, spec.intrinsic_dim, spec.embedding_seed)
        t = rng.uniform(0.0, 2 * math.pi, size=(n, spec.intrinsic_dim))
        x = emb(t)
        if spec.rho > 0:
            direction = rng.normal(size=(n, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            x = x + direction * spec.rho * rng.uniform(0, 1, size=(n, 1))
        return np.clip(x, 0.0, 1.0)
    start, span = _minkowski_direction(d, spec.embedding_seed)
    if spec.cantor:
        # Cantor set along the segment: ternary digits in {0, 2}.
        digits = rng.integers(0, 2, size=(n, 30)) * 2
        t = (digits * 3.0 ** -np.arange(1, 31)).sum(axis=1)
    else:
        t = rng.uniform(0.0, 1.0, size=n)
    return start + t[:, None] * span


def sample_parameters(spec: SupportSpec, n: int, seed: int) -> np.ndarray:
    """Intrinsic parameters used by :func:`sample_X` for a manifold support (same seed, same draw)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2 * math.pi, size=(n, spec.intrinsic_dim))


# --- noise and datasets ----------------------------------------------------

NOISE_KINDS = ("none", "gaussian", "laplace")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be >= 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "none" or self.scale == 0:
            return np.zeros(n)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size=n)
        return rng.laplace(0.0, self.scale, size=n)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __len__(self) -> int:
        return len(self.Y)


def generate_dataset(target: HolderTarget, spec: SupportSpec, noise: NoiseSpec,
                     n: int, seed: int) -> Dataset:
    if target.d != spec.d:
        raise ValueError(f"target dimension {target.d} != support dimension {spec.d}")
    seq = np.random.SeedSequence(seed)
    x_seed, noise_seed = seq.spawn(2)
    X = sample_X(spec, n, int(x_seed.generate_state(1)[0]))
    eta = noise.sample(np.random.default_rng(noise_seed), n)
    return Dataset(X, target(X) + eta)


def dataset_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = data.X.shape[1]
    w.writerow([f"x{i + 1}" for i in range(d)] + ["y"])
    for x, y in zip(data.X, data.Y):
        w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
    return buf.getvalue()


def dataset_sidecar(target: HolderTarget, spec: SupportSpec, noise: NoiseSpec, n: int, seed: int) -> str:
    doc = {"target": target.describe(), "support": spec.as_dict(), "noise": noise.as_dict(),
           "n": n, "seed": seed}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def target_from_description(desc: dict) -> HolderTarget:
    """Rebuild a builtin target from :meth:`HolderTarget.describe` output."""
    desc = dict(desc)
    try:
        name, d, beta, B0 = desc.pop("name"), int(desc.pop("d")), float(desc.pop("beta")), float(desc.pop("B0"))
    except KeyError as exc:
        raise ValueError(f"target description lacks {exc}") from exc
    extra = {"value": desc.pop("value")} if "value" in desc else {}
    target = builtin_target(name, d, beta, B0, **extra)
    for key, val in desc.items():
        if target.params.get(key) != val:
            raise ValueError(f"target parameter {key}={val!r} does not match the rebuilt value")
    return target
