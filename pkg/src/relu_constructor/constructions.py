"""Weight-by-weight ReLU constructions with certified sup-norm error bounds.

Two profiles are supported.

``simple``
    Any exact realization: one-layer ramp sums for the step function and
    one-layer piecewise-linear interpolation for the point fitter.  Product
    depth is chosen from the accuracy the final bound actually needs.
``paper-budget``
    Digit-grouped deep step nets, layer-chunked interpolation for the point
    fitter and zigzag-square products sized from ``(N, M)``, so that every
    builder stays inside the width/depth budgets quoted with the lemmas.

Building blocks
---------------
The squaring block approximates ``t^2`` on ``[-1, 1]`` by ``k`` levels of
piecewise-linear refinement with ``p`` pieces per level.  With ``Z`` the
``p``-piece zigzag of ``[0,1]`` onto itself and ``h(t) = t - I_p(t^2)`` the
one-level interpolation defect,

    I_k(t) = |t| - sum_{i=1}^{k} p^{-2(i-1)} h(Z^{i-1}(|t|)),

is the interpolant of ``t^2`` on a grid of spacing ``p^{-k}``, so the error is
at most ``p^{-2k}/4``.  Products use ``xy = c(x+y) - c^2 + r^2 (t_1^2 - t_2^2)``
with ``c, r`` the centre and half-width of ``[a, b]``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import net as nc
from .net import Network, NetworkStats, compose, concat_inputs, parallelize, stats
from .targets import HolderTarget, finite_difference_partial, multi_indices, smoothness_split

PROFILES = ("simple", "paper-budget")
SLACK = 1e-9
MAX_PARAMETERS = 40_000_000
MAX_SMOOTHNESS = 8


class BudgetError(RuntimeError):
    """A paper-budget construction cannot meet its width/depth budget."""


class ConstructionTooLarge(MemoryError):
    """The dense network would exceed the parameter cap."""


def _check_profile(profile: str) -> None:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")


def _iroot(n: int, d: int) -> int:
    """Largest integer ``m`` with ``m**d <= n``."""
    m = int(round(n ** (1.0 / d)))
    while m ** d > n:
        m -= 1
    while (m + 1) ** d <= n:
        m += 1
    return m


def _ceil_log2(x: float) -> int:
    return math.ceil(math.log2(x))


def lemma_grid_size(N: int, M: int, d: int) -> int:
    """``K = floor(N^{1/d})^2 floor(M^{2/d})`` from the step-net lemma."""
    return _iroot(N, d) ** 2 * _iroot(M * M, d)


def theorem_grid_size(N: int, M: int, d: int) -> int:
    """Smallest ``K`` with ``K^d >= (NM)^2``, i.e. ``ceil((NM)^{2/d})``."""
    target = (N * M) ** 2
    K = max(1, _iroot(target, d))
    if K ** d < target:
        K += 1
    return K


# --- budgets ---------------------------------------------------------------

def step_budget(N: int, M: int, d: int) -> NetworkStats:
    W, D = 4 * _iroot(N, d) + 3, 4 * M + 5
    return NetworkStats(W, D, nc.rectangle_size(W, D, 1), W * D)


def fitter_budget(N: int, M: int, s: int) -> NetworkStats:
    W = 16 * s * (N + 1) * _ceil_log2(8 * N)
    D = 5 * (M + 2) * _ceil_log2(4 * M)
    return NetworkStats(W, D, nc.rectangle_size(W, D, 1), W * D)


def product_budget(N: int, M: int) -> NetworkStats:
    W, D = 9 * N + 1, M
    return NetworkStats(W, D, nc.rectangle_size(W, D, 2), W * D)


def monomial_budget(k: int, N: int, M: int, d: int) -> NetworkStats:
    W, D = 9 * (N + 1) + k - 1, 7 * k * k * M
    return NetworkStats(W, D, nc.rectangle_size(W, D, d), W * D)


def theorem_budget(s: int, d: int, N: int, M: int, uniform: bool = False) -> NetworkStats:
    W = 38 * (s + 1) ** 2 * d ** (s + 1) * N * _ceil_log2(8 * N)
    D = 21 * (s + 1) ** 2 * M * _ceil_log2(8 * M)
    if uniform:
        W *= 3 ** d
        D += 2 * d
    return NetworkStats(W, D, nc.rectangle_size(W, D, d), W * D)


def theorem_bound(beta: float, d: int, B0: float, N: int, M: int) -> float:
    s, _ = smoothness_split(beta)
    return 18.0 * B0 * (s + 1) ** 2 * d ** (s + max(beta, 1.0) / 2) * float(N * M) ** (-2.0 * beta / d)


def uniform_bound(beta: float, d: int, B0: float, N: int, M: int) -> float:
    return theorem_bound(beta, d, B0, N, M) * 19.0 / 18.0


def _within(st: NetworkStats, budget: NetworkStats) -> bool:
    return st.W <= budget.W and st.D <= budget.D


# --- generic layer helpers ----------------------------------------------------

def _ramp_rows(thresholds, delta, coeff):
    """Rows/biases for ``sum_j (s(t - c_j + delta) - s(t - c_j)) / delta`` acting on one scalar."""
    c = np.asarray(thresholds, dtype=np.float64)
    rows = np.ones(2 * len(c))
    bias = np.empty(2 * len(c))
    bias[0::2] = -c + delta
    bias[1::2] = -c
    out = np.empty(2 * len(c))
    out[0::2] = coeff / delta
    out[1::2] = -coeff / delta
    return rows, bias, out


def _piecewise_coeffs(values: np.ndarray) -> np.ndarray:
    """Slope changes for the interpolant through ``(j, values[j])``, flat outside ``[0, T-1]``.

    ``g(t) = values[0] + sum_j c_j s(t - j)`` for ``j = 0..T-1``.
    """
    slopes = np.diff(values, axis=0)
    T = len(values)
    c = np.zeros_like(values)
    if T == 1:
        return c
    c[0] = slopes[0]
    c[1:T - 1] = slopes[1:] - slopes[:-1]
    c[T - 1] = -slopes[-1]
    return c


# --- step net -----------------------------------------------------------------

def _step_simple(K: int, delta: float) -> Network:
    if K == 1:
        return nc.linear(np.zeros((1, 1)))
    thresholds = np.arange(1, K) / K
    rows, bias, out = _ramp_rows(thresholds, delta, 1.0)
    return Network(((rows[:, None], bias), (out[None, :], np.zeros(1))), 1)


def _step_radices(N: int, M: int, d: int) -> list[int]:
    n = _iroot(N, d)
    radices = [n, n]
    if d == 1:
        radices += [M, M]
    else:
        radices.append(_iroot(M * M, d))
    return [b for b in radices if b > 1]


def _stage(w_hidden, b_hidden, w_read, b_read, in_dim: int) -> Network:
    return Network(((np.asarray(w_hidden, float).reshape(-1, in_dim), np.asarray(b_hidden, float)),
                    (np.atleast_2d(np.asarray(w_read, float)), np.asarray(b_read, float))), in_dim)


def _chain(first: Network, stages) -> Network:
    out = first
    for st in stages:
        out = compose(st, out)
    return out


def _step_digits(K: int, radices: list[int], delta: float, per_layer: int) -> Network:
    """Deep digit-grouped step function.

    State carried between layers: ``x`` and the running index ``a``.  Each
    layer counts up to ``per_layer`` further sub-cells of the current digit
    from the residual ``x - a/K``; counting restarts from the running index,
    so chunks of one digit can be spread across consecutive layers.
    """
    if K == 1:
        return nc.linear(np.zeros((1, 1)))
    assert math.prod(radices) == K
    stages = []
    cell = 1.0
    for b in radices:
        step = cell / b
        unit = float(round(K * step))
        left = b - 1
        while left > 0:
            take = min(per_layer, left)
            rows, bias, out = _ramp_rows(unit * np.arange(1, take + 1) / K, delta, unit)
            w = np.vstack([np.outer(rows, [1.0, -1.0 / K]), [[1.0, 0.0], [0.0, 1.0]]])
            bh = np.concatenate([bias, [0.0, 0.0]])
            read = np.zeros((2, len(bh)))
            read[0, -2] = 1.0
            read[1, -1] = 1.0
            read[1, :len(bias)] = out
            stages.append(_stage(w, bh, read, np.zeros(2), 2))
            left -= take
        cell = step
    start = nc.linear(np.array([[1.0], [0.0]]))
    return compose(nc.linear(np.array([[0.0, 1.0]])), _chain(start, stages))


def build_step_net(N: int, M: int, d: int, delta: float | None = None, profile: str = "simple") -> Network:
    """Scalar step net ``psi_1`` with ``psi_1(x) = k`` on ``[k/K, (k+1)/K - delta]``."""
    _check_profile(profile)
    if min(N, M, d) < 1:
        raise ValueError("N, M, d must be positive integers")
    K = lemma_grid_size(N, M, d)
    if delta is None:
        delta = 1.0 / (3 * K)
    if not 0 < delta <= 1.0 / (3 * K):
        raise ValueError(f"delta must lie in (0, 1/(3K)] = (0, {1.0 / (3 * K)!r}]")
    if profile == "simple":
        return _step_simple(K, delta)
    netw = _step_digits(K, _step_radices(N, M, d), delta, 2 * _iroot(N, d))
    if not _within(stats(netw), step_budget(N, M, d)):
        raise BudgetError(f"step net {stats(netw)} exceeds budget {step_budget(N, M, d)}")
    return netw


def step_net_for_grid(K: int, delta: float, profile: str, N: int = 1, M: int = 1, d: int = 1) -> Network:
    if profile == "simple":
        return _step_simple(K, delta)
    return _step_digits(K, _step_radices(N, M, d), delta, 2 * _iroot(N, d))


# --- point fitter -------------------------------------------------------------

def _interp_single(values: np.ndarray) -> Network:
    """One hidden layer interpolating columns of ``values`` at integer inputs."""
    T, m = values.shape
    if T == 1:
        return nc.linear(np.zeros((m, 1)), values[0])
    c = _piecewise_coeffs(values)
    w0 = np.ones((T, 1))
    b0 = -np.arange(T, dtype=np.float64)
    return Network(((w0, b0), (c.T.copy(), values[0].copy())), 1)


def _interp_chunked(values: np.ndarray, per_layer: int) -> Network:
    """Interpolation spread over layers, ``per_layer`` breakpoints per layer.

    Carried state: ``t`` (one unit) and each running partial sum as a
    ``s(a) - s(-a)`` pair.  For ``t < 0`` the carried ``s(t) = 0`` keeps every
    later breakpoint inactive, matching the flat left extension.
    """
    T, m = values.shape
    if T <= per_layer or T == 1:
        return _interp_single(values)
    c = _piecewise_coeffs(values)
    n_state = 1 + m
    stages = []
    for j0 in range(0, T, per_layer):
        idx = np.arange(j0, min(j0 + per_layer, T), dtype=np.float64)
        u = len(idx)
        w = np.zeros((u + 1 + 2 * m, n_state))
        w[:u + 1, 0] = 1.0
        w[u + 1:u + 1 + m, 1:] = np.eye(m)
        w[u + 1 + m:, 1:] = -np.eye(m)
        bh = np.concatenate([-idx, np.zeros(1 + 2 * m)])
        read = np.zeros((n_state, len(bh)))
        read[0, u] = 1.0
        read[1:, :u] = c[j0:j0 + u].T
        read[1:, u + 1:u + 1 + m] = np.eye(m)
        read[1:, u + 1 + m:] = -np.eye(m)
        stages.append(_stage(w, bh, read, np.zeros(n_state), n_state))
    start = nc.linear(np.vstack([[1.0], np.zeros((m, 1))]), np.concatenate([[0.0], values[0]]))
    sel = np.hstack([np.zeros((m, 1)), np.eye(m)])
    return compose(nc.linear(sel), _chain(start, stages))


def _clamp01(netw: Network) -> Network:
    """Post-compose ``s(t) - s(t - 1)`` on every output."""
    m = netw.output_dim
    eye = np.eye(m)
    gate = Network(((np.vstack([eye, eye]), np.concatenate([np.zeros(m), -np.ones(m)])),
                    (np.hstack([eye, -eye]), np.zeros(m))), m)
    return compose(gate, netw)


def build_point_fitter(values, N: int, M: int, s: int, profile: str = "simple") -> Network:
    """Scalar net with ``|phi(i) - xi_i| <= (NM)^{-2s}`` and ``0 <= phi <= 1`` everywhere."""
    _check_profile(profile)
    xi = np.asarray(values, dtype=np.float64).reshape(-1)
    if min(N, M, s) < 1:
        raise ValueError("N, M, s must be positive integers")
    if xi.shape[0] != (N * M) ** 2:
        raise ValueError(f"expected {(N * M) ** 2} values, got {xi.shape[0]}")
    if np.any(xi < 0) or np.any(xi > 1) or not np.all(np.isfinite(xi)):
        raise ValueError("values must lie in [0, 1]")
    if profile == "simple":
        return _clamp01(_interp_single(xi[:, None]))
    budget = fitter_budget(N, M, s)
    netw = _clamp01(_interp_chunked(xi[:, None], budget.W - 3))
    if not _within(stats(netw), budget):
        raise BudgetError(f"point fitter {stats(netw)} exceeds budget {budget}")
    return netw


# --- squares, products, monomials -------------------------------------------------

def _pl_coeffs(node_values: np.ndarray, p: int) -> np.ndarray:
    """Coefficients ``c_j`` with ``g(t) = g(0) + sum_j c_j s(t - j/p)`` on ``[0, 1]``."""
    slopes = p * np.diff(node_values)
    c = np.empty(p)
    c[0] = slopes[0]
    c[1:] = np.diff(slopes)
    return c


def _zigzag_and_defect(p: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.arange(p + 1) / p
    zig = (np.arange(p + 1) % 2).astype(np.float64)
    defect = nodes * (1.0 - nodes)
    return _pl_coeffs(zig, p), _pl_coeffs(defect, p)


def _square_net(p: int, k: int) -> Network:
    """``t -> I_k(|t|)``, within ``p^{-2k}/4`` of ``t^2`` on ``[-1, 1]``."""
    if p < 2 or k < 1:
        raise ValueError("need p >= 2 and k >= 1")
    cz, ch = _zigzag_and_defect(p)
    knots = np.arange(p) / p
    # level 1 acts on |t| through the pairs s(t - j/p) + s(-t - j/p)
    w = np.concatenate([np.ones(p), -np.ones(p)])[:, None]
    b = np.concatenate([-knots, -knots])
    read = np.vstack([np.concatenate([cz, cz]),                       # z_2 = Z(|t|)
                      np.concatenate([np.eye(p)[0] - ch, np.eye(p)[0] - ch])])  # A_2 = |t| - h(|t|)
    out = _stage(w, b, read, np.zeros(2), 1)
    for i in range(2, k + 1):
        scale = float(p) ** (-2 * (i - 1))
        w = np.zeros((p + 1, 2))
        w[:p, 0] = 1.0
        w[p, 1] = 1.0
        b = np.concatenate([-knots, [0.0]])
        read = np.zeros((2, p + 1))
        read[0, :p] = cz
        read[1, :p] = -scale * ch
        read[1, p] = 1.0
        out = compose(_stage(w, b, read, np.zeros(2), 2), out)
    return compose(nc.linear(np.array([[0.0, 1.0]])), out)


def _carry_nonneg(depth: int) -> Network:
    """Scalar identity on ``[0, inf)`` using one unit per hidden layer."""
    if depth == 0:
        return nc.identity(1)
    layers = [(np.ones((1, 1)), np.zeros(1)) for _ in range(depth + 1)]
    return Network(tuple(layers), 1)


def _product_core(a: float, b: float, p: int, k: int) -> Network:
    """Approximate ``xy`` on ``[a, b]^2`` within ``(b-a)^2 p^{-2k} / 8``."""
    if not a < b:
        raise ValueError("need a < b")
    c, r = (a + b) / 2.0, (b - a) / 2.0
    sq = _square_net(p, k)
    # t1 = (x + y - 2c) / (2r), t2 = (x - y) / (2r)
    rows = [[1 / (2 * r), 1 / (2 * r)], [1 / (2 * r), -1 / (2 * r)]]
    bias = [-c / r, 0.0]
    parts = [sq, sq]
    if c != 0.0:
        rows.append([1.0, 1.0])
        bias.append(-2.0 * a)
        parts.append(_carry_nonneg(k))
    front = nc.linear(np.array(rows), np.array(bias))
    body = compose(concat_inputs(parts), front)
    read = [r * r, -r * r] + ([c] if c != 0.0 else [])
    const = 2.0 * a * c - c * c if c != 0.0 else 0.0
    return compose(nc.linear(np.array([read]), np.array([const])), body)


def build_product_net(N: int, M: int, a: float = -1.0, b: float = 1.0, profile: str = "simple") -> Network:
    """Two-input net with ``|phi(x, y) - xy| <= 6 (b-a)^2 N^{-M}`` on ``[a, b]^2``.

    Both profiles use ``p = 2N`` pieces per level and ``M`` levels: width
    ``8N + 1``, depth ``M``, error ``(b-a)^2 (2N)^{-2M} / 8``.
    """
    _check_profile(profile)
    if min(N, M) < 1:
        raise ValueError("N and M must be positive integers")
    if not a < b:
        raise ValueError("need a < b")
    netw = _product_core(a, b, 2 * N, M)
    if profile == "paper-budget" and not _within(stats(netw), product_budget(N, M)):
        raise BudgetError(f"product net {stats(netw)} exceeds budget {product_budget(N, M)}")
    return netw


def _monomial_core(alpha, p: int, m: int) -> Network:
    """Sequential products ``x_{f_1} x_{f_2} ... x_{f_k}`` on ``[0, 1]^d`` (no output clamp)."""
    alpha = tuple(int(a) for a in alpha)
    d = len(alpha)
    factors = [i for i, a in enumerate(alpha) for _ in range(a)]
    k = len(factors)
    sel = np.zeros((k, d))
    sel[np.arange(k), factors] = 1.0
    out = nc.linear(sel)
    prod = _product_core(0.0, 1.0, p, m)
    for j in range(1, k):
        rest = k - j - 1
        stage = concat_inputs([prod] + [_carry_nonneg(prod.depth)] * rest)
        out = compose(stage, out)
    return out


def build_monomial_net(alpha, N: int, M: int, profile: str = "simple") -> Network:
    """Net for ``x^alpha`` on ``[0,1]^d`` within ``9k(N+1)^{-7kM}``, output confined to ``[0, 1]``.

    Uses ``k-1`` chained products with ``p = 2(N+1)`` and ``ceil(7kM/2)``
    levels each, then ``s(t) - s(t-1)``.
    """
    _check_profile(profile)
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError("multi-index entries must be nonnegative")
    k = sum(alpha)
    if k < 1:
        raise ValueError("zero multi-index: use a constant-1 network instead")
    netw = _clamp01(_monomial_core(alpha, 2 * (N + 1), math.ceil(7 * k * M / 2)))
    budget = monomial_budget(k, N, M, len(alpha))
    if profile == "paper-budget" and not _within(stats(netw), budget):
        raise BudgetError(f"monomial net {stats(netw)} exceeds budget {budget}")
    return netw


# --- mid -------------------------------------------------------------------------

def build_mid_net() -> Network:
    """Exact middle value of three reals; width 14, depth 2.

    ``mid = sum - max - min`` with ``max{t1,t2,t3} = max{max{t1,t2}, t3}``,
    ``min = -max{-t1,-t2,-t3}`` and the two-argument max identity
    ``max{a,b} = (s(a+b) - s(-a-b) + s(a-b) + s(b-a)) / 2``.
    """
    def max_rows(sign):
        e = sign * np.eye(3)
        return np.vstack([e[0] + e[1], -e[0] - e[1], e[0] - e[1], e[1] - e[0], e[2], -e[2]])

    ones = np.ones(3)
    w1 = np.vstack([max_rows(1.0), max_rows(-1.0), ones, -ones])          # 14 units
    # second layer: inputs m = max12 (or max of negatives), t = t3 (or -t3)
    half = np.array([0.5, -0.5, 0.5, 0.5])

    def second(offset):
        m = np.zeros(14)
        m[offset:offset + 4] = half
        t = np.zeros(14)
        t[offset + 4], t[offset + 5] = 1.0, -1.0
        return np.vstack([m + t, -m - t, m - t, t - m])

    carry = np.zeros((2, 14))
    carry[0, 12], carry[1, 13] = 1.0, 1.0
    w2 = np.vstack([second(0), second(6), carry])                           # 10 units
    w3 = np.concatenate([-half, half, [1.0, -1.0]])[None, :]
    return Network(((w1, np.zeros(14)), (w2, np.zeros(10)), (w3, np.zeros(1))), 3)


# --- Omega and certificates ------------------------------------------------------

@dataclass(frozen=True)
class OmegaRegion:
    d: int
    K: int
    delta: float

    def __post_init__(self):
        if self.K < 1 or self.d < 1:
            raise ValueError("K and d must be positive")
        if not 0 < self.delta <= 1.0 / (3 * self.K):
            raise ValueError("delta must lie in (0, 1/(3K)]")

    def contains(self, x) -> np.ndarray:
        return omega_membership(x, self)


def omega_membership(x, region: OmegaRegion):
    """True where some coordinate lies in an open gap ``(k/K - delta, k/K)``, ``1 <= k <= K-1``."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    K, delta = region.K, region.delta
    k = np.floor(pts * K) + 1.0
    gap = (k <= K - 1) & (pts < k / K) & (k / K - pts < delta)
    hit = gap.any(axis=1)
    return bool(hit[0]) if np.ndim(x) == 1 else hit


@dataclass
class ApproxCertificate:
    kind: str
    profile: str
    N: int
    M: int
    beta: float
    d: int
    B0: float
    bound: float
    measured: float
    passed: bool
    stats: NetworkStats
    budget: NetworkStats | None
    K: int
    delta: float
    shift: float | None = None
    shift_convention: str | None = None
    points_per_axis: int = 0
    n_points: int = 0
    finite_difference: bool = False
    target: dict = field(default_factory=dict)
    seed: int = 0
    n_random: int = 10_000

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "profile": self.profile, "N": self.N, "M": self.M,
            "beta": self.beta, "d": self.d, "B0": self.B0, "bound": self.bound,
            "measured": self.measured, "pass": self.passed,
            "stats": self.stats.as_dict(),
            "budget": None if self.budget is None else self.budget.as_dict(),
            "K": self.K, "delta": self.delta, "shift": self.shift,
            "shift_convention": self.shift_convention,
            "grid": {"points_per_axis": self.points_per_axis, "n_points": self.n_points,
                     "n_random": self.n_random, "seed": self.seed,
                     "omega_excluded": self.kind == "theorem"},
            "finite_difference": self.finite_difference, "target": self.target,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def certification_points(d: int, n_random: int = 10_000, seed: int = 0,
                         max_points: int = 1_000_000) -> tuple[np.ndarray, int]:
    """Lattice with ``1 + floor(200/d)`` points per axis (capped) plus uniform random points."""
    per_axis = 1 + 200 // d
    while per_axis ** d > max_points:
        per_axis -= 1
    axis = np.linspace(0.0, 1.0, per_axis)
    lattice = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    rnd = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n_random, d))
    return np.vstack([lattice, rnd]), per_axis


def sup_error(netw: Network, target: HolderTarget, points: np.ndarray, batch: int = 20_000) -> float:
    worst = 0.0
    for i in range(0, len(points), batch):
        chunk = points[i:i + batch]
        err = np.abs(nc.evaluate(netw, chunk)[:, 0] - target(chunk))
        if len(err):
            worst = max(worst, float(err.max()))
    return worst


def measure_error(netw: Network, target: HolderTarget, kind: str, K: int, delta: float,
                  n_random: int = 10_000, seed: int = 0) -> tuple[float, int, int]:
    """Sup error on the certification points; ``theorem`` drops points in the trifling region.

    Returns ``(measured, points_per_axis, n_points)``.
    """
    if kind not in ("theorem", "uniform"):
        raise ValueError(f"unknown certificate kind {kind!r}")
    pts, per_axis = certification_points(target.d, n_random, seed)
    if kind == "theorem":
        pts = pts[~omega_membership(pts, OmegaRegion(target.d, K, delta))]
    return sup_error(netw, target, pts), per_axis, len(pts)


# --- Taylor assembly -----------------------------------------------------------

def _partials_table(target: HolderTarget, alphas, anchors: np.ndarray, allow_fd: bool):
    cols, used_fd = [], False
    for a in alphas:
        fn = target.partials.get(a)
        if fn is None and sum(a) == 0:
            fn = target.eval
        if fn is None:
            if not allow_fd:
                raise ValueError(f"target lacks partial derivative {a} and finite differences are disabled")
            fn = finite_difference_partial(target.eval, a)
            used_fd = True
        cols.append(np.asarray(fn(anchors), dtype=np.float64).reshape(-1))
    return np.stack(cols, axis=1), used_fd


def _levels_for(tol: float, p: int, scale: float) -> int:
    """Smallest ``k`` with ``scale * p^{-2k} <= tol``."""
    return max(1, math.ceil(math.log(scale / tol) / (2 * math.log(p))))


@dataclass
class _Plan:
    K: int
    delta: float
    step: Network
    prod_p: int
    prod_k: int
    mono_p: int
    mono_m: int
    fit_per_layer: int | None


def _plan(target: HolderTarget, N: int, M: int, profile: str, delta: float | None, K: int | None) -> _Plan:
    d, s = target.d, target.s
    if K is None:
        K = theorem_grid_size(N, M, d) if profile == "simple" else lemma_grid_size(N, M, d)
    if delta is None:
        delta = 1.0 / (3 * K)
    if not 0 < delta <= 1.0 / (3 * K):
        raise ValueError("delta must lie in (0, 1/(3K)]")
    n_terms = max(1, len(multi_indices(d, s)))
    if profile == "simple":
        # spend at most 1e-4 of the bound on all products together
        tol = max(1e-4 * theorem_bound(target.beta, d, target.B0, N, M) / target.B0 / n_terms, 1e-15)
        p = 4
        return _Plan(K, delta, _step_simple(K, delta), p, _levels_for(tol, p, 0.5), p,
                     _levels_for(tol, p, 0.125), None)
    step = step_net_for_grid(K, delta, profile, N, M, d)
    per_layer = fitter_budget(N, M, s + 1).W - 3
    return _Plan(K, delta, step, 2 * N, 2 * (s + 1) * M, 2 * (N + 1),
                 math.ceil(7 * (s + 1) * M / 2), per_layer)


def _taylor_network(target: HolderTarget, plan: _Plan, allow_fd: bool) -> tuple[Network, bool]:
    d, s, B0, K = target.d, target.s, target.B0, plan.K
    if s > MAX_SMOOTHNESS:
        raise ValueError(f"smoothness order {s} exceeds the supported maximum {MAX_SMOOTHNESS}")
    alphas = multi_indices(d, s)
    # anchors theta/K, indexed by sum theta_j K^(j-1)
    grid = np.array(list(itertools.product(range(K), repeat=d)), dtype=np.float64)[:, ::-1]
    table, used_fd = _partials_table(target, alphas, grid / K, allow_fd)
    xi = np.clip((table + B0) / (2.0 * B0), 0.0, 1.0)
    fact = np.array([math.prod(math.factorial(a) for a in al) for al in alphas], dtype=np.float64)

    # stage A: (x) -> (theta_1, x_1, ..., theta_d, x_d)
    pieces = []
    for i in range(d):
        sel = np.zeros((1, d))
        sel[0, i] = 1.0
        pieces.append(compose(plan.step, nc.linear(sel)))
        if s > 0:
            pieces.append(nc.linear(sel))
    stage_a = parallelize(pieces)
    width_a = 2 if s > 0 else 1
    theta_idx = [width_a * i for i in range(d)]
    x_idx = [width_a * i + 1 for i in range(d)]
    n_a = width_a * d

    # stage B: coefficient lookup, scaled residuals u = K x - theta and monomials of u
    lookup = np.zeros((1, n_a))
    lookup[0, theta_idx] = float(K) ** np.arange(d)
    fitter = (_interp_single(xi) if plan.fit_per_layer is None
              else _interp_chunked(xi, plan.fit_per_layer))
    # coef_alpha = (2 xi - 1) / alpha!, normalized by B0
    unmap = nc.linear(np.diag(2.0 / fact), -1.0 / fact)
    parts_b = [compose(unmap, compose(fitter, nc.linear(lookup)))]
    if s == 0:
        body = compose(parts_b[0], stage_a)
        read = nc.linear(np.array([[B0]]))
        return nc.clip_one_layer(compose(read, body), B0), used_fd
    u_map = np.zeros((d, n_a))
    u_map[np.arange(d), x_idx] = float(K)
    u_map[np.arange(d), theta_idx] = -1.0
    higher = [al for al in alphas if sum(al) >= 2]
    for al in higher:
        parts_b.append(compose(_monomial_core(al, plan.mono_p, plan.mono_m), nc.linear(u_map)))
    parts_b.append(nc.linear(u_map))
    stage_b = parallelize(parts_b)
    # stage B output layout: [coef (len(alphas)), mono for higher, u (d)]
    n_coef = len(alphas)
    mono_pos = {al: n_coef + j for j, al in enumerate(higher)}
    for i in range(d):
        e = tuple(1 if j == i else 0 for j in range(d))
        mono_pos[e] = n_coef + len(higher) + i

    # stage C: products coef_alpha * u^alpha, with coef_0 carried
    n_b = stage_b.output_dim
    order = [0]
    for j, al in enumerate(alphas[1:], start=1):
        order += [j, mono_pos[al]]
    perm = np.zeros((len(order), n_b))
    perm[np.arange(len(order)), order] = 1.0
    prod = _product_core(-1.0, 1.0, plan.prod_p, plan.prod_k)
    stage_c = concat_inputs([nc.identity(1)] + [prod] * (n_coef - 1))
    weights = np.array([[1.0] + [float(K) ** (-sum(al)) for al in alphas[1:]]]) * B0
    full = compose(nc.linear(weights), compose(stage_c, compose(nc.linear(perm), compose(stage_b, stage_a))))
    return nc.clip_one_layer(full, B0), used_fd


def build_holder_approximant(target: HolderTarget, N: int, M: int, profile: str = "simple",
                             delta: float | None = None, allow_finite_differences: bool = False,
                             n_random: int = 10_000, seed: int = 0) -> tuple[Network, ApproxCertificate]:
    """Explicit ReLU approximant of ``target`` off the trifling region, with certificate."""
    _check_profile(profile)
    if min(N, M) < 1:
        raise ValueError("N and M must be positive integers")
    plan = _plan(target, N, M, profile, delta, None)
    netw, used_fd = _taylor_network(target, plan, allow_finite_differences)
    bound = theorem_bound(target.beta, target.d, target.B0, N, M)
    measured, per_axis, n_points = measure_error(netw, target, "theorem", plan.K, plan.delta, n_random, seed)
    budget = theorem_budget(target.s, target.d, N, M)
    st = stats(netw)
    if profile == "paper-budget" and not _within(st, budget):
        raise BudgetError(f"approximant {st} exceeds budget {budget}")
    cert = ApproxCertificate("theorem", profile, N, M, target.beta, target.d, target.B0, bound,
                             measured, measured <= bound + SLACK, st, budget, plan.K, plan.delta,
                             points_per_axis=per_axis, n_points=n_points,
                             finite_difference=used_fd, target=target.describe(),
                             seed=seed, n_random=n_random)
    return netw, cert


SHIFT_CONVENTIONS = ("cell", "reciprocal")


def default_shift(K: int, beta: float, convention: str = "cell") -> float:
    """Shift for the mid construction.

    ``cell`` (default): ``1/(3K)``, the largest admissible gap.
    ``reciprocal``: ``1/(3 K^{max(beta,1)})``, a smaller shift.
    """
    if convention == "reciprocal":
        return 1.0 / (3.0 * float(K) ** max(beta, 1.0))
    if convention == "cell":
        return 1.0 / (3.0 * K)
    raise ValueError(f"unknown shift convention {convention!r}")


def build_uniform_approximant(target: HolderTarget, N: int, M: int, profile: str = "simple",
                              shift: float | None = None, shift_convention: str = "cell",
                              allow_finite_differences: bool = False, n_random: int = 10_000,
                              seed: int = 0) -> tuple[Network, ApproxCertificate]:
    """Approximant valid on all of ``[0,1]^d``: nested mids over ``3^d`` shifted copies."""
    _check_profile(profile)
    if min(N, M) < 1:
        raise ValueError("N and M must be positive integers")
    d = target.d
    K = theorem_grid_size(N, M, d) if profile == "simple" else lemma_grid_size(N, M, d)
    convention = shift_convention
    if shift is None:
        shift = default_shift(K, target.beta, shift_convention)
    else:
        convention = "explicit"
    # the Omega gap equals the shift, so shifted copies step over every gap
    plan = _plan(target, N, M, profile, shift, K)
    base, used_fd = _taylor_network(target, plan, allow_finite_differences)
    copies = 3 ** d
    est = sum((copies * w.shape[0]) * (copies * w.shape[1]) for w, _ in base.layers[1:])
    if est > MAX_PARAMETERS:
        raise ConstructionTooLarge(f"about {est} weights needed for {copies} parallel copies")
    offsets = list(itertools.product((-1.0, 0.0, 1.0), repeat=d))
    # lexicographic with the first coordinate varying fastest
    offsets = [o[::-1] for o in offsets]
    shifted = [compose(base, nc.linear(np.eye(d), shift * np.array(o))) for o in offsets]
    netw = parallelize(shifted)
    mid = build_mid_net()
    for level in range(d):
        groups = 3 ** (d - level - 1)
        netw = compose(concat_inputs([mid] * groups), netw)
    bound = uniform_bound(target.beta, d, target.B0, N, M)
    measured, per_axis, n_points = measure_error(netw, target, "uniform", K, plan.delta, n_random, seed)
    budget = theorem_budget(target.s, d, N, M, uniform=True)
    st = stats(netw)
    if profile == "paper-budget" and not _within(st, budget):
        raise BudgetError(f"uniform approximant {st} exceeds budget {budget}")
    cert = ApproxCertificate("uniform", profile, N, M, target.beta, d, target.B0, bound, measured,
                             measured <= bound + SLACK, st, budget, K, plan.delta, shift, convention,
                             per_axis, n_points, used_fd, target.describe(), seed, n_random)
    return netw, cert
