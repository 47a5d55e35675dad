"""Closed-form sizing formulas and error-bound calculators.

Every constant the theory leaves unspecified (``C0``, the pseudo-dimension
bracket constants, ...) is a required argument; nothing here invents one.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from .net import rectangle_size
from .targets import smoothness_split

PLAN_PROFILES = (
    "deep_fixed_width",
    "wide_fixed_depth",
    "deep_and_wide",
    "rectangle_min_size",
    "manifold",
    "minkowski",
)

# Exponent of n in the planned size, in units of d/(d + 2 beta), ignoring log factors.
SIZE_EXPONENTS = {
    "deep_fixed_width": 0.5,
    "wide_fixed_depth": 1.0,
    "deep_and_wide": 0.75,
    "rectangle_min_size": 0.5,
    "manifold": 0.5,
    "minkowski": 0.5,
}

_SNAP = 1e-9


class OutsideRegimeWarning(RuntimeWarning):
    """Inputs fall outside the regime in which the covering bound was derived."""


def _ceil(x: float) -> int:
    """Ceiling that does not jump past an integer because of rounding noise."""
    r = round(x)
    if abs(x - r) <= _SNAP * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def _log_term(m: float) -> int:
    """``ceil(m * log2(8 m))``."""
    return _ceil(m * math.log2(8.0 * m))


def _theorem_width_factor(N: int) -> int:
    return N * _ceil(math.log2(8 * N))


@dataclass(frozen=True)
class ArchitecturePlan:
    W: int
    D: int
    S_estimate: int
    U_estimate: int
    B: float
    profile: str
    inputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"W": self.W, "D": self.D, "S_estimate": self.S_estimate,
                "U_estimate": self.U_estimate, "B": self.B, "profile": self.profile,
                "inputs": dict(self.inputs)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def plan_architecture(beta: float, d_eff: int, n: int, profile: str, aux: dict | None = None) -> ArchitecturePlan:
    """Integer width/depth/size plan for sample size ``n``.

    With ``m = n^{d/(2(d+2 beta))}`` and ``L = ceil(m log2(8m))``:

    ``deep_fixed_width``     W = 38(s+1)^2 d^{s+1} N ceil(log2 8N), D = 21(s+1)^2 L
    ``wide_fixed_depth``     W = 38(s+1)^2 d^{s+1} L, D = 21(s+1)^2 M ceil(log2 8M)
    ``deep_and_wide``        both W and D use ``m' = n^{d/(4(d+2 beta))}`` in place of ``m``
    ``rectangle_min_size``   W = 114(s+1)^2 d^{s+1}, D = 21(s+1)^2 L
    ``manifold``             deep_fixed_width with ``d`` the projected dimension
    ``minkowski``            as manifold, width times ``3^d``, depth plus ``2d``

    ``aux`` may carry ``N`` and ``M`` (default 1) and the clip bound ``B``
    (default 1).
    """
    if profile not in PLAN_PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PLAN_PROFILES}")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if d_eff < 1:
        raise ValueError("d_eff must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    aux = dict(aux or {})
    unknown = set(aux) - {"N", "M", "B"}
    if unknown:
        raise ValueError(f"unknown aux keys: {sorted(unknown)}")
    N, M = int(aux.get("N", 1)), int(aux.get("M", 1))
    B = float(aux.get("B", 1.0))
    if N < 1 or M < 1:
        raise ValueError("N and M must be positive")
    s, _ = smoothness_split(beta)
    d = d_eff
    c2 = (s + 1) ** 2
    poly = d ** (s + 1)
    m = n ** (d / (2 * (d + 2 * beta)))
    L = _log_term(m)
    inputs = {"beta": beta, "d_eff": d, "n": n}
    if profile == "deep_fixed_width" or profile == "manifold":
        W, D = 38 * c2 * poly * _theorem_width_factor(N), 21 * c2 * L
        inputs["N"] = N
    elif profile == "wide_fixed_depth":
        W, D = 38 * c2 * poly * L, 21 * c2 * _theorem_width_factor(M)
        inputs["M"] = M
    elif profile == "deep_and_wide":
        L4 = _log_term(n ** (d / (4 * (d + 2 * beta))))
        W, D = 38 * c2 * poly * L4, 21 * c2 * L4
    elif profile == "rectangle_min_size":
        W, D = 114 * c2 * poly, 21 * c2 * L
    else:
        W, D = 38 * c2 * 3 ** d * poly * _theorem_width_factor(N), 21 * c2 * L + 2 * d
        inputs["N"] = N
    return ArchitecturePlan(W, D, rectangle_size(W, D, d), W * D, B, profile, inputs)


def nre(S1: float, S2: float) -> float:
    """Network relative efficiency ``log S2 / log S1``."""
    if not (S1 > 1 and S2 > 1):
        raise ValueError("sizes must exceed 1")
    return math.log(S2) / math.log(S1)


def asymptotic_nre(profile1: str, profile2: str) -> float:
    """Limit of ``nre`` between two planner profiles as ``n`` grows (log factors ignored)."""
    for p in (profile1, profile2):
        if p not in SIZE_EXPONENTS:
            raise ValueError(f"unknown profile {p!r}")
    return SIZE_EXPONENTS[profile2] / SIZE_EXPONENTS[profile1]


def pdim_bracket(S: float, D: float, c_lo: float, C_hi: float) -> tuple[float, float]:
    """``(c S D log(S/D), C S D log S)``."""
    if not S > D:
        raise ValueError("need S > D so that log(S/D) > 0")
    if D < 1:
        raise ValueError("D must be >= 1")
    if c_lo <= 0 or C_hi <= 0:
        raise ValueError("constants must be positive")
    return c_lo * S * D * math.log(S / D), C_hi * S * D * math.log(S)


def covering_log_bound(B: float, n: int, pdim: float) -> float:
    """Natural log of ``(4 e B n^2 / pdim)^pdim``.

    Emits :class:`OutsideRegimeWarning` when ``pdim > 2n``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if n < 1 or pdim < 1:
        raise ValueError("n and pdim must be >= 1")
    if pdim > 2 * n:
        warnings.warn(f"pdim={pdim} exceeds 2n={2 * n}", OutsideRegimeWarning, stacklevel=2)
    return pdim * (math.log(4.0 * B) + 1.0 + 2.0 * math.log(n) - math.log(pdim))


def stochastic_bound(B: float, n: float, S: float, D: float, C0: float) -> float:
    """``C0 B^2 (log n)^3 S D log(S) / n``."""
    if n <= 1:
        raise ValueError("n must exceed 1")
    return C0 * B * B * math.log(n) ** 3 / n * S * D * math.log(S)


def approx_bound_term(beta: float, d: int, B0: float, N: int, M: int) -> float:
    """``324 B0^2 (s+1)^4 d^{2s + max(beta,1)} (NM)^{-4 beta/d}``."""
    if not (beta > 0 and d >= 1 and B0 > 0 and N >= 1 and M >= 1):
        raise ValueError("all inputs must be positive")
    s, _ = smoothness_split(beta)
    return 324.0 * B0 * B0 * (s + 1) ** 4 * d ** (2 * s + max(beta, 1.0)) * float(N * M) ** (-4.0 * beta / d)


@dataclass(frozen=True)
class Decomposition:
    stochastic: float
    approximation: float
    total: float
    stochastic_share: float
    approximation_share: float

    def as_dict(self) -> dict:
        return {"stochastic": self.stochastic, "approximation": self.approximation,
                "total": self.total, "stochastic_share": self.stochastic_share,
                "approximation_share": self.approximation_share}


def decomposition_report(stoch_term: float, approx_term: float) -> Decomposition:
    """Excess-risk bound ``stoch + 2 approx`` with each component's share of the total.

    Shares are NaN when both terms vanish.
    """
    if stoch_term < 0 or approx_term < 0:
        raise ValueError("terms must be nonnegative")
    total = stoch_term + 2.0 * approx_term
    if total == 0:
        return Decomposition(stoch_term, approx_term, 0.0, math.nan, math.nan)
    return Decomposition(stoch_term, approx_term, total, stoch_term / total, 2.0 * approx_term / total)


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Fixed-width text table."""
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "PASS" if v else "FAIL"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
