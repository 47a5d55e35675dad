"""Empirical risk minimization with rectangle ReLU MLPs, and convergence-rate sweeps.

Training is plain numpy: reverse-mode gradients, He initialization, minibatches
of 64, Adam steps under a cosine-decayed learning rate, and the parameter
snapshot with the lowest full-sample empirical risk of the clipped network is
returned.  Steps follow the gradient of the unclipped squared loss.
"""

from __future__ import annotations

import io
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import net as nc
from .bounds import PLAN_PROFILES, ArchitecturePlan, plan_architecture
from .net import Network
from .projection import ProjectionMap, make_projector
from .targets import Dataset, HolderTarget, NoiseSpec, SupportSpec, generate_dataset, sample_X


class TrainingDiverged(RuntimeError):
    """Empirical risk became non-finite during training."""


class SweepFailed(RuntimeError):
    """More than half of the replicates diverged at some sample size."""


def empirical_risk(netw: Network, data: Dataset) -> float:
    """Mean squared residual ``(1/n) sum (Y_i - f(X_i))^2``."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    pred = nc.evaluate(netw, data.X)[:, 0]
    return float(np.mean((data.Y - pred) ** 2))


def truncate_labels(data: Dataset, beta_n: float) -> Dataset:
    """Clamp labels to ``[-beta_n, beta_n]``; ``math.inf`` leaves them unchanged."""
    if not beta_n > 0:
        raise ValueError("beta_n must be positive")
    if math.isinf(beta_n):
        return data
    return Dataset(data.X, np.clip(data.Y, -beta_n, beta_n))


# --- MLP parameters and gradients -------------------------------------------

def init_params(d: int, width: int, depth: int, rng: np.random.Generator) -> list:
    """He-scaled Gaussian weights, zero biases, for ``depth`` hidden layers of ``width`` units."""
    dims = [d] + [width] * depth + [1]
    params = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = math.sqrt((2.0 if i < depth else 1.0) / fan_in)
        params.append((rng.normal(0.0, scale, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return params


def _forward(params, X):
    acts = [X]
    h = X
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return acts


def loss_and_grad(params, X, Y, B: float | None = None):
    """Mean squared error of the (optionally clipped) MLP and its gradient."""
    acts = _forward(params, X)
    out = acts[-1][:, 0]
    if B is not None:
        clipped = np.clip(out, -B, B)
        live = (out > -B) & (out < B)
    else:
        clipped, live = out, np.ones_like(out, dtype=bool)
    resid = clipped - Y
    n = len(Y)
    loss = float(np.mean(resid ** 2))
    delta = (2.0 / n * resid * live)[:, None]
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w) * (acts[i] > 0)
    return loss, grads


def params_to_network(params, B: float | None) -> Network:
    return Network(tuple((w.copy(), b.copy()) for w, b in params), params[0][0].shape[1], B)


# --- training ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Training and sweep settings.

    Shape: explicit ``width``/``depth`` win; otherwise the planner profile at the
    dataset's effective dimension, scaled by ``width_multiplier`` and
    ``depth_multiplier`` (rounded up, at least 1).
    """

    width: int | None = None
    depth: int | None = None
    plan_profile: str = "rectangle_min_size"
    width_multiplier: float = 1.0
    depth_multiplier: float = 1.0
    epochs: int = 100
    min_steps: int = 0
    batch_size: int = 64
    learning_rate: float = 1e-2
    final_lr_fraction: float = 0.01
    seed: int = 0
    truncation_c: float | None = None
    B: float = 1.0
    replicates: int = 3
    eval_samples: int = 20_000

    def __post_init__(self):
        for name in ("epochs", "batch_size", "replicates", "eval_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.min_steps < 0:
            raise ValueError("min_steps must be nonnegative")
        if self.width is not None and self.width < 1 or self.depth is not None and self.depth < 1:
            raise ValueError("width and depth must be positive")
        if self.plan_profile not in PLAN_PROFILES:
            raise ValueError(f"unknown plan profile {self.plan_profile!r}")
        if not (self.width_multiplier > 0 and self.depth_multiplier > 0):
            raise ValueError("multipliers must be positive")
        if not self.learning_rate > 0 or not 0 < self.final_lr_fraction <= 1:
            raise ValueError("invalid learning-rate schedule")
        if self.truncation_c is not None and not self.truncation_c > 0:
            raise ValueError("truncation_c must be positive")
        if not self.B > 0:
            raise ValueError("B must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def resolve_shape(config: TrainConfig, beta: float, d_eff: int, n: int) -> tuple[int, int, ArchitecturePlan]:
    plan = plan_architecture(beta, d_eff, max(n, 1), config.plan_profile, {"B": config.B})
    width = config.width or max(1, math.ceil(plan.W * config.width_multiplier))
    depth = config.depth or max(1, math.ceil(plan.D * config.depth_multiplier))
    return width, depth, plan


@dataclass
class TrainResult:
    network: Network
    best_risk: float
    initial_risk: float
    best_epoch: int
    history: list


def train_erm(data: Dataset, config: TrainConfig, beta: float = 1.0, seed: int | None = None,
              return_details: bool = False):
    """Fit a rectangle MLP by minibatch gradient steps; return the best snapshot seen."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    X = np.asarray(data.X, dtype=np.float64)
    n, d = X.shape
    if config.truncation_c is not None:
        data = truncate_labels(data, config.truncation_c * math.log(max(n, 2)))
    Y = np.asarray(data.Y, dtype=np.float64)
    width, depth, _ = resolve_shape(config, beta, d, n)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = init_params(d, width, depth, rng)
    B = config.B

    def full_risk(p):
        out = np.clip(_forward(p, X)[-1][:, 0], -B, B)
        return float(np.mean((out - Y) ** 2))

    best = full_risk(params)
    initial, best_epoch = best, 0
    best_params = [(w.copy(), b.copy()) for w, b in params]
    bs = min(config.batch_size, n)
    per_epoch = math.ceil(n / bs)
    epochs = max(config.epochs, math.ceil(config.min_steps / per_epoch))
    total = epochs * per_epoch
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr0, lr_min = config.learning_rate, config.learning_rate * config.final_lr_fraction
    history = [best]
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            # unclipped surrogate: the clip's zero gradient would freeze a saturated net
            _, grads = loss_and_grad(params, X[idx], Y[idx])
            step += 1
            lr = lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * (step - 1) / total))
            corr1, corr2 = 1.0 - b1 ** step, 1.0 - b2 ** step
            new = []
            for i, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
                mw, mb = m[i]
                vw, vb = v[i]
                mw = b1 * mw + (1 - b1) * gw
                mb = b1 * mb + (1 - b1) * gb
                vw = b2 * vw + (1 - b2) * gw * gw
                vb = b2 * vb + (1 - b2) * gb * gb
                m[i], v[i] = (mw, mb), (vw, vb)
                w = w - lr * (mw / corr1) / (np.sqrt(vw / corr2) + eps)
                b = b - lr * (mb / corr1) / (np.sqrt(vb / corr2) + eps)
                new.append((w, b))
            params = new
        risk = full_risk(params)
        history.append(risk)
        if not math.isfinite(risk):
            raise TrainingDiverged(f"empirical risk became {risk} at epoch {epoch}")
        if risk < best:
            best, best_epoch = risk, epoch
            best_params = [(w.copy(), b.copy()) for w, b in params]
    netw = params_to_network(best_params, B)
    if return_details:
        return TrainResult(netw, best, initial, best_epoch, history)
    return netw


# --- excess risk ----------------------------------------------------------------

def excess_risk_mc(netw: Network, target: HolderTarget, support: SupportSpec, m: int, seed: int,
                   return_se: bool = False):
    """Monte Carlo ``(1/m) sum (f_hat(X_j) - f_0(X_j))^2`` over fresh covariates."""
    if m < 1:
        raise ValueError("m must be >= 1")
    X = sample_X(support, m, seed)
    sq = (nc.evaluate(netw, X)[:, 0] - target(X)) ** 2
    est = float(sq.mean())
    if return_se:
        se = float(sq.std(ddof=1) / math.sqrt(m)) if m > 1 else math.inf
        return est, se
    return est


# --- rate sweeps ---------------------------------------------------------------

def fit_slope(n_values, means) -> tuple[float, float]:
    x = np.log(np.asarray(n_values, dtype=np.float64))
    y = np.log(np.asarray(means, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass
class RateReport:
    n_values: list
    records: list                 # (n, replicate, excess_risk)
    means: list
    sds: list
    fitted_slope: float
    intercept: float
    slope_ci: tuple
    target_exponent: float
    degenerate: bool
    shapes: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,replicate,excess_risk\n")
        for n, r, e in self.records:
            buf.write(f"{n},{r},{e!r}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "mean_excess_risk": list(self.means),
            "sd_excess_risk": list(self.sds),
            "fitted_slope": self.fitted_slope,
            "intercept": self.intercept,
            "slope_ci": list(self.slope_ci),
            "target_exponent": self.target_exponent,
            "degenerate": self.degenerate,
            "shapes": self.shapes,
            "settings": self.settings,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def gnuplot_data(self) -> str:
        lines = ["# n mean_excess_risk"]
        lines += [f"{n} {m!r}" for n, m in zip(self.n_values, self.means)]
        return "\n".join(lines) + "\n"

    def gnuplot_script(self, data_file: str = "rate.dat") -> str:
        return (
            "set logscale xy\n"
            "set xlabel 'n'\n"
            "set ylabel 'excess risk'\n"
            f"f(x) = exp({self.intercept!r}) * x**({self.fitted_slope!r})\n"
            f"plot '{data_file}' using 1:2 with linespoints title 'mean', f(x) title 'fit'\n"
        )


def _run_one(job):
    target, support, noise, n, r, config, proj, beta, sweep_seed = job
    data_seed = int(np.random.SeedSequence([sweep_seed, n, r, 1]).generate_state(1)[0])
    train_seed = int(np.random.SeedSequence([sweep_seed, n, r, 2]).generate_state(1)[0])
    eval_seed = int(np.random.SeedSequence([sweep_seed, r, 3]).generate_state(1)[0])
    data = generate_dataset(target, support, noise, n, data_seed)
    if proj is not None:
        data = Dataset(proj(data.X), data.Y)
    try:
        g = train_erm(data, config, beta=beta, seed=train_seed)
    except TrainingDiverged:
        return n, r, math.nan
    full = nc.compose(g, proj.as_network()) if proj is not None else g
    return n, r, excess_risk_mc(full, target, support, config.eval_samples, eval_seed)


# Targets carry closures and do not pickle; forked workers inherit the shared
# objects instead and receive only (n, replicate) pairs.
_SHARED: tuple = ()


def _set_shared(shared):
    global _SHARED
    _SHARED = shared


def _run_shared(nr):
    target, support, noise, config, proj = _SHARED
    n, r = nr
    return _run_one((target, support, noise, n, r, config, proj, target.beta, config.seed))


def _run_parallel(shared, pairs, jobs):
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        return None
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx, initializer=_set_shared,
                             initargs=(shared,)) as pool:
        return list(pool.map(_run_shared, pairs))


def rate_sweep(target: HolderTarget, support: SupportSpec, noise: NoiseSpec, n_values, config: TrainConfig,
               projector: ProjectionMap | None = None, jobs: int = 1, bootstrap: int = 1000) -> RateReport:
    """Train on each sample size and replicate, estimate excess risk, fit the log-log slope."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 4:
        raise ValueError("need at least 4 sample sizes")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be strictly increasing")
    if config.replicates < 3:
        raise ValueError("need at least 3 replicates")
    if target.d != support.d:
        raise ValueError("target and support dimensions differ")
    if projector is not None and projector.d != support.d:
        raise ValueError("projector input dimension differs from support dimension")
    d_eff = projector.d0 if projector is not None else support.d
    pairs = [(n, r) for n in n_values for r in range(config.replicates)]
    shared = (target, support, noise, config, projector)
    results = _run_parallel(shared, pairs, jobs) if jobs > 1 else None
    if results is None:
        results = [_run_one((target, support, noise, n, r, config, projector, target.beta, config.seed))
                   for n, r in pairs]
    results.sort(key=lambda t: (t[0], t[1]))
    table = np.array([[e for (n2, _, e) in results if n2 == n] for n in n_values])
    failed = np.isnan(table).sum(axis=1)
    if (failed > config.replicates / 2).any():
        bad = [n for n, f in zip(n_values, failed) if f > config.replicates / 2]
        raise SweepFailed(f"training diverged in more than half of the replicates at n={bad}")
    means = np.nanmean(table, axis=1)
    sds = np.nanstd(table, axis=1, ddof=1)
    degenerate = bool((means <= 1e-12).any())
    if degenerate:
        slope, intercept, ci = math.nan, math.nan, (math.nan, math.nan)
    else:
        slope, intercept = fit_slope(n_values, means)
        rng = np.random.default_rng([config.seed, 4])
        boots = []
        for _ in range(bootstrap):
            resampled = []
            for row in table:
                row = row[~np.isnan(row)]
                resampled.append(rng.choice(row, size=len(row), replace=True).mean())
            boots.append(fit_slope(n_values, resampled)[0])
        ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5)))
    shapes = []
    for n in n_values:
        w, dpt, plan = resolve_shape(config, target.beta, d_eff, n)
        shapes.append({"n": n, "width": w, "depth": dpt, "plan_W": plan.W, "plan_D": plan.D})
    settings = {"config": config.as_dict(), "support": support.as_dict(), "noise": noise.as_dict(),
                "target": target.describe(),
                "projector": None if projector is None else
                {"kind": projector.kind, "d": projector.d, "d0": projector.d0, "seed": projector.seed}}
    return RateReport(n_values, results, [float(m) for m in means], [float(s) for s in sds], slope,
                      intercept, ci, -2.0 * target.beta / (2.0 * target.beta + d_eff), degenerate,
                      shapes, settings)
