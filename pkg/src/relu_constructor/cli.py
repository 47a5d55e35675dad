"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (JSON).  Keys in the file take the
place of flags; a key that is also passed as a different flag value is an
error.  Exit codes: 0 success, 1 invalid input, 2 computational failure,
3 certification failure.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import bounds, constructions, erm, projection
from . import net as nc
from .targets import (SUPPORT_KINDS, NoiseSpec, SupportSpec, builtin_target, dataset_csv, dataset_sidecar,
                      generate_dataset, sample_X, target_from_description)

ENV_SEED = "RELU_CONSTRUCTOR_SEED"
EXIT_OK, EXIT_INVALID, EXIT_COMPUTE, EXIT_CERT = 0, 1, 2, 3


class ComputeError(click.ClickException):
    exit_code = EXIT_COMPUTE


class InvalidInput(click.ClickException):
    exit_code = EXIT_INVALID


# --- config plumbing -------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInput("config must be a JSON object")
    return doc


def _settings(ctx: click.Context, extra: tuple = ()) -> dict:
    """Merge ``--config`` with flags; unknown keys and flag/config conflicts are errors."""
    config = _load_config(ctx.params.get("config"))
    names = {p.name for p in ctx.command.params if p.name != "config"}
    unknown = sorted(set(config) - names - set(extra))
    if unknown:
        raise InvalidInput(f"unknown config keys: {', '.join(unknown)}")
    merged = {k: v for k, v in ctx.params.items() if k != "config"}
    for key, value in config.items():
        if key in names:
            param = next(p for p in ctx.command.params if p.name == key)
            try:
                value = param.type_cast_value(ctx, value) if value is not None else None
            except click.BadParameter as exc:
                raise InvalidInput(f"config key {key}: {exc.message}") from exc
            if ctx.get_parameter_source(key) == ParameterSource.COMMANDLINE and merged[key] != value:
                raise InvalidInput(f"--{key.replace('_', '-')} conflicts with config value {config[key]!r}")
        merged[key] = value
    return merged


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidInput(f"not a comma-separated list of numbers: {text!r}") from exc


def _jobs(value: int | None) -> int:
    return value if value and value > 0 else (os.cpu_count() or 1)


def _seed_option(f):
    return click.option("--seed", type=int, default=0, envvar=ENV_SEED, show_default=True,
                        help=f"Global seed (falls back to ${ENV_SEED}).")(f)


def _config_option(f):
    return click.option("--config", type=click.Path(dir_okay=False), default=None,
                        help="JSON config; its keys replace flags.")(f)


@click.group()
def cli():
    """Explicit ReLU approximants, sizing formulas and rate experiments."""


# --- approx-build ------------------------------------------------------------------

CASE_KEYS = {"target", "d", "beta", "B0", "N", "M", "profile", "kind", "shift_convention",
             "allow_finite_differences", "value"}


def _build_case(case: dict) -> tuple[dict, bytes]:
    extra = {"value": case["value"]} if case.get("value") is not None else {}
    target = builtin_target(case["target"], case["d"], case["beta"], case["B0"], **extra)
    if case["kind"] == "theorem":
        netw, cert = constructions.build_holder_approximant(
            target, case["N"], case["M"], case["profile"],
            allow_finite_differences=case["allow_finite_differences"], seed=case["seed"])
    else:
        netw, cert = constructions.build_uniform_approximant(
            target, case["N"], case["M"], case["profile"], shift_convention=case["shift_convention"],
            allow_finite_differences=case["allow_finite_differences"], seed=case["seed"])
    return cert.to_dict(), nc.serialize(netw)


def _build_case_safe(case: dict):
    try:
        return _build_case(case), None
    except (constructions.BudgetError, constructions.ConstructionTooLarge) as exc:
        return None, (EXIT_COMPUTE, f"{type(exc).__name__}: {exc}")
    except ValueError as exc:
        return None, (EXIT_INVALID, str(exc))


CERT_COLUMNS = ["case", "kind", "profile", "target", "beta", "d", "N", "M", "bound", "measured", "pass", "W", "D", "S"]


def _cert_row(i: int, cert: dict) -> dict:
    return {"case": i, "kind": cert["kind"], "profile": cert["profile"], "target": cert["target"]["name"],
            "beta": float(cert["beta"]), "d": cert["d"], "N": cert["N"], "M": cert["M"],
            "bound": cert["bound"], "measured": cert["measured"], "pass": cert["pass"],
            "W": cert["stats"]["W"], "D": cert["stats"]["D"], "S": cert["stats"]["S"]}


@cli.command("approx-build")
@_config_option
@click.option("--target", default="cosine_product", show_default=True)
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--B0", "B0", type=float, default=1.0, show_default=True)
@click.option("--N", "N", type=int, default=1, show_default=True)
@click.option("--M", "M", type=int, default=1, show_default=True)
@click.option("--profile", type=click.Choice(constructions.PROFILES), default="simple", show_default=True)
@click.option("--kind", type=click.Choice(["theorem", "uniform"]), default="theorem", show_default=True)
@click.option("--shift-convention", type=click.Choice(constructions.SHIFT_CONVENTIONS), default="cell",
              show_default=True)
@click.option("--allow-finite-differences", is_flag=True, default=False)
@click.option("--out", type=click.Path(file_okay=False), default="approx_out", show_default=True)
@click.option("--jobs", type=int, default=None, help="Worker processes (default: all cores).")
@_seed_option
@click.pass_context
def approx_build(ctx, **_):
    """Build approximants, certify them and write network + certificate files."""
    st = _settings(ctx, extra=("cases",))
    base = {k: st[k] for k in CASE_KEYS - {"value"}}
    base["value"] = None
    cases = st.get("cases") or [{}]
    if not isinstance(cases, list):
        raise InvalidInput("cases must be a list")
    resolved = []
    for i, case in enumerate(cases):
        if not isinstance(case, dict) or set(case) - CASE_KEYS:
            raise InvalidInput(f"case {i}: unknown keys {sorted(set(case) - CASE_KEYS)}")
        resolved.append({**base, **case, "seed": st["seed"]})
    jobs = min(_jobs(st["jobs"]), len(resolved))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_build_case_safe, resolved))
    else:
        outcomes = [_build_case_safe(c) for c in resolved]
    for i, (_, err) in enumerate(outcomes):
        if err is not None:
            code, msg = err
            click.echo(f"case {i}: {msg}", err=True)
            return code
    out = Path(st["out"])
    rows, certs = [], []
    for i, ((cert, payload), _) in enumerate(outcomes):
        net_file = f"case_{i:02d}_network.json"
        cert = {**cert, "network_file": net_file}
        out.mkdir(parents=True, exist_ok=True)
        (out / net_file).write_bytes(payload)
        _write(out / f"case_{i:02d}_certificate.json", json.dumps(cert, indent=2, sort_keys=True) + "\n")
        rows.append(_cert_row(i, cert))
        certs.append(cert)
    table = bounds.format_table(rows, CERT_COLUMNS)
    _write(out / "certificates.txt", table)
    _write(out / "certificates.json", json.dumps(certs, indent=2, sort_keys=True) + "\n")
    click.echo(table, nl=False)
    return EXIT_OK if all(c["pass"] for c in certs) else EXIT_CERT


# --- approx-verify -----------------------------------------------------------------

def verify_certificate(cert: dict, netw: nc.Network) -> list[str]:
    """Replay a certificate; return a list of problems (empty when it holds)."""
    problems = []
    try:
        target = target_from_description(cert["target"])
        kind, N, M = cert["kind"], int(cert["N"]), int(cert["M"])
        grid = cert["grid"]
        K, delta = int(cert["K"]), float(cert["delta"])
        recorded_bound, recorded_measured = float(cert["bound"]), float(cert["measured"])
        recorded_pass = bool(cert["pass"])
    except (KeyError, TypeError, ValueError) as exc:
        return [f"malformed certificate: {exc}"]
    formula = constructions.theorem_bound if kind == "theorem" else constructions.uniform_bound
    bound = formula(target.beta, target.d, target.B0, N, M)
    if not math.isclose(bound, recorded_bound, rel_tol=1e-12, abs_tol=0.0):
        problems.append(f"bound field {recorded_bound!r} differs from the closed form {bound!r}")
    if netw.input_dim != target.d:
        return problems + [f"network input dimension {netw.input_dim} != {target.d}"]
    measured, _, n_points = constructions.measure_error(netw, target, kind, K, delta,
                                                        int(grid["n_random"]), int(grid["seed"]))
    if not math.isclose(measured, recorded_measured, rel_tol=1e-9, abs_tol=1e-12):
        problems.append(f"measured field {recorded_measured!r} differs from replay {measured!r}")
    if n_points != int(grid["n_points"]):
        problems.append(f"grid has {n_points} points, certificate says {grid['n_points']}")
    if measured > bound + constructions.SLACK:
        problems.append(f"replayed error {measured!r} exceeds bound {bound!r}")
    if recorded_pass != (recorded_measured <= recorded_bound + constructions.SLACK):
        problems.append("pass flag inconsistent with recorded fields")
    return problems


@cli.command("approx-verify")
@click.argument("certificate", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Network file (default: the certificate's network_file).")
def approx_verify(certificate, network):
    """Re-evaluate a stored certificate against its network and the closed-form bound."""
    try:
        with open(certificate, encoding="utf-8") as fh:
            cert = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"certificate is not valid JSON: {exc}") from exc
    if network is None:
        if "network_file" not in cert:
            raise InvalidInput("certificate names no network_file; pass --network")
        network = str(Path(certificate).parent / cert["network_file"])
    try:
        netw = nc.load(network)
    except (OSError, nc.NetworkFormatError) as exc:
        raise InvalidInput(f"cannot load network: {exc}") from exc
    problems = verify_certificate(cert, netw)
    if problems:
        for p in problems:
            click.echo(f"FAIL: {p}")
        return EXIT_CERT
    click.echo(f"OK: measured {cert['measured']!r} <= bound {cert['bound']!r}")
    return EXIT_OK


# --- sweep-rate ---------------------------------------------------------------------

DEFAULT_TRAIN = {"width_multiplier": 0.2, "depth_multiplier": 0.0045, "epochs": 20, "min_steps": 5000,
                 "learning_rate": 0.003, "replicates": 3}


def _sweep_objects(st: dict):
    try:
        tdesc = {"name": "cosine_product", "d": 1, "beta": 1.0, "B0": 1.0, **(st.get("target") or {})}
        extra = {"value": tdesc.pop("value")} if "value" in tdesc else {}
        unknown = set(tdesc) - {"name", "d", "beta", "B0"}
        if unknown:
            raise InvalidInput(f"unknown target keys: {sorted(unknown)}")
        target = builtin_target(tdesc["name"], int(tdesc["d"]), float(tdesc["beta"]), float(tdesc["B0"]), **extra)
        support = SupportSpec(**{"kind": "cube", "d": target.d, **(st.get("support") or {})})
        noise = NoiseSpec(**{"kind": "gaussian", "scale": 0.1, **(st.get("noise") or {})})
        train = dict(DEFAULT_TRAIN)
        train.update(st.get("train") or {})
        if st["replicates"] is not None:
            if "replicates" in (st.get("train") or {}) and st["replicates"] != train["replicates"]:
                raise InvalidInput("--replicates conflicts with train.replicates")
            train["replicates"] = st["replicates"]
        train["seed"] = st["seed"]
        config = erm.TrainConfig(**train)
        proj = None
        if st.get("projection"):
            pj = {"kind": "ortho_scaled", "seed": st["seed"], **st["projection"]}
            if set(pj) - {"kind", "d0", "seed"}:
                raise InvalidInput(f"unknown projection keys: {sorted(set(pj) - {'kind', 'd0', 'seed'})}")
            proj = projection.make_projector(pj["kind"], support.d, int(pj["d0"]), int(pj["seed"]))
    except TypeError as exc:
        raise InvalidInput(str(exc)) from exc
    return target, support, noise, config, proj


@cli.command("sweep-rate")
@_config_option
@click.option("--n-values", default="256,512,1024,2048", show_default=True, help="Comma-separated sample sizes.")
@click.option("--replicates", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default="sweep_out", show_default=True)
@click.option("--jobs", type=int, default=None, help="Worker processes (default: all cores).")
@_seed_option
@click.pass_context
def sweep_rate(ctx, **_):
    """Excess-risk sweep over sample sizes with a fitted log-log slope."""
    st = _settings(ctx, extra=("target", "support", "noise", "train", "projection"))
    try:
        target, support, noise, config, proj = _sweep_objects(st)
        n_values = [int(v) for v in _float_list(st["n_values"])]
        report = erm.rate_sweep(target, support, noise, n_values, config, proj, jobs=_jobs(st["jobs"]))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    except erm.SweepFailed as exc:
        raise ComputeError(str(exc)) from exc
    out = Path(st["out"])
    _write(out / "rate.csv", report.to_csv())
    _write(out / "rate_summary.json", report.summary_json())
    _write(out / "rate.dat", report.gnuplot_data())
    _write(out / "rate.gp", report.gnuplot_script("rate.dat"))
    rows = [{"n": n, "mean": m, "sd": s} for n, m, s in zip(report.n_values, report.means, report.sds)]
    click.echo(bounds.format_table(rows, ["n", "mean", "sd"]), nl=False)
    click.echo(f"slope {report.fitted_slope:.4f}  CI [{report.slope_ci[0]:.4f}, {report.slope_ci[1]:.4f}]  "
               f"target exponent {report.target_exponent:.4f}" + ("  (degenerate)" if report.degenerate else ""))
    return EXIT_OK


# --- plan / nre -------------------------------------------------------------------------

@cli.command("plan")
@_config_option
@click.option("--beta", type=float, required=False, default=1.0, show_default=True)
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--n", type=int, default=1024, show_default=True)
@click.option("--profile", type=click.Choice(bounds.PLAN_PROFILES), default="rectangle_min_size", show_default=True)
@click.option("--N", "N", type=int, default=1, show_default=True)
@click.option("--M", "M", type=int, default=1, show_default=True)
@click.option("--B", "B", type=float, default=1.0, show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False, help="Print JSON instead of a table.")
@click.pass_context
def plan(ctx, **_):
    """Width/depth/size plan from the sizing formulas."""
    st = _settings(ctx)
    try:
        p = bounds.plan_architecture(st["beta"], st["d"], st["n"], st["profile"],
                                     {"N": st["N"], "M": st["M"], "B": st["B"]})
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    if st["as_json"]:
        click.echo(p.to_json(), nl=False)
    else:
        row = {"profile": p.profile, "W": p.W, "D": p.D, "S": p.S_estimate, "U": p.U_estimate, "B": p.B}
        click.echo(bounds.format_table([row], ["profile", "W", "D", "S", "U", "B"]), nl=False)
    return EXIT_OK


@cli.command("nre")
@click.argument("first")
@click.argument("second")
def nre_cmd(first, second):
    """log S2 / log S1 for two sizes, or the limiting ratio for two planner profiles."""
    try:
        if first in bounds.PLAN_PROFILES and second in bounds.PLAN_PROFILES:
            value = bounds.asymptotic_nre(first, second)
        else:
            value = bounds.nre(float(first), float(second))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    click.echo(repr(float(value)))
    return EXIT_OK


# --- project / minkowski ----------------------------------------------------------------

@cli.command("project")
@_config_option
@click.option("--kind", type=click.Choice(projection.PROJECTOR_KINDS), default="ortho_scaled", show_default=True)
@click.option("--d", type=int, default=10, show_default=True)
@click.option("--d0", type=int, default=4, show_default=True)
@click.option("--support", type=click.Choice(SUPPORT_KINDS), default="manifold_neighborhood", show_default=True)
@click.option("--intrinsic-dim", type=int, default=1, show_default=True)
@click.option("--points", type=int, default=2000, show_default=True)
@click.option("--pairs", type=int, default=10_000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the projector as a network JSON.")
@_seed_option
@click.pass_context
def project(ctx, **_):
    """Draw a projector and audit its squared-distance distortion on sampled support points."""
    st = _settings(ctx)
    try:
        proj = projection.make_projector(st["kind"], st["d"], st["d0"], st["seed"])
        support = SupportSpec(st["support"], st["d"], st["intrinsic_dim"], embedding_seed=st["seed"])
        pts = sample_X(support, st["points"], st["seed"])
        rep = projection.distortion_audit(proj, *projection.random_pairs(pts, st["pairs"], st["seed"]))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    if st["out"]:
        Path(st["out"]).parent.mkdir(parents=True, exist_ok=True)
        Path(st["out"]).write_bytes(proj.serialize())
    row = {"kind": proj.kind, "d": proj.d, "d0": proj.d0, "min_ratio": rep.min_ratio,
           "max_ratio": rep.max_ratio, "spread": rep.spread, "skipped": rep.n_skipped}
    click.echo(bounds.format_table([row], list(row)), nl=False)
    return EXIT_OK


def _sample_set(name: str, n: int, d: int, seed: int) -> np.ndarray:
    if name == "segment":
        return sample_X(SupportSpec("minkowski_set", d), n, seed)
    if name == "cantor":
        return sample_X(SupportSpec("minkowski_set", d, cantor=True), n, seed)
    if name == "square":
        return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, 2))
    raise InvalidInput(f"unknown sample {name!r}")


@cli.command("minkowski")
@_config_option
@click.option("--sample", type=click.Choice(["segment", "square", "cantor"]), default="segment", show_default=True)
@click.option("--points-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV of points (header row, one point per row); overrides --sample.")
@click.option("--n-points", type=int, default=4000, show_default=True)
@click.option("--d", type=int, default=10, show_default=True)
@click.option("--radii", default="0.2,0.1,0.05,0.025", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write (radius,count) CSV.")
@_seed_option
@click.pass_context
def minkowski(ctx, **_):
    """Covering-number slope estimate of the Minkowski dimension."""
    st = _settings(ctx)
    try:
        if st["points_file"]:
            pts = np.loadtxt(st["points_file"], delimiter=",", skiprows=1, ndmin=2)
        else:
            pts = _sample_set(st["sample"], st["n_points"], st["d"], st["seed"])
        est = projection.estimate_minkowski_dim(pts, _float_list(st["radii"]))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    if st["out"]:
        _write(Path(st["out"]), est.to_csv())
    rows = [{"radius": r, "count": c} for r, c in zip(est.radii, est.counts)]
    click.echo(bounds.format_table(rows, ["radius", "count"]), nl=False)
    click.echo(f"slope {est.slope:.4f}")
    return EXIT_OK


# --- dataset-gen -------------------------------------------------------------------------

@cli.command("dataset-gen")
@_config_option
@click.option("--target", default="cosine_product", show_default=True)
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--B0", "B0", type=float, default=1.0, show_default=True)
@click.option("--support", type=click.Choice(SUPPORT_KINDS), default="cube", show_default=True)
@click.option("--intrinsic-dim", type=int, default=1, show_default=True)
@click.option("--rho", type=float, default=0.0, show_default=True)
@click.option("--cantor", is_flag=True, default=False)
@click.option("--noise", type=click.Choice(["none", "gaussian", "laplace"]), default="gaussian", show_default=True)
@click.option("--noise-scale", type=float, default=0.1, show_default=True)
@click.option("--n", type=int, default=256, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="dataset.csv", show_default=True)
@_seed_option
@click.pass_context
def dataset_gen(ctx, **_):
    """Write a synthetic regression sample as CSV plus a JSON sidecar."""
    st = _settings(ctx)
    try:
        target = builtin_target(st["target"], st["d"], st["beta"], st["B0"])
        support = SupportSpec(st["support"], st["d"], st["intrinsic_dim"], embedding_seed=st["seed"],
                              rho=st["rho"], cantor=st["cantor"])
        noise = NoiseSpec(st["noise"], st["noise_scale"])
        data = generate_dataset(target, support, noise, st["n"], st["seed"])
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    out = Path(st["out"])
    _write(out, dataset_csv(data))
    _write(out.with_suffix(".json"), dataset_sidecar(target, support, noise, st["n"], st["seed"]))
    click.echo(f"wrote {len(data)} rows to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        rv = cli.main(args=argv, prog_name="relu-constructor", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return EXIT_INVALID
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return EXIT_INVALID
    return rv if isinstance(rv, int) else EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
