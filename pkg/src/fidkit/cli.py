"""Command-line front end.

    fidkit <command> --config <path> [--out <path>] [--format csv|json] [--validate]

Commands: fd, curve, expand, pstar, mvn, coverage. Configs are JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .expansions import (
    LogLikProfile,
    StandardizedExpansion,
    expansion_spec,
    fd_expansion,
    jeffreys_posterior,
    mle_expansion,
    mle_polynomial,
)
from .fiducial_core import (
    FidDistribution,
    binomial_family,
    confidence_curve,
    confidence_interval,
    exponential_mean_family,
    fd_density,
    fd_from_family,
    fd_quantile,
    normal_fd,
)
from .multivariate_nef import (
    asymptotic_fd,
    build_schur,
    multinomial_nef,
    phi_jacobian,
    phi_map,
    triangular_transform,
)
from .pstar import (
    BvnRhoData,
    HyperbolaData,
    bvn_models,
    exponential_pstar_model,
    hyperbola_exact_fd,
    hyperbola_normal_fd,
    hyperbola_pstar_model,
    pstar_fd,
)
from .sim_harness import ExperimentError, ExperimentPlan, export_report, run_experiment, version_string

COMMANDS = ("fd", "curve", "expand", "pstar", "mvn", "coverage")


class ConfigError(ValueError):
    pass


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing {missing}")


# FD construction from a config


BVN_ALIASES = {"r": "pearson-r", "rstab": "fisher-z"}


def _exponential_fds(cfg: dict, methods) -> dict[str, FidDistribution]:
    _require(cfg, "n", "mu_hat")
    n, mu = int(cfg["n"]), float(cfg["mu_hat"])
    out = {}
    for m in methods:
        if m == "exact":
            out[m] = fd_from_family(exponential_mean_family(n), mu)
        elif m == "fd-expansion":
            prof = LogLikProfile(lambda t: -mu / t - math.log(t), mu, scale_hint=mu)
            out[m] = fd_expansion(expansion_spec(prof, n))
        elif m == "mle-expansion":
            out[m] = mle_expansion(mu, n, mu * mu, mle_polynomial("exponential"))
        elif m == "normal-approx":
            out[m] = normal_fd(mu, mu / math.sqrt(n))
        elif m == "jeffreys":
            out[m] = jeffreys_posterior(
                lambda t: n * (-mu / t - np.log(t)), lambda t: -np.log(t), (0.0, math.inf), mu, mu / math.sqrt(n)
            )
        elif m == "pstar":
            out[m] = pstar_fd(exponential_pstar_model(n, mu))
        else:
            raise ConfigError(f"unknown exponential method {m!r}")
    return out


def _hyperbola_fds(cfg: dict, methods) -> dict[str, FidDistribution]:
    _require(cfg, "n", "s1", "s2")
    data = HyperbolaData(int(cfg["n"]), float(cfg["s1"]), float(cfg["s2"]))
    table = {
        "exact": hyperbola_exact_fd,
        "approx": hyperbola_normal_fd,
        "pstar": lambda d: pstar_fd(hyperbola_pstar_model(d)),
    }
    unknown = [m for m in methods if m not in table]
    if unknown:
        raise ConfigError(f"unknown hyperbola methods {unknown}")
    return {m: table[m](data) for m in methods}


def _bvn_fds(cfg: dict, methods) -> dict[str, FidDistribution]:
    _require(cfg, "n", "s1", "s2", "r")
    data = BvnRhoData.from_stats(int(cfg["n"]), float(cfg["s1"]), float(cfg["s2"]), float(cfg["r"]))
    try:
        built = bvn_models(data, tuple(BVN_ALIASES.get(m, m) for m in methods))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {m: built[BVN_ALIASES.get(m, m)] for m in methods}


def _binomial_fds(cfg: dict, methods) -> dict[str, FidDistribution]:
    _require(cfg, "n", "s")
    if list(methods) != ["exact"]:
        raise ConfigError("binomial supports only the exact method")
    return {"exact": fd_from_family(binomial_family(int(cfg["n"])), int(cfg["s"]))}


FD_MODELS = {
    "exponential": _exponential_fds,
    "hyperbola": _hyperbola_fds,
    "bvn-rho": _bvn_fds,
    "binomial": _binomial_fds,
}


def build_fds(cfg: dict) -> dict[str, FidDistribution]:
    _require(cfg, "model", "methods")
    builder = FD_MODELS.get(cfg["model"])
    if builder is None:
        raise ConfigError(f"unknown model {cfg['model']!r}; choose from {sorted(FD_MODELS)}")
    return builder(cfg, list(cfg["methods"]))


def _grid(cfg: dict) -> np.ndarray:
    _require(cfg, "grid")
    g = cfg["grid"]
    if not all(k in g for k in ("lo", "hi", "points")):
        raise ConfigError("grid needs lo, hi and points")
    if int(g["points"]) < 2:
        raise ConfigError("grid needs at least 2 points")
    if not float(g["lo"]) < float(g["hi"]):
        raise ConfigError("grid lo must be below hi")
    return np.linspace(float(g["lo"]), float(g["hi"]), int(g["points"]))


# output helpers


def _metadata(command: str, cfg: dict, extra: dict | None = None) -> dict:
    meta = {"command": command, "config": cfg, "seed": cfg.get("seed"), "version": version_string()}
    if extra:
        meta.update(extra)
    return meta


def _write_table(columns, rows, out: Path | None, fmt: str, meta: dict) -> None:
    if fmt == "json":
        doc = {"metadata": meta, "rows": [dict(zip(columns, r)) for r in rows]}
        text = json.dumps(doc, indent=2) + "\n"
        if out is None:
            sys.stdout.write(text)
        else:
            out.write_text(text, encoding="utf-8")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        out.write_text(buf.getvalue(), encoding="utf-8")
        out.with_name(out.name + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _write_json(doc: dict, out: Path | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _per_method_path(out: Path | None, method: str, many: bool) -> Path | None:
    if out is None or not many:
        return out
    return out.with_name(f"{out.stem}_{method}{out.suffix}")


# commands


def cmd_fd(cfg, out, fmt, validate):
    _require(cfg, "level")
    if validate:
        return
    level = float(cfg["level"])
    probs = [float(p) for p in cfg.get("quantiles", (0.025, 0.05, 0.5, 0.95, 0.975))]
    rows = []
    for m, fd in build_fds(cfg).items():
        ci = confidence_interval(fd, level)
        rows.append([m, level, ci.lower, ci.upper, fd_quantile(fd, 0.5)] + [fd_quantile(fd, p) for p in probs])
    cols = ["method", "level", "lower", "upper", "median"] + [f"q{p:g}" for p in probs]
    _write_table(cols, rows, out, fmt, _metadata("fd", cfg))


def cmd_curve(cfg, out, fmt, validate):
    grid = _grid(cfg)
    if validate:
        return
    fds = build_fds(cfg)
    for m, fd in fds.items():
        rows = [[float(t), fd.cdf(float(t)), fd_density(fd, float(t)), confidence_curve(fd, float(t))] for t in grid]
        path = _per_method_path(out, m, len(fds) > 1)
        _write_table(["theta", "cdf", "density", "cc"], rows, path, fmt, _metadata("curve", cfg, {"method": m}))


def cmd_expand(cfg, out, fmt, validate):
    _require(cfg, "model", "n", "mu_hat", "level")
    if cfg["model"] != "exponential":
        raise ConfigError("expand supports the exponential model")
    if validate:
        return
    n, mu, level = int(cfg["n"]), float(cfg["mu_hat"]), float(cfg["level"])
    prof = LogLikProfile(lambda t: -mu / t - math.log(t), mu, scale_hint=mu)
    spec = expansion_spec(prof, n)
    fd = fd_expansion(spec)
    mle = mle_expansion(mu, n, spec.b, mle_polynomial("exponential"))
    ci_fd, ci_mle = confidence_interval(fd, level), confidence_interval(mle, level)
    psi = StandardizedExpansion(n, spec.correction)
    doc = {
        "metadata": _metadata("expand", cfg, {"central_monotone": fd.meta["central_monotone"]}),
        "b": spec.b,
        "ell3": spec.ell3,
        "skew_coefficient": spec.b**1.5 * spec.ell3,
        "correction": [float(c) for c in spec.correction.coef],
        "fd_interval": [ci_fd.lower, ci_fd.upper],
        "mle_interval": [ci_mle.lower, ci_mle.upper],
        "psi_at_zero": psi.cdf(0.0),
    }
    _write_json(doc, out)


def cmd_pstar(cfg, out, fmt, validate):
    _require(cfg, "model", "level")
    if cfg["model"] not in ("hyperbola", "exponential", "bvn-rho"):
        raise ConfigError(f"no p* model for {cfg['model']!r}")
    grid = _grid(cfg) if "grid" in cfg else None
    if validate:
        return
    fd = build_fds({**cfg, "methods": ["pstar"]})["pstar"]
    ci = confidence_interval(fd, float(cfg["level"]))
    if grid is None:
        _write_table(["method", "level", "lower", "upper"], [["pstar", float(cfg["level"]), ci.lower, ci.upper]],
                     out, fmt, _metadata("pstar", cfg))
        return
    rows = [[float(t), fd.cdf(float(t)), fd_density(fd, float(t)), confidence_curve(fd, float(t))] for t in grid]
    _write_table(["theta", "cdf", "density", "cc"], rows, out, fmt,
                 _metadata("pstar", cfg, {"interval": [ci.lower, ci.upper], "level": float(cfg["level"])}))


def cmd_mvn(cfg, out, fmt, validate):
    _require(cfg, "counts", "n")
    counts = np.asarray(cfg["counts"], dtype=float)
    n = int(cfg["n"])
    if counts.ndim != 1 or counts.size < 1:
        raise ConfigError("counts must be a nonempty list")
    if np.any(counts <= 0) or counts.sum() >= n:
        raise ConfigError("counts must be positive with total below n (interior of the simplex)")
    if validate:
        return
    x = counts / n
    fd = asymptotic_fd(multinomial_nef(counts.size), x, n)
    V = fd.covariance * n
    sch = build_schur(V)
    doc = {
        "metadata": _metadata("mvn", cfg, {"schur_residual": sch.residual}),
        "mean": fd.mean.tolist(),
        "V": V.tolist(),
        "covariance": fd.covariance.tolist(),
        "A": sch.A.tolist(),
        "Q": sch.q.tolist(),
    }
    if counts.size == 2 and cfg.get("phi", True):
        phi = triangular_transform(fd, phi_map, phi_jacobian)
        doc["phi"] = {"mean": phi.mean.tolist(), "covariance": phi.covariance.tolist()}
    _write_json(doc, out)


def cmd_coverage(cfg, out, fmt, validate):
    try:
        plan = ExperimentPlan.from_dict(cfg)
    except ExperimentError as exc:
        raise ConfigError(str(exc)) from exc
    if out is None and not validate:
        raise ConfigError("coverage needs --out")
    if validate:
        return
    report = run_experiment(plan, cfg.get("workers"))
    export_report(report, fmt, out, {"command": "coverage", "config": cfg})


HANDLERS = {
    "fd": cmd_fd,
    "curve": cmd_curve,
    "expand": cmd_expand,
    "pstar": cmd_pstar,
    "mvn": cmd_mvn,
    "coverage": cmd_coverage,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fidkit", description="Fiducial and confidence distributions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--validate", action="store_true", help="check the config and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"fidkit: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    if not isinstance(cfg, dict):
        print("fidkit: config must be a JSON object", file=sys.stderr)
        return 2
    if cfg.get("command", args.command) != args.command:
        print(f"fidkit: config is for {cfg['command']!r}, not {args.command!r}", file=sys.stderr)
        return 2
    fmt = args.format or ("json" if args.command in ("expand", "mvn") else "csv")
    try:
        HANDLERS[args.command](cfg, args.out, fmt, args.validate)
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"fidkit: invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"fidkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.validate:
        print("config OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
