"""Monte Carlo coverage and expected length of fiducial intervals.

Every (grid point, replication) pair draws from its own counter-based
stream, so reports are bit-identical for any number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .expansions import StandardizedExpansion, fd_correction, mle_polynomial
from .fiducial_core import FiducialError, confidence_interval
from .numerics import Bracket, NumericsError, gamma_quantile, std_normal_quantile
from .pstar import (
    BvnRhoData,
    HyperbolaData,
    bvn_models,
    hyperbola_exact_fd,
    hyperbola_normal_fd,
    pstar_fd,
    hyperbola_pstar_model,
)

__all__ = [
    "ExperimentError",
    "ExperimentPlan",
    "CoverageRow",
    "CoverageReport",
    "ModelAdapter",
    "MODELS",
    "derive_stream",
    "run_experiment",
    "export_report",
    "read_csv_report",
    "version_string",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("theta", "method", "coverage", "coverage_se", "mean_length", "length_se")
CHUNK = 250
MAX_FAILURE_RATE = 1e-3
_STREAM_KEY = b"fidkit-stream-v1"


class ExperimentError(RuntimeError):
    pass


def derive_stream(master_seed: int, grid_index: int, replication: int) -> np.random.Generator:
    """Independent generator for one replication, from a keyed hash of the triple."""
    if min(master_seed, grid_index, replication) < 0:
        raise ValueError("seed, grid index and replication must be nonnegative")
    msg = struct.pack("<QQQ", master_seed, grid_index, replication)
    digest = hashlib.blake2b(msg, digest_size=16, key=_STREAM_KEY).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


# model adapters


@dataclass(frozen=True)
class ModelAdapter:
    """``simulate(theta, n, rng) -> data``; ``intervals(data, methods, n, level) -> {method: (lo, hi)}``."""

    name: str
    methods: frozenset
    domain: Bracket
    simulate: Callable
    intervals: Callable


# exponential mean: b = mu_hat^2, l''' = 4/mu_hat^3, so the standardized
# correction b^{3/2} l''' = 4 does not depend on the data
_EXP_SKEW = 4.0
_exp_cache: dict = {}


def _exp_standardized(kind: str, n: int, level: float) -> tuple[float, float]:
    key = (kind, n, level)
    hit = _exp_cache.get(key)
    if hit is None:
        g = fd_correction(1.0, _EXP_SKEW) if kind == "fd" else mle_polynomial("exponential")
        psi = StandardizedExpansion(n, g)
        a = 0.5 * (1.0 - level)
        hit = _exp_cache.setdefault(key, (psi.quantile(a), psi.quantile(1.0 - a)))
    return hit


def _exp_simulate(mu, n, rng):
    return float(rng.exponential(mu, size=n).mean())


def _exp_intervals(mu_hat, methods, n, level):
    out = {}
    a = 0.5 * (1.0 - level)
    root = math.sqrt(n)
    for m in methods:
        if m == "exact":
            # H(mu) = Pr(Gamma(n, 1) >= n mu_hat / mu)
            out[m] = (n * mu_hat / gamma_quantile(1.0 - a, n, 1.0), n * mu_hat / gamma_quantile(a, n, 1.0))
        elif m == "fd-expansion":
            zl, zu = _exp_standardized("fd", n, level)
            out[m] = (mu_hat * (1.0 + zl / root), mu_hat * (1.0 + zu / root))
        elif m == "mle-expansion":
            wl, wu = _exp_standardized("mle", n, level)
            out[m] = (mu_hat * (1.0 - wu / root), mu_hat * (1.0 - wl / root))
        elif m == "normal-approx":
            z = std_normal_quantile(1.0 - a)
            out[m] = (mu_hat * (1.0 - z / root), mu_hat * (1.0 + z / root))
    return out


def _hyp_simulate(eta, n, rng):
    s1 = float(rng.exponential(math.exp(eta), size=n).sum())
    s2 = float(rng.exponential(math.exp(-eta), size=n).sum())
    return HyperbolaData(n, s1, s2)


def _hyp_intervals(data, methods, n, level):
    builders = {
        "exact": hyperbola_exact_fd,
        "normal-approx": hyperbola_normal_fd,
        "fd-expansion": hyperbola_normal_fd,
        "pstar": lambda d: pstar_fd(hyperbola_pstar_model(d)),
    }
    out = {}
    for m in methods:
        ci = confidence_interval(builders[m](data), level)
        out[m] = (ci.lower, ci.upper)
    return out


def _bvn_simulate(rho, n, rng):
    z = rng.standard_normal((2, n))
    x = z[0]
    y = rho * z[0] + math.sqrt(1.0 - rho * rho) * z[1]
    return BvnRhoData.from_sample(x, y)


def _bvn_intervals(data, methods, n, level):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for m, fd in bvn_models(data, tuple(methods)).items():
            ci = confidence_interval(fd, level)
            out[m] = (ci.lower, ci.upper)
    return out


MODELS: dict[str, ModelAdapter] = {
    "exponential": ModelAdapter(
        "exponential",
        frozenset({"exact", "fd-expansion", "mle-expansion", "normal-approx"}),
        Bracket(0.0, math.inf),
        _exp_simulate,
        _exp_intervals,
    ),
    "hyperbola": ModelAdapter(
        "hyperbola",
        frozenset({"exact", "normal-approx", "fd-expansion", "pstar"}),
        Bracket(-math.inf, math.inf),
        _hyp_simulate,
        _hyp_intervals,
    ),
    "bvn-rho": ModelAdapter(
        "bvn-rho",
        frozenset({"pstar", "pearson-r", "pearson-r-exact", "fisher-z", "jeffreys", "expansion0", "expansion1"}),
        Bracket(-1.0, 1.0),
        _bvn_simulate,
        _bvn_intervals,
    ),
}


@dataclass(frozen=True)
class ExperimentPlan:
    model: str
    methods: tuple[str, ...]
    grid: tuple[float, ...]
    n: int
    level: float
    replications: int
    master_seed: int
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        adapter = MODELS.get(self.model)
        if adapter is None:
            raise ExperimentError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        bad = [m for m in self.methods if m not in adapter.methods]
        if bad:
            raise ExperimentError(f"methods {bad} are not available for model {self.model!r}")
        if not self.methods:
            raise ExperimentError("no methods requested")
        if self.replications < 100:
            raise ExperimentError("replications must be at least 100")
        if not 0.0 < self.level < 1.0:
            raise ExperimentError("level must lie in (0, 1)")
        if self.n < 2:
            raise ExperimentError("n must be at least 2")
        if self.master_seed < 0:
            raise ExperimentError("seed must be nonnegative")
        outside = [g for g in self.grid if not adapter.domain.contains(g) or g in (adapter.domain.lo, adapter.domain.hi)]
        if not self.grid or outside:
            raise ExperimentError(f"grid points {outside} are outside the {self.model} parameter domain")

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentPlan":
        required = ("model", "methods", "grid", "n", "level", "replications", "seed")
        missing = [k for k in required if k not in cfg]
        if missing:
            raise ExperimentError(f"config is missing {missing}")
        return cls(
            model=cfg["model"],
            methods=tuple(cfg["methods"]),
            grid=tuple(cfg["grid"]),
            n=int(cfg["n"]),
            level=float(cfg["level"]),
            replications=int(cfg["replications"]),
            master_seed=int(cfg["seed"]),
            notes=str(cfg.get("notes", "")),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["grid"] = list(self.grid)
        return d


@dataclass(frozen=True)
class CoverageRow:
    theta: float
    method: str
    coverage: float
    coverage_se: float
    mean_length: float
    length_se: float


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple[CoverageRow, ...]
    plan: ExperimentPlan | None = None
    failures: dict = field(default_factory=dict)

    def get(self, theta: float, method: str) -> CoverageRow:
        for r in self.rows:
            if r.method == method and r.theta == theta:
                return r
        raise KeyError((theta, method))


def _run_chunk(plan: ExperimentPlan, gi: int, start: int, stop: int) -> tuple[int, int, np.ndarray]:
    """Interval endpoints, shape (reps, methods, 2); NaN marks a failed replication."""
    adapter = MODELS[plan.model]
    theta = plan.grid[gi]
    out = np.full((stop - start, len(plan.methods), 2), np.nan)
    for i, rep in enumerate(range(start, stop)):
        rng = derive_stream(plan.master_seed, gi, rep)
        data = adapter.simulate(theta, plan.n, rng)
        for k, m in enumerate(plan.methods):
            try:
                lo, hi = adapter.intervals(data, (m,), plan.n, plan.level)[m]
            except (NumericsError, FiducialError, ValueError, ArithmeticError):
                continue
            if math.isfinite(lo) and math.isfinite(hi) and hi >= lo:
                out[i, k] = lo, hi
    return gi, start, out


def _worker_count(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("FIDKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ExperimentError(f"FIDKIT_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def run_experiment(plan: ExperimentPlan, workers: int | None = None) -> CoverageReport:
    """Coverage and mean length for every (grid point, method) of ``plan``.

    ``workers`` defaults to ``FIDKIT_THREADS`` or the CPU count. The result
    does not depend on it.
    """
    jobs = [
        (gi, start, min(start + CHUNK, plan.replications))
        for gi in range(len(plan.grid))
        for start in range(0, plan.replications, CHUNK)
    ]
    nw = min(_worker_count(workers), len(jobs))
    if nw == 1:
        results = [_run_chunk(plan, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            futures = [pool.submit(_run_chunk, plan, *job) for job in jobs]
            results = [f.result() for f in futures]
    results.sort(key=lambda r: (r[0], r[1]))

    rows = []
    failures = {}
    for gi, theta in enumerate(plan.grid):
        ends = np.concatenate([r[2] for r in results if r[0] == gi], axis=0)
        for k, m in enumerate(plan.methods):
            lo, hi = ends[:, k, 0], ends[:, k, 1]
            ok = ~np.isnan(lo)
            n_fail = int(ok.size - ok.sum())
            if n_fail:
                failures[(theta, m)] = n_fail
            if n_fail >= MAX_FAILURE_RATE * plan.replications:
                raise ExperimentError(
                    f"{m} failed in {n_fail} of {plan.replications} replications at theta={theta}"
                )
            lo, hi = lo[ok], hi[ok]
            reps = lo.size
            hit = (lo <= theta) & (theta <= hi)
            cov = float(hit.sum()) / reps
            length = hi - lo
            rows.append(
                CoverageRow(
                    theta=theta,
                    method=m,
                    coverage=cov,
                    coverage_se=math.sqrt(cov * (1.0 - cov) / reps),
                    mean_length=float(np.mean(length)),
                    length_se=float(np.std(length, ddof=1) / math.sqrt(reps)),
                )
            )
    return CoverageReport(tuple(rows), plan, failures)


# export


def version_string() -> str:
    """``v<version>`` plus ``git describe`` output when run from a checkout."""
    base = f"v{__version__}"
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return base
    tag = desc.stdout.strip()
    return f"{base}-g{tag}" if desc.returncode == 0 and tag else base


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(report: CoverageReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r.theta), r.method, _fmt(r.coverage), _fmt(r.coverage_se), _fmt(r.mean_length), _fmt(r.length_se)])
    return buf.getvalue()


def _metadata(report: CoverageReport, extra: dict | None = None) -> dict:
    meta = {
        "plan": report.plan.to_dict() if report.plan else None,
        "seed": report.plan.master_seed if report.plan else None,
        "version": version_string(),
        "failures": [{"theta": t, "method": m, "count": c} for (t, m), c in sorted(report.failures.items())],
    }
    if extra:
        meta.update(extra)
    return meta


def export_report(report: CoverageReport, fmt: str, path: str | os.PathLike, extra_meta: dict | None = None) -> Path:
    """Write ``report`` as CSV (plus ``<path>.meta.json``) or as JSON."""
    path = Path(path)
    try:
        if fmt == "csv":
            path.write_text(_csv_text(report), encoding="utf-8")
            meta_path = path.with_name(path.name + ".meta.json")
            meta_path.write_text(json.dumps(_metadata(report, extra_meta), indent=2) + "\n", encoding="utf-8")
        elif fmt == "json":
            doc = {"metadata": _metadata(report, extra_meta), "rows": [asdict(r) for r in report.rows]}
            path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"could not write report to {path}: {exc}") from exc
    return path


def read_csv_report(path: str | os.PathLike) -> list[CoverageRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [
            CoverageRow(float(r["theta"]), r["method"], float(r["coverage"]), float(r["coverage_se"]),
                        float(r["mean_length"]), float(r["length_se"]))
            for r in reader
        ]

