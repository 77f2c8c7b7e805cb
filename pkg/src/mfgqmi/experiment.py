"""Experiment orchestration: configs, seed fan-out, aggregation and output files.

An experiment is described by a TOML file::

    name = "ring_qmi_off"
    algorithm = "qmi_off"          # fpi | qmi_off | qmi_on
    outer_iters = 50
    n_seeds = 10
    base_seed = 0

    [env]
    kind = "ring_road"             # ring_road | sioux_falls
    # ring_road: any RingRoadParams field; sioux_falls: path, c1, c2, gamma, origin, destination

    [policy]
    kind = "softmax"               # greedy | softmax
    inverse_temperature = 50.0
    schedule = "linear"            # constant | linear

    [fpi]
    sweeps = 20                    # sweeps per FPI iteration; also the base of eta
    warm_start = false

    [qmi]
    eta = 2                        # inner steps = eta * S * sweeps; or set inner_iters
    alpha = { kind = "harmonic", h = 1.0, t0 = 10.0 }
    # or alpha = { kind = "harmonic", prescription = "theory" }: h = 4 / (lambda_min (1 - gamma)), t0 = 4 h
    mixing_offset = 1.0
    exploration = 0.05

    [metrics]
    br_tol = 1e-8
    ip_tol = 1e-12

    [ground_truth]
    mode = "compute"               # compute | load | none
    tol = 1e-10
    k = 50                         # outer iteration whose operator defines the reference
    cache_dir = ".mfg_cache"

    [output]
    dir = "runs/ring_qmi_off"

Relative paths inside a config file are resolved against the file's directory.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import PolicyOperator, uniform_population
from .envs import RingRoadParams, load_topology, make_ring_road, make_sioux_falls
from .envs.base import EnvironmentModel
from .errors import ConfigError
from .fpi import FpiConfig, fpi_solve, ground_truth_mfne
from .metrics import EXPLOITABILITY_NORM, Recorder, canonical_json, config_hash
from .qmi import AlphaSchedule, QmiConfig, harmonic_for_env, run_qmi
from .trace import LearningTrace, TraceRow

log = logging.getLogger(__name__)

ALGORITHMS = ("fpi", "qmi_off", "qmi_on")
TRACE_HEADER = ["k", "samples", "seed", "mse", "exploitability", "wall_ms"]
AGGREGATE_HEADER = ["k", "samples", "mse_mean", "mse_std", "expl_mean", "expl_std"]
TOP_LEVEL_KEYS = {"name", "algorithm", "outer_iters", "n_seeds", "base_seed", "env", "policy", "fpi", "qmi",
                  "metrics", "ground_truth", "output"}


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the normalized TOML tables."""

    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        raw = self.raw
        unknown = set(raw) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if raw.get("algorithm") not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {raw.get('algorithm')!r}")
        for key in ("outer_iters", "n_seeds"):
            value = raw.get(key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if not isinstance(raw.get("base_seed", 0), int):
            raise ConfigError("base_seed must be an integer")
        if "env" not in raw or raw["env"].get("kind") not in ("ring_road", "sioux_falls"):
            raise ConfigError("[env] kind must be ring_road or sioux_falls")
        if self.is_qmi:
            qmi = raw.get("qmi", {})
            if ("eta" in qmi) == ("inner_iters" in qmi):
                raise ConfigError("[qmi] needs exactly one of eta and inner_iters")
        gt = raw.get("ground_truth", {})
        if gt.get("mode", "compute") not in ("compute", "load", "none"):
            raise ConfigError("[ground_truth] mode must be compute, load or none")
        if gt.get("mode") == "load" and "path" not in gt:
            raise ConfigError("[ground_truth] mode = load needs a path")
        # build once so that invalid parameter values surface as config errors early
        self.policy_op()
        if self.is_qmi:
            self.alpha()

    @property
    def name(self) -> str:
        return self.raw.get("name", self.raw["algorithm"])

    @property
    def algorithm(self) -> str:
        return self.raw["algorithm"]

    @property
    def is_qmi(self) -> bool:
        return self.algorithm != "fpi"

    @property
    def outer_iters(self) -> int:
        return self.raw["outer_iters"]

    @property
    def n_seeds(self) -> int:
        return self.raw["n_seeds"]

    @property
    def base_seed(self) -> int:
        return self.raw.get("base_seed", 0)

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else (self.base_dir / path).resolve()

    def with_overrides(self, **changes) -> ExperimentConfig:
        """Copy with top-level keys or ``table.key`` entries replaced."""
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if "." in key:
                table, sub = key.split(".", 1)
                raw.setdefault(table, {})[sub] = value
            else:
                raw[key] = value
        return ExperimentConfig(raw, self.base_dir)

    def build_env(self) -> EnvironmentModel:
        spec = dict(self.raw["env"])
        kind = spec.pop("kind")
        try:
            if kind == "ring_road":
                return make_ring_road(RingRoadParams(**spec))
            path = spec.pop("path", None)
            topo_args = {key: spec.pop(key) for key in ("origin", "destination") if key in spec}
            topology = load_topology(self.resolve(path) if path else None, **topo_args)
            return make_sioux_falls(topology, **spec)
        except TypeError as err:
            raise ConfigError(f"bad [env] parameters: {err}") from None

    def policy_op(self) -> PolicyOperator:
        spec = self.raw.get("policy", {"kind": "greedy"})
        try:
            return PolicyOperator(**spec)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad [policy] table: {err}") from None

    def alpha(self, env: EnvironmentModel | None = None) -> AlphaSchedule:
        """Step-size schedule; ``prescription = "theory"`` derives h and t0 from the environment."""
        spec = dict(self.raw.get("qmi", {}).get("alpha", {"kind": "harmonic"}))
        if spec.pop("prescription", None) == "theory":
            if spec.pop("kind", "harmonic") != "harmonic" or set(spec) - {"lambda_min"}:
                raise ConfigError("[qmi.alpha] prescription = theory only accepts kind = harmonic and lambda_min")
            return harmonic_for_env(env or self.build_env(), spec.get("lambda_min"))
        try:
            return AlphaSchedule(**spec)
        except TypeError as err:
            raise ConfigError(f"bad [qmi.alpha] table: {err}") from None

    @property
    def sweeps(self) -> int:
        return int(self.raw.get("fpi", {}).get("sweeps", 20))

    def metric_tolerances(self) -> tuple[float, float]:
        spec = self.raw.get("metrics", {})
        return float(spec.get("br_tol", 1e-8)), float(spec.get("ip_tol", 1e-12))

    def ground_truth_k(self) -> int:
        return int(self.raw.get("ground_truth", {}).get("k", self.outer_iters))

    def output_dir(self) -> Path:
        return self.resolve(self.raw.get("output", {}).get("dir", f"runs/{self.name}"))

    def to_dict(self) -> dict:
        return self.raw


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return ExperimentConfig(raw, path.resolve().parent)


def resolve_inner_iters(cfg: ExperimentConfig, n_states: int | None = None) -> int:
    """Inner steps per outer iteration: ``eta * S * sweeps`` or the explicit ``inner_iters``."""
    qmi = cfg.raw.get("qmi", {})
    if "inner_iters" in qmi:
        return int(qmi["inner_iters"])
    if n_states is None:
        n_states = cfg.build_env().n_states
    return int(round(qmi["eta"] * n_states * cfg.sweeps))


def qmi_config(cfg: ExperimentConfig, seed: int, env: EnvironmentModel) -> QmiConfig:
    spec = cfg.raw.get("qmi", {})
    options = {key: spec[key] for key in ("mixing_offset", "exploration", "global_clock", "refresh_every")
               if key in spec}
    return QmiConfig(
        variant="off_policy" if cfg.algorithm == "qmi_off" else "on_policy",
        outer_iters=cfg.outer_iters,
        inner_iters=resolve_inner_iters(cfg, env.n_states),
        alpha=cfg.alpha(env),
        policy_op=cfg.policy_op(),
        seed=seed,
        **options,
    )


def fpi_config(cfg: ExperimentConfig) -> FpiConfig:
    spec = cfg.raw.get("fpi", {})
    br_tol, ip_tol = cfg.metric_tolerances()
    return FpiConfig(sweeps_per_iter=cfg.sweeps, outer_iters=cfg.outer_iters, br_tolerance=br_tol,
                     ip_tolerance=ip_tol, policy_op=cfg.policy_op(),
                     warm_start=bool(spec.get("warm_start", False)))


# ---------------------------------------------------------------- ground truth

def ground_truth_key(cfg: ExperimentConfig) -> dict:
    gt = cfg.raw.get("ground_truth", {})
    return {"env": cfg.raw["env"], "policy": cfg.policy_op().at(cfg.ground_truth_k()).to_dict(),
            "tol": float(gt.get("tol", 1e-10))}


def resolve_ground_truth(cfg: ExperimentConfig, tol: float | None = None) -> np.ndarray | None:
    """Reference population for the MSE column: computed (with disk cache), loaded, or none."""
    gt = dict(cfg.raw.get("ground_truth", {}))
    mode = gt.get("mode", "compute")
    if mode == "none":
        return None
    if mode == "load":
        return read_population(cfg.resolve(gt["path"]))
    if tol is not None:
        cfg = cfg.with_overrides(**{"ground_truth.tol": tol})
    key = ground_truth_key(cfg)
    cache_dir = gt.get("cache_dir")
    cache_file = None
    if cache_dir:
        cache_file = cfg.resolve(cache_dir) / f"ground_truth_{config_hash(key)}.csv"
        if cache_file.exists():
            return read_population(cache_file)
    env = cfg.build_env()
    log.info("computing reference equilibrium for %s", cfg.name)
    _, mu_star = ground_truth_mfne(env, cfg.policy_op(), tol=key["tol"], k=cfg.ground_truth_k())
    if cache_file is not None:
        write_population(mu_star, cache_file)
    return mu_star


def write_population(m: np.ndarray, path: Path) -> None:
    lines = ["state,mass"] + [f"{s},{float(x)!r}" for s, x in enumerate(m)]
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_population(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    return np.array([float(r["mass"]) for r in rows])


# ---------------------------------------------------------------- runs

@dataclass
class AggregateResult:
    """Per-k mean and standard deviation (population, ``ddof=0``) across seeds."""

    name: str
    k: np.ndarray
    samples: np.ndarray
    mse_mean: np.ndarray
    mse_std: np.ndarray
    expl_mean: np.ndarray
    expl_std: np.ndarray
    traces: list[LearningTrace]
    meta: dict = field(default_factory=dict)

    @property
    def final_mse(self) -> float:
        return float(self.mse_mean[-1])

    @property
    def final_exploitability(self) -> float:
        return float(self.expl_mean[-1])


def aggregate(name: str, traces: list[LearningTrace], meta: dict | None = None) -> AggregateResult:
    k = traces[0].column("k")
    for trace in traces[1:]:
        if not np.array_equal(trace.column("k"), k):
            raise ConfigError("traces cover different outer iterations")
    mse = np.stack([t.column("mse") for t in traces])
    expl = np.stack([t.column("exploitability") for t in traces])
    return AggregateResult(name, k, traces[0].column("samples"), mse.mean(axis=0), mse.std(axis=0),
                           expl.mean(axis=0), expl.std(axis=0), list(traces), dict(meta or {}))


def run_single(cfg: ExperimentConfig, seed: int, mu_star: np.ndarray | None) -> LearningTrace:
    """One seeded run of the configured algorithm, with metrics recorded every outer iteration."""
    env = cfg.build_env()
    op = cfg.policy_op()
    br_tol, ip_tol = cfg.metric_tolerances()
    hook = Recorder(env, mu_star, op, br_tol, ip_tol)
    q0 = np.zeros(env.valid.shape)
    m0 = uniform_population(env.n_states)
    if cfg.is_qmi:
        trace = run_qmi(env, q0, m0, qmi_config(cfg, seed, env), hook).trace
    else:
        trace = fpi_solve(env, m0, fpi_config(cfg), hook).trace
    return trace.with_meta(seed=seed, config_hash=config_hash(cfg.raw))


def _run_single_job(args) -> LearningTrace:
    raw, base_dir, seed, mu_star = args
    return run_single(ExperimentConfig(raw, Path(base_dir)), seed, mu_star)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, mu_star: np.ndarray | None = None,
                   out_dir: Path | None = None) -> AggregateResult:
    """Resolve the reference, run seeds ``base_seed .. base_seed + n_seeds - 1`` and aggregate.

    Seeds run in up to ``jobs`` worker processes; results are reduced in
    seed order so the output does not depend on scheduling.  When
    ``out_dir`` is given, the CSV files are written there.
    """
    if mu_star is None:
        mu_star = resolve_ground_truth(cfg)
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]
    log.info("running %s over seeds %d..%d with %d job(s)", cfg.name, seeds[0], seeds[-1], jobs)
    tasks = [(cfg.raw, str(cfg.base_dir), seed, mu_star) for seed in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            traces = list(pool.map(_run_single_job, tasks))
    else:
        traces = [_run_single_job(task) for task in tasks]
    meta = {"name": cfg.name, "algorithm": cfg.algorithm, "env": cfg.raw["env"]["kind"],
            "config_hash": config_hash(cfg.raw), "seeds": seeds,
            "exploitability_norm": EXPLOITABILITY_NORM, "std": "population (ddof=0)",
            "config": cfg.raw}
    if cfg.is_qmi:
        meta["inner_iters"] = resolve_inner_iters(cfg)
    result = aggregate(cfg.name, traces, meta)
    if out_dir is not None:
        emit_csv(result, out_dir)
    return result


def fixed_budget_sweep(cfg: ExperimentConfig, total_samples: int, inner_list, jobs: int = 1,
                       step_size: float = 0.001, out_dir: Path | None = None) -> list[AggregateResult]:
    """Run ``cfg`` once per inner length ``T`` with ``K = total_samples / T`` and a constant step size."""
    if not cfg.is_qmi:
        raise ConfigError("a fixed-budget sweep needs a qmi algorithm")
    inner_list = [int(t) for t in inner_list]
    for t in inner_list:
        if t < 1 or total_samples % t:
            raise ConfigError(f"inner length {t} does not divide the budget {total_samples}")
    mu_star = resolve_ground_truth(cfg)
    results = []
    for t in inner_list:
        qmi = {key: value for key, value in cfg.raw.get("qmi", {}).items() if key != "eta"}
        qmi.update(inner_iters=t, alpha={"kind": "constant", "c": step_size})
        sub = cfg.with_overrides(outer_iters=total_samples // t, qmi=qmi, name=f"{cfg.name}_T{t}")
        result = run_experiment(sub, jobs=jobs, mu_star=mu_star,
                                out_dir=None if out_dir is None else Path(out_dir) / f"T{t}")
        results.append(result)
    if out_dir is not None:
        lines = ["T,K,final_mse_mean,final_mse_std,final_expl_mean,final_expl_std"]
        for t, res in zip(inner_list, results):
            lines.append(",".join([str(t), str(total_samples // t), _fmt(res.mse_mean[-1]), _fmt(res.mse_std[-1]),
                                   _fmt(res.expl_mean[-1]), _fmt(res.expl_std[-1])]))
        _atomic_write(Path(out_dir) / "budget_sweep.csv", "\n".join(lines) + "\n")
    return results


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else str(x)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(trace: LearningTrace) -> str:
    seed = trace.meta.get("seed", 0)
    out = [",".join(TRACE_HEADER)]
    for row in trace.rows:
        out.append(",".join([str(row.k), str(row.samples), str(seed), _fmt(row.mse),
                             _fmt(row.exploitability), _fmt(row.wall_ms)]))
    return "\n".join(out) + "\n"


def aggregate_csv(result: AggregateResult) -> str:
    out = [",".join(AGGREGATE_HEADER)]
    for i in range(len(result.k)):
        out.append(",".join([str(int(result.k[i])), str(int(result.samples[i])), _fmt(result.mse_mean[i]),
                             _fmt(result.mse_std[i]), _fmt(result.expl_mean[i]), _fmt(result.expl_std[i])]))
    return "\n".join(out) + "\n"


def emit_csv(result: AggregateResult, out_dir) -> list[Path]:
    """Write ``trace_seed<N>.csv`` per seed, ``aggregate.csv`` and ``meta.json``."""
    out_dir = Path(out_dir)
    written = []
    for trace in result.traces:
        path = out_dir / f"trace_seed{trace.meta.get('seed', 0)}.csv"
        _atomic_write(path, trace_csv(trace))
        written.append(path)
    path = out_dir / "aggregate.csv"
    _atomic_write(path, aggregate_csv(result))
    written.append(path)
    path = out_dir / "meta.json"
    _atomic_write(path, json.dumps(result.meta, indent=2, sort_keys=True, default=str) + "\n")
    written.append(path)
    return written


def read_trace_csv(path) -> LearningTrace:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != TRACE_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    trace = LearningTrace(meta={"seed": int(rows[0]["seed"]) if rows else 0})
    for r in rows:
        trace = trace.append(TraceRow(int(r["k"]), int(r["samples"]), float(r["mse"]),
                                      float(r["exploitability"]), float(r["wall_ms"])))
    return trace


def read_aggregate_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != AGGREGATE_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    return {name: np.array([float(r[name]) for r in rows]) for name in AGGREGATE_HEADER}


def emit_plotdata(series: dict[str, dict[str, np.ndarray]], out_dir, svg: bool = True,
                  log_y: bool = False) -> list[Path]:
    """Long-form ``plot_<metric>.csv`` files (and optional SVG charts) for named aggregate series."""
    out_dir = Path(out_dir)
    written = []
    for metric, label in (("mse", "Mean squared error"), ("expl", "Exploitability")):
        buf = io.StringIO()
        buf.write("series,k,samples,mean,std\n")
        for name, data in series.items():
            for i in range(len(data["k"])):
                buf.write(f"{name},{int(data['k'][i])},{int(data['samples'][i])},"
                          f"{_fmt(data[metric + '_mean'][i])},{_fmt(data[metric + '_std'][i])}\n")
        path = out_dir / f"plot_{metric}.csv"
        _atomic_write(path, buf.getvalue())
        written.append(path)
        if svg:
            path = out_dir / f"plot_{metric}.svg"
            _atomic_write(path, render_svg(series, metric, label, log_y))
            written.append(path)
    return written


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def render_svg(series: dict[str, dict[str, np.ndarray]], metric: str, label: str, log_y: bool = False,
               width: int = 640, height: int = 400) -> str:
    """Mean curve with a shaded one-standard-deviation band per series, against sample count."""
    left, right, top, bottom = 70, 160, 30, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    xs_all, ys_all = [], []
    for data in series.values():
        mean, std = data[metric + "_mean"], data[metric + "_std"]
        xs_all.append(data["samples"])
        ys_all.extend([mean - std, mean + std])
    x_max = float(max(np.max(x) for x in xs_all)) if xs_all else 1.0
    ys = np.concatenate(ys_all) if ys_all else np.array([0.0, 1.0])
    ys = ys[np.isfinite(ys)]
    if log_y:
        ys = ys[ys > 0]
    y_lo, y_hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    transform = np.log10 if log_y else (lambda v: np.asarray(v, dtype=float))
    if log_y:
        y_lo, y_hi = math.log10(y_lo), math.log10(y_hi)
    else:
        y_lo = min(y_lo, 0.0)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return left + plot_w * np.asarray(x, dtype=float) / (x_max or 1.0)

    def py(y):
        with np.errstate(divide="ignore", invalid="ignore"):
            value = transform(np.asarray(y, dtype=float))
        value = np.clip(np.nan_to_num(value, nan=y_lo, neginf=y_lo, posinf=y_hi), y_lo, y_hi)
        return top + plot_h * (1.0 - (value - y_lo) / (y_hi - y_lo))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>',
             f'<text x="{left + plot_w / 2}" y="{height - 12}" text-anchor="middle">samples</text>',
             f'<text x="16" y="{top + plot_h / 2}" text-anchor="middle" '
             f'transform="rotate(-90 16 {top + plot_h / 2})">{_xml(label)}{" (log10)" if log_y else ""}</text>']
    for frac in (0.0, 0.5, 1.0):
        y_val = y_lo + frac * (y_hi - y_lo)
        y_pix = top + plot_h * (1.0 - frac)
        parts.append(f'<text x="{left - 6}" y="{y_pix + 4:.1f}" text-anchor="end">{y_val:.3g}</text>')
        parts.append(f'<text x="{left + frac * plot_w:.1f}" y="{top + plot_h + 16}" '
                     f'text-anchor="middle">{frac * x_max:.3g}</text>')
    for i, (name, data) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        mean, std = data[metric + "_mean"], data[metric + "_std"]
        x = px(data["samples"])
        upper, lower = py(mean + std), py(mean - std)
        band = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(np.concatenate([x, x[::-1]]),
                                                            np.concatenate([upper, lower[::-1]])))
        line = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, py(mean)))
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * i
        parts.append(f'<line x1="{left + plot_w + 10}" y1="{ly}" x2="{left + plot_w + 30}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + plot_w + 35}" y="{ly + 4}">{_xml(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def collect_series(in_dir) -> dict[str, dict[str, np.ndarray]]:
    """Aggregate CSVs under ``in_dir`` keyed by their directory name relative to it."""
    in_dir = Path(in_dir)
    series = {}
    for path in sorted(in_dir.rglob("aggregate.csv")):
        rel = path.parent.relative_to(in_dir)
        name = str(rel) if str(rel) != "." else in_dir.name
        series[name] = read_aggregate_csv(path)
    return series


def config_summary(cfg: ExperimentConfig) -> str:
    return canonical_json(cfg.raw)
