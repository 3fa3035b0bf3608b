"""Convergence-rate experiments: sample, solve, compare with ground truth, regress."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .amdp import (Method, anchored_amdp, check_adversarial_power, delta_bound, ground_truth_gain,
                   reduce_to_dmdp)
from .duals import UncertaintySet
from .errors import ConfigError, DramdpError, InsufficientData
from .instances import hard_mdp, random_mdp
from .model import MdpModel, min_support_probability, sample_transitions

log = logging.getLogger(__name__)

CSV_HEADER = ["n", "seed", "algorithm", "gain", "abs_error", "wall_time_ms"]
DEFAULT_N_GRID = [int(round(10 ** e)) for e in np.arange(2.0, 5.01, 0.5)]


@dataclass
class ExperimentConfig:
    family: str = "hard"
    p: float = 0.25
    states: int = 20
    actions: int = 30
    instance_seed: int = 0
    sigma_max: float = 100.0
    divergence: str = "kl"
    delta: float = 0.01
    k: float = 2.0
    algorithm: str = "both"
    n_grid: list[int] = field(default_factory=lambda: list(DEFAULT_N_GRID))
    seeds: int = 1
    seed: int = 0
    gt_precision: float = 1e-6
    reduction_tol: float = 1e-6
    anchored_tol: float = 1e-9
    anchor_state: int = 0
    out_dir: str = "results"
    plot: bool = True
    record_timing: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.family not in ("hard", "random"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.divergence not in ("kl", "fk"):
            raise ConfigError(f"unknown divergence {self.divergence!r}")
        if self.algorithm not in ("reduction", "anchored", "both"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.delta >= 0:
            raise ConfigError("delta must be non-negative")
        if self.divergence == "fk" and not self.k > 1:
            raise ConfigError("k must exceed 1")
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be a strictly increasing list of positive sizes")
        self.n_grid = grid
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        if not 0 < self.gt_precision < 1:
            raise ConfigError("gt_precision must lie in (0, 1)")

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def uncertainty_set(self) -> UncertaintySet:
        if self.divergence == "kl":
            return UncertaintySet.kl(self.delta)
        return UncertaintySet.fk(self.delta, self.k)

    def build_model(self) -> MdpModel:
        if self.family == "hard":
            return hard_mdp(self.p)
        return random_mdp(self.states, self.actions, self.instance_seed, self.sigma_max)

    def methods(self) -> list[Method]:
        if self.algorithm == "both":
            return [Method.REDUCTION, Method.ANCHORED]
        return [Method(self.algorithm)]


@dataclass
class ExperimentRecord:
    n: int
    seed: int
    algorithm: str
    gain: float
    abs_error: float
    wall_time_ms: float
    message: str = ""

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.abs_error)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    points: int


def sample_seed(base: int, n: int, rep: int) -> int:
    """Per-(n, replicate) sampling seed derived from the experiment seed."""
    return int(np.random.SeedSequence([int(base), int(n), int(rep)]).generate_state(1, np.uint32)[0])


def _cache_key(model: MdpModel, uset: UncertaintySet, precision: float) -> str:
    payload = json.dumps({"model": model.to_dict(), "uset": uset.to_dict(), "precision": precision},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def cached_ground_truth(model: MdpModel, uset: UncertaintySet, precision: float,
                        cache_path: Path | None) -> float:
    key = _cache_key(model, uset, precision)
    cache = {}
    if cache_path is not None and cache_path.exists():
        cache = json.loads(cache_path.read_text(encoding="utf-8"))
        if key in cache:
            return float(cache[key])
    g = ground_truth_gain(model, uset, precision)
    if cache_path is not None:
        cache[key] = g
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps(cache, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return g


def run_experiment(config: ExperimentConfig, cache_path: Path | None = None,
                   ground_truth: float | None = None) -> list[ExperimentRecord]:
    model = config.build_model()
    uset = config.uncertainty_set()
    if model.n_actions ** model.n_states <= 10_000:
        bound = check_adversarial_power(model, uset).delta_max
    else:
        # m_vee >= 1, so this is an upper bound on the admissible radius
        bound = delta_bound(min_support_probability(model), 1, uset)
    if uset.radius > bound:
        log.warning("delta=%g exceeds the limited-adversary bound %.4g; running anyway", uset.radius, bound)
    if ground_truth is None:
        ground_truth = cached_ground_truth(model, uset, config.gt_precision, cache_path)
    records = []
    for n in config.n_grid:
        for rep in range(config.seeds):
            seed = sample_seed(config.seed, n, rep)
            emp = sample_transitions(model, n, seed)
            for method in config.methods():
                t0 = time.perf_counter()
                try:
                    if method is Method.REDUCTION:
                        sol = reduce_to_dmdp(emp, model.reward, uset, tol=config.reduction_tol)
                        err = float(np.max(np.abs(sol.bias - ground_truth)))
                    else:
                        sol = anchored_amdp(emp, model.reward, uset, anchor_state=config.anchor_state,
                                            tol=config.anchored_tol)
                        err = abs(sol.gain - ground_truth)
                    gain, msg = sol.gain, ""
                except (DramdpError, ValueError, FloatingPointError) as exc:
                    log.error("n=%d seed=%d %s failed: %s", n, seed, method.value, exc)
                    gain, err, msg = math.nan, math.nan, str(exc)
                ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
                records.append(ExperimentRecord(n, seed, method.value, gain, err, ms, msg))
    return records


def fit_loglog(records) -> RegressionFit:
    """Ordinary least squares of log10(abs_error) on log10(n)."""
    pts = [(r.n, r.abs_error) for r in records if not r.failed and r.abs_error > 0]
    if len(pts) < 2:
        raise InsufficientData(f"need at least 2 usable records, got {len(pts)}")
    x = np.log10([n for n, _ in pts])
    y = np.log10([e for _, e in pts])
    if np.ptp(x) == 0:
        raise InsufficientData("all usable records share one sample size")
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RegressionFit(slope, intercept, r2, len(pts))


def fits_by_algorithm(records) -> dict[str, RegressionFit]:
    out = {}
    for alg in sorted({r.algorithm for r in records}):
        try:
            out[alg] = fit_loglog([r for r in records if r.algorithm == alg])
        except InsufficientData as exc:
            log.warning("no fit for %s: %s", alg, exc)
    return out


# output ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.n, r.seed, r.algorithm, _fmt(r.gain), _fmt(r.abs_error), _fmt(r.wall_time_ms)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[ExperimentRecord]:
    rows = csv.DictReader(io.StringIO(text))
    if rows.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {rows.fieldnames}")
    return [
        ExperimentRecord(int(r["n"]), int(r["seed"]), r["algorithm"], float(r["gain"]),
                         float(r["abs_error"]), float(r["wall_time_ms"]))
        for r in rows
    ]


def _svg_plot(records, fits: dict[str, RegressionFit], title: str) -> str:
    W, H, pad = 640, 440, 60
    ok = [r for r in records if not r.failed and r.abs_error > 0]
    if not ok:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">'
                f'<text x="{pad}" y="{pad}">no data</text></svg>\n')
    xs = np.log10([r.n for r in ok])
    ys = np.log10([r.abs_error for r in ok])
    x0, x1 = math.floor(xs.min()), math.ceil(xs.max())
    y0, y1 = math.floor(ys.min()), math.ceil(ys.max())
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    colors = {"reduction": "#1f77b4", "anchored": "#d62728"}
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>']
    for e in range(x0, x1 + 1):
        out.append(f'<text x="{px(e):.1f}" y="{H - pad + 18}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        out.append(f'<text x="{pad - 8}" y="{py(e) + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">n (samples per state-action pair)</text>')
    out.append(f'<text x="16" y="{H / 2}" transform="rotate(-90 16 {H / 2})" text-anchor="middle">abs error</text>')
    for r, x, y in zip(ok, xs, ys):
        c = colors.get(r.algorithm, "black")
        out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{c}"/>')
    for i, (alg, fit) in enumerate(sorted(fits.items())):
        c = colors.get(alg, "black")
        xa, xb = xs.min(), xs.max()
        out.append(f'<line x1="{px(xa):.1f}" y1="{py(fit.intercept + fit.slope * xa):.1f}" '
                   f'x2="{px(xb):.1f}" y2="{py(fit.intercept + fit.slope * xb):.1f}" stroke="{c}"/>')
        out.append(f'<text x="{W - pad}" y="{pad + 16 * i}" text-anchor="end" fill="{c}">'
                   f'{alg}: slope {fit.slope:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(records, fits: dict[str, RegressionFit], config: ExperimentConfig,
                 ground_truth: float | None = None) -> dict[str, Path]:
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / "records.csv", "fit": out / "fit.json"}
        paths["csv"].write_text(records_to_csv(records), encoding="utf-8", newline="\n")
        summary = {
            "config": asdict(config),
            "ground_truth": ground_truth,
            "failed_records": sum(r.failed for r in records),
            "fits": {alg: asdict(f) for alg, f in fits.items()},
        }
        paths["fit"].write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        if config.plot:
            title = f"{config.family} instance, {config.uncertainty_set().label()}"
            paths["plot"] = out / "plot.svg"
            paths["plot"].write_text(_svg_plot(records, fits, title), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write outputs under {out}: {exc}") from exc
    return paths
