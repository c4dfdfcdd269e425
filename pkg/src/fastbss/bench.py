"""Method dispatch and the scenes x methods x seeds benchmark grid."""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evaluation import sdr_improvement
from .exceptions import BSSError
from .fastmnmf import TRACE_DTYPE, run_fastmnmf
from .ilrma import run_ilrma
from .mixsim import make_scene
from .regufast import run_regularized_fastmnmf
from .signal import istft, stft

__all__ = [
    "BENCH_COLUMNS",
    "Separation",
    "parse_method",
    "separate",
    "sec_per_iteration",
    "run_cell_group",
    "run_grid",
    "summarize",
    "write_bench_csv",
]

BENCH_COLUMNS = (
    "scene",
    "method",
    "seed",
    "sdr_improvement_db",
    "sec_per_iteration",
    "sdr_std_db",
    "status",
)


@dataclass
class Separation:
    """Reference-channel estimates ``(I, J, N)`` and a trace with ``TRACE_DTYPE`` fields."""

    Y: np.ndarray
    trace: np.ndarray


def parse_method(name, default_init="identity"):
    """``"fastmnmf-pca"`` -> ``("fastmnmf", "pca")``; bare names take ``default_init``."""
    method, _, init = name.partition("-")
    return method, init or default_init


def _ilrma_trace(result):
    trace = np.zeros(len(result.costs), dtype=TRACE_DTYPE)
    trace["iteration"] = np.arange(len(result.costs))
    trace["cost"] = result.costs
    trace["seconds"] = result.seconds
    return trace


def separate(X, cfg, method=None, init=None, ilrma_result=None):
    """Run one method on ``X (I, J, M)`` with the settings in ``cfg``.

    ``ilrma_result`` lets callers share one ILRMA pre-run between methods that
    need it; it must come from ``run_ilrma`` with ``cfg``'s seed and counts.
    """
    method = method or cfg.method
    init = init or cfg.init
    n_mic = X.shape[2]

    def ilrma():
        if ilrma_result is not None:
            return ilrma_result
        return run_ilrma(
            X,
            n_iter=cfg.ilrma_iterations,
            n_basis=max(1, cfg.n_basis // n_mic),
            seed=cfg.seed,
            reference=cfg.reference,
        )

    if method == "ilrma":
        result = run_ilrma(
            X,
            n_iter=cfg.iterations,
            n_basis=max(1, cfg.n_basis // n_mic),
            seed=cfg.seed,
            reference=cfg.reference,
        )
        return Separation(result.Y, _ilrma_trace(result))
    if method == "fastmnmf":
        W = ilrma().W if init == "ilrma" else None
        result = run_fastmnmf(X, cfg.iterations, cfg.n_basis, init=init, seed=cfg.seed, W=W)
    elif method in ("regufast1", "regufast2"):
        result = run_regularized_fastmnmf(
            X,
            n_iter=cfg.iterations,
            n_basis=cfg.n_basis,
            schedule=cfg.schedule_for(method),
            seed=cfg.seed,
            reference=cfg.reference,
            W=ilrma().W,
            prior_scale=cfg.prior_scale,
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    return Separation(result.reference_images(cfg.reference), result.trace)


def sec_per_iteration(trace):
    """Median wall-clock seconds per iteration from cumulative trace times."""
    steps = np.diff(trace["seconds"])
    return float(np.median(steps)) if len(steps) else float("nan")


def run_cell_group(cfg, scene_seed, seed, methods):
    """All ``methods`` on one scene and one algorithm seed, sharing the ILRMA pre-run.

    Returns one row dict per method, in ``methods`` order. A failing method is
    reported in its row's ``status`` and does not stop the others.
    """
    cfg = cfg.with_overrides(seed=seed)
    scene = make_scene(cfg.scene.scene_config(scene_seed, cfg.stft.sample_rate), cfg.scene.duration_s)
    X = stft(scene.mixture, cfg.stft)
    n_samples = len(scene.mixture)
    shared = {}
    rows = []
    for name in methods:
        row = {"scene": scene_seed, "method": name, "seed": seed}
        try:
            method, init = parse_method(name, cfg.init)
            needs_prior = method.startswith("regufast") or init == "ilrma"
            if needs_prior and "ilrma" not in shared:
                shared["ilrma"] = run_ilrma(
                    X,
                    n_iter=cfg.ilrma_iterations,
                    n_basis=max(1, cfg.n_basis // X.shape[2]),
                    seed=cfg.seed,
                    reference=cfg.reference,
                )
            sep = separate(X, cfg, method, init, shared.get("ilrma"))
            est = np.stack(
                [istft(sep.Y[:, :, n], cfg.stft, n_samples).samples[0] for n in range(sep.Y.shape[2])]
            )
            report = sdr_improvement(scene, est, reference=cfg.reference)
            row.update(
                sdr_improvement_db=report.improvement,
                sec_per_iteration=sec_per_iteration(sep.trace),
                status="ok",
            )
        except (BSSError, ValueError, FloatingPointError) as exc:
            row.update(sdr_improvement_db=math.nan, sec_per_iteration=math.nan, status=f"failed: {exc}")
        rows.append(row)
    return rows


def _group_job(args):
    return run_cell_group(*args)


def run_grid(cfg, seeds, scenes=None, methods=None, workers=None):
    """Every (scene, method, seed) cell; rows come back in grid order.

    Grid order is scene-major, then seed, then method. ``workers > 1`` runs
    scene/seed groups in a process pool.
    """
    scenes = list(cfg.bench.scenes if scenes is None else scenes)
    methods = list(cfg.bench.methods if methods is None else methods)
    workers = cfg.bench.workers if workers is None else workers
    jobs = [(cfg, sc, sd, methods) for sc in scenes for sd in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_group_job, jobs))
    else:
        groups = [_group_job(job) for job in jobs]
    return [row for group in groups for row in group]


def summarize(rows):
    """One summary row per method (first-appearance order): mean/std SDR, median timing."""
    summary = []
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for name in methods:
        ok = [r for r in rows if r["method"] == name and r["status"] == "ok"]
        sdrs = np.array([r["sdr_improvement_db"] for r in ok])
        times = np.array([r["sec_per_iteration"] for r in ok])
        n_total = sum(r["method"] == name for r in rows)
        summary.append(
            {
                "scene": "summary",
                "method": name,
                "seed": f"n={len(ok)}",
                "sdr_improvement_db": float(sdrs.mean()) if len(ok) else math.nan,
                "sec_per_iteration": float(np.median(times)) if len(ok) else math.nan,
                "sdr_std_db": float(sdrs.std()) if len(ok) else math.nan,
                "status": "ok" if len(ok) == n_total else f"{n_total - len(ok)} failed",
            }
        )
    return summary


def write_bench_csv(path, rows, summary=None):
    """Data rows then summary rows, fixed column order."""
    if summary is None:
        summary = summarize(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, restval="")
        writer.writeheader()
        for row in list(rows) + list(summary):
            out = dict(row)
            for key in ("sdr_improvement_db", "sec_per_iteration", "sdr_std_db"):
                if isinstance(out.get(key), float):
                    out[key] = f"{out[key]:.6f}"
            writer.writerow(out)
