"""Command line: ``python3 -m fastbss {mix,separate,eval,bench}``.

Every subcommand accepts ``--config FILE`` (YAML, see :mod:`fastbss.config`)
and flags that override individual fields. ``bench`` requires ``--seed``.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .bench import run_grid, separate, summarize, write_bench_csv
from .config import INITS, METHODS, dump_config, load_config
from .evaluation import sdr_improvement
from .exceptions import BSSError, ConfigMismatch, LengthMismatch
from .mixsim import MixtureScene, make_scene
from .signal import Waveform, istft, read_wav, stft, write_wav

__all__ = ["main", "cmd_mix", "cmd_separate", "cmd_eval", "cmd_bench", "build_parser"]

TRACE_COLUMNS = ("iteration", "lambda", "cost", "elapsed_seconds")


def _mkdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc


def cmd_mix(cfg, out_dir=None, scene_seed=None):
    """Generate a scene; write the mixture, one WAV per source image and ``manifest.json``."""
    out_dir = out_dir or cfg.out_dir
    _mkdir(out_dir)
    scene_seed = cfg.seed if scene_seed is None else scene_seed
    scene_cfg = cfg.scene.scene_config(scene_seed, cfg.stft.sample_rate)
    scene = make_scene(scene_cfg, cfg.scene.duration_s)
    sr = cfg.stft.sample_rate

    mixture_path = os.path.join(out_dir, "mixture.wav")
    write_wav(mixture_path, scene.mixture)
    image_paths = []
    for n in range(scene.images.shape[0]):
        path = os.path.join(out_dir, f"image_{n}.wav")
        write_wav(path, Waveform(scene.images[n], sr))
        image_paths.append(path)

    manifest = {
        "mixture": os.path.abspath(mixture_path),
        "images": [os.path.abspath(p) for p in image_paths],
        "seed": scene_seed,
        "t60_ms": scene_cfg.t60_ms,
        "drr_db": scene_cfg.drr_db,
        "snr_db": scene_cfg.snr_db,
        "n_mic": scene_cfg.n_mic,
        "n_src": scene_cfg.n_src,
        "sample_rate": sr,
        "n_samples": len(scene.mixture),
        "rir_length": scene_cfg.rir_length,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest_path


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow(
                [int(row["iteration"]), repr(float(row["lam"])), repr(float(row["cost"])), f"{row['seconds']:.6f}"]
            )


def cmd_separate(cfg, mixture_path, out_dir=None):
    """Separate a mixture WAV; write ``estimate_{n}.wav`` and ``trace.csv``."""
    out_dir = out_dir or cfg.out_dir
    mixture = read_wav(mixture_path)
    if mixture.n_channels != cfg.n_src:
        raise ConfigMismatch(
            f"{mixture_path} has {mixture.n_channels} channels but the config expects {cfg.n_src}"
        )
    if mixture.sample_rate != cfg.stft.sample_rate:
        raise ConfigMismatch(
            f"{mixture_path} is at {mixture.sample_rate} Hz, config expects {cfg.stft.sample_rate} Hz"
        )
    X = stft(mixture, cfg.stft)
    sep = separate(X, cfg)

    _mkdir(out_dir)
    paths = []
    for n in range(sep.Y.shape[2]):
        path = os.path.join(out_dir, f"estimate_{n}.wav")
        write_wav(path, istft(sep.Y[:, :, n], cfg.stft, len(mixture)))
        paths.append(path)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), sep.trace)
    return paths


def _load_scene(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    mixture = read_wav(resolve(manifest["mixture"]))
    images = np.stack([read_wav(resolve(p)).samples for p in manifest["images"]])
    return MixtureScene(mixture=mixture, images=images, rirs=None)


def cmd_eval(cfg, manifest_path, estimate_paths, out_path=None):
    """SDR improvement of estimate WAVs against the scene in ``manifest_path``."""
    scene = _load_scene(manifest_path)
    estimates = []
    for path in estimate_paths:
        w = read_wav(path)
        if len(w) != len(scene.mixture):
            raise LengthMismatch(f"{path} has {len(w)} samples, mixture has {len(scene.mixture)}")
        estimates.append(w.samples[0])
    report = sdr_improvement(scene, np.stack(estimates), reference=cfg.reference)
    result = {
        "sdr_db": [float(v) for v in report.sdr],
        "permutation": list(report.permutation),
        "mean_sdr_db": report.mean,
        "sdr_improvement_db": float(report.improvement),
    }
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(result, fh, indent=2)
    return result


def cmd_bench(cfg, seeds, out_path=None):
    """Run the grid; write the CSV (data rows then per-method summary rows)."""
    out_path = out_path or os.path.join(cfg.out_dir, "bench.csv")
    _mkdir(os.path.dirname(os.path.abspath(out_path)))
    rows = run_grid(cfg, seeds)
    summary = summarize(rows)
    write_bench_csv(out_path, rows, summary)
    return out_path, rows, summary


def _add_common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--init", choices=INITS)
    p.add_argument("--iterations", type=int)
    p.add_argument("--ilrma-iters", dest="ilrma_iterations", type=int)
    p.add_argument("--n-basis", "-K", dest="n_basis", type=int)
    p.add_argument("--reference", type=int)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda-end", type=float)
    p.add_argument("--lambda-const", type=float)
    p.add_argument("--prior-scale", type=float)
    p.add_argument("--window-ms", type=float)
    p.add_argument("--hop-ms", type=float)
    p.add_argument("--sample-rate", type=int)
    p.add_argument("--n-mic", type=int)
    p.add_argument("--t60", type=float)
    p.add_argument("--drr", type=float)
    p.add_argument("--snr", type=float)
    p.add_argument("--duration", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="fastbss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", help="generate a synthetic scene")
    _add_common(p)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("separate", help="separate a mixture WAV")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("mixture")

    p = sub.add_parser("eval", help="score estimates against a scene manifest")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--json", dest="json_out", help="write the report here")
    p.add_argument("manifest")
    p.add_argument("estimates", nargs="+")

    p = sub.add_parser("bench", help="scenes x methods x seeds grid")
    _add_common(p)
    p.add_argument("--seed", type=int, nargs="+", required=True, help="algorithm seeds")
    p.add_argument("--scenes", type=int, nargs="+", help="scene seeds")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--workers", type=int)
    p.add_argument("--csv", dest="csv_out", help="output CSV path")

    p = sub.add_parser("config", help="print the effective configuration as YAML")
    _add_common(p)
    p.add_argument("--seed", type=int)
    return parser


def config_from_args(args):
    cfg = load_config(args.config)
    seed = args.seed[0] if isinstance(args.seed, list) else args.seed
    return cfg.with_overrides(
        **{
            "out_dir": args.out_dir,
            "method": args.method,
            "init": args.init,
            "iterations": args.iterations,
            "ilrma_iterations": args.ilrma_iterations,
            "n_basis": args.n_basis,
            "reference": args.reference,
            "seed": seed,
            "prior_scale": args.prior_scale,
            "schedule.lambda0": args.lambda0,
            "schedule.lambda_end": args.lambda_end,
            "schedule.lambda_const": args.lambda_const,
            "stft.window_ms": args.window_ms,
            "stft.hop_ms": args.hop_ms,
            "stft.sample_rate": args.sample_rate,
            "scene.n_mic": args.n_mic,
            "scene.t60_ms": args.t60,
            "scene.drr_db": args.drr,
            "scene.snr_db": args.snr,
            "scene.duration_s": args.duration,
            "bench.scenes": getattr(args, "scenes", None),
            "bench.methods": getattr(args, "methods", None),
            "bench.workers": getattr(args, "workers", None),
        }
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "mix":
            print(cmd_mix(cfg))
        elif args.command == "separate":
            for path in cmd_separate(cfg, args.mixture):
                print(path)
        elif args.command == "eval":
            result = cmd_eval(cfg, args.manifest, args.estimates, args.json_out)
            for n, (value, est) in enumerate(zip(result["sdr_db"], result["permutation"])):
                print(f"source {n} <- estimate {est}: SDR {value:7.2f} dB")
            print(f"SDR improvement: {result['sdr_improvement_db']:.2f} dB")
        elif args.command == "bench":
            path, _, summary = cmd_bench(cfg, args.seed, args.csv_out)
            for row in summary:
                print(
                    f"{row['method']:<20} {row['sdr_improvement_db']:7.2f} dB "
                    f"(std {row['sdr_std_db']:.2f})  {row['sec_per_iteration'] * 1e3:8.1f} ms/it"
                )
            print(path)
        elif args.command == "config":
            sys.stdout.write(dump_config(cfg))
    except (BSSError, OSError, ValueError) as exc:
        print(f"fastbss {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
