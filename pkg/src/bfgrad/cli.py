"""``bfgrad`` command line: gradient checks, mask optimization, beamformer comparison."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import beamform as bf
from . import suites
from .errors import BfgradError
from .io import save_tensor
from .optimize import INITS, optimize_masks
from .scene import synth_scene

DEFAULTS = {
    "channels": 2, "bins": 8, "frames": 32, "snr_in": 0.0, "seed": 0,
    "mu": 10.0, "iters": 50, "beamformer": "gev", "init": "uniform",
    "eps": 1e-6, "tol": 1e-5, "draws": 5, "out": None, "timing": True,
}
METRICS_HEADER = ["iter", "J", "snr_in_db", "snr_out_db", "ms"]


class ConfigError(ValueError):
    pass


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--channels", type=int, help="microphones D")
    p.add_argument("--bins", type=int, help="frequency bins F")
    p.add_argument("--frames", type=int, help="frames T")
    p.add_argument("--snr-in", dest="snr_in", type=float, help="input SNR in dB")


def _optim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init", choices=INITS)
    p.add_argument("--mu", type=float, help="gradient step size")
    p.add_argument("--iters", type=int, help="gradient steps")
    p.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="write 0 in the ms column so outputs are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfgrad", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bfgrad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with default values for flags")
    common.add_argument("--seed", type=int, help="RNG seed (fallback: $BFGRAD_SEED, then 0)")
    common.add_argument("--out", type=Path, help="output directory")

    g = sub.add_parser("gradcheck", parents=[common], help="compare every backward rule "
                       "against central differences")
    g.add_argument("--eps", type=float)
    g.add_argument("--tol", type=float)
    g.add_argument("--draws", type=int, help="random inputs per op")
    g.add_argument("--inject-sign-flip", dest="sign_flip", action="store_true",
                   help="negate the matmul backward rule; the check must then fail")

    o = sub.add_parser("optimize", parents=[common], help="learn masks by gradient descent")
    _scene_flags(o)
    o.add_argument("--beamformer", choices=bf.BEAMFORMERS)
    _optim_flags(o)

    c = sub.add_parser("compare", parents=[common], help="beamformers x {oracle, optimized} masks")
    _scene_flags(c)
    _optim_flags(c)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then ``$BFGRAD_SEED``, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    if args.seed is None and "BFGRAD_SEED" in os.environ and (
            args.config is None or "seed" not in loaded):
        try:
            cfg["seed"] = int(os.environ["BFGRAD_SEED"])
        except ValueError:
            raise ConfigError("BFGRAD_SEED must be an integer") from None
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    for key in ("channels", "bins", "frames"):
        if int(cfg[key]) != cfg[key] or cfg[key] < 1:
            raise ConfigError(f"{key} must be an integer >= 1")
    if not cfg["mu"] > 0:
        raise ConfigError("mu must be > 0")
    if int(cfg["iters"]) != cfg["iters"] or cfg["iters"] < 0:
        raise ConfigError("iters must be an integer >= 0")
    if not cfg["eps"] > 0:
        raise ConfigError("eps must be > 0")
    if not cfg["tol"] >= 0:
        raise ConfigError("tol must be >= 0")
    if cfg["draws"] < 1:
        raise ConfigError("draws must be >= 1")
    if cfg["beamformer"] not in bf.BEAMFORMERS:
        raise ConfigError(f"beamformer must be one of {bf.BEAMFORMERS}")
    if cfg["init"] not in INITS:
        raise ConfigError(f"init must be one of {INITS}")
    if not np.isfinite(cfg["snr_in"]):
        raise ConfigError("snr_in must be finite")


def _out_dir(cfg: dict, default: str) -> Path:
    out = Path(cfg["out"] or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _scene(cfg):
    return synth_scene(cfg["channels"], cfg["bins"], cfg["frames"], cfg["snr_in"], cfg["seed"])


def _oracle_snr(scene, kind: str) -> float:
    w = bf.beamformer_weights(kind, scene.Y, scene.M_X, scene.M_N)
    return float(bf.snr_metrics(scene.X, scene.N, w)[1])


def cmd_gradcheck(cfg: dict) -> int:
    out = _out_dir(cfg, "bfgrad-gradcheck")
    if cfg.get("sign_flip"):
        with suites.sign_flip("matmul"):
            results = suites.run_suite(cfg["draws"], cfg["eps"], cfg["tol"], cfg["seed"])
    else:
        results = suites.run_suite(cfg["draws"], cfg["eps"], cfg["tol"], cfg["seed"])
    failed = [name for name, (_, fails) in results.items() if fails]
    report = {
        "eps": cfg["eps"], "tol": cfg["tol"], "draws": cfg["draws"], "seed": cfg["seed"],
        "failed": failed,
        "checks": {name: {"failures": fails, **r.to_dict()} for name, (r, fails) in results.items()},
    }
    _write_json(out / "report.json", report)
    for name, (r, fails) in results.items():
        status = "FAIL" if fails else "ok"
        print(f"{status:4}  {name:22} max rel err {r.max_rel_error:.2e}  (tol {r.tol:.0e})")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _write_metrics(path: Path, history) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for s in history:
            writer.writerow([s.iteration, repr(s.objective), repr(s.snr_in_db),
                             repr(s.snr_out_db), repr(round(s.ms, 3))])


def cmd_optimize(cfg: dict) -> int:
    out = _out_dir(cfg, "bfgrad-optimize")
    scene = _scene(cfg)
    result = optimize_masks(scene, cfg["beamformer"], cfg["init"], cfg["mu"], cfg["iters"],
                            cfg["seed"], timing=cfg["timing"])
    hist = result.history
    _write_metrics(out / "metrics.csv", hist)
    mask_x, mask_n = result.masks
    save_tensor(out / "weights.bin", result.weights, axes=["bin", "channel"],
                beamformer=cfg["beamformer"])
    save_tensor(out / "masks.bin", np.stack([mask_x, mask_n]),
                axes=["mask (speech, noise)", "bin", "frame", "channel"])
    report = {
        "config": {k: cfg[k] for k in sorted(cfg) if k not in ("out", "eps", "tol", "draws")},
        "snr_in_db": hist[0].snr_in_db,
        "initial_snr_out_db": hist[0].snr_out_db,
        "final_snr_out_db": hist[-1].snr_out_db,
        "max_snr_out_db": max(s.snr_out_db for s in hist),
        "oracle_gev_snr_out_db": _oracle_snr(scene, "gev"),
        "initial_J": hist[0].objective,
        "final_J": hist[-1].objective,
        "final_mu": hist[-1].mu,
        "iterations": len(hist) - 1,
    }
    _write_json(out / "report.json", report)
    print(f"SNR in {report['snr_in_db']:.2f} dB | SNR out {report['initial_snr_out_db']:.2f} "
          f"-> {report['final_snr_out_db']:.2f} dB | oracle-mask GEV "
          f"{report['oracle_gev_snr_out_db']:.2f} dB")
    return 0


def cmd_compare(cfg: dict) -> int:
    out = _out_dir(cfg, "bfgrad-compare")
    scene = _scene(cfg)
    snr_in = float(bf.snr_metrics(scene.X, scene.N)[0])
    rows = []
    for kind in bf.BEAMFORMERS:
        w = bf.beamformer_weights(kind, scene.Y, scene.M_X, scene.M_N)
        j = float(bf.snr_objective(w, scene.X, scene.N).value.real)
        rows.append((kind, "oracle", j, snr_in, float(bf.snr_metrics(scene.X, scene.N, w)[1])))
        res = optimize_masks(scene, kind, cfg["init"], cfg["mu"], cfg["iters"], cfg["seed"],
                             timing=False)
        last = res.history[-1]
        rows.append((kind, "optimized", last.objective, snr_in, last.snr_out_db))
    with (out / "compare.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["beamformer", "masks", "J", "snr_in_db", "snr_out_db"])
        for row in rows:
            writer.writerow([row[0], row[1]] + [repr(x) for x in row[2:]])
    _write_json(out / "report.json", {
        "config": {k: cfg[k] for k in sorted(cfg) if k not in ("out", "eps", "tol", "draws")},
        "rows": [dict(zip(["beamformer", "masks", "J", "snr_in_db", "snr_out_db"], r))
                 for r in rows]})
    print(f"{'beamformer':14} {'masks':10} {'SNR in':>8} {'SNR out':>8}")
    for kind, masks, _, s_in, s_out in rows:
        print(f"{kind:14} {masks:10} {s_in:8.2f} {s_out:8.2f}")
    return 0


COMMANDS = {"gradcheck": cmd_gradcheck, "optimize": cmd_optimize, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        parser.error(str(exc))
    cfg["sign_flip"] = getattr(args, "sign_flip", False)
    try:
        return COMMANDS[args.command](cfg)
    except BfgradError as exc:
        print(f"bfgrad: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
