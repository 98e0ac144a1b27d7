"""Command line entry point: ``wedgefill <command> [options]``.

Exit codes: 0 on success, 2 for configuration errors, 3 for solver failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, experiment, metrics
from . import io as wio
from .errors import ConfigurationError, SolverError
from .solvers import criticality, toy

log = logging.getLogger("wedgefill")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _common(p):
    p.add_argument("--config", default="shepp_logan.cfg",
                   help="INI config file, or the name of a bundled one (default: %(default)s)")
    p.add_argument("--seed", type=int, help="noise seed (overrides the config)")
    p.add_argument("--size", type=int, help="image side in pixels (overrides the config)")
    p.add_argument("--iters", type=int, help="outer iteration count (overrides the config)")
    p.add_argument("--out", type=Path, default=Path("wedgefill_out"), help="output directory")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")


def build_parser():
    parser = argparse.ArgumentParser(prog="wedgefill",
                                     description="Limited-angle CT with joint sinogram inpainting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("phantom", "write the phantom image"),
                        ("project", "write clean and noisy wedge sinograms"),
                        ("reconstruct", "run one baseline reconstruction"),
                        ("joint", "run the joint image/sinogram reconstruction"),
                        ("compare", "run FBP, SIRT, TV and joint and print a score table")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "reconstruct":
            p.add_argument("--method", choices=("fbp", "sirt", "tv"), default="tv")
    p = sub.add_parser("slope-check", help="slope estimates on reference functions")
    _common(p)
    p.add_argument("--dim", type=int, default=16)
    p = sub.add_parser("toy", help="alternating minimisation on max(x,y) + x^2 + y^2")
    _common(p)
    p.add_argument("--x0", type=float, default=-1.0)
    p.add_argument("--y0", type=float, default=-1.0)
    p.add_argument("--tau", type=float, default=1.0)
    return parser


def _config(args):
    return experiment.load_config(args.config, seed=args.seed, size=args.size, iters=args.iters)


def _cmd_phantom(args, cfg):
    args.out.mkdir(parents=True, exist_ok=True)
    u = experiment.make_phantom(cfg.phantom, cfg.size)
    wio.write_binary(args.out / "phantom.bin", u)
    wio.write_pgm(args.out / "phantom.pgm", u)
    print(args.out / "phantom.bin")


def _cmd_project(args, cfg):
    args.out.mkdir(parents=True, exist_ok=True)
    ds = experiment.build_dataset(cfg)
    wio.write_binary(args.out / "sinogram_clean.bin", ds.clean)
    wio.write_binary(args.out / "data.bin", ds.data)
    wio.write_mask(args.out / "mask.csv", ds.mask)
    print(f"{ds.mask.any(axis=1).sum()} of {ds.mask.shape[0]} views kept")


def _cmd_reconstruct(args, cfg):
    args.out.mkdir(parents=True, exist_ok=True)
    ds = experiment.build_dataset(cfg)
    images, _ = experiment.run_methods(ds, cfg, (args.method,))
    u = images[args.method]
    wio.write_binary(args.out / f"u_{args.method}.bin", u)
    wio.write_pgm(args.out / f"u_{args.method}.pgm", u)
    print(f"{args.method}: psnr={metrics.psnr(u, ds.phantom):.3f} ssim={metrics.ssim(u, ds.phantom):.4f}")


def _cmd_joint(args, cfg):
    cfg.methods = ("joint",)
    out = experiment.run_experiment(cfg, args.out)
    print((out / "summary.txt").read_text(), end="")


def _cmd_compare(args, cfg):
    rows = experiment.compare_methods(cfg, args.out)
    print(experiment.format_table(rows))


def _cmd_slope(args, cfg):
    x0 = np.zeros(args.dim)
    checks = [("-|x|", lambda x: -np.linalg.norm(x)),
              ("|x|^2", lambda x: float(np.dot(x, x))),
              ("|x|", lambda x: np.linalg.norm(x))]
    for name, F in checks:
        print(f"slope {name} at 0: {criticality.slope(F, x0, seed=cfg.seed):.6f}")
    E = lambda p: toy.toy_energy(p[0], p[1])
    print(f"slope toy at (0,0): {criticality.slope(E, np.zeros(2), seed=cfg.seed):.6f}")


def _cmd_toy(args, cfg):
    iters = args.iters if args.iters is not None else 200
    st = toy.run_toy_2axis(args.x0, args.y0, args.tau, args.tau, iters)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "toy_trace.csv"
    with open(path, "w") as fh:
        fh.write("iteration,x,y,energy\n")
        for k, ((x, y), e) in enumerate(zip(st.trace, st.energies)):
            fh.write(f"{k},{x!r},{y!r},{e!r}\n")
    print(f"x={st.x:.9f} y={st.y:.9f} energy={toy.toy_energy(st.x, st.y):.9f} "
          f"critical={toy.is_critical(st.x, st.y, 1e-6)}")


COMMANDS = {"phantom": _cmd_phantom, "project": _cmd_project, "reconstruct": _cmd_reconstruct,
            "joint": _cmd_joint, "compare": _cmd_compare, "slope-check": _cmd_slope,
            "toy": _cmd_toy}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.dry_run:
            print(experiment.config_text(cfg), end="")
            return EXIT_OK
        COMMANDS[args.command](args, cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
