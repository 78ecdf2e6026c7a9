"""Command-line experiment runner.

Subcommands: collect, train, servo, eval, render, reproduce.
Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 contact loss.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .pipeline import (
    run_collect,
    run_eval_trajectory,
    run_render,
    run_reproduce,
    run_servo,
    run_train,
)
from .posenet import TrainingDivergedError
from .tactsim import ContactParams

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CONTACT_LOSS = 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tacservo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="render a labelled contact dataset")
    _common(c)
    c.add_argument("--task", choices=("edge", "surface"), default="edge")
    c.add_argument("--sensor", default="marker")
    c.add_argument("--samples", type=int, default=None)

    t = sub.add_parser("train", help="train a pose model on a dataset directory")
    _common(t)
    t.add_argument("--dataset", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=None)

    s = sub.add_parser("servo", help="trace a shape with a trained model or the oracle")
    _common(s)
    s.add_argument("--shape", default="circle")
    s.add_argument("--task", choices=("edge", "surface"), default="edge")
    s.add_argument("--sensor", default="marker")
    s.add_argument("--checkpoint", type=Path, default=None)
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--angle-advance", type=float, default=None, dest="angle_advance",
                   help="angular set-point advance in degrees (corner aid)")

    e = sub.add_parser("eval", help="re-score a saved trajectory CSV against a shape")
    _common(e)
    e.add_argument("--trajectory", type=Path, required=True)
    e.add_argument("--shape", default="circle")
    e.add_argument("--task", choices=("edge", "surface"), default="edge")
    e.add_argument("--standoff", type=float, default=None)

    r = sub.add_parser("render", help="render one tactile image")
    _common(r)
    r.add_argument("--sensor", default="marker")
    r.add_argument("--task", choices=("edge", "surface"), default="edge")
    r.add_argument("--offset", type=float, default=0.0)
    r.add_argument("--depth", type=float, default=2.0)
    r.add_argument("--angle", type=float, default=0.0)
    r.add_argument("--slide-x", type=float, default=0.0, dest="slide_x")
    r.add_argument("--slide-y", type=float, default=0.0, dest="slide_y")
    r.add_argument("--slide-angle", type=float, default=0.0, dest="slide_angle")

    g = sub.add_parser("reproduce", help="run the full sensor x task x shape grid")
    _common(g)
    g.add_argument("--only", default=None, help="cell filter, e.g. marker,edge,circle")
    g.add_argument("--samples", type=int, default=None)
    g.add_argument("--epochs", type=int, default=None)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
            cfg.servo = dataclasses.replace(cfg.servo, seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.out_dir)

        if args.command == "collect":
            if args.sensor not in cfg.sensors:
                raise ConfigError(f"sensor {args.sensor!r} not in config")
            path, digest = run_collect(
                cfg, args.task, args.sensor, out / f"dataset_{args.sensor}_{args.task}",
                samples=args.samples,
            )
            print(f"dataset: {path}")
            print(f"hash: {digest}")
            return EXIT_OK

        if args.command == "train":
            tr = run_train(cfg, args.dataset, out, epochs=args.epochs)
            print(f"checkpoint: {tr.checkpoint}")
            print(f"hash: {tr.checkpoint_hash}")
            for row in tr.report.rows():
                print(row)
            return EXIT_OK

        if args.command == "servo":
            if not args.oracle and args.checkpoint is None:
                raise ConfigError("servo requires --checkpoint or --oracle")
            if args.sensor not in cfg.sensors:
                raise ConfigError(f"sensor {args.sensor!r} not in config")
            sv = run_servo(
                cfg, args.shape, args.task, args.sensor, out,
                checkpoint=args.checkpoint, oracle=args.oracle,
                angle_advance=args.angle_advance,
            )
            r = sv.report
            print(f"trajectory: {sv.trajectory_csv}")
            print(
                f"{r.family} {r.task} {r.shape}: position MAE {r.position_mae:.3f} mm, "
                f"angle MAE {r.angle_mae:.2f} deg, completed={r.completed}, steps={r.steps}"
            )
            return EXIT_CONTACT_LOSS if sv.lost else EXIT_OK

        if args.command == "eval":
            r = run_eval_trajectory(cfg, args.trajectory, args.shape, args.task, args.standoff)
            print(
                f"{r.task} {r.shape}: position MAE {r.position_mae:.3f} mm, "
                f"angle MAE {r.angle_mae:.2f} deg, completed={r.completed}, steps={r.steps}"
            )
            return EXIT_OK

        if args.command == "render":
            contact = ContactParams(
                task=args.task,
                offset=args.offset,
                depth=args.depth if args.task == "edge" else 0.0,
                angle=args.angle,
                slide_x=args.slide_x,
                slide_y=args.slide_y,
                slide_angle=args.slide_angle,
            )
            path = run_render(cfg, args.sensor, contact, out)
            print(f"image: {path}")
            return EXIT_OK

        if args.command == "reproduce":
            if args.samples is not None:
                cfg.plans = {
                    k: dataclasses.replace(v, n_samples=args.samples)
                    for k, v in cfg.plans.items()
                }
            if args.epochs is not None:
                cfg.train = dataclasses.replace(cfg.train, epochs=args.epochs)
            results, summary = run_reproduce(cfg, out, only=args.only)
            for r in results:
                status = "ok" if r.ok else ("expected-fail" if r.expected_fail else "FAIL")
                line = f"[{status:>13}] {r.name}"
                if r.detail:
                    line += f"  {r.detail}"
                print(line)
            print(f"summary: {summary}")
            print(summary.read_text(encoding="utf-8"))
            bad = [r for r in results if not r.ok and not r.expected_fail]
            return EXIT_RUNTIME if bad else EXIT_OK

        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
