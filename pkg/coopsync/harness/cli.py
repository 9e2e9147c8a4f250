"""
Command-line entry point: ``coopsync <command> [options]``.

Commands:
    simulate   scenario -> frame files
    align      scenario (or frames) -> aligned detections, dumps and metrics
    eval       detections dump + scenario GT -> metrics
    sweep      latency grid over scenarios and modes -> sweep.csv
    render     run directory -> SVG figures
    params     write a seeded or oracle parameter bundle
    selftest   check method constants
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from .. import __version__
from .. import constants as const
from .. import logger
from ..exceptions import CoopSyncError
from ..fusion import LossWeights
from ..params import ParamBundle, load_params, save_params
from ..simkit import (
    FIXTURES,
    STANDARD_SUITE,
    ScenarioConfig,
    generate_scenario,
    load_scenario,
    read_scenario_frames,
    save_scenario,
    write_frames,
)
from .pipeline import ABLATIONS, MODES, evaluate_detections, read_detections, run_pipeline
from .render import render_run
from .sweep import latency_drop, latency_sweep, summarize_sweep, write_sweep


def resolve_scenario(name: str, seed: Optional[int] = None) -> ScenarioConfig:
    """A fixture name or a scenario JSON path."""
    if name in FIXTURES:
        return FIXTURES[name](0 if seed is None else seed)
    scenario = load_scenario(name)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario


def _scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    scenario = resolve_scenario(args.scenario, args.seed)
    scenario = scenario.with_frames(args.ego_frames, args.coop_frames)
    if args.latency_ms is not None or args.ego_latency_ms is not None:
        coop = args.latency_ms if args.latency_ms is not None else "0"
        scenario = scenario.with_latency(coop, args.ego_latency_ms)
    return scenario


def _params_from_args(args: argparse.Namespace) -> Optional[ParamBundle]:
    return load_params(args.params) if getattr(args, "params", None) else None


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="moving", help=f"fixture ({', '.join(FIXTURES)}) or JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--latency-ms", default=None, help="non-ego latency: <ms> or <lo:hi>")
    p.add_argument("--ego-latency-ms", default=None, help="ego processing delay: <ms> or <lo:hi>")
    p.add_argument("--ego-frames", type=int, default=const.EGO_FRAMES)
    p.add_argument("--coop-frames", type=int, default=const.COOP_FRAMES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopsync", description="Latency-aware cooperative perception on desk scenes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a scenario's frames")
    _add_scenario_args(p)
    p.add_argument("--out", default=const.DEFAULT_OUTPUT_DIR)

    p = sub.add_parser("align", help="run the pipeline on one condition")
    _add_scenario_args(p)
    p.add_argument("--mode", choices=MODES, default="oracle")
    p.add_argument("--frames", default=None, help="directory of .frames files from 'simulate'")
    p.add_argument("--params", default=None, help="parameter bundle (.npz)")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=[])
    p.add_argument("--alpha", type=float, default=const.FIELD_LOSS_WEIGHT)
    p.add_argument("--beta", type=float, default=const.OFFSET_LOSS_WEIGHT)
    p.add_argument("--out", default=const.DEFAULT_OUTPUT_DIR)

    p = sub.add_parser("eval", help="score a detections dump")
    _add_scenario_args(p)
    p.add_argument("--detections", required=True, help=f"path to {const.DETECTIONS_FILE}")
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="latency sweep over scenarios and modes")
    p.add_argument("--scenario", action="append", default=None, help="fixture or JSON file (repeatable; default: standard suite)")
    p.add_argument("--mode", action="append", choices=MODES, default=None)
    p.add_argument("--latencies", type=float, nargs="*", default=list(const.LATENCY_GRID_MS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--workers", type=int, default=const.DEFAULT_WORKERS)
    p.add_argument("--ego-frames", type=int, default=const.EGO_FRAMES)
    p.add_argument("--coop-frames", type=int, default=const.COOP_FRAMES)
    p.add_argument("--out", default=const.DEFAULT_OUTPUT_DIR)

    p = sub.add_parser("render", help="draw a run directory's artifacts")
    p.add_argument("--run", required=True)
    p.add_argument("--key", default=None, help="<agent>@<t_us>")
    p.add_argument("--out", default=None)

    p = sub.add_parser("params", help="write a parameter bundle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--out", default=str(Path(const.DEFAULT_OUTPUT_DIR) / "params.npz"))

    sub.add_parser("selftest", help="check method constants")
    return parser


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    out = Path(args.out)
    save_scenario(scenario, out / scenario.name / "scenario.json")
    write_frames(generate_scenario(scenario), out, scenario.name)
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    streams = read_scenario_frames(args.frames) if args.frames else None
    out = Path(args.out) / f"{scenario.name}_{args.mode}"
    result = run_pipeline(
        scenario,
        args.mode,
        params=_params_from_args(args),
        seed=args.seed,
        ablate=args.ablate,
        weights=LossWeights(args.alpha, args.beta),
        out_dir=out,
        streams=streams,
    )
    logger.info(
        f"{result.scenario} mode={result.mode} latency={result.latency_ms}ms "
        f"ap50={result.ap50:.3f} ap70={result.ap70:.3f} n_gt={result.n_gt} n_det={result.n_det}"
    )
    for agent_id, shift in result.peak_displacement.items():
        shown = "n/a" if shift is None else f"{shift:.2f} m"
        logger.info(f"Peak displacement '{agent_id}': {shown}")
    for name, value in result.losses.items():
        logger.info(f"Loss {name}: {value:.6f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    scenario = _scenario_from_args(args)
    ap50, ap70 = evaluate_detections(scenario, read_detections(args.detections))
    if ap50.no_gt:
        logger.warning("No ground truth in the evaluated frames, AP reported as 0")
    logger.info(f"ap50={ap50.ap:.4f} ap70={ap70.ap:.4f} n_gt={ap50.n_gt} n_det={ap50.n_det}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        coop = [str(a.latency) for a in scenario.agents if not a.ego]
        row = {
            "mode": "eval",
            "latency_ms": coop[0] if coop else "0",
            "ap50": ap50.ap,
            "ap70": ap70.ap,
            "n_gt": ap50.n_gt,
            "n_det": ap50.n_det,
        }
        pd.DataFrame([row], columns=list(const.METRICS_COLUMNS)).to_csv(out / const.METRICS_CSV, index=False)
        ap50.table().to_csv(out / const.PR_CSV, index=False)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    names = args.scenario or list(STANDARD_SUITE)
    scenarios = [resolve_scenario(n, args.seed).with_frames(args.ego_frames, args.coop_frames) for n in names]
    modes = args.mode or ["oracle", "unaligned"]
    table = latency_sweep(scenarios, modes, args.latencies, args.seed, _params_from_args(args), args.workers)
    write_sweep(table, args.out)
    summary = summarize_sweep(table)
    for mode in modes:
        if summary.empty:
            break
        drops = latency_drop(summary, mode)
        logger.info(f"{mode}: AP50 drop by latency {drops.round(3).to_dict()}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    render_run(args.run, args.out, args.key)
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    factory = ParamBundle.oracle if args.oracle else ParamBundle.seeded
    path = save_params(factory(args.seed, agents=args.agents), args.out)
    logger.info(f"Wrote parameters to {path}")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    checks = const.check_constants()
    for name, ok in checks.items():
        (logger.info if ok else logger.error)(f"{'ok  ' if ok else 'FAIL'} {name}")
    return 0 if all(checks.values()) else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "align": cmd_align,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "render": cmd_render,
    "params": cmd_params,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logger.enable_debug()
    try:
        return COMMANDS[args.command](args)
    except CoopSyncError as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
