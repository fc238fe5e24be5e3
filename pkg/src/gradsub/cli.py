"""``gradsub`` command line: pss | train | study | sweep | dump-probe-grads.

Exit codes: 0 success, 2 input/format error, 3 dimension mismatch,
4 degenerate (rank-zero) subspace, 5 numerical divergence.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import cotrainer, formats, svg, synthtasks
from .config import ConfigError, canonical_lines, canonical_text, from_lines, load_config, parse_ratio
from .cotrainer import DivergenceError, TrainConfig
from .gradnet import ToyModel, param_shapes
from .matcore import EmptySubspaceError, NumericalFailure, RankTolerance
from .subspace import DimensionMismatch, pss_trace

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIMENSION = 3
EXIT_DEGENERATE = 4
EXIT_DIVERGENCE = 5

# reference values measured at full scale, echoed into study summaries
REFERENCE_PSS = (("Cotrain", 0.25), ("SpatiallyGuided", 0.42))


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, config, state):
    shapes = param_shapes(config.model)
    formats.write_checkpoint(path, canonical_lines(config), [(n, state[n]) for n, _ in shapes])


def load_checkpoint(path):
    """``(TrainConfig, ToyModel)`` from a CKPT1 file."""
    try:
        lines, params = formats.read_checkpoint(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc}", EXIT_INPUT) from None
    config = from_lines(lines)
    expected = [n for n, _ in param_shapes(config.model)]
    names = [n for n, _ in params]
    if names != expected:
        raise formats.FormatError(f"parameter blocks out of canonical order: {names[:3]}...")
    return config, ToyModel(config.model, dict(params))


# -- helpers -------------------------------------------------------------------


def _out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}", EXIT_INPUT) from None
    return path


def _seeds(text, default):
    if text is None:
        return (default,)
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise CliError(f"--seeds must be comma-separated integers, got {text!r}", EXIT_INPUT) from None
    if not seeds:
        raise CliError("--seeds is empty", EXIT_INPUT)
    return seeds


def _ratios(text):
    try:
        ratios = [parse_ratio(r) for r in text.split(",") if r.strip()]
    except ValueError as exc:
        raise CliError(f"--ratios: {exc}", EXIT_INPUT) from None
    if not ratios:
        raise CliError("--ratios is empty", EXIT_INPUT)
    return ratios


def _config(path):
    return TrainConfig() if path is None else load_config(path)


def _write(path, text):
    formats.atomic_write(path, text)


# -- commands ------------------------------------------------------------------


def cmd_pss(args):
    try:
        a = formats.read_grdm(args.file_a)
        b = formats.read_grdm(args.file_b)
    except OSError as exc:
        raise CliError(f"cannot read gradient dump: {exc}", EXIT_INPUT) from None
    tol = RankTolerance(args.tol) if args.tol is not None else None
    result = pss_trace(a, b, tol)
    print(json.dumps(result.to_dict()))
    return EXIT_OK


def _train_files(out, config, init, report):
    _write(os.path.join(out, "report.csv"), formats.report_csv(report))
    save_checkpoint(os.path.join(out, "init.ckpt"), config, init.state())
    save_checkpoint(os.path.join(out, "final.ckpt"), config, report.final_state)
    _write(os.path.join(out, "config-echo.txt"), canonical_text(config))


def cmd_train(args):
    config = _config(args.config)
    out = _out_dir(args.out)
    init = cotrainer.pretrain_grounding(config)
    report = cotrainer.train(config.strategy, config, init)
    _train_files(out, config, init, report)
    last = report.last
    print(
        f"{config.strategy.name} seed {config.master_seed}: final-window PSS {report.final_window_pss():.4f}, "
        f"grounding MSE {last.grounding_mse:.4g}, action MSE {last.action_mse:.4g}"
    )
    return EXIT_OK


SUMMARY_HEADER = (
    "strategy,seeds,pss_final_mean,pss_final_std,pss_time_mean,"
    "grounding_mse_mean,grounding_mse_std,action_mse_mean,action_mse_std"
)


def summary_csv(study):
    f = formats.fmt_float
    lines = [
        "# reference PSS at full scale (3B-parameter model), not reproducible at toy scale: "
        + ", ".join(f"{name}={value}" for name, value in REFERENCE_PSS),
        f"# seeds: {','.join(str(s) for s in study.seeds)}",
        SUMMARY_HEADER,
    ]
    for s in study.summaries:
        lines.append(
            ",".join(
                [s.strategy, str(s.seeds)]
                + [f(x) for x in (s.pss_final_mean, s.pss_final_std, s.pss_time_mean)]
                + [f(x) for x in (s.grounding_mse_mean, s.grounding_mse_std, s.action_mse_mean, s.action_mse_std)]
            )
        )
    return "\n".join(lines) + "\n"


def pss_curves(study, strategies):
    series = []
    for s in strategies:
        reps = [study.runs[(s.name, seed)] for seed in study.seeds]
        steps = [x.step for x in reps[0].samples]
        with np.errstate(invalid="ignore"):
            mean = np.nanmean(np.array([r.series("pss") for r in reps]), axis=0)
        series.append((s.name, steps, [float(v) for v in mean]))
    return svg.line_chart(series, title="PSS between grounding and action gradients", y_label="PSS", y_range=(0.0, 1.0))


def cmd_study(args):
    config = _config(args.config)
    seeds = _seeds(args.seeds, config.master_seed)
    out = _out_dir(args.out)
    strategies = cotrainer.STRATEGIES
    study = cotrainer.run_strategy_study(seeds, config, strategies)
    for s in strategies:
        for seed in seeds:
            rep = study.runs[(s.name, seed)]
            _write(os.path.join(out, f"report-{s.name}-seed{seed}.csv"), formats.report_csv(rep))
    _write(os.path.join(out, "summary.csv"), summary_csv(study))
    _write(os.path.join(out, "pss_curves.svg"), pss_curves(study, strategies))
    for s in study.summaries:
        print(
            f"{s.strategy:>16}: PSS {s.pss_final_mean:.4f} +- {s.pss_final_std:.4f}, "
            f"grounding MSE {s.grounding_mse_mean:.4g}, action MSE {s.action_mse_mean:.4g}"
        )
    return EXIT_OK


SWEEP_HEADER = "ratio,grounding_mse,action_mse,final_pss"


def sweep_csv(rows, ratios):
    """One line per ratio, metrics averaged over seeds."""
    f = formats.fmt_float
    lines = [SWEEP_HEADER]
    for ratio in ratios:
        mine = [r for r in rows if r.ratio == tuple(ratio)]
        g = np.mean([r.grounding_mse for r in mine])
        a = np.mean([r.action_mse for r in mine])
        p = np.mean([r.final_pss for r in mine])
        lines.append(f"{cotrainer.format_ratio(ratio)},{f(g)},{f(a)},{f(p)}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args):
    ratios = _ratios(args.ratios)
    config = _config(args.config)
    seeds = _seeds(args.seeds, config.master_seed)
    out = _out_dir(args.out)
    rows = cotrainer.run_ratio_sweep(ratios, config, seeds, config.strategy)
    text = sweep_csv(rows, ratios)
    _write(os.path.join(out, "sweep.csv"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dump_probe_grads(args):
    ckpt_config, model = load_checkpoint(args.checkpoint)
    config = ckpt_config if args.config is None else load_config(args.config)
    if config.model != ckpt_config.model:
        raise CliError("--config describes a different model than the checkpoint", EXIT_INPUT)
    out = _out_dir(args.out)
    probes = synthtasks.probe_batches(config.probe_seed, config.strategy.use_prompt, config.task)
    g_spat, g_act = cotrainer.probe_gradients(model, probes, config.probe.param, config.probe.center)
    formats.write_grdm(os.path.join(out, "g_spat.grdm"), g_spat)
    formats.write_grdm(os.path.join(out, "g_act.grdm"), g_act)
    print(f"wrote {g_spat.shape[0]}x{g_spat.shape[1]} gradients of {model.resolve(config.probe.param)}")
    print(f"probe rank cutoff: pss g_spat.grdm g_act.grdm --tol {formats.fmt_float(config.probe.rank_tol)}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gradsub", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pss", help="PSS between two gradient dumps (JSON on stdout)")
    s.add_argument("file_a")
    s.add_argument("file_b")
    s.add_argument("--tol", type=float, default=None, help="relative rank cutoff (default 1e-10)")
    s.set_defaults(func=cmd_pss)

    s = sub.add_parser("train", help="pretrain + one strategy run")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("study", help="all three strategies over several seeds")
    s.add_argument("--config")
    s.add_argument("--seeds", help="comma-separated, default: the config seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("sweep", help="loss-ratio sweep of the configured strategy")
    s.add_argument("--config")
    s.add_argument("--ratios", required=True, help="e.g. 1:1,1:5,1:10,1:15,1:20")
    s.add_argument("--seeds")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("dump-probe-grads", help="write probe gradients of a checkpoint as GRDM files")
    s.add_argument("checkpoint")
    s.add_argument("--config", help="override the config embedded in the checkpoint")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dump_probe_grads)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        where = f" (key {exc.key})" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except formats.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DimensionMismatch as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except EmptySubspaceError as exc:
        print(f"degenerate subspace: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DivergenceError, NumericalFailure) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
