"""Command-line entry point: ``feedback-lab <verb> [options]``.

Every option can also come from a plain ``key=value`` config file given with
``--config``; command-line flags win over the file.  CSV output starts with a
``#`` comment line recording the full configuration, then a header row.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import BOUNDS_HEADER, bounds_table, entropy_estimate, typeset_count_bound
from .channel import channel_info, check_theorem1_assumptions, format_channel_info, parse_channel
from .harness import (CensusSummary, ExperimentConfig, Summary, TrialError, run_census,
                      run_experiment, run_trial, sweep)
from .sed_exact import InvalidStateError

VERBS = ("info", "simulate", "sweep", "bounds", "census", "validate")

# config key -> (flag type, help)
OPTIONS = {
    "channel": (str, "bsc:<p> or a row-major matrix a,b;c,d"),
    "arrivals": (str, "periodic | bernoulli:<q> | block | buffered:<inner>"),
    "codec": (str, "exact | typeset | exact-block | exact-buffered | typeset-reference"),
    "n": (str, "message length; sweep also accepts start:stop:step or a comma list"),
    "epsilon": (float, "target error probability"),
    "trials": (int, "Monte Carlo trials"),
    "master_seed": (int, "master seed for per-trial generators"),
    "time_cap": (int, "channel-use cap per trial (default ceil(50 n / C))"),
    "rule": (str, "partition rule of the exact codec: greedy | exact"),
    "workers": (int, "worker processes (default: FEEDBACK_LAB_THREADS or CPU count)"),
    "out": (str, "output path (default stdout)"),
    "trace": (str, "simulate: write the per-step trace of trial 0 to this CSV path"),
    "t_max": (int, "census horizon"),
    "h_limit": (float, "per-bit entropy limit for the bounds (estimated if omitted)"),
    "rates": (str, "rate grid start:stop:step for the bounds table"),
    "configs": (int, "random configurations for validate"),
    "equivalence_trials": (int, "lockstep oracle trials for validate"),
}

DEFAULTS = {
    "channel": "bsc:0.02", "arrivals": "periodic", "codec": "typeset", "n": "8",
    "epsilon": 1e-3, "trials": 1000, "master_seed": 0, "rule": "greedy", "t_max": 100,
    "configs": 1000, "equivalence_trials": 200,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; usage errors are 1 here
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="feedback-lab", description="Streaming feedback coding simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for key, (typ, help_text) in OPTIONS.items():
        flag = "--" + key.replace("_", "-")
        names = [flag, "--seed"] if key == "master_seed" else [flag]
        parser.add_argument(*names, dest=key, type=typ, default=None, help=help_text)
    return parser


def read_config(path: str) -> dict:
    """Parse a key=value file; '#' starts a comment; keys may use - or _."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in OPTIONS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            typ = OPTIONS[key][0]
            try:
                out[key] = typ(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from None
    return out


def resolve(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config(args.config))
    opts.update({k: v for k, v in vars(args).items() if k in OPTIONS and v is not None})
    return opts


def parse_n_values(spec: str) -> list[int]:
    spec = str(spec).strip()
    try:
        if ":" in spec:
            parts = [int(v) for v in spec.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step <= 0:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad n specification {spec!r}") from None


def parse_grid(spec: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"bad grid {spec!r}; expected start:stop:step") from None
    if step <= 0:
        raise UsageError("grid step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def make_config(opts: dict, n: Optional[int] = None) -> ExperimentConfig:
    if n is None:
        values = parse_n_values(opts["n"])
        if len(values) != 1:
            raise UsageError("this verb takes a single --n")
        n = values[0]
    try:
        cfg = ExperimentConfig(codec=opts["codec"], channel=opts["channel"], arrivals=opts["arrivals"],
                               n=n, epsilon=opts["epsilon"], trials=opts["trials"],
                               master_seed=opts["master_seed"], time_cap=opts.get("time_cap"),
                               rule=opts["rule"])
        cfg.model  # parse eagerly so bad specs are usage errors
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _emit(opts: dict, lines: Sequence[str]) -> None:
    text = "\n".join(lines) + "\n"
    if opts.get("out"):
        with open(opts["out"], "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _comment(opts: dict, **extra) -> str:
    keys = ["codec", "channel", "arrivals", "n", "epsilon", "trials", "master_seed", "time_cap", "rule"]
    fields = [f"{k}={opts.get(k)}" for k in keys] + [f"{k}={v}" for k, v in extra.items()]
    return "# config " + " ".join(fields)


def _warn_flagged(summary: Summary) -> None:
    if summary.flagged:
        print(f"warning: n={summary.config.n}: {100 * summary.truncated_frac:.1f}% of trials hit "
              f"the time cap {summary.config.cap}", file=sys.stderr)


def cmd_info(opts: dict) -> int:
    try:
        ch = parse_channel(opts["channel"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    info = channel_info(ch)
    report = check_theorem1_assumptions(ch) if ch.input_size == 2 else None
    print(format_channel_info(ch, info, report))
    if opts.get("out"):
        _emit(opts, [f"# config channel={opts['channel']}", "C,caid0,caid1,C1,x1,x2", info.csv_row()])
    return 0


def write_trace(cfg: ExperimentConfig, path: str, opts: dict) -> None:
    if cfg.codec == "typeset-reference":
        raise UsageError("the reference codec has no trace output")
    rows: list[dict] = []

    def record(codec, t, x, y, true_index):
        rows.append(codec.trace_row(x, y))

    run_trial(cfg, 0, observer=record)
    header = list(rows[0]) if rows else ["t"]
    lines = [_comment(opts, trial=0), ",".join(header)]
    lines += [",".join(f"{r[k]:.12g}" if isinstance(r[k], float) else str(r[k]) for k in header) for r in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_simulate(opts: dict) -> int:
    cfg = make_config(opts)
    if opts.get("trace"):
        write_trace(cfg, opts["trace"], opts)
    summary = run_experiment(cfg, opts.get("workers"))
    _warn_flagged(summary)
    _emit(opts, [_comment(opts, time_cap_effective=cfg.cap), Summary.CSV_HEADER, summary.csv_row()])
    return 0


def cmd_sweep(opts: dict) -> int:
    values = parse_n_values(opts["n"])
    if not values:
        raise UsageError("empty n list")
    template = make_config(opts, n=values[0])
    summaries = sweep(template, values, opts.get("workers"))
    for s in summaries:
        _warn_flagged(s)
    _emit(opts, [_comment(opts), Summary.CSV_HEADER] + [s.csv_row() for s in summaries])
    return 0


def cmd_bounds(opts: dict) -> int:
    cfg = make_config(opts)
    info = channel_info(cfg.dmc)
    h_limit = opts.get("h_limit")
    extra = {}
    if h_limit is None:
        est_cfg = cfg.with_(codec="typeset" if cfg.dmc.is_bsc() and cfg.model.instantaneous else "exact")
        try:
            est = entropy_estimate(est_cfg, workers=opts.get("workers"))
        except ValueError:
            est = None  # no evaluation time for this arrival model; rows report n/a
        h_limit = 1.0 if est is None else min(est.per_bit, 1.0)
        extra = {"h_limit_source": "default" if est is None else
                 f"estimate(n={cfg.n},se={est.per_bit_se:.3g})"}
    grid = parse_grid(opts.get("rates") or f"0:{info.capacity:.6f}:0.01")
    rows = bounds_table(cfg.dmc, cfg.model, h_limit, grid)
    _emit(opts, [_comment(opts, h_limit=h_limit, **extra), BOUNDS_HEADER] + rows)
    return 0


def census_rows(summary: CensusSummary) -> list[str]:
    m = summary.config.model
    q = m.q if m.kind == "bernoulli" else 1.0
    rows = []
    for t, nb, na, fc in zip(summary.t, summary.mean_nb, summary.mean_na, summary.freq_event_c):
        if t >= 2:
            bnb, bna = typeset_count_bound(q, t - 1)
            bounds = f"{bnb:.4f},{bna:.4f}"
        else:
            bounds = "n/a,n/a"
        rows.append(f"{t},{nb:.4f},{na:.4f},{bounds},{fc:.6f}")
    return rows


def cmd_census(opts: dict) -> int:
    cfg = make_config({**opts, "codec": "typeset"})
    summary = run_census(cfg, opts["t_max"], opts.get("workers"))
    _emit(opts, [_comment({**opts, "codec": "typeset"}, t_max=opts["t_max"]),
                 CensusSummary.CSV_HEADER] + census_rows(summary))
    return 0


def cmd_validate(opts: dict) -> int:
    from .validate import invariant_suite

    workers = opts.get("workers") or 2
    results = invariant_suite(num_configs=opts["configs"], seed=opts["master_seed"],
                              equivalence_trials=opts["equivalence_trials"], workers=workers)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {"info": cmd_info, "simulate": cmd_simulate, "sweep": cmd_sweep, "bounds": cmd_bounds,
            "census": cmd_census, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        opts = resolve(args)
        return COMMANDS[args.verb](opts)
    except UsageError as exc:
        print(f"feedback-lab: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"feedback-lab: error: {exc}", file=sys.stderr)
        return 1
    except (TrialError, InvalidStateError) as exc:
        print(f"feedback-lab: invariant failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
