"""Command-line front end: single runs, sweeps and controller traces.

Configuration is layered in a fixed order: built-in defaults, then an
optional ``--config`` file, then a ``--figure`` preset, then any number
of ``--set key=value`` overrides.  Output files are plain CSV with LF
line endings and repr() floats, so identical settings always produce
byte-identical files; each CSV gets a small gnuplot companion script.

Exit codes: 0 success, 2 bad configuration, 3 every simulated transfer
hit the time cap, 4 output files could not be written.
"""

import argparse
import csv
import os
import sys

from . import config as configmod
from .config import ConfigError
from .harness import (EVENT_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS,
                      TRACE_COLUMNS, build_instance, run_experiment, sweep)

# Presets named after the figures they reproduce: 2/5/8 sweep scenarios
# A/B/C over the default grid; 3/6/9 trace both algorithms through one
# high-pressure point of the same scenarios.
FIGURES = {
    2: {"scenario.template": "A"},
    5: {"scenario.template": "B"},
    8: {"scenario.template": "C"},
    3: {"scenario.template": "A", "scenario.loss": 0.10},
    6: {"scenario.template": "B", "scenario.loss": 0.10},
    9: {"scenario.template": "C", "scenario.load": 0.9},
}
TRACE_FIGURES = (3, 6, 9)


def build_parser():
    p = argparse.ArgumentParser(
        prog="cmtsim",
        description="Deterministic multipath transport simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
            ("run", cmd_run, "one transfer at the configured point"),
            ("sweep", cmd_sweep, "full grid of (algo, variable, seed) runs"),
            ("trace", cmd_trace, "one transfer per algorithm with "
                                 "controller state sampled on a time grid")):
        s = sub.add_parser(name, help=doc)
        s.add_argument("--config", help="key=value config file")
        s.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override one config key (repeatable)")
        s.add_argument("--figure", type=int, choices=sorted(FIGURES),
                       help="apply a named experiment preset")
        s.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes for sweeps")
        s.add_argument("--out", default=".", metavar="DIR",
                       help="directory for output files")
        s.set_defaults(func=fn)
    return p


def resolve_config(args):
    cfg = configmod.defaults()
    if args.config:
        configmod.load_file(cfg, args.config)
    if args.figure is not None:
        cfg.update(FIGURES[args.figure])
    configmod.apply_overrides(cfg, args.set)
    return cfg


def _variable(cfg):
    if cfg["scenario.template"] == "C":
        return cfg["scenario.load"]
    return cfg["scenario.loss"]


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _algo_file(base_name, algo):
    stem, ext = os.path.splitext(base_name)
    return f"{stem}_{algo}{ext}"


def _run_one(cfg, algo, trace):
    inst = build_instance(cfg, algo, _variable(cfg),
                          cfg["scenario.seeds"][0], trace=trace)
    rec = run_experiment(inst)
    return inst, rec


def cmd_run(cfg, args):
    inst, rec = _run_one(cfg, cfg["cc.algo"], bool(cfg["output.trace"]))
    _write_csv(_out_path(args, cfg["output.results_path"]),
               RESULT_COLUMNS, [rec.row()])
    if inst.trace is not None:
        _write_trace_files(cfg, args, {cfg["cc.algo"]: (inst, rec)})
    state = "timed out" if rec.timed_out else "done"
    print(f"{rec.scenario} {rec.algo} variable={rec.variable} "
          f"seed={rec.seed}: {state}, t={rec.transfer_time_s:.3f} s, "
          f"goodput={rec.goodput_bps / 1e6:.3f} Mb/s, "
          f"fast_rtx={rec.fast_rtx}, timeouts={rec.timeouts}")
    return 3 if rec.timed_out else 0


def cmd_sweep(cfg, args):
    records, summary = sweep(cfg, jobs=args.jobs)
    results_path = _out_path(args, cfg["output.results_path"])
    _write_csv(results_path, RESULT_COLUMNS, [r.row() for r in records])
    summary_path = _out_path(args, "summary.csv")
    _write_csv(summary_path, SUMMARY_COLUMNS, summary)
    _write_sweep_plot(cfg, args, os.path.basename(summary_path))
    print(f"wrote {results_path} ({len(records)} runs) and {summary_path}")
    return 3 if all(r.timed_out for r in records) else 0


def cmd_trace(cfg, args):
    algos = cfg["scenario.algos"] if args.figure is not None \
        else [cfg["cc.algo"]]
    done = {}
    for algo in algos:
        done[algo] = _run_one(cfg, algo, trace=True)
    _write_trace_files(cfg, args, done)
    for algo, (_, rec) in done.items():
        state = "timed out" if rec.timed_out else "done"
        print(f"{rec.scenario} {algo} variable={rec.variable}: {state}, "
              f"t={rec.transfer_time_s:.3f} s")
    return 3 if all(rec.timed_out for _, rec in done.values()) else 0


def _write_trace_files(cfg, args, done):
    base = cfg["output.trace_path"]
    for algo, (inst, _) in done.items():
        _write_csv(_out_path(args, _algo_file(base, algo)),
                   TRACE_COLUMNS, inst.trace.rows)
        _write_csv(_out_path(args, _algo_file("events.csv", algo)),
                   EVENT_COLUMNS, inst.assoc.cc_events)
    _write_trace_plot(cfg, args, sorted(done))


def _write_sweep_plot(cfg, args, summary_name):
    xlabel = "cross-traffic load" if cfg["scenario.template"] == "C" \
        else "link loss rate"
    series = ", \\\n     ".join(
        f'"{summary_name}" every ::1 '
        f'using 3:(strcol(2) eq "{algo}" ? $5 : 1/0) '
        f'with linespoints title "{algo}"'
        for algo in cfg["scenario.algos"])
    script = (f'# gnuplot script, written next to {summary_name}\n'
              f'set datafile separator ","\n'
              f'set xlabel "{xlabel}"\n'
              f'set ylabel "mean transfer time (s)"\n'
              f'set key top left\n'
              f'plot {series}\n')
    stem, _ = os.path.splitext(cfg["output.results_path"])
    _write_text(_out_path(args, stem + ".gp"), script)


def _write_trace_plot(cfg, args, algos):
    base = cfg["output.trace_path"]
    series = []
    for algo in algos:
        name = os.path.basename(_algo_file(base, algo))
        for path_id in (0, 1):
            series.append(
                f'"{name}" every ::1 '
                f'using 1:($2=={path_id} ? $3 : 1/0) '
                f'with lines title "{algo} path {path_id}"')
    script = ('# congestion window vs time, one series per (algo, path)\n'
              'set datafile separator ","\n'
              'set xlabel "time (s)"\n'
              'set ylabel "cwnd (bytes)"\n'
              'set key top right\n'
              'plot ' + ', \\\n     '.join(series) + '\n')
    stem, _ = os.path.splitext(base)
    _write_text(_out_path(args, stem + ".gp"), script)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    sys.exit(main())
