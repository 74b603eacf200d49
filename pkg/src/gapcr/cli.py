"""Command-line interface: ``gapcr estimate``, ``gapcr test`` and ``gapcr simulate``.

Exit codes: 0 success, 2 usage error, 3 input parse error, 4 configuration
error, 5 unidentifiable estimand.
"""

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _rng
from ._version import __version__
from .estimators import SURVIVAL_VARIANTS, Target, Variant, estimate_target
from .exceptions import ConfigError, SampleError, UnidentifiableError
from .inference import BootstrapPlan, bootstrap_se, test_group, test_prev_type, test_stage
from .io import read_long_table, write_sample, write_table
from .sample import build_sample
from .simulation import SimConfig, gen_sample, run_mc_study

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_CONFIG, EXIT_UNIDENTIFIABLE = 0, 2, 3, 4, 5


VARIANT_CHOICES = [v.value for v in Variant]
FUNCTIONAL_CHOICES = ["cif", "csh"] + [v.value for v in SURVIVAL_VARIANTS]


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _band(text):
    try:
        t1, t2 = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected t1:t2, got {text!r}") from None
    return t1, t2


def _add_input_args(p):
    g = p.add_argument_group("input")
    g.add_argument("--input", required=True, help="long-format table, one row per subject and stage")
    g.add_argument("--censor-col", help="column holding each subject's censoring time")
    g.add_argument("--censor-file", help="separate table with columns subject_id, censor_time")
    g.add_argument("--id-col", default="subject_id")
    g.add_argument("--stage-col", default="stage")
    g.add_argument("--gap-col", default="gap_time")
    g.add_argument("--cause-col", default="cause")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--num-causes", type=int, default=2)


def _add_boot_args(p, default_b):
    g = p.add_argument_group("bootstrap")
    g.add_argument("--bootstrap", type=int, default=default_b, metavar="B", help="replicates (0 to skip)")
    g.add_argument("--alpha", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=None, help="parallel workers (default: all cores)")


def _add_output_args(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="gapcr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gapcr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate curves with bootstrap intervals")
    _add_input_args(p)
    p.add_argument("--stage", type=int, nargs="+", default=[1])
    p.add_argument("--cause", type=int, nargs="+", default=[1])
    p.add_argument("--variant", nargs="+", choices=VARIANT_CHOICES, default=["cif"])
    p.add_argument("--plugin", choices=[v.value for v in SURVIVAL_VARIANTS], default="pl",
                   help="survival estimator inside the cumulative hazard")
    p.add_argument("--prev-cause", type=int, nargs="+", default=[1], help="previous cause for 'cond'")
    p.add_argument("--grid", type=_float_list, help="comma-separated times (default: gap deciles)")
    p.add_argument("--band", type=_band, metavar="T1:T2")
    p.add_argument("--ci", choices=["plain", "log"], default="log", help="interval in the plot table")
    _add_boot_args(p, 100)
    _add_output_args(p)

    p = sub.add_parser("test", help="bootstrap equality tests")
    _add_input_args(p)
    p.add_argument("--test", choices=["stage", "group", "prevtype"], required=True)
    p.add_argument("--stage", type=int, nargs="+", required=True, help="two stages for 'stage', one otherwise")
    p.add_argument("--t", type=_float_list, required=True, help="comma-separated test times")
    p.add_argument("--functional", choices=FUNCTIONAL_CHOICES, default="cif")
    p.add_argument("--cause", type=int, default=1)
    p.add_argument("--plugin", choices=[v.value for v in SURVIVAL_VARIANTS], default="pl")
    p.add_argument("--prev-cause", type=int, help="the other previous cause l for 'prevtype'")
    p.add_argument("--group-col", help="group label column for 'group'")
    p.add_argument("--groups", nargs=2, metavar=("G1", "G2"), help="labels to compare")
    _add_boot_args(p, 100)
    _add_output_args(p)

    p = sub.add_parser("simulate", help="Monte Carlo study of the estimators")
    p.add_argument("--config", help="key=value or JSON file with study settings")
    p.add_argument("--theta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--bootstrap", type=int, metavar="B")
    p.add_argument("--alpha-j", type=float, help="gap rate at every stage")
    p.add_argument("--censor-upper", type=float)
    p.add_argument("--grid", type=_float_list)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--sample-out", help="write one generated sample here and skip the study")
    _add_output_args(p)
    return parser


# -- helpers -----------------------------------------------------------------


def _load(args, with_groups=False):
    columns = {"id": args.id_col, "stage": args.stage_col, "gap": args.gap_col, "cause": args.cause_col}
    rows, censor, groups = read_long_table(
        args.input,
        columns=columns,
        censor_col=args.censor_col,
        censor_file=args.censor_file,
        group_col=args.group_col if with_groups else None,
        delimiter=args.delimiter,
    )
    if not rows and not censor:
        raise SampleError("no subjects parsed")
    return rows, censor, groups


def _workers(n):
    if n is None:
        return os.cpu_count() or 1
    return max(1, n)


def _default_grid(sample, stages):
    gaps = []
    for j in stages:
        if j <= sample.max_stage:
            cols = sample.stage_columns(j)
            gaps.append(cols.gap[cols.cause > 0])
    gaps = np.concatenate(gaps) if gaps else np.empty(0)
    if gaps.size == 0:
        return [1.0]
    return sorted(set(np.quantile(gaps, np.linspace(0.1, 0.9, 9)).tolist()))


def _targets(args):
    out = []
    for j, v in itertools.product(args.stage, args.variant):
        variant = Variant(v)
        if variant.is_survival:
            out.append(Target(variant, j))
        elif variant is Variant.COND_CIF:
            out.extend(Target(variant, j, cause=k, prev_cause=l) for k in args.cause for l in args.prev_cause)
        else:
            out.extend(Target(variant, j, cause=k, plugin=args.plugin) for k in args.cause)
    return list(dict.fromkeys(out))


def _plot_rows(label, est, summary, ci):
    """Step points of the curve plus grid points carrying interval bounds."""
    rows = {}
    nan = float("nan")
    t_all = np.r_[0.0, est.curve.jump_times]
    values, beyond = est.evaluate(t_all)
    for t, v, b in zip(t_all, values, beyond):
        rows[float(t)] = {"curve_id": label, "t": float(t), "value": float(v), "lower": nan, "upper": nan,
                          "flag": "beyond_tau" if b else ""}
    if summary is not None:
        lo, hi = summary.ci_log if ci == "log" else summary.ci_plain
        for m, t in enumerate(summary.grid):
            rows[float(t)] = {"curve_id": label, "t": float(t), "value": float(summary.estimate[m]),
                              "lower": float(lo[m]), "upper": float(hi[m]), "flag": summary.flags[m]}
    return [rows[t] for t in sorted(rows)]


# -- commands ----------------------------------------------------------------


def cmd_estimate(args):
    rows, censor, _ = _load(args)
    sample = build_sample(rows, censor, num_causes=args.num_causes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = args.grid or _default_grid(sample, args.stage)
    workers = _workers(args.workers)
    summary_rows, plot_rows, failed, done = [], [], [], 0
    for target in _targets(args):
        label = target.label
        try:
            est = estimate_target(sample, target)
            summary = None
            if args.bootstrap > 0:
                plan = BootstrapPlan(target, tuple(grid), args.bootstrap, args.alpha, args.seed, args.band)
                summary = bootstrap_se(sample, plan, workers=workers)
                for row in summary.to_rows():
                    summary_rows.append({"curve_id": label, "tau": est.tau, **row})
            else:
                values, beyond = est.evaluate(np.asarray(grid))
                for t, v, b in zip(grid, values, beyond):
                    summary_rows.append({"curve_id": label, "tau": est.tau, "t": float(t), "estimate": float(v),
                                         "flag": "beyond_tau" if b else ""})
            plot_rows.extend(_plot_rows(label, est, summary, args.ci))
            done += 1
        except (UnidentifiableError, ValueError) as exc:
            if isinstance(exc, SampleError):
                raise
            failed.append(label)
            print(f"gapcr: {label}: {exc}", file=sys.stderr)
    ext = args.format
    if summary_rows:
        write_table(out / f"estimates.{ext}", summary_rows, ext, args.seed)
        write_table(out / f"curves.{ext}", plot_rows, ext, args.seed)
    if done == 0:
        return EXIT_UNIDENTIFIABLE
    return EXIT_OK


def cmd_test(args):
    rows, censor, groups = _load(args, with_groups=args.test == "group")
    ss = _rng.as_seed_sequence(args.seed)
    workers = _workers(args.workers)
    common = dict(B=args.bootstrap, alpha=args.alpha, workers=workers)
    if args.bootstrap < 2:
        raise UsageError("--bootstrap must be at least 2 for tests")
    results = []
    if args.test == "stage":
        if len(args.stage) != 2:
            raise UsageError("--test stage needs two stages")
        sample = build_sample(rows, censor, num_causes=args.num_causes)
        for m, t in enumerate(args.t):
            results.append(test_stage(sample, args.stage[0], args.stage[1], t, args.functional, args.cause,
                                      random_state=_rng.child(ss, m), plugin=args.plugin, **common))
    elif args.test == "group":
        if not args.group_col:
            raise UsageError("--test group needs --group-col")
        labels = sorted(set(groups.values()))
        wanted = list(args.groups) if args.groups else labels
        if len(wanted) != 2:
            raise UsageError(f"need exactly two groups, found {labels}; pick two with --groups")
        samples = []
        for g in wanted:
            ids = {sid for sid, lab in groups.items() if lab == g}
            if not ids:
                raise UsageError(f"group {g!r} is empty")
            samples.append(build_sample([r for r in rows if r[0] in ids],
                                        {s: c for s, c in censor.items() if s in ids},
                                        num_causes=args.num_causes))
        for m, t in enumerate(args.t):
            results.append(test_group(samples[0], samples[1], args.stage[0], t, args.functional, args.cause,
                                      random_state=_rng.child(ss, m), plugin=args.plugin, **common))
    else:
        if args.prev_cause is None:
            raise UsageError("--test prevtype needs --prev-cause")
        if args.prev_cause == args.cause:
            raise UsageError("--test prevtype needs --prev-cause different from --cause")
        sample = build_sample(rows, censor, num_causes=args.num_causes)
        for m, t in enumerate(args.t):
            results.append(test_prev_type(sample, args.stage[0], args.cause, args.prev_cause, t,
                                          random_state=_rng.child(ss, m), **common))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / f"tests.{args.format}", [r.to_row() for r in results], args.format, args.seed)
    for r in results:
        verdict = "reject" if r.reject else "do not reject"
        print(f"{r.kind.value} {r.functional} t={r.t:g}: statistic={r.statistic:.4f} p={r.p_value:.4g} {verdict}")
    return EXIT_OK


_SIM_KEYS = {
    "theta": float, "n": int, "reps": int, "B": int, "alpha_j": float, "censor_upper": float,
    "grid": _float_list, "alpha": float, "seed": int,
}


def _read_sim_config(path):
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}, line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
    out = {}
    for key, value in raw.items():
        key = {"bootstrap": "B"}.get(key, key)
        if key not in _SIM_KEYS:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        conv = _SIM_KEYS[key]
        try:
            out[key] = conv(value) if not isinstance(value, list) else [float(v) for v in value]
        except (TypeError, ValueError, argparse.ArgumentTypeError):
            raise ConfigError(f"{path}: bad value for {key}: {value!r}") from None
    return out


def cmd_simulate(args):
    settings = _read_sim_config(args.config) if args.config else {}
    for key, attr in [("theta", "theta"), ("n", "n"), ("reps", "reps"), ("B", "bootstrap"), ("alpha_j", "alpha_j"),
                      ("censor_upper", "censor_upper"), ("grid", "grid"), ("alpha", "alpha"), ("seed", "seed")]:
        value = getattr(args, attr)
        if value is not None:
            settings[key] = value
    config = SimConfig(**settings)
    if args.sample_out:
        sample = gen_sample(config, _rng.generator(_rng.as_seed_sequence(config.seed), 0, 0))
        write_sample(sample, args.sample_out, seed=config.seed)
        return EXIT_OK
    result = run_mc_study(config, workers=_workers(args.workers))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        {"target": r.target, "stage": r.stage, "n": r.n, "theta": r.theta, "t": r.t, "truth": r.truth,
         "Bias": r.bias, "ESE": float("nan") if r.ese is None else r.ese, "BSE": r.bse, "CP": r.cp,
         "n_valid": r.n_valid, "flag": r.flags}
        for r in result.summary
    ]
    write_table(out / f"summary.{args.format}", rows, args.format, config.seed)
    write_table(out / f"rejection.{args.format}", result.rejection, args.format, config.seed)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"generator": f"gapcr {__version__}", "seed": config.seed, **result.manifest()}, fh, indent=1)
        fh.write("\n")
    print(f"{config.reps} replications in {result.wall_time:.1f}s, {result.failures} failed")
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "test": cmd_test, "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="gapcr: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except SampleError as exc:
        print(f"gapcr: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"gapcr: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"gapcr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnidentifiableError as exc:
        print(f"gapcr: {exc}", file=sys.stderr)
        return EXIT_UNIDENTIFIABLE
    except ValueError as exc:
        print(f"gapcr: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
