"""Command-line interface.

Subcommands: fit, decode, simulate, eval, diagnose, bench. Every command
is deterministic given its flags (all randomness flows from --seed), and
all file formats are documented in :mod:`nphmm.modelio`. Exit codes:
0 success, 2 input problem (bad flags, malformed files), 3 numerical
failure (e.g. every EM start failed).
"""

import argparse
import json
import sys

from . import __version__
from .core import forward_backward, map_decode, viterbi
from .diagnostics import diagnose
from .em import FitOptions, fit
from .emissions.discrete import PenaltySpec
from .emissions.kernel import KERNEL_IDS
from .errors import NPHMMError, NumericError
from .modelio import (
    bench_config_from_dict,
    load_json_config,
    load_model,
    read_data,
    read_states,
    save_model,
    scheme_from_dict,
    write_data,
    write_states,
)
from .sim import (
    aligned_accuracy,
    default_benchmark_config,
    rand_index,
    run_benchmark,
    simulate_regions,
    write_benchmark_csv,
)

EMISSION_CHOICES = ("nb", "np", "np-reg", "mixture", "kernel")
COMPONENT_CHOICES = (
    "poisson", "gaussian", "binomial", "triangular", "zero-inflated",
)


def _json_out(payload, stream=None):
    (stream or sys.stdout).write(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )


def _fit_options_from_args(args):
    kw = {
        "family": args.emission,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "n_starts": args.starts,
        "seed": args.seed,
    }
    if args.emission == "np-reg" or args.penalty_lambda is not None:
        kw["penalty"] = PenaltySpec(
            lam=args.penalty_lambda if args.penalty_lambda is not None else 1.0,
            alpha=args.alpha,
        )
    if args.emission == "mixture":
        kw["component_family"] = args.component_family
        kw["n_components"] = args.components
        kw["trials"] = args.binomial_trials
    if args.emission == "kernel":
        kw["kernel_id"] = args.kernel
        kw["bandwidth"] = None if args.bandwidth_cv else args.bandwidth
        kw["inner_iters"] = args.inner_iters
    return FitOptions(**kw)


def cmd_fit(args):
    obs = read_data(args.data)
    opts = _fit_options_from_args(args)
    report = fit(obs, args.states, opts)
    save_model(report.model, args.out)
    payload = {
        "family": args.emission,
        "states": args.states,
        "converged": report.converged,
        "iterations": report.iterations,
        "best_start_index": report.best_start_index,
        "log_lik": report.log_lik,
        "objective_trace": [float(v) for v in report.objective_trace],
        "failed_starts": [
            {"start": s, "reason": reason} for s, reason in report.failed_starts
        ],
        "model_file": args.out,
    }
    if args.report is not None:
        with open(args.report, "w") as fh:
            _json_out(payload, fh)
    else:
        _json_out(payload)
    return 0


def cmd_decode(args):
    model = load_model(args.model)
    obs = read_data(args.data)
    log_b = model.log_densities(obs.values)
    if args.method == "viterbi":
        path = viterbi(model.trans, log_b)
    else:
        path = map_decode(forward_backward(model.trans, log_b))
    write_states(path, args.out)
    return 0


def cmd_simulate(args):
    payload = load_json_config(args.config)
    scheme = scheme_from_dict(payload)
    out = simulate_regions(scheme, args.seed)
    write_data(out.obs, args.out)
    if args.truth_out is not None:
        write_states(out.truth, args.truth_out)
    return 0


def cmd_eval(args):
    pred = read_states(args.pred)
    truth = read_states(args.truth)
    _json_out({
        "rand_index": rand_index(truth, pred),
        "aligned_accuracy": aligned_accuracy(truth, pred),
        "n": int(pred.shape[0]),
    })
    return 0


def cmd_diagnose(args):
    model = load_model(args.model)
    report = diagnose(model, tol=args.tol)
    _json_out(report.to_dict())
    return 0


def cmd_bench(args):
    if args.config is not None:
        config = bench_config_from_dict(load_json_config(args.config))
    else:
        config = default_benchmark_config()
    rows = run_benchmark(config)
    write_benchmark_csv(rows, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nphmm",
        description=(
            "Hidden Markov models with nonparametric discrete, negative "
            "binomial, mixture, and kernel emissions."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to a data file by EM")
    p_fit.add_argument("--data", required=True, help="observation file")
    p_fit.add_argument("--states", required=True, type=int,
                       help="number of hidden states k")
    p_fit.add_argument("--emission", required=True, choices=EMISSION_CHOICES,
                       help="emission family")
    p_fit.add_argument("--lambda", dest="penalty_lambda", type=float,
                       default=None,
                       help="penalty strength for np-reg (default 1.0)")
    p_fit.add_argument("--alpha", type=float, default=2.0,
                       help="penalty exponent: weight m(y) = y^alpha "
                            "(default 2.0)")
    p_fit.add_argument("--components", type=int, default=None,
                       help="mixture dictionary size m (default: k)")
    p_fit.add_argument("--component-family", choices=COMPONENT_CHOICES,
                       default="poisson",
                       help="mixture component family (default poisson)")
    p_fit.add_argument("--binomial-trials", type=int, default=10,
                       help="trial count for binomial components (default 10)")
    bw = p_fit.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float, default=None,
                    help="fixed kernel bandwidth")
    bw.add_argument("--bandwidth-cv", action="store_true",
                    help="pick the kernel bandwidth by leave-one-out "
                         "cross-validation (default when no --bandwidth)")
    p_fit.add_argument("--kernel", choices=KERNEL_IDS,
                       default="gaussian-spherical",
                       help="kernel id (default gaussian-spherical)")
    p_fit.add_argument("--inner-iters", type=int, default=5,
                       help="anchor-weight updates per EM iteration for "
                            "kernel fits (default 5)")
    p_fit.add_argument("--max-iter", type=int, default=500,
                       help="EM iteration cap (default 500)")
    p_fit.add_argument("--tol", type=float, default=1e-6,
                       help="relative objective tolerance (default 1e-6)")
    p_fit.add_argument("--starts", type=int, default=5,
                       help="number of EM restarts (default 5)")
    p_fit.add_argument("--seed", type=int, default=0,
                       help="random seed (default 0)")
    p_fit.add_argument("--out", required=True, help="model file to write")
    p_fit.add_argument("--report", default=None,
                       help="fit report JSON file (default: stdout)")
    p_fit.set_defaults(func=cmd_fit)

    p_dec = sub.add_parser("decode", help="decode a data file with a model")
    p_dec.add_argument("--model", required=True, help="model file")
    p_dec.add_argument("--data", required=True, help="observation file")
    p_dec.add_argument("--method", choices=("viterbi", "map"),
                       default="viterbi",
                       help="decoder (default viterbi)")
    p_dec.add_argument("--out", required=True,
                       help="state file to write (one 1-based label per line)")
    p_dec.set_defaults(func=cmd_decode)

    p_sim = sub.add_parser("simulate",
                           help="simulate a region-structured sequence")
    p_sim.add_argument("--config", required=True,
                       help="region scheme JSON file")
    p_sim.add_argument("--seed", type=int, default=0,
                       help="random seed (default 0)")
    p_sim.add_argument("--out", required=True, help="observation file to write")
    p_sim.add_argument("--truth-out", default=None,
                       help="state file for the generating path")
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("eval", help="score a decoded path against truth")
    p_eval.add_argument("--pred", required=True, help="predicted state file")
    p_eval.add_argument("--truth", required=True, help="true state file")
    p_eval.set_defaults(func=cmd_eval)

    p_diag = sub.add_parser("diagnose",
                            help="check identifiability conditions of a model")
    p_diag.add_argument("--model", required=True, help="model file")
    p_diag.add_argument("--tol", type=float, default=1e-8,
                        help="singular-value tolerance (default 1e-8)")
    p_diag.set_defaults(func=cmd_diagnose)

    p_bench = sub.add_parser("bench", help="run a benchmark study to CSV")
    p_bench.add_argument("--config", default=None,
                         help="benchmark config JSON (default: the stock "
                              "desk-scale study)")
    p_bench.add_argument("--out", required=True, help="CSV file to write")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"nphmm {args.command}: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"nphmm {args.command}: {exc}", file=sys.stderr)
        return 3
    except NPHMMError as exc:
        print(f"nphmm {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
