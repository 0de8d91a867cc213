"""Command-line entry point: ``ngvi run|verify|fetch|plot``."""

import argparse
import sys
from dataclasses import replace

from .errors import NgviError


def _cmd_run(args):
    from .harness import load_config, run_experiment

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.max_iters is not None:
        cfg = replace(cfg, max_iters=args.max_iters)
    res = run_experiment(cfg, out_dir=args.out, cache_dir=args.cache_dir, offline=args.offline,
                         svg=args.svg)
    print(f"{'method':<6} {'seed':>4} {'iters':>6} {'conv':>4} {'neg_elbo':>14} "
          f"{'test_nll':>12} {'acc':>6}")
    for r in res.summary:
        nll = "" if r["test_nll"] is None else f"{r['test_nll']:.4f}"
        acc = "" if r["test_accuracy"] is None else f"{r['test_accuracy']:.4f}"
        print(f"{r['method']:<6} {r['seed']:>4} {r['iterations']:>6} {int(r['converged']):>4} "
              f"{r['neg_elbo']:>14.6f} {nll:>12} {acc:>6}"
              + (f"  error: {r['error']}" if r["error"] else ""))
    print(f"wrote {res.out_dir}")
    return 0 if all(not r["error"] for r in res.summary) else 1


def _cmd_verify(args):
    from .verify import verify_suite

    report = verify_suite(args.level, seed=args.seed or 0)
    for line in report.lines():
        print(line)
    print(f"exit code {report.exit_code}")
    return report.exit_code


def _cmd_fetch(args):
    from .data import fetch_dataset

    for p in fetch_dataset(args.dataset, cache_dir=args.cache_dir, offline=args.offline):
        print(p)
    return 0


def _cmd_plot(args):
    from .harness import emit_plot_data, load_run_dir

    records = load_run_dir(args.run_dir)
    out = args.out or f"{args.run_dir}/plots"
    for p in emit_plot_data(records, out, svg=args.svg):
        print(p)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--offline", action="store_true", help="never touch the network")
    common.add_argument("--cache-dir", help="dataset cache (default $NGVI_CACHE_DIR or ~/.cache/ngvi)")
    common.add_argument("--seed", type=int, help="override the seed list with one seed")
    common.add_argument("--max-iters", type=int, help="override the iteration budget")
    common.add_argument("--out", help="output directory")

    ap = argparse.ArgumentParser(prog="ngvi", description="Natural-gradient Gaussian VI experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run an experiment config or preset")
    p.add_argument("config", help="path to an .ini file or a preset name")
    p.add_argument("--svg", action="store_true", help="also render SVG charts")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("verify", parents=[common], help="run the theory verification suite")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=_cmd_verify)
    p = sub.add_parser("fetch", parents=[common], help="download a dataset into the cache")
    p.add_argument("dataset")
    p.set_defaults(func=_cmd_fetch)
    p = sub.add_parser("plot", parents=[common], help="rebuild plot series from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=_cmd_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NgviError, OSError) as exc:
        print(f"ngvi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
