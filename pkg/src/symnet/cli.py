"""symnet command line: train, count, check, bench, approx-demo, sweep-nway."""
import argparse
import json
import logging
import sys

from .errors import SymnetError


def _load(path):
    from .harness.config import load_config
    return load_config(path)


def cmd_train(args):
    from .harness.runner import run_experiment, run_repeated
    cfg = _load(args.config)
    if args.repeat > 1:
        summary, _ = run_repeated(cfg, args.repeat, args.out, args.report)
        print(json.dumps(summary, sort_keys=True))
    else:
        rep = run_experiment(cfg, args.out)
        print(json.dumps(rep["final"], sort_keys=True))
    return 0


def cmd_count(args):
    from .harness.runner import build_model
    cfg = _load(args.config)
    shape = cfg.data["shape"]
    model = build_model(cfg, in_shape=tuple(shape) if shape else None)
    print(f"{model.name}")
    print(f"train {model.count_params('train')}")
    print(f"test {model.count_params('test')}")
    return 0


def cmd_check(args):
    from .checks import run_checks
    rows = run_checks(args.trials, args.seed)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


def cmd_bench(args):
    from .bench import format_table, run_all
    backends = None if args.backend == "both" else [args.backend]
    results, info = run_all(tuple(args.sizes), args.m, args.reps, backends)
    if args.json:
        for r in results:
            print(json.dumps(r.row(), sort_keys=True))
        print(json.dumps(info, sort_keys=True))
    else:
        print(format_table(results))
        print(f"dense baseline monotone in n: {info['dense_monotone']} (attempts {info['attempts']})")
    return 0


def cmd_approx(args):
    from .harness.approx import approx_demo
    out = approx_demo(args.target, args.n, args.width, args.seed, maxiter=args.maxiter)
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"target {out['target']}  n={out['n']}  width={out['width']}")
        for k in ("symmetric", "unconstrained"):
            print(f"  {k:<14} sup error {out[k]['sup_error']:.3e}  params {out[k]['params']}")
        print(f"  ratio (symmetric / unconstrained) {out['ratio']:.3f}")
    return 0


def _parse_ways(specs):
    ways = {}
    for s in specs:
        kind, _, ns = s.partition(":")
        try:
            ways[kind] = tuple(int(n) for n in ns.split(",") if n)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad --ways entry {s!r}; expected kind:N,N,...") from None
    return ways


def cmd_sweep(args):
    from .harness.sweep import format_rows, sweep_nway
    cfg = _load(args.config)
    rows = sweep_nway(cfg, _parse_ways(args.ways) if args.ways else None, baseline=not args.no_baseline)
    if args.json:
        for r in rows:
            print(json.dumps(r, sort_keys=True))
    else:
        print(format_rows(rows))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="symnet", description="Symmetric weight parameterizations: training and tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train one config and write report + checkpoints")
    t.add_argument("config")
    t.add_argument("--out", help="output directory (report.json, timing.json, *.symw)")
    t.add_argument("--repeat", type=int, default=1, help="runs with seeds seed..seed+k-1")
    t.add_argument("--report", choices=("median", "mean"), default="median")
    t.set_defaults(fn=cmd_train)

    c = sub.add_parser("count", help="print train/test parameter counts")
    c.add_argument("config")
    c.set_defaults(fn=cmd_count)

    k = sub.add_parser("check", help="randomized gradient/invariant/kernel checks")
    k.add_argument("--trials", type=int, default=100)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(fn=cmd_check)

    b = sub.add_parser("bench", help="packed symmetric kernels vs dense BLAS")
    b.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    b.add_argument("--m", type=int, default=64, help="columns for symm")
    b.add_argument("--reps", type=int, default=30)
    b.add_argument("--backend", choices=("python", "compiled", "both"), default="both")
    b.add_argument("--json", action="store_true", help="one JSON row per result")
    b.set_defaults(fn=cmd_bench)

    a = sub.add_parser("approx-demo", help="symmetric vs unconstrained one-hidden-layer regression")
    a.add_argument("--target", default="sine-product",
                   choices=("constant", "linear", "polynomial", "sine-product"))
    a.add_argument("--n", type=int, default=2)
    a.add_argument("--width", type=int, default=64)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--maxiter", type=int, default=3000)
    a.add_argument("--json", action="store_true")
    a.set_defaults(fn=cmd_approx)

    s = sub.add_parser("sweep-nway", help="train under chunking/blocking/triangulizing across N")
    s.add_argument("config")
    s.add_argument("--ways", nargs="+", help="e.g. chunking:2,4,8 nway_triangulizing:2,4,8")
    s.add_argument("--no-baseline", action="store_true")
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except argparse.ArgumentTypeError as e:
        parser.error(str(e))
    except (SymnetError, ValueError) as e:
        print(f"symnet {args.cmd}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
