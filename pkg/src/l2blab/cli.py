"""Command-line entry point: ``l2blab {gen,corrupt,train,audit,compare}``.

Exit codes: 0 success, 2 invalid config or input, 3 runtime failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import datagen, harness
from .numcore import InvalidInputError, make_rng

log = logging.getLogger("l2blab")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidInputError(message)


def cmd_gen(args):
    rng = make_rng(args.seed, "gen")
    if args.kind == "blobs":
        ds = datagen.gen_blobs(args.classes, args.per_class, args.dim, args.sep, rng)
    else:
        ds = datagen.gen_spirals(args.classes, args.per_class, args.jitter, rng)
    datagen.write_csv(ds, args.out)
    log.info("wrote %d samples to %s", len(ds), args.out)


def cmd_corrupt(args):
    ds = datagen.read_csv(args.inp)
    inject = datagen.inject_symmetric if args.noise == "symmetric" else datagen.inject_asymmetric
    ds = inject(ds, args.fraction, make_rng(args.seed, "noise"))
    datagen.write_csv(ds, args.out)
    log.info("corrupted %d of %d labels -> %s", int(ds.noise_mask.sum()), len(ds), args.out)


def cmd_train(args):
    cfg = harness.load_config(args.config)
    result = harness.run_experiment(cfg, args.out_dir)
    b, f = result.best, result.final
    log.info("best epoch %d: val_loss %.4f test_acc %.4f; final test_acc %.4f",
             b.epoch, b.val_loss, b.test_acc, f.test_acc)


def cmd_audit(args):
    report = harness.audit_run(args.run, args.out)
    print(json.dumps({"auc": report.auc, "precision_at_k": report.precision_at_k,
                      "k": report.k}))


def cmd_compare(args):
    paths = [p for p in args.configs.split(",") if p]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    configs = [harness.load_config(p) for p in paths]
    rows = harness.compare(configs, seeds, names=[Path(p).stem for p in paths])
    harness._atomic_write(args.out, harness.compare_csv(rows))


def build_parser():
    p = _Parser(prog="l2blab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    g.add_argument("--kind", choices=("blobs", "spirals"), required=True)
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--sep", type=float, default=2.5)
    g.add_argument("--jitter", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("corrupt", help="inject label noise into a dataset CSV")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--noise", choices=("symmetric", "asymmetric"), required=True)
    c.add_argument("--fraction", type=float, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_corrupt)

    t = sub.add_parser("train", help="train from a key=value config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("audit", help="rank training samples by suspicion of label noise")
    a.add_argument("--run", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_audit)

    m = sub.add_parser("compare", help="compare configs over a list of seeds")
    m.add_argument("--configs", required=True)
    m.add_argument("--seeds", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
