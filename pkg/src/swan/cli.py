"""``swan`` command-line interface.

Exit codes: 0 success, 1 property failure (self-test failure, aborted
training, accuracy below a requested target), 2 usage or input error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import time

from .bench import DEFAULT_SIZES, parse_sizes, run_bench
from .core import InfeasibleError, SwanError, Vocab, decode_tokens, format_segmentation
from .decoder import beam_search
from .marginal import best_segmentation, case1_best_segmentation
from .model import batch_lattice, case1_lattice, encode, load_checkpoint
from .selftest import run_selftest
from .tasks import TASK_KINDS, SyntheticTaskSpec, generate_dataset, load_dataset, save_dataset
from .train import TrainConfig, TrainingAborted, evaluate, split_dev, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(parser):
    g = parser.add_argument_group("common options")
    g.add_argument("--config", help="JSON file with training/model fields")
    g.add_argument("--seed", type=int, help="random seed")
    g.add_argument("--beam", type=int, help="beam size for decoding")
    g.add_argument("--max-seg-len", type=int, dest="max_seg_len", help="maximum segment length L")
    g.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    g.add_argument("--checkpoint", help="checkpoint path (.npz)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--task", choices=TASK_KINDS, default="grouped-copy")
    p.add_argument("-n", type=int, default=1000, help="number of examples")
    p.add_argument("--vocab-size", type=int, default=6)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--rule-seed", type=int, default=0)
    p.add_argument("-k", type=int, default=2, help="repeat count for duplicate-k")
    p.add_argument("--rules", help='rule table, e.g. "A=a b;B="')
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("train", help="train with the exact marginal likelihood")
    _common(p)
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--dev", dest="dev_path")
    p.add_argument("--metrics", help="metrics log path (default: <checkpoint>.metrics.tsv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--hidden", type=int, help="segment GRU size H")
    p.add_argument("--encoder", type=int, help="input encoder size (0 = none)")
    p.add_argument("--target-accuracy", type=float,
                   help="stop once dev accuracy reaches this; exit 1 if never reached")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--json", action="store_true", help="print metrics as JSON")

    p = sub.add_parser("decode", help="beam-decode the inputs of a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--scores", action="store_true", help="append the log-probability")
    p.add_argument("--inner", choices=("literal", "rerank"), default="literal")

    p = sub.add_parser("segment", help="print max-probability segmentations of the targets")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--case", type=int, choices=(1, 2), default=2,
                   help="2: align against the input sequence; 1: single mean input vector")

    p = sub.add_parser("bench", help="time shared-prefix vs per-segment lattices")
    _common(p)
    p.add_argument("--sizes", help='"T,Tp,L,H;..."')
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--no-kernels", action="store_true", help="skip the DP kernel comparison")

    p = sub.add_parser("selftest", help="run the oracle checks on tiny instances")
    _common(p)
    p.add_argument("--inject-nan", metavar="TENSOR", help="corrupt a parameter tensor (fault injection)")
    return parser


@contextlib.contextmanager
def _thread_limit(n):
    if n is None:
        yield
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _load_model(args):
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    params, meta = load_checkpoint(args.checkpoint)
    return params, meta


def _check_vocab(meta, ds):
    for key, vocab in (("in_vocab", ds.in_vocab), ("out_vocab", ds.out_vocab)):
        if key in meta and tuple(meta[key]) != vocab.tokens:
            raise SwanError(f"vocabulary mismatch: checkpoint {key} {meta[key]} "
                            f"vs dataset {list(vocab.tokens)}")


def _load_data(path, meta):
    ds = load_dataset(path)
    if "in_vocab" in meta:
        # datasets without a header take the checkpoint vocabularies
        if not ds.meta:
            ds.in_vocab, ds.out_vocab = Vocab(tuple(meta["in_vocab"])), Vocab(tuple(meta["out_vocab"]))
        _check_vocab(meta, ds)
    return ds


def _parse_rules(text):
    rules = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise UsageError(f"rule {part!r} must look like SYM=tok tok")
        sym, group = part.split("=", 1)
        rules[sym.strip()] = group.split()
    return rules


def cmd_gen(args, out):
    spec = SyntheticTaskSpec(
        kind=args.task, V=args.vocab_size, min_len=args.min_len, max_len=args.max_len,
        L=args.max_seg_len or 3, seed=args.seed or 0, rule_seed=args.rule_seed, k=args.k,
        rules=_parse_rules(args.rules) if args.rules else None)
    if args.n < 0:
        raise UsageError("-n must be >= 0")
    save_dataset(generate_dataset(spec, args.n), args.out)
    print(f"wrote {args.n} examples to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args, out):
    overrides = dict(seed=args.seed, beam=args.beam, L=args.max_seg_len, checkpoint=args.checkpoint,
                     metrics=args.metrics, epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                     optimizer=args.optimizer, H=args.hidden, encoder=args.encoder,
                     target_accuracy=args.target_accuracy)
    try:
        config = TrainConfig.from_file(args.config, **overrides)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc
    if config.checkpoint and not config.metrics:
        config.metrics = config.checkpoint + ".metrics.tsv"
    ds = load_dataset(args.train_path)
    if args.dev_path:
        train_ds, dev_ds = ds, load_dataset(args.dev_path)
    else:
        train_ds, dev_ds = split_dev(ds, config.dev_fraction, config.seed)
    print("epoch\tNLL\tdev_acc\tedit_rate\tavg_seg_len", file=out)
    t0 = time.perf_counter()

    def on_epoch(epoch, line):
        print(line, file=out, flush=True)
        logging.getLogger("swan").info("epoch %d done at %.1fs", epoch, time.perf_counter() - t0)

    _, history = train(config, train_ds, dev_ds, on_epoch=on_epoch)
    if config.target_accuracy is not None:
        best = max((h.get("seq_acc", 0.0) for h in history), default=0.0)
        if best < config.target_accuracy:
            print(f"dev accuracy {best:.4f} below target {config.target_accuracy}", file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def cmd_eval(args, out):
    params, meta = _load_model(args)
    ds = _load_data(args.data, meta)
    rep = evaluate(params, ds, beam=args.beam or 4)
    d = rep.as_dict()
    if args.json:
        print(json.dumps(d, sort_keys=True), file=out)
    else:
        for k, v in d.items():
            print(f"{k}\t{v}", file=out)
    return EXIT_OK


def cmd_decode(args, out):
    params, meta = _load_model(args)
    ds = _load_data(args.data, meta)
    feats, _ = encode([ds.features(ex) for ex in ds.examples], params)
    for x in feats:
        ids, score = beam_search(x, params, B=args.beam or 4, inner=args.inner)
        line = " ".join(decode_tokens(ids, ds.out_vocab))
        print(f"{line}\t{score:.6f}" if args.scores else line, file=out)
    return EXIT_OK


def cmd_segment(args, out):
    params, meta = _load_model(args)
    ds = _load_data(args.data, meta)
    L = params.cfg.L
    if args.max_seg_len is not None and args.max_seg_len != L:
        raise UsageError(f"--max-seg-len {args.max_seg_len} differs from the checkpoint's L={L}")
    feats, _ = encode([ds.features(ex) for ex in ds.examples], params)
    recovered = with_truth = skipped = 0
    for i, (ex, x) in enumerate(zip(ds.examples, feats), 1):
        y = ds.targets(ex)
        try:
            if args.case == 1:
                if not y:
                    raise InfeasibleError("Case I needs a non-empty target")
                seg, _ = case1_best_segmentation(case1_lattice(x.mean(axis=0), y, params), y)
            else:
                if len(y) > len(x) * L:
                    raise InfeasibleError(f"T={len(y)} exceeds T'={len(x)} x L={L}")
                lat = batch_lattice([x], [y], params).lattices[0]
                seg, _ = best_segmentation(lat.logp, y)
        except InfeasibleError as exc:
            print(f"example {i}: skipped: {exc}", file=sys.stderr)
            skipped += 1
            continue
        print(format_segmentation(seg, ds.out_vocab), file=out)
        if ex.lengths is not None and args.case == 2:
            with_truth += 1
            recovered += list(seg.lengths) == list(ex.lengths)
    if with_truth:
        print(f"recovered {recovered}/{with_truth} ground-truth segmentations", file=sys.stderr)
    if skipped:
        print(f"skipped {skipped} infeasible examples", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args, out):
    try:
        sizes = parse_sizes(args.sizes) if args.sizes else DEFAULT_SIZES
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for T, Tp, L, _ in sizes:
        if T > Tp * L:
            raise UsageError(f"size T={T}, Tp={Tp}, L={L} is infeasible (T > Tp*L)")
    out.write(run_bench(sizes, repeats=args.repeats, seed=args.seed or 0, kernels=not args.no_kernels))
    return EXIT_OK


def cmd_selftest(args, out):
    t0 = time.perf_counter()
    rep = run_selftest(seed=args.seed or 0, inject_nan=args.inject_nan)
    out.write(rep.text())
    print(f"selftest took {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK if rep.ok else EXIT_FAIL


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "decode": cmd_decode,
            "segment": cmd_segment, "bench": cmd_bench, "selftest": cmd_selftest}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args, out)
    except TrainingAborted as exc:
        print(f"swan: training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, SwanError, ValueError, OSError) as exc:
        print(f"swan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
