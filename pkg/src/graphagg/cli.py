"""Command-line front end.

Exit status: 0 success, 1 failed check or domain error, 2 usage error
(bad flag, missing file).  Errors are printed as one line on stderr::

    error: <ErrorClass>: <message>
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .aggregator import AggregatorConfig, aggregate, count_params, init_params, seresnet_shapes
from .errors import GraphAggError
from .evaluation import ScoreSet, compute_eer, score_trials
from .fileio import (
    load_checkpoint,
    parse_trials,
    read_embedding_store,
    read_feature_file,
    read_scores,
    save_checkpoint,
    write_embedding_store,
    write_scores,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GAGG_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GAGG_SEED must be an integer, got {env!r}") from None


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value aggregator config file")
    p.add_argument("--in-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ratio", help="gPool keep ratio in (0, 1], or 'none' to disable")
    p.add_argument("--readout", choices=["sum", "mean", "max", "combine_concat"])
    p.add_argument("--topology", choices=["single_gat", "two_gat_global", "two_gat_hierarchical", "mean_pool"])
    p.add_argument("--seed", type=int)


def _config(args, default_in_dim: int | None = None) -> AggregatorConfig:
    text = _existing(args.config).read_text(encoding="ascii") if args.config else ""
    overrides = {
        "in_dim": args.in_dim,
        "hidden_dim": args.hidden_dim,
        "heads": args.heads,
        "readout": args.readout,
        "topology": args.topology,
    }
    if args.seed is not None or "GAGG_SEED" in os.environ:
        overrides["seed"] = _seed(args)
    if "in_dim=" not in text and args.in_dim is None and default_in_dim is not None:
        overrides["in_dim"] = default_in_dim
    cfg = AggregatorConfig.from_text(text, **overrides)
    if args.ratio is not None:
        ratio = None if args.ratio.lower() in ("none", "off", "no-pool") else float(args.ratio)
        cfg = cfg.with_(keep_ratio=ratio)
    return cfg


# ---------------------------------------------------------------- commands


def cmd_aggregate(args) -> int:
    paths = [_existing(f) for f in args.features]
    graphs = [read_feature_file(p) for p in paths]
    cfg = _config(args, default_in_dim=graphs[0].feature_dim)
    params = load_checkpoint(_existing(args.checkpoint)) if args.checkpoint else init_params(cfg)
    store = {}
    for path, g in zip(paths, graphs):
        store[path.stem] = aggregate(g, cfg, params).value.reshape(-1)
    write_embedding_store(args.out, store)
    print(f"wrote {len(store)} embeddings of width {next(iter(store.values())).size} to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    store = read_embedding_store(_existing(args.store))
    trials = parse_trials(_existing(args.trials))
    scores = score_trials(trials, store)
    rows = [(t.enroll_id, t.test_id, s) for t, s in zip(trials, scores)]
    if args.out:
        write_scores(args.out, rows)
    else:
        for a, b, s in rows:
            print(f"{a} {b} {s:.6f}")
    return EXIT_OK


def cmd_eer(args) -> int:
    trials = parse_trials(_existing(args.trials))
    scores = read_scores(_existing(args.scores))
    values, labels = [], []
    for t in trials:
        key = (t.enroll_id, t.test_id)
        if key not in scores:
            raise KeyError(f"no score for trial {t.enroll_id} {t.test_id}")
        values.append(scores[key])
        labels.append(t.target)
    res = compute_eer(ScoreSet(values, labels))
    print(f"EER={res.percent:.4f} THRESH={res.threshold:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .diagnostics import gat_layer_gradcheck

    err = gat_layer_gradcheck(_seed(args), eps=args.eps)
    ok = err <= args.tol
    print(f"max_rel_error={err:.3e} tol={args.tol:.1e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_train_toy(args) -> int:
    from .synthetic import SyntheticSpeakerSet, evaluate_eer, train_toy
    from .training import TrainConfig, embed_all

    seed = _seed(args)
    spec = SyntheticSpeakerSet.generate(
        args.speakers, args.dim, seed, noise=args.noise, nonspeech_rate=args.nonspeech_rate,
        nonspeech_scale=args.nonspeech_scale,
    )
    cfg = _config(args, default_in_dim=args.dim)
    tc = TrainConfig(lr=args.lr, decay=args.decay, epochs=args.epochs, seed=seed, crop_frames=args.crop)
    res = train_toy(spec, cfg, tc)
    for k, (loss, lr) in enumerate(zip(res.loss_curve, res.lr_curve)):
        print(f"epoch {k:3d} lr={lr:.6g} loss={loss:.6f}")
    eval_x, eval_y = spec.sample(4, np.random.default_rng([seed, 4]))
    eer = evaluate_eer(embed_all(eval_x, cfg, res.params), eval_y)
    print(f"EER={100 * eer:.4f}")
    if args.out:
        save_checkpoint(args.out, res.params)
        print(f"saved checkpoint to {args.out}")
    return EXIT_OK


def cmd_shapes(args) -> int:
    spec = seresnet_shapes(args.T)
    for line in spec.rows():
        print(line)
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = _config(args)
    print(count_params(cfg))
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphagg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("aggregate", help="embed feature files into an embedding store")
    p.add_argument("features", nargs="+", help="GAFF feature files; ids are the file stems")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="GAGG checkpoint with aggregator parameters")
    _add_config_flags(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("score", help="cosine-score a trial list")
    p.add_argument("--store", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eer", help="equal error rate of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", required=True)
    p.set_defaults(func=cmd_eer)

    p = sub.add_parser("gradcheck", help="finite-difference check of the GAT layer")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train on synthetic speakers and report EER")
    _add_config_flags(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--decay", type=float, default=0.95)
    p.add_argument("--crop", type=int, default=32)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=1.5)
    p.add_argument("--nonspeech-rate", type=float, default=0.4)
    p.add_argument("--nonspeech-scale", type=float, default=3.0)
    p.add_argument("--out", help="write the trained parameters as a GAGG checkpoint")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("shapes", help="SE-ResNet stage shapes for T input frames")
    p.add_argument("--T", type=int, required=True)
    p.set_defaults(func=cmd_shapes)

    p = sub.add_parser("params", help="parameter count of an aggregator config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphAggError, KeyError, ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
