"""Command-line entry points: train, eval, report.

Exit codes: 0 on success, 1 on runtime failure (diverged training,
broken checkpoint payload), 2 on usage or configuration errors. Set the
COSMIC_LOG environment variable (DEBUG/INFO/WARNING/ERROR) to control
log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .checkpoint import load_checkpoint
from .config import RunConfig, build_run_config, write_config_echo
from .errors import (CheckpointError, ConfigError, CosmicError,
                     DatasetFormatError, SplitError)
from .evaluate import evaluate, export_embeddings
from .graph import (ClassSplit, generate_planted_partition, load_class_split,
                    load_graph)
from .trainer import train

log = logging.getLogger(__name__)

# the built-in synthetic benchmark: a planted partition with mildly
# informative features, split 6/2/2 over its 10 classes
_SYNTH = dict(num_classes=10, nodes_per_class=50, p_in=0.2, p_out=0.02,
              feat_dim=32, feat_noise=0.5)
_SYNTH_SPLIT = (6, 2, 2)

_USAGE_ERRORS = (ConfigError, DatasetFormatError, SplitError,
                 FileNotFoundError, NotADirectoryError)


def _setup_logging():
    name = os.environ.get("COSMIC_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_problem(cfg: RunConfig):
    """(graph, split) from either a dataset directory or the synthetic."""
    if cfg.synthetic and cfg.dataset_dir:
        raise ConfigError("--synthetic and --dataset-dir are exclusive")
    if cfg.synthetic:
        g = generate_planted_partition(seed=cfg.seed, **_SYNTH)
        split = ClassSplit.contiguous(_SYNTH["num_classes"], *_SYNTH_SPLIT)
        return g, split
    if not cfg.dataset_dir:
        raise ConfigError("provide --dataset-dir or --synthetic")
    if not os.path.isdir(cfg.dataset_dir):
        raise ConfigError(f"dataset directory does not exist: "
                          f"{cfg.dataset_dir}")
    g = load_graph(cfg.dataset_dir)
    split = load_class_split(os.path.join(cfg.dataset_dir, "splits.json"),
                             num_classes=g.num_classes)
    return g, split


def _overrides_from_args(args) -> dict:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    return {k: v for k, v in vars(args).items()
            if k in fields and v is not None}


def cmd_train(args) -> int:
    cfg = build_run_config(args.config, _overrides_from_args(args))
    graph, split = _load_problem(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    write_config_echo(cfg, os.path.join(cfg.out, "config_echo.json"))
    params, reports = train(
        graph, split, cfg.to_train_config(),
        log_path=os.path.join(cfg.out, "episodes.csv"),
        checkpoint_path=os.path.join(cfg.out, "checkpoint.bin"),
    )
    last = reports[-1]
    print(f"trained {len(reports)} episodes; "
          f"final loss_mc={last.loss_mc:.4f} loss_ce={last.loss_ce:.4f}; "
          f"checkpoint at {os.path.join(cfg.out, 'checkpoint.bin')}")
    return 0


def cmd_eval(args) -> int:
    cfg = build_run_config(args.config, _overrides_from_args(args))
    graph, split = _load_problem(cfg)
    ckpt = cfg.checkpoint or os.path.join(cfg.out, "checkpoint.bin")
    if not os.path.isfile(ckpt):
        raise ConfigError(f"checkpoint not found: {ckpt}")
    params, header = load_checkpoint(ckpt)
    if params.w.shape[0] != graph.feat_dim:
        raise CheckpointError(
            f"checkpoint expects {params.w.shape[0]} features, graph has "
            f"{graph.feat_dim}")
    os.makedirs(cfg.out, exist_ok=True)
    write_config_echo(cfg, os.path.join(cfg.out, "config_echo.json"))

    summary = evaluate(
        graph, split, params, cfg.n_way, cfg.k_shot, num_tasks=cfg.tasks,
        repetitions=cfg.repetitions, seed=cfg.seed,
        q_per_task=cfg.query_per_task, weight_decay=cfg.weight_decay,
        zeta=cfg.zeta, subgraph_size=cfg.subgraph_size,
        workers=cfg.workers, clustering=cfg.clustering,
    )

    results_path = os.path.join(cfg.out, "results.csv")
    with open(results_path, "w", newline="") as fh:
        fh.write("n_way,k_shot,repetition,accuracy\n")
        for r, acc in enumerate(summary.rep_accuracies):
            fh.write(f"{cfg.n_way},{cfg.k_shot},{r},{acc!r}\n")

    payload = {
        "mean": summary.mean_accuracy,
        "ci95": summary.ci95,
        "nmi": summary.nmi,
        "ari": summary.ari,
        "n_way": cfg.n_way,
        "k_shot": cfg.k_shot,
        "num_tasks": summary.num_tasks,
        "repetitions": cfg.repetitions,
        "trained_episodes": header.get("episode"),
        "config": dataclasses.asdict(cfg),
    }
    with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")

    if cfg.export_embeddings:
        rows = export_embeddings(graph, split, params,
                                 os.path.join(cfg.out, "embeddings.csv"),
                                 zeta=cfg.zeta,
                                 subgraph_size=cfg.subgraph_size)
        log.info("wrote %d embedding rows", rows)

    line = (f"accuracy {summary.mean_accuracy:.4f} ± {summary.ci95:.4f} "
            f"({cfg.n_way}-way {cfg.k_shot}-shot, "
            f"{cfg.tasks} tasks x {cfg.repetitions} reps)")
    if summary.nmi is not None:
        line += f"; NMI {summary.nmi:.4f} ARI {summary.ari:.4f}"
    print(line)
    return 0


def cmd_report(args) -> int:
    if not args.summaries:
        print("report: no summary files given", file=sys.stderr)
        return 2
    rows = []
    for path in args.summaries:
        try:
            with open(path) as fh:
                data = json.load(fh)
            rows.append((int(data["n_way"]), int(data["k_shot"]),
                         float(data["mean"]), float(data["ci95"])))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            print(f"report: cannot read {path}: {exc}", file=sys.stderr)
            return 2

    grouped: dict = {}
    for n, k, mean, ci in rows:
        grouped.setdefault((n, k), []).append((mean, ci))
    table = []
    for (n, k) in sorted(grouped):
        entries = grouped[(n, k)]
        runs = len(entries)
        mean = sum(e[0] for e in entries) / runs
        ci = sum(e[1] for e in entries) / runs
        table.append((n, k, runs, mean, ci))

    header = f"{'n_way':>5} {'k_shot':>6} {'runs':>4} {'accuracy':>9} {'ci95':>7}"
    print(header)
    for n, k, runs, mean, ci in table:
        print(f"{n:>5} {k:>6} {runs:>4} {mean:>9.4f} {ci:>7.4f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write("n_way,k_shot,runs,accuracy,ci95\n")
            for n, k, runs, mean, ci in table:
                fh.write(f"{n},{k},{runs},{mean!r},{ci!r}\n")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE",
                   help="key = value file or JSON (a config_echo.json works)")
    p.add_argument("--dataset-dir", dest="dataset_dir",
                   help="directory with labels.tsv, features.csv, edges.tsv, "
                        "splits.json")
    p.add_argument("--synthetic", action="store_const", const=True,
                   default=None,
                   help="use the built-in planted-partition benchmark")
    p.add_argument("--n-way", dest="n_way", type=int)
    p.add_argument("--k-shot", dest="k_shot", type=int)
    p.add_argument("--query-per-task", dest="query_per_task", type=int)
    p.add_argument("--subgraph-size", dest="subgraph_size", type=int,
                   help="neighbors kept per subgraph (K_s)")
    p.add_argument("--zeta", type=float, help="PPR restart probability")
    p.add_argument("--tau", type=float, help="contrastive temperature")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--lr-mc", dest="lr_mc", type=float)
    p.add_argument("--lr-ce", dest="lr_ce", type=float)
    p.add_argument("--mixup", choices=["on", "off"])
    p.add_argument("--mixup-c", dest="mixup_c", type=float)
    p.add_argument("--mixup-beta", dest="mixup_beta", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--precision", choices=["f32", "f64"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosmic",
        description="Few-shot node classification by contrastive "
                    "meta-learning over PPR subgraphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run episodic meta-training")
    _add_common(p_train)
    p_train.add_argument("--episodes", type=int, help="meta-training tasks T")
    p_train.add_argument("--checkpoint-every", dest="checkpoint_every",
                         type=int, help="snapshot cadence (0 = final only)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="meta-test a trained checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint file "
                       "(default: <out>/checkpoint.bin)")
    p_eval.add_argument("--tasks", type=int, help="meta-test tasks per "
                        "repetition")
    p_eval.add_argument("--repetitions", type=int)
    p_eval.add_argument("--export-embeddings", dest="export_embeddings",
                        action="store_const", const=True, default=None,
                        help="also write embeddings.csv")
    p_eval.add_argument("--clustering", action="store_const", const=True,
                        default=None,
                        help="also score test-class embeddings by k-means "
                             "NMI/ARI")
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("report", help="tabulate summary.json files")
    p_rep.add_argument("summaries", nargs="*", help="summary.json paths")
    p_rep.add_argument("--csv", help="also write the aggregate table here")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except _USAGE_ERRORS as exc:
        print(f"cosmic {args.command}: {exc}", file=sys.stderr)
        return 2
    except CosmicError as exc:
        print(f"cosmic {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
