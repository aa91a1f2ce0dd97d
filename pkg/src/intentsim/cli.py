"""Command line entry points.

``intentsim run`` executes a batch (seed range x delta set) and writes
episodes.csv, summary.json, and messages.csv under the output directory.
``intentsim make-dataset`` generates a labeled PNG corpus.
"""

from __future__ import annotations

import argparse
import sys

from . import datasetgen, engine, kpi, transport
from .config import ConfigError, load_config
from .embedding import make_provider


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run simulation episodes")
    run.add_argument("--config", required=True, help="scenario config file")
    run.add_argument("--seed", type=int, default=None, help="first seed")
    run.add_argument("--strategy", default=None,
                     help="rr | cqi | buffer | criticality | pf")
    run.add_argument("--intent-based", action="store_true", default=None)
    run.add_argument("--delta-dapp", default=None,
                     help="scheduling interval in TTIs, comma list allowed")
    run.add_argument("--episodes", type=int, default=1,
                     help="number of consecutive seeds to run")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--embedding-cmd", default=None,
                     help="external embedding sidecar command")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--timing", action="store_true",
                     help="measure wall-clock decision time (breaks "
                          "byte-reproducibility of episodes.csv)")

    gen = sub.add_parser("make-dataset", help="generate a labeled PNG corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--images", type=int, default=12)
    gen.add_argument("--size", type=int, default=192)
    gen.add_argument("--seed", type=int, default=7)
    return parser


def _run(args) -> int:
    overrides = []
    if args.strategy:
        overrides.append(f"strategy={args.strategy}")
    if args.intent_based:
        overrides.append("intent_based=true")
    if args.timing:
        overrides.append("measure_decision_time=true")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed0 = args.seed if args.seed is not None else cfg.seed
    seeds = list(range(seed0, seed0 + args.episodes))
    if args.delta_dapp:
        deltas = [int(x) for x in str(args.delta_dapp).split(",")]
    else:
        deltas = [cfg.delta_dapp]
    if args.embedding_cmd and args.workers > 1:
        print("an external embedding sidecar requires --workers 1",
              file=sys.stderr)
        return 2
    provider = make_provider(args.embedding_cmd)
    try:
        dataset = transport.load_dataset(cfg.dataset_dir)
        batch = engine.run_batch(cfg, seeds, deltas, dataset=dataset,
                                 provider=provider, workers=args.workers)
    except (engine.EpisodeError, transport.DatasetError, ConfigError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    finally:
        provider.close()
    extra = {"embedding_provider": args.embedding_cmd or "surrogate"}
    kpi.emit(batch.records, batch.message_rows, args.out, extra)
    print(f"wrote {len(batch.episodes)} episodes to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command == "make-dataset":
        rows = datasetgen.make_dataset(args.out, args.images, args.size, args.seed)
        print(f"wrote {len(rows)} images to {args.out}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
