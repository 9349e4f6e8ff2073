"""Command-line entry points: gen-data, train, infer, compose, eval.

Exit codes: 0 success, 2 usage or missing input, 3 validation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .composer import PlacementParams, compose, export_composite
from .config import ConfigError, RunConfig, load_config
from .data import PlacementDataset
from .embeddings import EmbeddingFormatError, EmbeddingTable, load_embedding_table
from .evaluation import (
    command_classifier, evaluate_run, load_ground_truth, params_to_bbox, read_ndjson,
)
from .model import encode_graph
from .scene_graph import ParseError, ValidationError, load_scene_graph
from .synthetic import OracleError, ToySceneSpec, ToySpecError, generate_toy_dataset, write_dataset
from .trainer import NumericalError, Trainer, load_generator, predict_placements

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("graplus")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    if getattr(args, "steps", None) is not None:
        overrides.append(f"train.steps={args.steps}")
    return load_config(args.config, overrides)


def _table(path: str) -> EmbeddingTable | None:
    if not path:
        return None
    if not Path(path).exists():
        raise UsageError(f"embedding file {path} not found")
    return load_embedding_table(path)


def _data_dir(arg: str | None, cfg_path: str = "") -> Path:
    root = Path(arg or cfg_path or "")
    if not str(root) or not (root / "manifest.ndjson").exists():
        raise UsageError(f"no dataset at '{root}' (expected manifest.ndjson); pass --data")
    return root


def _write_ndjson(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8")


# commands -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    doc = {}
    if args.spec:
        if not Path(args.spec).exists():
            raise UsageError(f"spec file {args.spec} not found")
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = ToySceneSpec.from_dict(doc)
    data = generate_toy_dataset(spec, args.n, args.fake_ratio)
    out = write_dataset(data, args.out)
    log.info("wrote %d scenes / %d samples to %s", len(data.scenes), len(data.samples), out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    root = _data_dir(args.data, cfg.paths.data)
    out = Path(args.out or cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = PlacementDataset.from_directory(root, cfg.train.image_size, cfg.model.node_budget)
    table = _table(cfg.paths.embeddings)
    ckpt, metrics = out / "checkpoint.zip", out / "metrics.ndjson"
    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume, dataset, table)
        steps = max(0, cfg.train.steps - trainer.step_count)
    else:
        trainer = Trainer(cfg, dataset, table)
        steps = cfg.train.steps
        metrics.write_text("", encoding="utf-8")
    (out / "config.toml").write_text(trainer.config.to_toml(), encoding="utf-8")
    trainer.train(steps, metrics, ckpt, cfg.train.checkpoint_every, progress=True)
    log.info("trained %d steps; checkpoint %s", trainer.step_count, ckpt)
    return EXIT_OK


def cmd_infer(args) -> int:
    if not args.checkpoint or not Path(args.checkpoint).exists():
        raise UsageError("infer needs an existing --checkpoint")
    gen = load_generator(args.checkpoint, _table(args.embeddings))
    budget = gen.config.node_budget
    if args.graph:
        if not args.fg_category or not args.fg_size:
            raise UsageError("--graph needs --fg-category and --fg-size")
        graphs = [load_scene_graph(p) for p in args.graph]
        inputs = [(g, args.fg_category, tuple(args.fg_size), {"graph": str(p)}) for g, p in zip(graphs, args.graph)]
    else:
        ds = PlacementDataset.from_directory(_data_dir(args.data), gen.run_config.train.image_size, budget)
        inputs = [(sc.graph, sc.fg_category, sc.fg_size, {"scene": i}) for i, sc in enumerate(ds.scenes)]
    unknown = sorted({c for _, c, _, _ in inputs if c not in gen.objects.index})
    if unknown:
        raise UsageError(f"foreground categories not in the checkpoint vocabulary: {unknown}")
    k = args.samples
    t = predict_placements(gen, [encode_graph(g, budget) for g, *_ in inputs], [c for _, c, _, _ in inputs],
                           args.seed or 0, k)
    records = []
    for i, (g, cat, fg, extra) in enumerate(inputs):
        for s in range(k):
            records.append({"input": i, "sample": s, "fg_category": cat, "t": [float(v) for v in t[i * k + s]],
                            "fg": [float(v) for v in fg], "bg": [g.bg_width, g.bg_height], **extra})
    _write_ndjson(Path(args.out), records)
    log.info("wrote %d predictions to %s", len(records), args.out)
    return EXIT_OK


def cmd_compose(args) -> int:
    cfg = _config(args)
    root = _data_dir(args.data, cfg.paths.data)
    if not Path(args.predictions).exists():
        raise UsageError(f"predictions file {args.predictions} not found")
    ds = PlacementDataset.from_directory(root, cfg.train.image_size, cfg.model.node_budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n, r in enumerate(read_ndjson(args.predictions)):
        if "scene" not in r:
            raise UsageError(f"prediction {n} has no 'scene' index into {root}")
        planes = ds.scene_sample(int(r["scene"]), r["t"])
        comp, _ = compose(planes.bg, planes.fg, planes.mask, planes.t, planes.fg_dims, cfg.model.eps)
        box = params_to_bbox(r["t"], r["fg"], r["bg"])
        export_composite(out / f"composite_{n:05d}.png", comp, PlacementParams(*r["t"]), box.as_list())
    return EXIT_OK


def cmd_eval(args) -> int:
    for p in (args.predictions, args.gt):
        if not Path(p).exists():
            raise UsageError(f"{p} not found")
    records = read_ndjson(args.predictions)
    gt = load_ground_truth(args.gt)
    preds = [(tuple(r["t"]), tuple(r["fg"]), tuple(r["bg"])) for r in records]
    if records and all("input" in r for r in records) and len(records) != len(gt):
        gt = [gt[r["input"]] for r in records]  # k draws per input share one target
    classifier = composites = None
    if args.classifier:
        if not args.composites:
            raise UsageError("--classifier needs --composites")
        classifier = command_classifier(args.classifier.split())
        composites = sorted(str(p) for p in Path(args.composites).glob("composite_*.png"))
    report = evaluate_run(preds, gt, classifier, composites)
    text = report.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graplus", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out_required=True):
        if config:
            p.add_argument("--config", help="TOML run config")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=out_required)

    p = sub.add_parser("gen-data", help="write a synthetic placement dataset")
    common(p, config=False)
    p.add_argument("--spec", help="toy scene spec JSON")
    p.add_argument("--n", type=int, default=300, help="positive scenes")
    p.add_argument("--fake-ratio", type=int)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="adversarial training")
    common(p, out_required=False)
    p.add_argument("--data")
    p.add_argument("--steps", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="predict placements")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--graph", nargs="+")
    p.add_argument("--fg-category")
    p.add_argument("--fg-size", type=float, nargs=2, metavar=("W", "H"))
    p.add_argument("--embeddings", default="")
    p.add_argument("--samples", type=int, default=1, help="noise draws per input")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("compose", help="render composites for predictions")
    common(p)
    p.add_argument("--data")
    p.add_argument("--predictions", required=True)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("eval", help="spatial-precision report")
    common(p, config=False, out_required=False)
    p.add_argument("--predictions", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classifier", help="command printing 0/1 for a composite PNG path")
    p.add_argument("--composites", help="directory written by compose")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if getattr(args, "samples", 1) < 1:
        print("error: --samples must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ParseError, ValidationError, ToySpecError, OracleError, EmbeddingFormatError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
