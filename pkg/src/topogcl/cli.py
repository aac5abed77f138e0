"""Command-line interface: ``topogcl <subcommand> ...``.

Data goes to files under ``--out`` (or to stdout where noted); diagnostics go
to stderr. Exit status is 0 when the command's contract is met, 1 when it is
not (invalid data, failed gradient check, runtime error) and 2 for usage
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import DimensionError
from .config import ConfigError, load_config, parse_config, resolved_document, write_resolved
from .expert import FINAL, UNION, iso_similarity, structural_matrix
from .gradcheck import gradient_check
from .graph import Graph, IngestionError, load_tudataset, one_hot_features, validate
from .pipeline import (
    embed_dataset,
    linear_probe_cv,
    load_model,
    save_model,
    sweep,
    train,
    wl_uses_degree,
)
from .probe import ProbeError

log = logging.getLogger("topogcl")


class UsageError(Exception):
    pass


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple:
    try:
        i, j = text.split(":")
        return int(i), int(j)
    except ValueError:
        raise argparse.ArgumentTypeError(f"pairs are written i:j, got {text!r}") from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run(args):
    """Config file plus command-line overrides."""
    if args.config is not None:
        config, run = load_config(args.config)
    else:
        config, run = parse_config({"schema_version": 1})
    changes = {}
    if getattr(args, "dataset", None) is not None:
        changes["dataset"] = str(args.dataset)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if changes:
        config = config.replace(**changes)
    if getattr(args, "out", None) is not None:
        run["out_dir"] = str(args.out)
    for key in ("folds", "repeats"):
        if getattr(args, key, None) is not None:
            run[key] = getattr(args, key)
    return config, run


def _require_dataset(config):
    if not config.dataset:
        raise UsageError("no dataset given: set 'dataset' in the config or pass --dataset")
    return load_tudataset(config.dataset)


def _require_out(run) -> Path:
    if not run.get("out_dir"):
        raise UsageError("no output directory given: set 'out_dir' in the config or pass --out")
    return _out_dir(run["out_dir"])


def cmd_ingest(args) -> int:
    bundle = load_tudataset(args.dataset)
    n_bad = 0
    for i, g in enumerate(bundle.graphs):
        for problem in validate(g):
            print(f"graph {i}: {problem}", file=sys.stderr)
            n_bad += 1
    print(f"{bundle.name}: {len(bundle)} graphs, {n_bad} violations")
    print(
        f"classes={bundle.class_count} mapping={json.dumps({str(k): v for k, v in bundle.class_mapping.items()})} "
        f"node_label_vocab={bundle.label_vocab_size}"
    )
    return 1 if n_bad else 0


def cmd_expertise(args) -> int:
    bundle = load_tudataset(args.dataset)
    n = len(bundle)
    lines = []
    if args.mode == "iso":
        use_degree = wl_uses_degree(bundle)
        pairs = args.pairs or [(i, i + 1) for i in range(n - 1)]
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise UsageError(f"pair {i}:{j} outside graph range 0..{n - 1}")
        lines.append(f"# mode=iso iterations={args.iterations} policy={args.policy} dataset={bundle.name}")
        for i, j in pairs:
            y = iso_similarity(bundle[i], bundle[j], args.iterations, args.policy, use_degree).value
            lines.append(f"{i}\t{j}\t{y!r}")
    else:
        graphs = args.graphs if args.graphs is not None else list(range(n))
        bad = [k for k in graphs if not 0 <= k < n]
        if bad:
            raise UsageError(f"graph index {bad[0]} outside range 0..{n - 1}")
        lines.append(f"# mode=subiso lambda={args.lam!r} dataset={bundle.name}")
        for k in graphs:
            for v, u, w in structural_matrix(bundle[k], args.lam).triples():
                lines.append(f"{k}\t{v}\t{u}\t{w!r}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        path = _out_dir(args.out) / f"expertise_{args.mode}.tsv"
        path.write_text(text)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    config, run = _load_run(args)
    out = _require_out(run)
    bundle = _require_dataset(config)
    write_resolved(config, run, out)
    result = train(config, bundle, metrics_path=out / "metrics.jsonl")
    save_model(out / "checkpoint.json", result.encoder, result.heads, config)
    last = result.metrics[-1]
    print(
        f"trained {config.epochs} epochs ({result.steps} steps): "
        f"l_c={last.l_c:.4f} l_iso={last.l_iso:.4f} l_subiso={last.l_subiso:.4f} total={last.total:.4f}"
    )
    return 0


def _probe_summary(bundle, probe, folds, repeats, seed) -> dict:
    return {
        "dataset": bundle.name,
        "folds": folds,
        "repeats": repeats,
        "seed": seed,
        **probe.to_dict(),
    }


def cmd_probe(args) -> int:
    enc, _, header = load_model(args.checkpoint)
    bundle = load_tudataset(args.dataset)
    emb = embed_dataset(enc, bundle)
    probe = linear_probe_cv(emb, bundle.labels, args.folds, args.repeats, args.seed)
    summary = _probe_summary(bundle, probe, args.folds, args.repeats, args.seed)
    if args.out is not None:
        path = _out_dir(args.out) / "probe.json"
        path.write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{bundle.name}: accuracy {probe.mean:.4f} +- {probe.std:.4f} over {len(probe.fold_accuracies)} folds")
    return 0


def cmd_sweep(args) -> int:
    config, run = _load_run(args)
    out = _require_out(run)
    bundle = _require_dataset(config)
    alphas = args.alpha_grid if args.alpha_grid is not None else run["alpha_grid"]
    betas = args.beta_grid if args.beta_grid is not None else run["beta_grid"]
    run.update(alpha_grid=alphas, beta_grid=betas)
    write_resolved(config, run, out)
    cells = sweep(config, alphas, betas, bundle, run["folds"], run["repeats"])
    doc = {"dataset": bundle.name, "folds": run["folds"], "repeats": run["repeats"], "cells": []}
    for cell in cells:
        entry = {k: v for k, v in cell.items() if k != "probe"}
        if cell["status"] == "ok":
            entry.update(cell["probe"].to_dict())
        doc["cells"].append(entry)
    (out / "sweep.json").write_text(json.dumps(doc, indent=2) + "\n")
    print("alpha\\beta\t" + "\t".join(f"{b:g}" for b in betas))
    it = iter(doc["cells"])
    for a in alphas:
        row = []
        for _ in betas:
            c = next(it)
            row.append(f"{c['mean']:.4f}" if c["status"] == "ok" else "failed")
        print(f"{a:g}\t" + "\t".join(row))
    return 0 if all(c["status"] == "ok" for c in cells) else 1


def _toy_graphs() -> list:
    tri = Graph(3, {(0, 1), (1, 2), (0, 2)}, [0, 1, 1])
    path = Graph(4, {(0, 1), (1, 2), (2, 3)}, [1, 0, 0, 1])
    return [g.replace(node_features=one_hot_features(g.node_labels, 2)) for g in (tri, path)]


def cmd_gradcheck(args) -> int:
    config, run = _load_run(args)
    graphs = list(load_tudataset(config.dataset)) if config.dataset else _toy_graphs()
    report = gradient_check(config, graphs, step=args.step, tolerance=args.tolerance)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def cmd_ablation(args) -> int:
    config, run = _load_run(args)
    out = _require_out(run)
    bundle = _require_dataset(config)
    seeds = args.seeds if args.seeds is not None else run["ablation_seeds"]
    write_resolved(config, run, out)
    settings = {
        "full": {},
        "no_graph_tier": {"alpha": 0.0},
        "no_subgraph_tier": {"beta": 0.0},
        "baseline": {"alpha": 0.0, "beta": 0.0},
    }
    report = {}
    for name, change in settings.items():
        accs = []
        for seed in seeds:
            cfg = config.replace(seed=int(seed), **change)
            res = train(cfg, bundle)
            probe = linear_probe_cv(embed_dataset(res.encoder, bundle), bundle.labels, run["folds"], run["repeats"], seed)
            accs.append(probe.mean)
        report[name] = {"seeds": list(seeds), "accuracies": accs, "mean": float(np.mean(accs))}
        print(f"{name}\t{report[name]['mean']:.4f}\t" + " ".join(f"{a:.4f}" for a in accs))
    (out / "ablation.json").write_text(json.dumps(report, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topogcl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a TUDataset directory")
    p.add_argument("--dataset", required=True, type=Path)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("expertise", help="emit graph-tier or subgraph-tier expertise")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--mode", required=True, choices=["iso", "subiso"])
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--policy", choices=[FINAL, UNION], default=FINAL)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--pairs", type=_pair, nargs="+", help="graph pairs i:j (iso mode)")
    p.add_argument("--graphs", type=int, nargs="+", help="graph indices (subiso mode)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_expertise)

    for name, func, help_text in (
        ("train", cmd_train, "train an encoder; writes checkpoint, metrics and resolved config"),
        ("sweep", cmd_sweep, "alpha/beta grid of train+probe runs"),
        ("gradcheck", cmd_gradcheck, "finite-difference check of the combined loss"),
        ("ablation", cmd_ablation, "full model vs. single-expertise ablations over seeds"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=name in ("train", "sweep"))
        p.add_argument("--dataset", type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
        if name in ("sweep", "ablation"):
            p.add_argument("--folds", type=int)
            p.add_argument("--repeats", type=int)
        if name == "sweep":
            p.add_argument("--alpha-grid", type=_float_list)
            p.add_argument("--beta-grid", type=_float_list)
        if name == "gradcheck":
            p.add_argument("--step", type=float, default=1e-5)
            p.add_argument("--tolerance", type=float, default=1e-4)
        if name == "ablation":
            p.add_argument("--seeds", type=int, nargs="+")
        p.set_defaults(func=func)

    p = sub.add_parser("probe", help="linear-probe cross-validation of a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"topogcl {args.command}: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, DimensionError, ProbeError, ValueError, RuntimeError, OSError) as exc:
        print(f"topogcl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
