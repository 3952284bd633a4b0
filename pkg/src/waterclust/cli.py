"""Command-line entry point.

Exit status: 0 on success, 1 when a stage fails, 2 for usage or
configuration errors (including a missing input file).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from waterclust import __version__
from waterclust.affinity import DEFAULT_DAMPING
from waterclust.data import load_dataset, normalize_and_filter, partition_by
from waterclust.errors import ConfigError, InputError, WaterclustError
from waterclust.evaluation import silhouette_global
from waterclust.pipeline import (
    PipelineConfig,
    PipelineError,
    best_gamma,
    cluster_subset,
    csv_text,
    explain,
    json_text,
    run_pipeline,
    slug,
    trace_csv,
)
from waterclust.priority import assign_priorities, load_rules, profile_clusters

log = logging.getLogger("waterclust")

# flag -> (config field, argparse kwargs)
_FLAGS = {
    "--input": ("input", dict(help="colonia CSV file")),
    "--output-dir": ("output_dir", dict(help="artifact directory (env WATERCLUST_OUTPUT_DIR)")),
    "--partition-attribute": ("partition_attribute", dict()),
    "--count-attributes": ("count_attributes", dict(nargs="+", metavar="NAME")),
    "--denominator": ("denominator", dict()),
    "--theta": ("theta", dict(type=float, help="similarity scale, must be negative")),
    "--preference": ("preference", dict(help="'median' or a number")),
    "--gamma": ("gamma", dict(type=float, help="fixed damping factor; skips the sweep")),
    "--grid": ("grid", dict(type=float, nargs="+", metavar="G")),
    "--max-iter": ("max_iter", dict(type=int)),
    "--stable-window": ("stable_window", dict(type=int)),
    "--dice-mode": ("dice_mode", dict(choices=("per-attribute", "concatenated"))),
    "--max-depth": ("max_depth", dict(type=int)),
    "--min-samples-leaf": ("min_samples_leaf", dict(type=int)),
    "--min-impurity-decrease": ("min_impurity_decrease", dict(type=float)),
    "--tree-mode": ("tree_mode", dict(choices=("union", "per-subset"))),
    "--rules": ("rules", dict(help="priority rules JSON (default: shipped rules)")),
    "--trace": ("trace", dict(action="store_true")),
    "--dump-matrices": ("dump_matrices", dict(action="store_true")),
    "--point-silhouette": ("point_silhouette", dict(action="store_true")),
    "--workers": ("workers", dict(type=int)),
}

_COMMON = ("--input", "--output-dir", "--partition-attribute", "--count-attributes", "--denominator")
_CLUSTER = ("--theta", "--preference", "--max-iter", "--stable-window", "--dice-mode", "--trace",
            "--dump-matrices")
_TREE = ("--max-depth", "--min-samples-leaf", "--min-impurity-decrease")


def _add(p, names):
    for flag in names:
        dest, kw = _FLAGS[flag]
        p.add_argument(flag, dest=dest, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waterclust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="full run: filter, cluster, explain, prioritize")
    p.add_argument("--config", help="JSON config; flags override its keys")
    _add(p, _FLAGS)

    for name, text in (("cluster", "cluster one subset at a fixed damping factor"),
                       ("sweep", "sweep damping factors on one subset")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config")
        p.add_argument("--subset", help="partition value to cluster (default: all kept records)")
        _add(p, _COMMON + _CLUSTER + (("--gamma",) if name == "cluster" else ("--grid", "--workers",
                                                                              "--point-silhouette")))

    p = sub.add_parser("explain", help="fit a CART tree to given cluster labels")
    p.add_argument("--config")
    p.add_argument("--labels", required=True, help="CSV with record_id and label columns")
    p.add_argument("--root", help="attribute forced at the root split")
    _add(p, _COMMON + _TREE)

    p = sub.add_parser("prioritize", help="map labelled clusters to priority levels")
    p.add_argument("--config")
    p.add_argument("--labels", required=True, help="CSV with record_id and label columns")
    _add(p, _COMMON + ("--rules",))
    return parser


def _config(args) -> PipelineConfig:
    overrides = {dest: getattr(args, dest) for dest, _ in _FLAGS.values() if hasattr(args, dest)}
    if isinstance(overrides.get("preference"), str) and overrides["preference"] != "median":
        try:
            overrides["preference"] = float(overrides["preference"])
        except ValueError:
            raise ConfigError(f"preference must be 'median' or a number: {overrides['preference']}")
    if args.config:
        cfg = PipelineConfig.from_json(args.config, overrides)
    else:
        cfg = PipelineConfig.from_dict(overrides)
    return cfg.validate()


def _kept(cfg):
    try:
        return normalize_and_filter(
            load_dataset(cfg.input), cfg.count_attributes, cfg.denominator
        )
    except WaterclustError as exc:
        raise PipelineError("load", str(exc)) from exc


def _select(cfg, kept, value):
    if value is None:
        return "all", kept
    subsets = partition_by(kept, cfg.partition_attribute)
    if value not in subsets:
        raise ConfigError(
            f"no subset {value!r} of {cfg.partition_attribute!r}; have {sorted(subsets)}"
        )
    return value, subsets[value]


def _write(out_dir, files):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out_dir / name).write_text(files[name], encoding="utf-8", newline="")
        print(out_dir / name)


def _read_labels(path, d):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"labels file not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        key = "label" if "label" in cols else "cluster" if "cluster" in cols else None
        if "record_id" not in cols or key is None:
            raise ConfigError(f"{path}: need record_id and label (or cluster) columns")
        given = {row["record_id"]: row[key] for row in reader}
    pos = {rid: i for i, rid in enumerate(d.ids)}
    unknown = sorted(set(given) - set(pos))
    if unknown:
        raise InputError(f"labels for unknown or filtered records: {', '.join(unknown[:5])}")
    idx = sorted(pos[r] for r in given)
    sub = d.select(idx)
    return sub, [given[r] for r in sub.ids]


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    report = run_pipeline(cfg)
    print(f"records: {report.n_input} read, {report.n_kept} kept, {len(report.removed)} removed")
    for s in report.subsets:
        print(
            f"subset {s.value}: {s.n_records} records, gamma {s.gamma}, "
            f"K = {s.n_clusters}, silhouette {s.silhouette:.4f}"
        )
    for e in report.explanations:
        print(f"tree [{e.scope}]: training accuracy {e.accuracy:.4f}, {len(e.rules)} rules")
    print(f"artifacts in {cfg.output_dir}")
    return 0


def cmd_cluster(args, sweep=False) -> int:
    cfg = _config(args)
    if not sweep and cfg.gamma is None:
        cfg.gamma = DEFAULT_DAMPING
    if sweep:
        cfg.gamma = None
    value, d = _select(cfg, _kept(cfg), getattr(args, "subset", None))
    try:
        D, S, entries, result = cluster_subset(d, cfg)
    except WaterclustError as exc:
        raise PipelineError("cluster", str(exc)) from exc
    files = {}
    if sweep:
        files["sweep.csv"] = csv_text(
            ["subset", "gamma", "silhouette", "n_clusters", "converged", "iterations",
             "silhouette_points"],
            [(value, e.gamma, e.silhouette, e.n_clusters, e.converged, e.iterations,
              e.silhouette_points) for e in entries],
        )
        for e in entries:
            print(f"gamma {e.gamma}: K = {e.n_clusters}, silhouette {e.silhouette:.4f}, "
                  f"{'converged' if e.converged else 'not converged'} after {e.iterations}")
    ids = d.ids
    cids = result.cluster_ids()
    files["assignments.csv"] = csv_text(
        ["record_id", "subset", "cluster", "label", "exemplar_id"],
        [(rid, value, int(c), f"{value}:{int(c)}", ids[int(result.labels[i])])
         for i, (rid, c) in enumerate(zip(ids, cids))],
    )
    summary = {
        "subset": value,
        "records": len(d),
        "gamma": best_gamma(entries),
        "n_clusters": result.n_clusters,
        "converged": result.converged,
        "iterations": result.iterations_run,
        "net_similarity": result.net_similarity,
        "silhouette": silhouette_global(D, result.labels) if len(d) > 1 else 0.0,
        "exemplars": [ids[k] for k in result.exemplars],
    }
    files["cluster.json"] = json_text(summary)
    if cfg.trace:
        files[f"trace_{slug(value)}.csv"] = trace_csv(result.trace)
    if not sweep:
        print(f"subset {value}: K = {result.n_clusters}, silhouette {summary['silhouette']:.4f}, "
              f"{'converged' if result.converged else 'not converged'} after {result.iterations_run}")
    _write(cfg.output_dir, files)
    return 0


def cmd_explain(args) -> int:
    cfg = _config(args)
    d, labels = _read_labels(args.labels, _kept(cfg))
    try:
        e = explain(d, labels, cfg, "labels", root=args.root)
    except WaterclustError as exc:
        raise PipelineError("explain", str(exc)) from exc
    files = {
        "rules.txt": "\n".join(r.text() for r in e.rules) + "\n",
        "rules.json": json_text([r.to_dict() for r in e.rules]),
        "importance.csv": csv_text(
            ["rank", "attribute", "importance", "best_depth"],
            [(k, a.attribute, a.importance, a.best_depth) for k, a in enumerate(e.ranking, 1)],
        ),
        "tree.txt": e.tree_text,
    }
    print(f"training accuracy {e.accuracy:.4f}, depth {e.depth}, {len(e.rules)} rules")
    _write(cfg.output_dir, files)
    return 0


def cmd_prioritize(args) -> int:
    cfg = _config(args)
    d, labels = _read_labels(args.labels, _kept(cfg))
    try:
        profiles = profile_clusters(d, labels)
        result = assign_priorities(profiles, load_rules(cfg.rules))
    except InputError as exc:
        raise PipelineError("prioritize", str(exc)) from exc
    rows = []
    for p, a in zip(profiles, result):
        rows.append((a.cluster, p.size, a.priority, a.description, "; ".join(a.basis),
                     " ".join(str(x) for x in a.also_matched)))
        print(f"cluster {a.cluster}: priority {a.priority} ({p.size} records)")
    files = {"priorities.csv": csv_text(
        ["cluster", "size", "priority", "description", "basis", "also_matched"], rows)}
    _write(cfg.output_dir, files)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "pipeline": cmd_pipeline,
        "cluster": cmd_cluster,
        "sweep": lambda a: cmd_cluster(a, sweep=True),
        "explain": cmd_explain,
        "prioritize": cmd_prioritize,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"waterclust: error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"waterclust: stage failed: {exc}", file=sys.stderr)
        return 1
    except (WaterclustError, OSError) as exc:
        print(f"waterclust: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
