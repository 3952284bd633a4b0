"""End-to-end run: load, filter, partition, cluster each subset, explain, prioritize.

Every artifact except ``timings.json`` is a pure function of the input file
and the echoed configuration, so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from waterclust.affinity import DEFAULT_MAX_ITER, DEFAULT_STABLE_WINDOW, check_damping, run_ap
from waterclust.cart import (
    DEFAULT_MAX_DEPTH,
    build_tree,
    extract_rules,
    feature_matrix,
    rank_attributes,
    training_accuracy,
    tree_to_text,
)
from waterclust.data import (
    COUNT_ATTRIBUTES,
    PARTITION_ATTRIBUTE,
    POPULATION,
    encode_categorical,
    load_dataset,
    normalize_and_filter,
    partition_by,
)
from waterclust.errors import ConfigError, WaterclustError
from waterclust.evaluation import DEFAULT_GRID, damping_sweep
from waterclust.gower import CONCATENATED, PER_ATTRIBUTE, gower_matrix, to_similarity
from waterclust.priority import assign_priorities, load_rules, profile_clusters

logger = logging.getLogger(__name__)

OUTPUT_ENV = "WATERCLUST_OUTPUT_DIR"
QUARANTINE = "quarantine"
TREE_MODES = ("union", "per-subset")

# fields left out of the config echo: they do not change any artifact
_NOT_ECHOED = ("output_dir", "workers")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "waterclust-out")


@dataclass
class PipelineConfig:
    """Run parameters; defaults follow the reference study.

    ``gamma`` fixes the damping factor; left as ``None`` the whole ``grid`` is
    swept and the best pooled silhouette wins. ``tree_mode="union"`` fits one
    tree on all kept records with subset-namespaced labels and the partition
    attribute forced at the root; ``"per-subset"`` fits one tree per subset.
    """

    input: str = ""
    output_dir: str = field(default_factory=default_output_dir)
    partition_attribute: str = PARTITION_ATTRIBUTE
    count_attributes: tuple = COUNT_ATTRIBUTES
    denominator: str = POPULATION
    theta: float = -1.0
    preference: object = "median"
    gamma: float | None = None
    grid: tuple = DEFAULT_GRID
    max_iter: int = DEFAULT_MAX_ITER
    stable_window: int = DEFAULT_STABLE_WINDOW
    dice_mode: str = PER_ATTRIBUTE
    max_depth: int = DEFAULT_MAX_DEPTH
    min_samples_leaf: int = 1
    min_impurity_decrease: float = 0.0
    tree_mode: str = "union"
    rules: str | None = None
    trace: bool = False
    dump_matrices: bool = False
    point_silhouette: bool = False
    workers: int = 1

    def __post_init__(self):
        self.count_attributes = tuple(self.count_attributes)
        self.grid = tuple(float(g) for g in self.grid)

    def validate(self) -> "PipelineConfig":
        if not self.input:
            raise ConfigError("no input file given")
        if not Path(self.input).is_file():
            raise ConfigError(f"input file not found: {self.input}")
        if self.theta >= 0:
            raise ConfigError(f"theta must be negative, got {self.theta}")
        if isinstance(self.preference, str) and self.preference != "median":
            raise ConfigError(f"preference must be 'median' or a number, got {self.preference!r}")
        if self.gamma is not None:
            check_damping(self.gamma)
        else:
            if not self.grid:
                raise ConfigError("empty damping grid")
            if len(set(self.grid)) != len(self.grid):
                raise ConfigError(f"damping grid has duplicates: {list(self.grid)}")
            for g in self.grid:
                check_damping(g)
        for name in ("max_iter", "stable_window", "min_samples_leaf", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_depth < 0 or self.min_impurity_decrease < 0:
            raise ConfigError("max_depth and min_impurity_decrease must be >= 0")
        if self.dice_mode not in (PER_ATTRIBUTE, CONCATENATED):
            raise ConfigError(f"unknown dice mode {self.dice_mode!r}")
        if self.tree_mode not in TREE_MODES:
            raise ConfigError(f"tree mode must be one of {TREE_MODES}, got {self.tree_mode!r}")
        if not self.count_attributes:
            raise ConfigError("no count attributes given")
        if self.rules is not None and not Path(self.rules).is_file():
            raise ConfigError(f"rules file not found: {self.rules}")
        return self

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in _NOT_ECHOED:
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def from_json(cls, path, overrides=None) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        raw.update(overrides or {})
        return cls.from_dict(raw)


class PipelineError(WaterclustError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class StateTable:
    """Cluster x state member counts, largest cluster first."""

    states: tuple
    rows: list  # (cluster, counts per state, total)
    totals: tuple
    total: int

    def top_share(self, k=10) -> float:
        if not self.total:
            return 0.0
        return sum(r[2] for r in self.rows[:k]) / self.total


def tabulate_by_state(result, d) -> StateTable:
    """Count members of every cluster per state.

    ``result`` is a ``ClusterResult`` (compact cluster ids are used) or a
    per-record label sequence.
    """
    labels = result.cluster_ids() if hasattr(result, "cluster_ids") else result
    labels = [v.item() if isinstance(v, np.generic) else v for v in labels]
    if len(labels) != len(d):
        raise ValueError(f"{len(labels)} labels for {len(d)} records")
    states = tuple(sorted({r.state for r in d.records}))
    col = {s: j for j, s in enumerate(states)}
    counts = {}
    for lab, r in zip(labels, d.records):
        counts.setdefault(lab, [0] * len(states))[col[r.state]] += 1
    rows = [(lab, tuple(c), sum(c)) for lab, c in counts.items()]
    rows.sort(key=lambda row: (-row[2], row[0]))
    totals = tuple(sum(row[1][j] for row in rows) for j in range(len(states)))
    return StateTable(states, rows, totals, sum(totals))


@dataclass
class SubsetReport:
    value: str
    n_records: int
    dropped_attributes: tuple
    gamma: float
    silhouette: float
    n_clusters: int
    converged: bool
    iterations: int
    net_similarity: float
    sweep: list
    state_table: StateTable
    assignments: list  # (record id, cluster, exemplar id)
    profiles: list
    priorities: list
    trace: list = field(default_factory=list)


@dataclass
class Explanation:
    scope: str
    n_samples: int
    accuracy: float
    depth: int
    rules: list
    ranking: list
    tree_text: str


@dataclass
class RunReport:
    config: dict
    n_input: int
    n_kept: int
    removed: list  # (record, reason)
    subsets: list
    explanations: list
    has_coordinates: bool
    records: tuple = field(default=(), repr=False)
    extras: dict = field(default_factory=dict, repr=False)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-safe view of everything but the timings."""
        return _jsonable(
            {
                "config": self.config,
                "records": {
                    "input": self.n_input,
                    "kept": self.n_kept,
                    "removed": len(self.removed),
                    "removed_reasons": _reason_counts(self.removed),
                },
                "subsets": [_subset_dict(s) for s in self.subsets],
                "explanations": [
                    {
                        "scope": e.scope,
                        "n_samples": e.n_samples,
                        "training_accuracy": e.accuracy,
                        "depth": e.depth,
                        "rules": [r.to_dict() for r in e.rules],
                        "attribute_ranking": [r._asdict() for r in e.ranking],
                    }
                    for e in self.explanations
                ],
                "geojson": "assignments.geojson"
                if self.has_coordinates
                else "omitted: input records carry no coordinates",
            }
        )


def _reason_counts(removed):
    out = {}
    for _, reason in removed:
        key = reason.split(":")[0]
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items()))


def _subset_dict(s: SubsetReport) -> dict:
    t = s.state_table
    return {
        "value": s.value,
        "records": s.n_records,
        "dropped_attributes": list(s.dropped_attributes),
        "best_gamma": s.gamma,
        "silhouette": s.silhouette,
        "n_clusters": s.n_clusters,
        "converged": s.converged,
        "iterations": s.iterations,
        "net_similarity": s.net_similarity,
        "sweep": [asdict(e) for e in s.sweep],
        "clusters_by_state": {
            "states": list(t.states),
            "rows": [{"cluster": c, "counts": list(n), "total": tot} for c, n, tot in t.rows],
            "totals": list(t.totals),
            "total": t.total,
            "top10_share": t.top_share(10),
        },
        "priorities": [
            {
                "cluster": a.cluster,
                "priority": a.priority,
                "description": a.description,
                "basis": list(a.basis),
                "also_matched": list(a.also_matched),
            }
            for a in s.priorities
        ],
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def namespaced(value, cluster) -> str:
    return f"{value}:{cluster}"


def cluster_subset(d, config: PipelineConfig):
    """Gower -> similarity -> AP (fixed damping or sweep) for one subset.

    Returns ``(D, S, sweep_entries, result)``.
    """
    D = gower_matrix(d, encode_categorical(d), dice_mode=config.dice_mode)
    S = to_similarity(D, theta=config.theta, preference=config.preference)
    grid = (config.gamma,) if config.gamma is not None else config.grid
    sweep = damping_sweep(
        S,
        D,
        grid=grid,
        max_iter=config.max_iter,
        stable_window=config.stable_window,
        workers=config.workers,
        point_silhouette=config.point_silhouette,
    )
    result = sweep.best_result
    if config.trace:
        result = run_ap(
            S, sweep.best_gamma, config.max_iter, config.stable_window, trace=True
        )
    return D, S, sweep.entries, result


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except (WaterclustError, ValueError, OSError, KeyError) as exc:
        raise PipelineError(name, str(exc)) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def run_pipeline(config: PipelineConfig, write=True) -> RunReport:
    """Run every stage; artifacts land in ``config.output_dir`` when ``write``.

    Raises ``ConfigError`` for an invalid configuration (before any work) and
    ``PipelineError`` naming the failing stage otherwise. On failure whatever
    artifacts were complete are written to ``<output_dir>/quarantine``.
    """
    config.validate()
    timings = {}
    partial = {}
    try:
        report = _run(config, timings, partial)
    except PipelineError as exc:
        if write:
            _quarantine(Path(config.output_dir), partial, exc)
        raise
    report.timings = timings
    if write:
        with _stage("write", timings):
            write_report(report, config.output_dir)
        _write_timings(Path(config.output_dir), timings)
    return report


def _run(config, timings, partial) -> RunReport:
    with _stage("load", timings):
        raw = load_dataset(config.input)
    with _stage("filter", timings):
        kept = normalize_and_filter(raw, config.count_attributes, config.denominator)
        partial["filter_report.csv"] = _filter_csv(kept.removed)
    with _stage("partition", timings):
        subsets = partition_by(kept, config.partition_attribute)
    with _stage("rules", timings):
        rules = load_rules(config.rules)

    pos = {rid: i for i, rid in enumerate(kept.ids)}
    subset_reports, extras = [], {}
    union_labels = [None] * len(kept)
    for value, sub in subsets.items():
        with _stage(f"cluster[{value}]", timings):
            D, S, entries, result = cluster_subset(sub, config)
            if not result.converged:
                logger.warning("subset %s: best run did not converge", value)
            cids = result.cluster_ids()
            ids = sub.ids
            assignments = [
                (ids[i], int(c), ids[int(result.labels[i])]) for i, c in enumerate(cids)
            ]
            for rid, c, _ in assignments:
                union_labels[pos[rid]] = namespaced(value, c)
            silhouette = next(e.silhouette for e in entries if e.gamma == best_gamma(entries))
            table = tabulate_by_state(cids, sub)
        with _stage(f"prioritize[{value}]", timings):
            labels = [namespaced(value, c) for c in cids]
            profiles = profile_clusters(kept.select([pos[r] for r in ids]), labels)
            priorities = assign_priorities(profiles, rules)
        subset_reports.append(
            SubsetReport(
                value=value,
                n_records=len(sub),
                dropped_attributes=tuple(
                    a for a in sub.dropped if a not in kept.dropped
                ),
                gamma=best_gamma(entries),
                silhouette=silhouette,
                n_clusters=result.n_clusters,
                converged=result.converged,
                iterations=result.iterations_run,
                net_similarity=result.net_similarity,
                sweep=entries,
                state_table=table,
                assignments=assignments,
                profiles=profiles,
                priorities=priorities,
                trace=result.trace,
            )
        )
        if config.dump_matrices:
            extras[f"dissimilarity_{slug(value)}.csv"] = _matrix_csv(ids, D)
            extras[f"similarity_{slug(value)}.csv"] = _matrix_csv(ids, S)
        if config.trace:
            extras[f"trace_{slug(value)}.csv"] = trace_csv(result.trace)
        partial["extras"] = extras

    explanations = []
    if config.tree_mode == "union":
        with _stage("explain[union]", timings):
            explanations.append(
                explain(kept, union_labels, config, "union", root=config.partition_attribute)
            )
    else:
        for s in subset_reports:
            with _stage(f"explain[{s.value}]", timings):
                sub = subsets[s.value]
                labels = [union_labels[pos[rid]] for rid in sub.ids]
                explanations.append(explain(sub, labels, config, s.value))

    return RunReport(
        config=config.echo(),
        n_input=len(raw),
        n_kept=len(kept),
        removed=list(kept.removed),
        subsets=subset_reports,
        explanations=explanations,
        has_coordinates=any(r.location is not None for r in kept.records),
        records=kept.records,
        extras=extras,
    )


def best_gamma(entries):
    best = entries[0]
    for e in entries:
        if e.silhouette > best.silhouette:
            best = e
    return best.gamma


def explain(d, labels, config: PipelineConfig, scope, root=None) -> Explanation:
    fm = feature_matrix(d)
    labels = np.asarray(labels)
    tree = build_tree(
        fm,
        labels,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        min_impurity_decrease=config.min_impurity_decrease,
        root_attribute=root,
    )
    return Explanation(
        scope=scope,
        n_samples=len(labels),
        accuracy=training_accuracy(tree, fm, labels),
        depth=tree.depth(),
        rules=extract_rules(tree, fm, labels),
        ranking=rank_attributes(tree),
        tree_text=tree_to_text(tree),
    )


def slug(value) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(value)) or "_"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _filter_csv(removed) -> str:
    return csv_text(
        ["record_id", "name", "state", "reason"],
        [(r.id, r.name, r.state, reason) for r, reason in removed],
    )


def _matrix_csv(ids, M) -> str:
    return csv_text(["record_id", *ids], [(rid, *row) for rid, row in zip(ids, M.tolist())])


def trace_csv(trace) -> str:
    return csv_text(["iteration", "n_exemplars", "net_similarity"], trace)


def _by_id(report: RunReport):
    return {
        rid: (s.value, c, ex)
        for s in report.subsets
        for rid, c, ex in s.assignments
    }


def render_artifacts(report: RunReport, records) -> dict:
    """File name -> text for every deterministic artifact.

    ``records`` are the kept records, used for names, states and coordinates.
    """
    assigned = _by_id(report)
    out = {}
    out["assignments.csv"] = csv_text(
        ["record_id", "name", "state", "subset", "cluster", "label", "exemplar_id"],
        [
            (r.id, r.name, r.state, assigned[r.id][0], assigned[r.id][1],
             namespaced(assigned[r.id][0], assigned[r.id][1]), assigned[r.id][2])
            for r in records
        ],
    )
    states = sorted({st for s in report.subsets for st in s.state_table.states})
    rows = []
    for s in report.subsets:
        t = s.state_table
        idx = {st: j for j, st in enumerate(t.states)}
        for c, counts, tot in t.rows:
            rows.append((s.value, c, *(counts[idx[st]] if st in idx else 0 for st in states), tot))
        rows.append((s.value, "total", *(t.totals[idx[st]] if st in idx else 0 for st in states), t.total))
    out["clusters_by_state.csv"] = csv_text(["subset", "cluster", *states, "total"], rows)
    out["sweep.csv"] = csv_text(
        ["subset", "gamma", "silhouette", "n_clusters", "converged", "iterations",
         "silhouette_points", "selected"],
        [
            (s.value, e.gamma, e.silhouette, e.n_clusters, e.converged, e.iterations,
             e.silhouette_points, e.gamma == s.gamma)
            for s in report.subsets
            for e in s.sweep
        ],
    )
    lines, rules_json, imp_rows, tree_text = [], [], [], []
    for e in report.explanations:
        lines.append(f"# scope: {e.scope}  (training accuracy {e.accuracy:.4f}, depth {e.depth})")
        lines.extend(r.text() for r in e.rules)
        lines.append("")
        rules_json.append({"scope": e.scope, "rules": [r.to_dict() for r in e.rules]})
        for rank, a in enumerate(e.ranking, 1):
            imp_rows.append((e.scope, rank, a.attribute, a.importance, a.best_depth))
        tree_text.append(f"# scope: {e.scope}\n{e.tree_text}")
    out["rules.txt"] = "\n".join(lines)
    out["rules.json"] = json_text(_jsonable(rules_json))
    out["importance.csv"] = csv_text(["scope", "rank", "attribute", "importance", "best_depth"], imp_rows)
    out["tree.txt"] = "\n".join(tree_text)
    out["priorities.csv"] = csv_text(
        ["subset", "cluster", "size", "priority", "description", "basis", "also_matched"],
        [
            (s.value, a.cluster, p.size, a.priority, a.description, "; ".join(a.basis),
             " ".join(str(x) for x in a.also_matched))
            for s in report.subsets
            for p, a in zip(s.profiles, s.priorities)
        ],
    )
    out["filter_report.csv"] = _filter_csv(report.removed)
    out["report.json"] = json_text(report.to_dict())
    if report.has_coordinates:
        out["assignments.geojson"] = json_text(_geojson(records, assigned))
    return out


def _geojson(records, assigned) -> dict:
    feats = []
    for r in records:
        if r.location is None:
            continue
        value, c, ex = assigned[r.id]
        lat, lon = r.location
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {
                    "id": r.id,
                    "name": r.name,
                    "state": r.state,
                    "subset": value,
                    "cluster": c,
                    "label": namespaced(value, c),
                    "exemplar_id": ex,
                },
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_report(report: RunReport, out_dir) -> list:
    """Write all deterministic artifacts into ``out_dir``; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = render_artifacts(report, report.records)
    files.update(report.extras)
    written = []
    for name in sorted(files):
        path = out_dir / name
        path.write_text(files[name], encoding="utf-8", newline="")
        written.append(path)
    return written


def _write_timings(out_dir, timings):
    (out_dir / "timings.json").write_text(
        json.dumps({k: round(v, 6) for k, v in timings.items()}, indent=2) + "\n",
        encoding="utf-8",
    )


def _quarantine(out_dir, partial, exc):
    q = out_dir / QUARANTINE
    q.mkdir(parents=True, exist_ok=True)
    for name, text in partial.items():
        if name == "extras":
            for extra, body in text.items():
                (q / extra).write_text(body, encoding="utf-8", newline="")
        else:
            (q / name).write_text(text, encoding="utf-8", newline="")
    (q / "error.txt").write_text(f"{exc}\n", encoding="utf-8")
