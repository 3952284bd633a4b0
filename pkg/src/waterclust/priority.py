"""Cluster profiles and rule-based priority levels.

A rules file is a JSON list of ``{"priority", "description", "predicate"}``
objects. Predicates nest ``{"all": [...]}``, ``{"any": [...]}`` and
``{"not": ...}`` around leaf conditions
``{"attribute", "op", "value"[, "threshold"]}`` with ``op`` one of:

* ``eq`` / ``ne``: modal value (categorical) or mean (numeric) equals / differs
* ``freq_gt``: share of records whose value is ``value`` exceeds ``threshold``
* ``mean_lt`` / ``mean_gt``: numeric mean below / above ``value``

One extra entry with ``"default": true`` and no predicate may close the list;
it catches clusters no predicate matched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from waterclust.errors import ConfigError, InputError

LEVELS = (1, 2, 3, 4, 5)
OPS = ("eq", "ne", "freq_gt", "mean_lt", "mean_gt")


@dataclass
class ClusterProfile:
    cluster: object
    size: int
    frequencies: dict
    means: dict

    def modal(self, attr):
        """Most frequent value and its share; lexicographically smallest on ties."""
        freqs = self.frequencies[attr]
        top = max(freqs.values())
        value = min(v for v, f in freqs.items() if f == top)
        return value, top

    def knows(self, attr) -> bool:
        return attr in self.frequencies or attr in self.means


def profile_clusters(d, labels) -> list:
    """One profile per non-empty cluster, ordered by cluster id.

    ``labels`` is a per-record sequence of cluster ids, or a ``ClusterResult``
    (whose compact cluster ids are used).
    """
    if hasattr(labels, "cluster_ids"):
        labels = labels.cluster_ids()
    labels = list(np.asarray(labels).tolist()) if len(labels) else []
    if len(labels) != len(d):
        raise InputError(f"{len(labels)} labels for {len(d)} records")
    members = {}
    for i, lab in enumerate(labels):
        members.setdefault(lab, []).append(i)
    profiles = []
    for lab in sorted(members):
        idx = members[lab]
        freqs, means = {}, {}
        for j, a in enumerate(d.schema):
            values = [d.records[i].values[j] for i in idx]
            if a.is_numeric:
                means[a.name] = float(np.mean(values))
            else:
                counts = {}
                for v in values:
                    counts[v] = counts.get(v, 0) + 1
                freqs[a.name] = {v: counts[v] / len(idx) for v in sorted(counts)}
        profiles.append(ClusterProfile(lab, len(idx), freqs, means))
    return profiles


@dataclass(frozen=True)
class PriorityRule:
    priority: int
    description: str
    predicate: dict | None
    default: bool = False


@dataclass
class Assignment:
    cluster: object
    priority: int
    description: str
    basis: tuple
    also_matched: tuple = ()


def _validate_predicate(p, where):
    if not isinstance(p, dict):
        raise ConfigError(f"{where}: predicate must be an object, got {p!r}")
    if "all" in p or "any" in p:
        key = "all" if "all" in p else "any"
        if not isinstance(p[key], list):
            raise ConfigError(f"{where}: '{key}' needs a list")
        for q in p[key]:
            _validate_predicate(q, where)
    elif "not" in p:
        _validate_predicate(p["not"], where)
    else:
        for k in ("attribute", "op", "value"):
            if k not in p:
                raise ConfigError(f"{where}: condition missing {k!r}: {p!r}")
        if p["op"] not in OPS:
            raise ConfigError(f"{where}: unknown op {p['op']!r}")


def rules_from_list(items) -> list:
    if not isinstance(items, list):
        raise ConfigError("rules file must hold a JSON list")
    rules, defaults = [], []
    for n, item in enumerate(items):
        where = f"rule #{n}"
        try:
            level = int(item["priority"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}: missing or non-integer 'priority'") from None
        if level not in LEVELS:
            raise ConfigError(f"{where}: priority {level} outside 1-5")
        desc = str(item.get("description", ""))
        if item.get("default"):
            if n != len(items) - 1:
                raise ConfigError(f"{where}: the default entry must come last")
            defaults.append(PriorityRule(level, desc, None, True))
            continue
        if "predicate" not in item:
            raise ConfigError(f"{where}: missing 'predicate'")
        _validate_predicate(item["predicate"], where)
        rules.append(PriorityRule(level, desc, item["predicate"]))
    levels = sorted(r.priority for r in rules)
    if levels != list(LEVELS):
        raise ConfigError(f"priority levels 1-5 must each be defined once, got {levels}")
    return sorted(rules, key=lambda r: r.priority) + defaults


def load_rules(path=None) -> list:
    """Parse a rules file; ``None`` loads the shipped default rules."""
    if path is None:
        text = resources.files("waterclust").joinpath("rules/default_priority_rules.json").read_text(
            encoding="utf-8"
        )
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"rules file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        items = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"rules file is not valid JSON: {exc}") from None
    return rules_from_list(items)


def _attributes(p):
    if "all" in p or "any" in p:
        for q in p.get("all", p.get("any")):
            yield from _attributes(q)
    elif "not" in p:
        yield from _attributes(p["not"])
    else:
        yield p["attribute"]


def _leaf(profile, c):
    attr, op, value = c["attribute"], c["op"], c["value"]
    numeric = attr in profile.means
    if op in ("eq", "ne"):
        if numeric:
            actual = profile.means[attr]
            hit = actual == float(value)
            fact = f"mean {attr} = {actual:.6g}"
        else:
            actual, share = profile.modal(attr)
            hit = actual == value
            fact = f"modal {attr} = {actual} ({100 * share:.0f}%)"
        return (hit if op == "eq" else not hit), fact
    if op == "freq_gt":
        if numeric:
            raise ConfigError(f"freq_gt on numeric attribute {attr!r}")
        share = profile.frequencies[attr].get(value, 0.0)
        threshold = float(c.get("threshold", 0.0))
        return share > threshold, f"{attr} = {value} in {100 * share:.0f}% of records"
    if not numeric:
        raise ConfigError(f"{op} on categorical attribute {attr!r}")
    actual = profile.means[attr]
    hit = actual < float(value) if op == "mean_lt" else actual > float(value)
    return hit, f"mean {attr} = {actual:.6g}"


def evaluate(profile, p):
    """(matched, facts that support the outcome)."""
    if "all" in p:
        facts = []
        for q in p["all"]:
            ok, f = evaluate(profile, q)
            if not ok:
                return False, ()
            facts.extend(f)
        return True, tuple(facts)
    if "any" in p:
        for q in p["any"]:
            ok, f = evaluate(profile, q)
            if ok:
                return True, f
        return False, ()
    if "not" in p:
        ok, _ = evaluate(profile, p["not"])
        return (not ok), ()
    ok, fact = _leaf(profile, p)
    return ok, ((fact,) if ok else ())


def assign_priorities(profiles, rules) -> list:
    """First matching rule in ascending priority order wins, for every cluster.

    ``also_matched`` lists the other levels whose predicates hold, so overlapping
    rules are visible in reports.
    """
    ordered = sorted((r for r in rules if not r.default), key=lambda r: r.priority)
    default = next((r for r in rules if r.default), None)
    out = []
    for prof in profiles:
        for r in ordered:
            for attr in _attributes(r.predicate):
                if not prof.knows(attr):
                    raise ConfigError(
                        f"priority {r.priority} rule references {attr!r}, "
                        f"absent from cluster {prof.cluster} profile"
                    )
        matched = []
        for r in ordered:
            ok, facts = evaluate(prof, r.predicate)
            if ok:
                matched.append((r, facts))
        if matched:
            rule, facts = matched[0]
            out.append(
                Assignment(
                    prof.cluster,
                    rule.priority,
                    rule.description,
                    facts,
                    tuple(r.priority for r, _ in matched[1:]),
                )
            )
        elif default is not None:
            out.append(
                Assignment(prof.cluster, default.priority, default.description, ("no rule matched",))
            )
        else:
            raise ConfigError(f"no priority rule matches cluster {prof.cluster} and no default")
    return out
