import json

import numpy as np
import pytest
from conftest import make_dataset

from waterclust.affinity import ClusterResult
from waterclust.data import CATEGORICAL, NUMERIC
from waterclust.errors import ConfigError, InputError
from waterclust.priority import (
    ClusterProfile,
    assign_priorities,
    load_rules,
    profile_clusters,
    rules_from_list,
)

BASE = {
    "Water Hauled": "N",
    "Private Wells": "N",
    "Public Water Service": "Y",
    "Service Adequacy": "Y",
    "Water Health Hazard": "N",
    "Served by Public Sewer": "Y",
}


def profile(cluster="c", population=120.0, **modal):
    values = dict(BASE)
    values.update({k.replace("_", " "): v for k, v in modal.items()})
    freqs = {k: {v: 1.0} for k, v in values.items()}
    return ClusterProfile(cluster, 5, freqs, {"Estimated Population": population})


def hauled():
    return profile(**{"Water Hauled": "Y", "Public Water Service": "N",
                      "Served by Public Sewer": "N", "Service Adequacy": "N"})


def wells_no_hazard():
    return profile(**{"Public Water Service": "N", "Private Wells": "Y",
                      "Water Health Hazard": "N", "Service Adequacy": "Partial"})


def full_service():
    return profile()


def test_reference_profiles():
    rules = load_rules()
    out = assign_priorities([hauled(), wells_no_hazard(), full_service()], rules)
    assert [a.priority for a in out] == [1, 2, 4]
    assert all(a.basis for a in out)


def test_hauled_with_sewer_still_first_level():
    p = profile(**{"Water Hauled": "Y", "Public Water Service": "N"})
    assert assign_priorities([p], load_rules())[0].priority == 1


def test_hazard_may_be_present():
    p = profile(**{"Served by Public Sewer": "N"})
    p.frequencies["Water Health Hazard"] = {"N": 0.9, "Y": 0.1}
    a = assign_priorities([p], load_rules())[0]
    assert a.priority == 1
    assert any("10%" in fact for fact in a.basis)


def test_violation_proxy_and_no_inhabitants():
    p = profile(**{"Water Health Hazard": "Y"})
    assert assign_priorities([p], load_rules())[0].priority == 2
    empty = profile(population=0.0)
    a = assign_priorities([empty], load_rules())[0]
    assert a.priority == 4 and 5 in a.also_matched


def test_default_catches_unmatched():
    p = profile(**{"Public Water Service": "Partial"})
    a = assign_priorities([p], load_rules())[0]
    assert a.priority == 3 and "Unclassified" in a.description


def test_every_cluster_gets_one_level():
    profiles = [hauled(), wells_no_hazard(), full_service(), profile(**{"Public Water Service": "X"})]
    out = assign_priorities(profiles, load_rules())
    assert [a.cluster for a in out] == [p.cluster for p in profiles]
    assert all(1 <= a.priority <= 5 for a in out)


def test_missing_attribute_is_config_error():
    p = full_service()
    del p.frequencies["Water Hauled"]
    with pytest.raises(ConfigError, match="Water Hauled"):
        assign_priorities([p], load_rules())


def simple_rules(default=True):
    items = [
        {"priority": k, "description": f"L{k}",
         "predicate": {"attribute": "x", "op": "mean_gt", "value": 10 * (5 - k)}}
        for k in (5, 4, 3, 2, 1)
    ]
    if default:
        items.append({"priority": 5, "default": True, "description": "rest"})
    return items


def test_rules_sorted_by_level_and_first_match_wins():
    rules = rules_from_list(simple_rules())
    assert [r.priority for r in rules] == [1, 2, 3, 4, 5, 5]
    p = ClusterProfile(0, 1, {}, {"x": 25.0})
    a = assign_priorities([p], rules)[0]
    assert a.priority == 3 and a.also_matched == (4, 5)
    low = ClusterProfile(1, 1, {}, {"x": -1.0})
    assert assign_priorities([low], rules)[0].description == "rest"
    with pytest.raises(ConfigError):
        assign_priorities([low], rules_from_list(simple_rules(default=False)))


def test_reordered_rule_file_same_output():
    p = [ClusterProfile(i, 1, {}, {"x": float(v)}) for i, v in enumerate((-1, 5, 15, 35, 45))]
    items = simple_rules()
    a = assign_priorities(p, rules_from_list(items))
    b = assign_priorities(p, rules_from_list(items[:5][::-1] + items[5:]))
    assert [x.priority for x in a] == [x.priority for x in b]


@pytest.mark.parametrize(
    "items",
    [
        {"priority": 1},
        [{"priority": 1, "predicate": {"attribute": "x", "op": "eq", "value": 1}}],
        [{"priority": 9, "predicate": {"attribute": "x", "op": "eq", "value": 1}}],
        [{"priority": "one"}],
        [{"priority": 1, "predicate": {"attribute": "x", "op": "like", "value": 1}}],
        [{"priority": 1, "predicate": {"attribute": "x", "op": "eq"}}],
        [{"priority": 1, "predicate": {"all": {"attribute": "x"}}}],
        [{"priority": 1, "default": True}] + [
            {"priority": k, "predicate": {"attribute": "x", "op": "eq", "value": 1}}
            for k in (1, 2, 3, 4, 5)
        ],
    ],
)
def test_invalid_rule_files(items):
    with pytest.raises(ConfigError):
        rules_from_list(items)


def test_load_rules_from_file(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps(simple_rules()))
    assert len(load_rules(p)) == 6
    with pytest.raises(ConfigError):
        load_rules(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_rules(bad)


def test_not_and_mean_lt():
    rules = rules_from_list(
        [{"priority": 1, "predicate": {"not": {"attribute": "c", "op": "eq", "value": "a"}}},
         {"priority": 2, "predicate": {"attribute": "x", "op": "mean_lt", "value": 0}}]
        + [{"priority": k, "predicate": {"attribute": "x", "op": "mean_gt", "value": 1e9}}
           for k in (3, 4, 5)]
    )
    p = ClusterProfile(0, 2, {"c": {"a": 1.0}}, {"x": -3.0})
    assert assign_priorities([p], rules)[0].priority == 2
    q = ClusterProfile(1, 2, {"c": {"b": 1.0}}, {"x": 3.0})
    assert assign_priorities([q], rules)[0].priority == 1
    with pytest.raises(ConfigError):
        bad = rules_from_list(
            [{"priority": 1, "predicate": {"attribute": "x", "op": "freq_gt", "value": 1}}]
            + [{"priority": k, "predicate": {"attribute": "c", "op": "eq", "value": "a"}}
               for k in (2, 3, 4, 5)]
        )
        assign_priorities([p], bad)


def test_profiles_modal_frequency_and_means():
    d = make_dataset(
        [["Y", "Y", "N", "N"], [1.0, 2.0, 3.0, 10.0]], [CATEGORICAL, NUMERIC]
    )
    profiles = profile_clusters(d, [7, 7, 7, 2])
    assert [p.cluster for p in profiles] == [2, 7]
    p = profiles[1]
    assert p.size == 3
    assert p.modal("a0") == ("Y", pytest.approx(2 / 3))
    assert p.means["a1"] == 2.0
    assert profiles[0].modal("a0") == ("N", 1.0)
    assert profiles[0].means["a1"] == 10.0


def test_modal_ties_lexicographic():
    d = make_dataset([["Y", "N"]], [CATEGORICAL])
    assert profile_clusters(d, [0, 0])[0].modal("a0") == ("N", 0.5)


def test_profiles_from_cluster_result():
    d = make_dataset([["a", "b", "b"]], [CATEGORICAL])
    res = ClusterResult((0, 2), np.array([0, 2, 2]), 1, True, 0.0)
    assert [p.size for p in profile_clusters(d, res)] == [1, 2]
    with pytest.raises(InputError):
        profile_clusters(d, [0, 1])


def test_empty_labels_give_no_profiles():
    d = make_dataset([["a"]], [CATEGORICAL]).select([])
    assert profile_clusters(d, []) == []
