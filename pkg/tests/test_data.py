import numpy as np
import pytest
from conftest import write_csv

from waterclust.data import (
    CATEGORICAL,
    COUNT_ATTRIBUTES,
    FILTERED,
    NUMERIC,
    POPULATION,
    RAW,
    Attribute,
    AttributeSchema,
    Dataset,
    Record,
    canonical_token,
    encode_categorical,
    load_dataset,
    normalize_and_filter,
    partition_by,
)
from waterclust.errors import InputError, ParseError, SchemaError
from waterclust.synthetic import HEADER, make_synthetic_rows, write_synthetic_csv

SMALL_HEADER = ["ID", "Name", "State", "Private Wells", "Public Water Service",
                POPULATION, *COUNT_ATTRIBUTES]


def small_rows():
    return [
        ["a", "Alpha", "Texas", "yes", "Y", "100", "10", "20", "90", "80"],
        ["b", "Beta", "Arizona", "No", "y", "50", "0", "50", "50", "0"],
        ["c", "Gamma", "Texas", "N", "N", "80", "80", "80", "0", "0"],
    ]


def test_canonical_tokens():
    assert canonical_token(" yes ") == "Y"
    assert canonical_token("NO") == "N"
    assert canonical_token("partial") == "Partial"
    assert canonical_token("Hauled water") == "Hauled water"


def test_load_infers_schema_and_canonicalizes(tmp_path):
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, small_rows())
    d = load_dataset(p)
    assert d.stage == RAW
    assert d.ids == ["a", "b", "c"]
    assert d.schema["Private Wells"].kind == CATEGORICAL
    assert d.schema[POPULATION].kind == NUMERIC
    assert d.column("Private Wells") == ["Y", "N", "N"]
    assert d.schema["Public Water Service"].categories == ("N", "Y")
    assert d.schema[POPULATION].range == (50.0, 100.0)
    assert d.records[0].name == "Alpha" and d.records[1].state == "Arizona"
    assert d.records[0].location is None


def test_load_unknown_columns_by_content(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["ID", "score", "colour"], [["1", "2.5", "red"], ["2", "", "blue"]])
    d = load_dataset(p)
    assert d.schema["score"].kind == NUMERIC
    assert d.schema["colour"].kind == CATEGORICAL
    assert d.records[1].values[0] is None


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_dataset(tmp_path / "nope.csv")


def test_load_missing_column_names_it(tmp_path):
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, small_rows())
    with pytest.raises(SchemaError, match="Water Hauled"):
        load_dataset(p, schema=[("Water Hauled", CATEGORICAL)])


def test_load_bad_number_reports_row(tmp_path):
    rows = small_rows()
    rows[2][5] = "eighty"
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, rows)
    with pytest.raises(ParseError) as exc:
        load_dataset(p, schema=[(POPULATION, NUMERIC)])
    assert exc.value.row == 2 and exc.value.column == POPULATION


def test_load_rejects_duplicate_ids(tmp_path):
    rows = small_rows()
    rows[1][0] = "a"
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, rows)
    with pytest.raises(SchemaError, match="unique"):
        load_dataset(p)


def test_dataset_rejects_foreign_category():
    schema = AttributeSchema((Attribute("c", CATEGORICAL, categories=("N", "Y")),))
    with pytest.raises(SchemaError):
        Dataset(schema, (Record("1", ("maybe",)),), FILTERED)


def test_dataset_rejects_ratio_out_of_unit():
    schema = AttributeSchema((Attribute("r", NUMERIC, range=(0.0, 1.0)),))
    with pytest.raises(SchemaError):
        Dataset(schema, (Record("1", (1.5,)),), FILTERED, ratio_attributes=frozenset({"r"}))


def test_schema_rejects_duplicate_names():
    with pytest.raises(SchemaError):
        AttributeSchema.from_pairs([("x", NUMERIC), ("x", CATEGORICAL)])


def test_filter_ratios_and_reasons(tmp_path):
    rows = small_rows() + [
        ["d", "Delta", "Texas", "N", "Y", "0", "0", "0", "0", "0"],
        ["e", "Eps", "Texas", "N", "Y", "10", "11", "0", "0", "0"],
        ["f", "Zeta", "Texas", "", "Y", "10", "1", "0", "0", "0"],
    ]
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, rows)
    raw = load_dataset(p)
    d = normalize_and_filter(raw)
    assert d.stage == FILTERED
    assert d.ids == ["a", "b", "c"]
    assert len(d) + len(d.removed) == len(raw)
    reasons = {r.id: why for r, why in d.removed}
    assert "non-positive" in reasons["d"]
    assert "ratio outside" in reasons["e"]
    assert "missing value" in reasons["f"]
    np.testing.assert_allclose(d.numeric_column("People without Water"), [0.1, 0.0, 1.0])
    for name in COUNT_ATTRIBUTES:
        assert d.schema[name].range == (0.0, 1.0)
    assert normalize_and_filter(d) is d


def test_filter_needs_denominator(tmp_path):
    p = write_csv(tmp_path / "t.csv", SMALL_HEADER, small_rows())
    with pytest.raises(SchemaError):
        normalize_and_filter(load_dataset(p), denominator_attr="Households")


def test_partition_sizes_and_dropped(tmp_path):
    p = write_synthetic_csv(tmp_path / "s.csv")
    d = normalize_and_filter(load_dataset(p))
    parts = partition_by(d, "Public Water Service")
    assert list(parts) == ["N", "Y"]
    assert sum(len(s) for s in parts.values()) == len(d)
    for value, s in parts.items():
        assert "Public Water Service" not in s.schema
        assert "Public Water Service" in s.dropped
        assert all(not a.is_constant for a in s.schema)
        assert set(s.column("Private Wells")) <= {"Y", "N"}
    assert "Water Hauled" in parts["Y"].dropped


def test_partition_rejects_numeric(tmp_path):
    d = normalize_and_filter(load_dataset(write_synthetic_csv(tmp_path / "s.csv")))
    with pytest.raises(SchemaError):
        partition_by(d, POPULATION)


def test_encode_one_hot_round_trip(tmp_path):
    d = normalize_and_filter(load_dataset(write_synthetic_csv(tmp_path / "s.csv")))
    enc = encode_categorical(d)
    assert enc.data.dtype == np.uint8
    assert not enc.data.flags.writeable
    for name, start, stop, cats in enc.groups:
        assert np.all(enc.data[:, start:stop].sum(axis=1) == 1)
        assert enc.columns[start] == f"{name}_{cats[0]}"
    for row in (0, 7, len(d) - 1):
        decoded = enc.decode(row)
        for a in d.schema.categorical():
            assert decoded[a.name] == d.records[row].values[d.schema.index(a.name)]


def test_encode_rejects_raw(tmp_path):
    raw = load_dataset(write_synthetic_csv(tmp_path / "s.csv"))
    with pytest.raises(InputError):
        encode_categorical(raw)


def test_synthetic_rows_match_header():
    rows = make_synthetic_rows()
    assert all(len(r) == len(HEADER) for _, r in rows)
    assert sum(g == "noise" for g, _ in rows) == 3


def test_bundled_fixture_is_current(fixture_csv, tmp_path):
    fresh = write_synthetic_csv(tmp_path / "s.csv")
    assert fresh.read_bytes() == fixture_csv.read_bytes()


def test_coordinates_parsed(fixture_csv):
    d = load_dataset(fixture_csv)
    lat, lon = d.records[0].location
    assert 31 <= lat <= 34 and -117 <= lon <= -97
