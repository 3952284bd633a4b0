"""Record tables with mixed numeric/categorical attributes.

Loading, ratio normalization with noise filtering, partitioning on a
categorical attribute, and one-hot encoding.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from waterclust.errors import InputError, ParseError, SchemaError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

RAW = "raw"
NORMALIZED = "normalized"
FILTERED = "filtered"
STAGES = (RAW, NORMALIZED, FILTERED)

POPULATION = "Estimated Population"
PARTITION_ATTRIBUTE = "Public Water Service"
COUNT_ATTRIBUTES = (
    "People without Water",
    "People without Wastewater",
    "People with Water",
    "People with Wastewater",
)

# Attribute labels and kinds of the colonia survey table. Estimated Population is
# numeric: it is the denominator of the ratio normalization.
SURVEY_ATTRIBUTES = (
    ("Water Source", CATEGORICAL),
    ("Water Hauled", CATEGORICAL),
    ("Private Wells", CATEGORICAL),
    ("Public Water Service", CATEGORICAL),
    ("Service Adequacy", CATEGORICAL),
    ("Water Health Hazard", CATEGORICAL),
    ("Served by Public Sewer", CATEGORICAL),
    (POPULATION, NUMERIC),
    *((name, NUMERIC) for name in COUNT_ATTRIBUTES),
)

META_COLUMNS = {
    "id": ("id", "colonia id", "record id", "record_id"),
    "name": ("name", "colonia name", "colonia"),
    "state": ("state",),
    "county": ("county",),
    "latitude": ("latitude", "lat"),
    "longitude": ("longitude", "lon", "lng", "long"),
}

_YES_NO = {"y": "Y", "yes": "Y", "n": "N", "no": "N", "partial": "Partial"}


def _key(name: str) -> str:
    return " ".join(name.split()).lower()


def canonical_token(token: str) -> str:
    """Canonicalize yes/no/partial tokens; other strings are only trimmed."""
    token = token.strip()
    return _YES_NO.get(token.lower(), token)


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    range: tuple[float, float] | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.range is not None and self.range[0] > self.range[1]:
            raise SchemaError(f"attribute {self.name!r}: range min > max {self.range}")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @property
    def span(self) -> float:
        if self.range is None:
            return 0.0
        return self.range[1] - self.range[0]

    @property
    def is_constant(self) -> bool:
        if self.is_numeric:
            return self.span == 0.0
        return self.categories is None or len(self.categories) <= 1


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate attribute names: {dupes}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "AttributeSchema":
        return cls(tuple(Attribute(name, kind) for name, kind in pairs))

    def __iter__(self):
        return iter(self.attributes)

    def __len__(self):
        return len(self.attributes)

    def __contains__(self, name):
        return any(a.name == name for a in self.attributes)

    def __getitem__(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"attribute {name!r} not in schema")

    def numeric(self) -> list[Attribute]:
        return [a for a in self.attributes if a.is_numeric]

    def categorical(self) -> list[Attribute]:
        return [a for a in self.attributes if not a.is_numeric]


@dataclass(frozen=True)
class Record:
    id: str
    values: tuple
    name: str = ""
    state: str = ""
    county: str = ""
    location: tuple[float, float] | None = None


@dataclass(frozen=True)
class Dataset:
    """Records conforming to one schema.

    ``removed`` keeps ``(record, reason)`` pairs dropped by filtering,
    ``ratio_attributes`` names the attributes normalized to [0, 1] and
    ``dropped`` names attributes removed because they became constant.
    """

    schema: AttributeSchema
    records: tuple[Record, ...]
    stage: str = RAW
    removed: tuple[tuple[Record, str], ...] = ()
    ratio_attributes: frozenset = field(default_factory=frozenset)
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.stage not in STAGES:
            raise SchemaError(f"unknown stage {self.stage!r}")
        width = len(self.schema)
        cat_sets = [
            (i, a.name, set(a.categories or ()))
            for i, a in enumerate(self.schema)
            if not a.is_numeric
        ]
        ratio_idx = [self.schema.index(n) for n in self.ratio_attributes]
        for r in self.records:
            if len(r.values) != width:
                raise SchemaError(
                    f"record {r.id!r} has {len(r.values)} values, schema has {width}"
                )
            for i, name, cats in cat_sets:
                v = r.values[i]
                if v is None:
                    if self.stage != RAW:
                        raise SchemaError(f"record {r.id!r}: missing {name!r}")
                    continue
                if v == "" or v not in cats:
                    raise SchemaError(
                        f"record {r.id!r}: {name!r} value {v!r} not in category set"
                    )
            if self.stage != RAW:
                for i in ratio_idx:
                    if not 0.0 <= r.values[i] <= 1.0:
                        raise SchemaError(
                            f"record {r.id!r}: ratio {self.schema.attributes[i].name!r} "
                            f"= {r.values[i]} outside [0, 1]"
                        )

    def __len__(self):
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def column(self, name: str) -> list:
        i = self.schema.index(name)
        return [r.values[i] for r in self.records]

    def numeric_column(self, name: str) -> np.ndarray:
        return np.asarray(self.column(name), dtype=np.float64)

    def select(self, indices: Sequence[int]) -> "Dataset":
        """Subset of records with the schema unchanged."""
        return replace(self, records=tuple(self.records[i] for i in indices), removed=())


def _observed_schema(schema, records, fixed_unit=frozenset(), keep=None):
    """Schema with ranges/category sets recomputed from ``records``.

    Attributes in ``fixed_unit`` get the range (0, 1). Explicit ranges or
    categories on attributes listed in ``keep`` are preserved.
    """
    keep = keep or set()
    attrs = []
    for i, a in enumerate(schema):
        values = [r.values[i] for r in records if r.values[i] is not None]
        if a.name in keep and (a.range is not None or a.categories is not None):
            attrs.append(a)
        elif a.is_numeric:
            if a.name in fixed_unit:
                rng = (0.0, 1.0)
            elif values:
                rng = (float(min(values)), float(max(values)))
            else:
                rng = (0.0, 0.0)
            attrs.append(replace(a, range=rng))
        else:
            attrs.append(replace(a, categories=tuple(sorted(set(values)))))
    return AttributeSchema(tuple(attrs))


def _match_columns(header):
    lookup = {}
    for j, col in enumerate(header):
        lookup.setdefault(_key(col), j)
    return lookup


def load_dataset(path, schema=None) -> Dataset:
    """Read a UTF-8 CSV into a raw :class:`Dataset`.

    ``schema`` may be an :class:`AttributeSchema`, a list of ``(name, kind)``
    pairs, or ``None`` to infer attributes from the header: known colonia
    labels keep their kind, other non-meta columns are numeric when every
    non-empty cell parses as a number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    body = [row for row in rows[1:] if any(cell.strip() for cell in row)]
    lookup = _match_columns(header)

    meta = {}
    for field_name, aliases in META_COLUMNS.items():
        for alias in aliases:
            if alias in lookup:
                meta[field_name] = lookup[alias]
                break
    meta_cols = set(meta.values())

    if schema is None:
        known = {_key(n): (n, k) for n, k in SURVEY_ATTRIBUTES}
        pairs = []
        for j, col in enumerate(header):
            if j in meta_cols or not col:
                continue
            if _key(col) in known:
                pairs.append(known[_key(col)])
            else:
                pairs.append((col, NUMERIC if _all_numeric(body, j) else CATEGORICAL))
        schema = AttributeSchema.from_pairs(pairs)
        explicit = set()
    elif not isinstance(schema, AttributeSchema):
        schema = AttributeSchema.from_pairs(schema)
        explicit = set()
    else:
        explicit = set(schema.names)

    columns = []
    for a in schema:
        j = lookup.get(_key(a.name))
        if j is None:
            raise SchemaError(f"{path}: missing column {a.name!r}")
        columns.append(j)

    records = []
    for row_index, row in enumerate(body):
        row = row + [""] * (len(header) - len(row))
        values = []
        for a, j in zip(schema, columns):
            token = row[j].strip()
            if not token:
                values.append(None)
            elif a.is_numeric:
                try:
                    values.append(float(token))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {row_index}: column {a.name!r} expects a number, "
                        f"got {token!r}",
                        row=row_index,
                        column=a.name,
                    ) from None
                if not math.isfinite(values[-1]):
                    raise ParseError(
                        f"{path}: row {row_index}: column {a.name!r} is not finite",
                        row=row_index,
                        column=a.name,
                    )
            else:
                token = canonical_token(token)
                if a.categories is not None and token not in a.categories:
                    raise ParseError(
                        f"{path}: row {row_index}: {token!r} not a category of {a.name!r}",
                        row=row_index,
                        column=a.name,
                    )
                values.append(token)
        records.append(
            Record(
                id=row[meta["id"]].strip() if "id" in meta else str(row_index),
                values=tuple(values),
                name=row[meta["name"]].strip() if "name" in meta else "",
                state=row[meta["state"]].strip() if "state" in meta else "",
                county=row[meta["county"]].strip() if "county" in meta else "",
                location=_location(row, meta),
            )
        )
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path}: record ids are not unique")
    schema = _observed_schema(schema, records, keep=explicit)
    return Dataset(schema, tuple(records), RAW)


def _all_numeric(body, j):
    for row in body:
        token = row[j].strip() if j < len(row) else ""
        if token:
            try:
                float(token)
            except ValueError:
                return False
    return True


def _location(row, meta):
    if "latitude" not in meta or "longitude" not in meta:
        return None
    try:
        lat = float(row[meta["latitude"]])
        lon = float(row[meta["longitude"]])
    except (ValueError, IndexError):
        return None
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    return (lat, lon)


def normalize_and_filter(
    d: Dataset, count_attrs=COUNT_ATTRIBUTES, denominator_attr=POPULATION
) -> Dataset:
    """Replace count attributes by count/denominator and drop noisy records.

    A record is removed when any attribute is missing, the denominator is not
    positive, or a ratio falls outside [0, 1]. Removed records and reasons are
    kept on ``Dataset.removed``. Already-filtered input is returned unchanged.
    """
    if d.stage != RAW:
        return d
    if denominator_attr not in d.schema:
        raise SchemaError(f"denominator attribute {denominator_attr!r} not in schema")
    if not d.schema[denominator_attr].is_numeric:
        raise SchemaError(f"denominator attribute {denominator_attr!r} is not numeric")
    count_idx = []
    for name in count_attrs:
        if name not in d.schema:
            raise SchemaError(f"count attribute {name!r} not in schema")
        if not d.schema[name].is_numeric:
            raise SchemaError(f"count attribute {name!r} is not numeric")
        count_idx.append(d.schema.index(name))
    den_idx = d.schema.index(denominator_attr)

    kept, removed = [], []
    for r in d.records:
        missing = [a.name for a, v in zip(d.schema, r.values) if v is None]
        if missing:
            removed.append((r, f"missing value: {missing[0]}"))
            continue
        den = r.values[den_idx]
        if den <= 0:
            removed.append((r, f"non-positive {denominator_attr}"))
            continue
        values = list(r.values)
        bad = None
        for i in count_idx:
            ratio = values[i] / den
            if not 0.0 <= ratio <= 1.0:
                bad = f"ratio outside [0, 1]: {d.schema.attributes[i].name} = {ratio:g}"
                break
            values[i] = ratio
        if bad:
            removed.append((r, bad))
            continue
        kept.append(replace(r, values=tuple(values)))

    ratios = frozenset(count_attrs)
    schema = _observed_schema(d.schema, kept, fixed_unit=ratios)
    if removed:
        logger.info("filtered %d of %d records", len(removed), len(d.records))
    return Dataset(
        schema,
        tuple(kept),
        FILTERED,
        removed=d.removed + tuple(removed),
        ratio_attributes=ratios,
        dropped=d.dropped,
    )


def partition_by(d: Dataset, attr: str) -> dict[str, Dataset]:
    """Split on a categorical attribute, one subset per observed value.

    Subsets are keyed in sorted value order. Attributes that are constant
    inside a subset (always including ``attr``) are dropped from its schema
    and listed in ``Dataset.dropped``.
    """
    if attr not in d.schema:
        raise SchemaError(f"partition attribute {attr!r} not in schema")
    if d.schema[attr].is_numeric:
        raise SchemaError(f"partition attribute {attr!r} is not categorical")
    i = d.schema.index(attr)
    groups = defaultdict(list)
    for r in d.records:
        if r.values[i] is None:
            raise InputError(f"record {r.id!r}: missing partition value {attr!r}")
        groups[r.values[i]].append(r)

    subsets = {}
    for value in sorted(groups):
        members = groups[value]
        schema = _observed_schema(d.schema, members, fixed_unit=d.ratio_attributes)
        keep = [j for j, a in enumerate(schema) if not a.is_constant]
        dropped = tuple(a.name for a in schema if a.is_constant)
        sub_schema = AttributeSchema(tuple(schema.attributes[j] for j in keep))
        sub_records = tuple(
            replace(r, values=tuple(r.values[j] for j in keep)) for r in members
        )
        subsets[value] = Dataset(
            sub_schema,
            sub_records,
            d.stage,
            ratio_attributes=frozenset(n for n in d.ratio_attributes if n in sub_schema),
            dropped=d.dropped + dropped,
        )
    return subsets


@dataclass(frozen=True)
class EncodedMatrix:
    """One-hot dummies for every categorical attribute.

    ``groups`` maps each source attribute to its ``(start, stop)`` column slice
    and category tuple, so per-attribute Dice distances stay computable.
    """

    data: np.ndarray
    columns: tuple[str, ...]
    groups: tuple[tuple[str, int, int, tuple[str, ...]], ...]

    def group(self, attr: str) -> np.ndarray:
        for name, start, stop, _ in self.groups:
            if name == attr:
                return self.data[:, start:stop]
        raise SchemaError(f"attribute {attr!r} not encoded")

    def decode(self, row: int) -> dict[str, str | None]:
        out = {}
        for name, start, stop, cats in self.groups:
            hot = np.flatnonzero(self.data[row, start:stop])
            out[name] = cats[hot[0]] if len(hot) == 1 else None
        return out


def encode_categorical(d: Dataset) -> EncodedMatrix:
    """One-hot encode categorical attributes; columns are named ``<attr>_<value>``."""
    if d.stage == RAW:
        raise InputError("encode_categorical needs a normalized/filtered dataset")
    groups, columns = [], []
    start = 0
    for a in d.schema.categorical():
        cats = tuple(a.categories or ())
        groups.append((a.name, start, start + len(cats), cats))
        columns.extend(f"{a.name}_{c}" for c in cats)
        start += len(cats)
    data = np.zeros((len(d), start), dtype=np.uint8)
    for name, lo, _, cats in groups:
        pos = {c: k for k, c in enumerate(cats)}
        j = d.schema.index(name)
        for row, r in enumerate(d.records):
            data[row, lo + pos[r.values[j]]] = 1
    data.setflags(write=False)
    return EncodedMatrix(data, tuple(columns), tuple(groups))
