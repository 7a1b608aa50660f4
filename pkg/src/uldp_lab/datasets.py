"""Categorical survey encoding and a bundled synthetic dataset.

A dataset schema lists categorical columns and a sensitivity predicate
(conjunctions/disjunctions of column-equals-value atoms).  Records are
encoded by the cross product of the column categories; combinations that
never occur are dropped, and the remaining cells are relabeled so that the
sensitive ones come first: sensitive cells become symbols 1..v and the rest
v+1..w, matching the library convention.

The bundled generator produces a survey-like CSV over six demographic-style
columns with category counts (4, 2, 2, 3, 2, 3) -- 288 raw cells, 11 of
which never occur -- so that the stringent criterion yields (w, v) =
(277, 35) and the permissive criterion (277, 253).  The cells are synthetic;
only the shape of the pipeline is meaningful.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Distribution


class EncodingError(ValueError):
    """Rows whose values are missing from the schema's category lists."""

    def __init__(self, errors):
        self.errors = list(errors)
        head = "; ".join(
            f"row {r}: column {c!r} has unknown value {val!r}" for r, c, val in self.errors[:5]
        )
        more = "" if len(self.errors) <= 5 else f" (+{len(self.errors) - 5} more)"
        super().__init__(f"{len(self.errors)} unencodable rows: {head}{more}")


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple  # of (name, tuple of categories)
    sensitive: dict  # predicate tree

    @property
    def names(self):
        return [name for name, _ in self.columns]

    def raw_size(self) -> int:
        out = 1
        for _, cats in self.columns:
            out *= len(cats)
        return out


def load_schema(text: str) -> DatasetSchema:
    obj = json.loads(text)
    columns = tuple((c["name"], tuple(c["categories"])) for c in obj["columns"])
    for name, cats in columns:
        if len(cats) < 1:
            raise ValueError(f"column {name!r} has no categories")
    return DatasetSchema(columns=columns, sensitive=obj["sensitive"])


def schema_to_json(schema: DatasetSchema) -> str:
    return json.dumps(
        {
            "columns": [{"name": n, "categories": list(c)} for n, c in schema.columns],
            "sensitive": schema.sensitive,
        },
        indent=2,
    )


def eval_predicate(node: dict, values: dict) -> bool:
    """Predicate tree: {"col", "equals"} atoms under "all"/"any" nodes."""
    if "all" in node:
        return all(eval_predicate(ch, values) for ch in node["all"])
    if "any" in node:
        return any(eval_predicate(ch, values) for ch in node["any"])
    if "col" in node and "equals" in node:
        return values[node["col"]] == node["equals"]
    raise ValueError(f"malformed predicate node: {node!r}")


@dataclass
class EncodeResult:
    w: int
    v: int
    n: int
    counts: np.ndarray  # per symbol, length w
    cells: list = field(default_factory=list)  # per symbol: dict of column values
    sensitive_flags: list = field(default_factory=list)

    def distribution(self) -> Distribution:
        return Distribution(self.counts / self.counts.sum())

    def mapping_json(self) -> str:
        return json.dumps(
            {
                "w": self.w,
                "v": self.v,
                "n": self.n,
                "cells": [
                    {
                        "symbol": i + 1,
                        "sensitive": bool(self.sensitive_flags[i]),
                        "count": int(self.counts[i]),
                        "values": self.cells[i],
                    }
                    for i in range(self.w)
                ],
            },
            indent=2,
        )


def _cell_values(schema: DatasetSchema, code: int) -> dict:
    values = {}
    for name, cats in reversed(schema.columns):
        values[name] = cats[code % len(cats)]
        code //= len(cats)
    return {name: values[name] for name, _ in schema.columns}


def encode_dataset(csv_text: str, schema: DatasetSchema) -> EncodeResult:
    """Cross-product-encode a CSV against the schema.

    Unused cells are dropped; sensitive cells are relabeled to 1..v (sorted
    by raw code within each group).  Raises EncodingError with row-level
    detail for unknown category values, and ValueError when the predicate
    marks everything or nothing sensitive.
    """
    reader = csv.DictReader(io.StringIO(csv_text))
    for name in schema.names:
        if name not in (reader.fieldnames or []):
            raise ValueError(f"dataset is missing schema column {name!r}")
    index = {name: {c: i for i, c in enumerate(cats)} for name, cats in schema.columns}
    raw_counts: dict[int, int] = {}
    errors = []
    n = 0
    for rownum, row in enumerate(reader, start=1):
        code = 0
        ok = True
        for name, cats in schema.columns:
            val = row[name]
            if val not in index[name]:
                errors.append((rownum, name, val))
                ok = False
                break
            code = code * len(cats) + index[name][val]
        if ok:
            raw_counts[code] = raw_counts.get(code, 0) + 1
            n += 1
    if errors:
        raise EncodingError(errors)
    if not raw_counts:
        raise ValueError("dataset has no encodable rows")
    observed = sorted(raw_counts)
    sens = [code for code in observed if eval_predicate(schema.sensitive, _cell_values(schema, code))]
    nons = [code for code in observed if code not in set(sens)]
    v, w = len(sens), len(observed)
    if v == 0 or v == w:
        raise ValueError(
            f"sensitivity predicate marks {v} of {w} cells sensitive; need 1 <= v < w"
        )
    ordered = sens + nons
    counts = np.array([raw_counts[code] for code in ordered], dtype=np.int64)
    return EncodeResult(
        w=w,
        v=v,
        n=n,
        counts=counts,
        cells=[_cell_values(schema, code) for code in ordered],
        sensitive_flags=[True] * v + [False] * (w - v),
    )


# ---------------------------------------------------------------------------
# Bundled synthetic survey


_SURVEY_COLUMNS = (
    ("age", ("18_34", "35_49", "50_64", "65_plus")),
    ("education", ("hs_or_less", "college")),
    ("marital", ("married_or_single", "widowed_or_divorced")),
    ("disability", ("none", "sensory", "ambulatory")),
    ("employment", ("in_labor_force", "not_in_labor_force")),
    ("income", ("below_poverty", "near_poverty", "above_poverty")),
)

_HARDSHIP_ANY = {
    "any": [
        {"col": "education", "equals": "hs_or_less"},
        {"col": "marital", "equals": "widowed_or_divorced"},
        {"col": "disability", "equals": "ambulatory"},
    ]
}

STRINGENT_PREDICATE = {
    "all": [
        _HARDSHIP_ANY,
        {"col": "employment", "equals": "not_in_labor_force"},
        {"col": "income", "equals": "below_poverty"},
    ]
}

PERMISSIVE_PREDICATE = {
    "any": _HARDSHIP_ANY["any"] + [{"col": "employment", "equals": "not_in_labor_force"}]
}


def survey_schema(criterion: str = "stringent") -> DatasetSchema:
    """Schema of the bundled survey with the chosen sensitivity criterion."""
    if criterion == "stringent":
        pred = STRINGENT_PREDICATE
    elif criterion == "permissive":
        pred = PERMISSIVE_PREDICATE
    else:
        raise ValueError(f"criterion must be 'stringent' or 'permissive', got {criterion!r}")
    return DatasetSchema(columns=_SURVEY_COLUMNS, sensitive=pred)


def _survey_cells():
    """Nonempty cell codes for the bundled survey: 288 raw cells minus a
    fixed choice of 11 never-occurring ones (5 inside the stringent set,
    6 in the permissive-but-not-stringent set)."""
    schema = survey_schema("stringent")
    total = schema.raw_size()
    stringent = [
        c for c in range(total) if eval_predicate(STRINGENT_PREDICATE, _cell_values(schema, c))
    ]
    permissive_only = [
        c
        for c in range(total)
        if eval_predicate(PERMISSIVE_PREDICATE, _cell_values(schema, c))
        and not eval_predicate(STRINGENT_PREDICATE, _cell_values(schema, c))
    ]
    empty = set(stringent[3::8][:5]) | set(permissive_only[10::37][:6])
    assert len(empty) == 11
    return [c for c in range(total) if c not in empty]


def make_synthetic_survey(n: int = 50000, seed: int = 0) -> str:
    """CSV text for n survey rows.

    The first row per nonempty cell is emitted deterministically so every
    cell is observed at any n >= 277; the remainder is multinomial with a
    mildly skewed cell law.  Byte-identical output for fixed (n, seed).
    """
    cells = _survey_cells()
    if n < len(cells):
        raise ValueError(f"need n >= {len(cells)} so every cell is observed")
    schema = survey_schema("stringent")
    ranks = np.arange(len(cells), dtype=float)
    probs = 1.0 / (ranks + 30.0)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    extra = rng.multinomial(n - len(cells), probs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema.names)
    for i, code in enumerate(cells):
        values = _cell_values(schema, code)
        row = [values[name] for name in schema.names]
        for _ in range(1 + int(extra[i])):
            writer.writerow(row)
    return buf.getvalue()
