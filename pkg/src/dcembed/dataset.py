"""Swissmetro-schema choice data: ingestion, filtering, derivation, splits.

The loader accepts any tab- or comma-separated table with a header row.
Filtering and feature derivation expect the Swissmetro survey schema
(three alternatives: train=0, swissmetro=1, car=2) but the downstream
modules only see the generic :class:`ChoiceDataset` container.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .encoders import CategoryMap


class DataError(ValueError):
    """Raised for unusable input data."""


class SchemaError(DataError):
    """Raised when a table does not carry the expected columns or cells."""


ALTERNATIVES = ("Train", "SM", "Car")

# Columns required by filter_and_derive. Aliases cover the published survey
# file, whose header spells ORIGIN and SM_SEATS.
REQUIRED_COLUMNS = (
    "CHOICE", "TRAIN_TT", "SM_TT", "CAR_TT", "TRAIN_CO", "SM_CO", "CAR_CO",
    "TRAIN_HE", "SM_HE", "GA", "SEATS", "SURVEY", "FIRST", "LUGGAGE",
    "ORIG", "DEST", "TICKET", "WHO", "AGE", "INCOME", "PURPOSE",
    "TRAIN_AV", "SM_AV", "CAR_AV",
)
COLUMN_ALIASES = {"ORIG": ("ORIG", "ORIGIN"), "SEATS": ("SEATS", "SM_SEATS")}

TICKET_LABELS = {
    0: "none",
    1: "2 way w 1/2 price",
    2: "1 way w 1/2 price",
    3: "2 way normal price",
    4: "1 way normal price",
    5: "half day",
    6: "annual ticket",
    7: "annual ticket junior or senior",
    8: "free travel after 7pm",
    9: "group ticket",
    10: "other",
}
WHO_LABELS = {0: "unknown", 1: "self", 2: "employer", 3: "half-half"}
AGE_LABELS = {
    1: "age<=24",
    2: "24<age<=39",
    3: "39<age<=54",
    4: "54<age<=65",
    5: "65<age",
    6: "not known",
}
# Income class 0 ("0 or 1: under 50" in the survey codebook) merges into 1.
INCOME_LABELS = {0: "under 50", 1: "under 50", 2: "50 to 100", 3: "over 100", 4: "unknown"}

ENCODING_VARIABLES = ("OD", "TICKET", "WHO", "AGE", "INCOME")

# Published per-variable encoding dimensions used by the reference experiment.
DEFAULT_ENCODING_K = {"OD": 3, "TICKET": 5, "WHO": 1, "AGE": 3, "INCOME": 3}

# name -> human-readable definition; derivation itself lives in filter_and_derive
FEATURE_DEFS = {
    "TRAIN_TT_HR": "TRAIN_TT / 60 (hours)",
    "SM_TT_HR": "SM_TT / 60 (hours)",
    "CAR_TT_HR": "CAR_TT / 60 (hours)",
    "TRAIN_HE_HR": "TRAIN_HE / 60 (hours)",
    "SM_HE_HR": "SM_HE / 60 (hours)",
    "TRAIN_CO_SC": "TRAIN_CO * (GA == 0) / 100",
    "SM_CO_SC": "SM_CO * (GA == 0) / 100",
    "CAR_CO_SC": "CAR_CO / 100",
    "SEATS": "airline seat configuration indicator",
    "SURVEY_TRAIN": "surveyed on a train (SURVEY == 0)",
    "FIRST_NO": "first class == False (FIRST == 0)",
    "LUGGAGE_1": "LUGGAGE == 1",
    "LUGGAGE_GT1": "LUGGAGE > 1",
}

BASE_NUMERIC_FEATURES = tuple(FEATURE_DEFS)

# Default row filters, applied in order. The survey documentation only says
# rows with unavailable variables were discarded; the exact rule set is not
# recoverable, so it is configurable and the default documented here.
DEFAULT_FILTERS = ("choice_missing", "chosen_unavailable", "age_unknown", "purpose_unknown")


@dataclass
class RawTable:
    """Parsed numeric table; unparseable cells are NaN and recorded."""

    columns: list[str]
    values: np.ndarray
    parse_errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise SchemaError(f"column {name!r} not in table") from None


def load_raw(path: str | Path, strict: bool = False) -> RawTable:
    """Parse a tab- or comma-separated numeric table with a header row.

    Cell parse failures become NaN and are recorded as (row, column) pairs
    on the returned table; with ``strict=True`` the first failure raises.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open(newline="") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise SchemaError(f"malformed header in {path}: empty or blank first line")
        sep = "\t" if "\t" in header_line else ","
        columns = [c.strip() for c in header_line.rstrip("\r\n").split(sep)]
        if any(not c for c in columns):
            raise SchemaError(f"malformed header in {path}: blank column name")
        if len(set(columns)) != len(columns):
            raise SchemaError(f"malformed header in {path}: duplicate column names")
        rows = []
        errors: list[tuple[int, str]] = []
        for i, rec in enumerate(csv.reader(fh, delimiter=sep)):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue  # trailing blank line
            if len(rec) != len(columns):
                raise DataError(
                    f"row {i} of {path} has {len(rec)} cells, expected {len(columns)}"
                )
            parsed = np.empty(len(columns))
            for j, cell in enumerate(rec):
                try:
                    parsed[j] = float(cell)
                except ValueError:
                    if strict:
                        raise DataError(
                            f"non-numeric cell {cell!r} at row {i}, column {columns[j]!r}"
                        ) from None
                    parsed[j] = np.nan
                    errors.append((i, columns[j]))
            rows.append(parsed)
    values = np.array(rows) if rows else np.empty((0, len(columns)))
    return RawTable(columns, values, errors)


@dataclass
class ChoiceDataset:
    """Observations with derived numeric features and categorical labels.

    Category maps are frozen on the full filtered dataset, so every split
    shares one label->index mapping per variable.
    """

    features: dict[str, np.ndarray]
    cats: dict[str, np.ndarray]
    choice: np.ndarray
    avail: np.ndarray
    obs_id: np.ndarray
    resp_id: np.ndarray
    category_maps: dict[str, CategoryMap]
    filter_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.choice)
        for name, col in self.features.items():
            if len(col) != n:
                raise DataError(f"feature {name!r} has {len(col)} rows, expected {n}")
            if not np.isfinite(col).all():
                raise DataError(f"non-finite values in feature {name!r}")
        if self.avail.shape != (n, len(ALTERNATIVES)):
            raise DataError("availability must be N x 3")
        if not self.avail[np.arange(n), self.choice].all():
            raise DataError("some chosen alternatives are unavailable")

    @property
    def n(self) -> int:
        return len(self.choice)

    def cat_indices(self, variable: str) -> np.ndarray:
        return self.category_maps[variable].indices(self.cats[variable])

    def feature_matrix(self, names: Sequence[str]) -> np.ndarray:
        missing = [nm for nm in names if nm not in self.features]
        if missing:
            raise SchemaError(f"unknown features: {missing}")
        if not names:
            return np.zeros((self.n, 0))
        return np.column_stack([self.features[nm] for nm in names])

    def subset(self, indices: np.ndarray) -> "ChoiceDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return ChoiceDataset(
            features={k: v[idx] for k, v in self.features.items()},
            cats={k: v[idx] for k, v in self.cats.items()},
            choice=self.choice[idx],
            avail=self.avail[idx],
            obs_id=self.obs_id[idx],
            resp_id=self.resp_id[idx],
            category_maps=self.category_maps,
            filter_counts=self.filter_counts,
        )

    def save(self, directory: str | Path, splits: Mapping[str, np.ndarray] | None = None) -> None:
        """Write the canonical columnar CSV plus JSON sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({"OBS_ID": self.obs_id, "RESP_ID": self.resp_id})
        frame["CHOICE"] = self.choice
        for c, alt in enumerate(ALTERNATIVES):
            frame[f"AV_{alt.upper()}"] = self.avail[:, c].astype(int)
        for name in self.features:
            frame[name] = self.features[name]
        for name in self.cats:
            frame[f"CAT_{name}"] = self.cats[name]
        # repr + round_trip parsing keep float columns bit-exact across save/load
        frame.to_csv(directory / "dataset.csv", index=False, float_format=lambda v: repr(float(v)))
        sidecar = {
            "category_maps": {k: list(m.categories) for k, m in self.category_maps.items()},
            "features": {k: FEATURE_DEFS.get(k, "") for k in self.features},
            "filter_counts": self.filter_counts,
            "splits": {k: [int(i) for i in v] for k, v in splits.items()} if splits else None,
        }
        (directory / "meta.json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, directory: str | Path) -> tuple["ChoiceDataset", dict[str, np.ndarray] | None]:
        directory = Path(directory)
        frame = pd.read_csv(directory / "dataset.csv", float_precision="round_trip")
        meta = json.loads((directory / "meta.json").read_text())
        features = {k: frame[k].to_numpy(dtype=np.float64) for k in meta["features"]}
        cats = {
            k: frame[f"CAT_{k}"].astype(str).to_numpy()
            for k in meta["category_maps"]
        }
        avail = np.column_stack(
            [frame[f"AV_{alt.upper()}"].to_numpy(dtype=bool) for alt in ALTERNATIVES]
        )
        maps = {k: CategoryMap(k, tuple(v)) for k, v in meta["category_maps"].items()}
        data = cls(
            features=features,
            cats=cats,
            choice=frame["CHOICE"].to_numpy(dtype=np.int64),
            avail=avail,
            obs_id=frame["OBS_ID"].to_numpy(dtype=np.int64),
            resp_id=frame["RESP_ID"].to_numpy(dtype=np.int64),
            category_maps=maps,
            filter_counts=meta.get("filter_counts", {}),
        )
        splits = meta.get("splits")
        if splits is not None:
            splits = {k: np.array(v, dtype=np.int64) for k, v in splits.items()}
        return data, splits


def _resolve_column(table: RawTable, name: str) -> np.ndarray:
    for alias in COLUMN_ALIASES.get(name, (name,)):
        if alias in table.columns:
            return table.column(alias)
    raise SchemaError(f"schema column {name!r} missing (aliases: {COLUMN_ALIASES.get(name, (name,))})")


def filter_and_derive(
    raw: RawTable, filters: Sequence[str] = DEFAULT_FILTERS
) -> ChoiceDataset:
    """Apply the documented row filters and derive model features.

    Times convert from minutes to hours, costs scale by 1/100, train and
    swissmetro costs zero out for annual-pass holders, and the directed
    OD label is "ORIG_DEST".
    """
    cols = {name: _resolve_column(raw, name) for name in REQUIRED_COLUMNS}
    bad = [
        (i, c)
        for (i, c) in raw.parse_errors
        if any(c in COLUMN_ALIASES.get(name, (name,)) for name in REQUIRED_COLUMNS)
    ]
    if bad:
        raise SchemaError(f"unparseable cells in required columns: {bad[:5]}")

    avail = np.column_stack(
        [cols["TRAIN_AV"] != 0, cols["SM_AV"] != 0, cols["CAR_AV"] != 0]
    )
    choice_raw = cols["CHOICE"].astype(np.int64)

    keep = np.ones(raw.n_rows, dtype=bool)
    counts: dict[str, int] = {}
    for rule in filters:
        if rule == "choice_missing":
            drop = choice_raw == 0
        elif rule == "chosen_unavailable":
            drop = np.zeros(raw.n_rows, dtype=bool)
            valid = choice_raw >= 1
            drop[valid] = ~avail[np.arange(raw.n_rows)[valid], choice_raw[valid] - 1]
        elif rule == "age_unknown":
            drop = cols["AGE"] == 6
        elif rule == "purpose_unknown":
            drop = cols["PURPOSE"] == 0
        else:
            raise DataError(f"unknown filter rule {rule!r}")
        counts[rule] = int((drop & keep).sum())
        keep &= ~drop
    if not keep.any():
        raise DataError("all rows removed by filters")
    counts["kept"] = int(keep.sum())

    c = {name: col[keep] for name, col in cols.items()}
    ga_off = (c["GA"] == 0).astype(np.float64)
    features = {
        "TRAIN_TT_HR": c["TRAIN_TT"] / 60.0,
        "SM_TT_HR": c["SM_TT"] / 60.0,
        "CAR_TT_HR": c["CAR_TT"] / 60.0,
        "TRAIN_HE_HR": c["TRAIN_HE"] / 60.0,
        "SM_HE_HR": c["SM_HE"] / 60.0,
        "TRAIN_CO_SC": c["TRAIN_CO"] * ga_off / 100.0,
        "SM_CO_SC": c["SM_CO"] * ga_off / 100.0,
        "CAR_CO_SC": c["CAR_CO"] / 100.0,
        "SEATS": (c["SEATS"] != 0).astype(np.float64),
        "SURVEY_TRAIN": (c["SURVEY"] == 0).astype(np.float64),
        "FIRST_NO": (c["FIRST"] == 0).astype(np.float64),
        "LUGGAGE_1": (c["LUGGAGE"] == 1).astype(np.float64),
        "LUGGAGE_GT1": (c["LUGGAGE"] > 1).astype(np.float64),
    }

    def labels(codes: np.ndarray, table: Mapping[int, str]) -> np.ndarray:
        return np.array([table.get(int(v), str(int(v))) for v in codes], dtype=object)

    cats = {
        "OD": np.array(
            [f"{int(o)}_{int(d)}" for o, d in zip(c["ORIG"], c["DEST"])], dtype=object
        ),
        "TICKET": labels(c["TICKET"], TICKET_LABELS),
        "WHO": labels(c["WHO"], WHO_LABELS),
        "AGE": labels(c["AGE"], AGE_LABELS),
        "INCOME": labels(c["INCOME"], INCOME_LABELS),
    }
    maps = {name: CategoryMap.from_values(name, vals) for name, vals in cats.items()}

    resp = (
        _resolve_column(raw, "ID")[keep].astype(np.int64)
        if "ID" in raw.columns
        else np.arange(raw.n_rows, dtype=np.int64)[keep]
    )
    return ChoiceDataset(
        features=features,
        cats=cats,
        choice=choice_raw[keep] - 1,
        avail=avail[keep],
        obs_id=np.arange(raw.n_rows, dtype=np.int64)[keep],
        resp_id=resp,
        category_maps=maps,
        filter_counts=counts,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Train/dev/test ratios plus the shuffle seed."""

    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(not 0.0 < r < 1.0 for r in self.ratios):
            raise DataError(f"each split ratio must be in (0,1): {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise DataError(f"split ratios must sum to 1: {self.ratios}")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint, exhaustive index partition; deterministic in the seed."""
    if n <= 0:
        raise DataError("cannot split an empty dataset")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(spec.ratios[0] * n))
    n_dev = int(round(spec.ratios[1] * n))
    n_train = min(n_train, n)
    n_dev = min(n_dev, n - n_train)
    parts = (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_dev]),
        np.sort(perm[n_train + n_dev :]),
    )
    return parts


def split(
    data: ChoiceDataset, spec: SplitSpec
) -> tuple[ChoiceDataset, ChoiceDataset, ChoiceDataset]:
    train_idx, dev_idx, test_idx = split_indices(data.n, spec)
    return data.subset(train_idx), data.subset(dev_idx), data.subset(test_idx)


@dataclass(frozen=True)
class EncodingEntry:
    variable: str
    k: int
    d: int

    def __post_init__(self):
        # K == D is legal for the network itself (used by capacity checks);
        # experiment configs built via from_data still require K < D.
        if not 1 <= self.k <= self.d:
            raise DataError(f"need 1 <= K <= D for {self.variable!r}: K={self.k}, D={self.d}")


@dataclass(frozen=True)
class EncodingSetSpec:
    """Ordered list of variables to encode with their target dimensions."""

    entries: tuple[EncodingEntry, ...]

    @classmethod
    def from_data(cls, data: ChoiceDataset, k_table: Mapping[str, int]) -> "EncodingSetSpec":
        entries = []
        for name, k in k_table.items():
            if name not in data.category_maps:
                raise SchemaError(f"no categorical variable {name!r} in dataset")
            d = data.category_maps[name].d
            if int(k) >= d:
                raise DataError(f"encoding set needs K < D for {name!r}: K={k}, D={d}")
            entries.append(EncodingEntry(name, int(k), d))
        return cls(tuple(entries))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.variable for e in self.entries)

    def k_of(self, variable: str) -> int:
        for e in self.entries:
            if e.variable == variable:
                return e.k
        raise KeyError(variable)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()
