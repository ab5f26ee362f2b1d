"""Category-to-vector encodings: dummy, PCA, and embedding lookups.

All three encoding kinds share one container (:class:`EncoderModel`) so the
downstream design-matrix assembly does not care where a matrix came from.
Rows of a variable's matrix are indexed by category (lexicographic order of
the labels), columns are the encoded dimensions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import ChoiceDataset


class EncodingError(ValueError):
    """Raised for invalid encoder construction or lookup requests."""


@dataclass(frozen=True)
class CategoryMap:
    """Bijection between a variable's category labels and [0, D)."""

    variable: str
    categories: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.categories)) != len(self.categories):
            raise EncodingError(f"duplicate categories for {self.variable!r}")
        if list(self.categories) != sorted(self.categories):
            raise EncodingError(f"categories of {self.variable!r} must be sorted")

    @classmethod
    def from_values(cls, variable: str, values: Iterable[str]) -> "CategoryMap":
        return cls(variable, tuple(sorted(set(str(v) for v in values))))

    @property
    def d(self) -> int:
        return len(self.categories)

    def index(self, label: str) -> int:
        try:
            return self.categories.index(label)
        except ValueError:
            raise EncodingError(f"unknown category {label!r} for {self.variable!r}") from None

    def indices(self, labels: Iterable[str]) -> np.ndarray:
        lut = {c: i for i, c in enumerate(self.categories)}
        return np.array([lut[str(v)] for v in labels], dtype=np.int64)

    def __contains__(self, label: str) -> bool:
        return label in self.categories


@dataclass
class VariableEncoding:
    """One variable's category->vector table (D rows, K columns)."""

    variable: str
    categories: tuple[str, ...]
    matrix: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.categories):
            raise EncodingError(
                f"matrix for {self.variable!r} must be D x K with D={len(self.categories)}"
            )
        if not np.isfinite(self.matrix).all():
            raise EncodingError(f"non-finite encoding matrix for {self.variable!r}")

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    def row(self, label: str) -> np.ndarray:
        try:
            return self.matrix[self.categories.index(label)]
        except ValueError:
            raise EncodingError(f"unknown category {label!r} for {self.variable!r}") from None

    def column_names(self, kind: str) -> list[str]:
        """Design-column names for this encoding (before the alt suffix)."""
        if kind == "dummy":
            return [f"{self.variable}_{c}" for c in self.metadata["columns"]]
        return [f"{self.variable}{i}" for i in range(self.k)]


@dataclass
class EncoderModel:
    """A set of per-variable encodings sharing one kind (dummy/pca/embedding)."""

    kind: str
    encodings: dict[str, VariableEncoding] = field(default_factory=dict)

    KINDS = ("dummy", "pca", "embedding")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise EncodingError(f"unknown encoder kind {self.kind!r}")

    def encoding(self, variable: str) -> VariableEncoding:
        try:
            return self.encodings[variable]
        except KeyError:
            raise EncodingError(f"no {self.kind} encoding fitted for {variable!r}") from None

    def merge(self, other: "EncoderModel") -> "EncoderModel":
        if other.kind != self.kind:
            raise EncodingError(f"cannot merge {other.kind} into {self.kind}")
        merged = dict(self.encodings)
        merged.update(other.encodings)
        return EncoderModel(self.kind, merged)

    def encode(self, data: "ChoiceDataset", variable: str) -> np.ndarray:
        return encode(self, data, variable)

    def to_json(self) -> str:
        records = []
        for name in sorted(self.encodings):
            enc = self.encodings[name]
            records.append(
                {
                    "variable": enc.variable,
                    "kind": self.kind,
                    "categories": list(enc.categories),
                    "matrix": [[float(x) for x in row] for row in enc.matrix],
                    "metadata": _jsonable(enc.metadata),
                }
            )
        return json.dumps({"kind": self.kind, "encodings": records}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EncoderModel":
        payload = json.loads(text)
        encodings = {}
        for rec in payload["encodings"]:
            encodings[rec["variable"]] = VariableEncoding(
                variable=rec["variable"],
                categories=tuple(rec["categories"]),
                matrix=np.array(rec["matrix"], dtype=np.float64),
                metadata=rec.get("metadata", {}),
            )
        return cls(payload["kind"], encodings)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "EncoderModel":
        return cls.from_json(Path(path).read_text())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def fit_dummy(cmap: CategoryMap, base: str) -> EncoderModel:
    """Dummy (one-hot) encoding: D-1 indicator columns, base row all zero."""
    if cmap.d < 2:
        raise EncodingError(f"{cmap.variable!r} has fewer than 2 categories")
    if base not in cmap:
        raise EncodingError(f"base category {base!r} not found for {cmap.variable!r}")
    columns = [c for c in cmap.categories if c != base]
    matrix = np.zeros((cmap.d, cmap.d - 1))
    for j, cat in enumerate(columns):
        matrix[cmap.index(cat), j] = 1.0
    enc = VariableEncoding(
        cmap.variable, cmap.categories, matrix, {"base": base, "columns": columns}
    )
    return EncoderModel("dummy", {cmap.variable: enc})


def fit_dummy_from_data(data: "ChoiceDataset", variable: str) -> EncoderModel:
    """Dummy encoding with the base set to the most frequent training category."""
    cmap = data.category_maps[variable]
    counts = np.bincount(data.cat_indices(variable), minlength=cmap.d)
    base = cmap.categories[int(np.argmax(counts))]
    return fit_dummy(cmap, base)


def _onehot_matrix(data: "ChoiceDataset", variable: str) -> np.ndarray:
    cmap = data.category_maps[variable]
    idx = data.cat_indices(variable)
    x = np.zeros((len(idx), cmap.d))
    x[np.arange(len(idx)), idx] = 1.0
    return x


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        lead = np.argmax(np.abs(out[:, j]))
        if out[lead, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _sorted_eig(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending, stable ties."""
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    return evals[order], _fix_signs(evecs[:, order])


def _pca_decomposition(data: "ChoiceDataset", variable: str):
    cmap = data.category_maps[variable]
    if cmap.d < 2:
        raise EncodingError(f"degenerate variable {variable!r}: single category")
    x = _onehot_matrix(data, variable)
    if x.shape[0] < 2:
        raise EncodingError(f"cannot fit PCA for {variable!r} on fewer than 2 rows")
    means = x.mean(axis=0)
    centered = x - means
    cov = centered.T @ centered / (x.shape[0] - 1)
    evals, evecs = _sorted_eig(cov)
    if evals[0] <= 1e-12:
        raise EncodingError(
            f"degenerate variable {variable!r}: zero covariance (single observed category)"
        )
    return cmap, means, np.clip(evals, 0.0, None), evecs


def fit_pca(data: "ChoiceDataset", variable: str, k: int) -> EncoderModel:
    """PCA encoding of a variable's centered one-hot matrix on a training split.

    Category d encodes as the projection of its centered one-hot row onto the
    K leading eigenvectors of the one-hot covariance.
    """
    cmap, means, evals, evecs = _pca_decomposition(data, variable)
    if not 1 <= k <= cmap.d:
        raise EncodingError(f"K={k} out of range [1, {cmap.d}] for {variable!r}")
    components = evecs[:, :k]
    matrix = (np.eye(cmap.d) - means) @ components
    enc = VariableEncoding(
        variable,
        cmap.categories,
        matrix,
        {
            "k": k,
            "eigenvalues": evals.tolist(),
            "means": means.tolist(),
            "components": components.tolist(),
        },
    )
    return EncoderModel("pca", {variable: enc})


def k_for_variance_share(eigenvalues: np.ndarray, threshold: float) -> int:
    """Smallest K whose cumulative eigenvalue share reaches ``threshold``.

    A threshold of exactly 1.0 returns the rank (eigenvalues above noise).
    """
    if not 0.0 < threshold <= 1.0:
        raise EncodingError(f"threshold must be in (0, 1], got {threshold}")
    evals = np.asarray(eigenvalues, dtype=np.float64)
    if threshold == 1.0:
        return int(np.sum(evals > evals[0] * 1e-12))
    cumulative = np.cumsum(evals / evals.sum())
    return int(np.searchsorted(cumulative, threshold - 1e-12) + 1)


def select_k_by_variance(data: "ChoiceDataset", variable: str, threshold: float) -> int:
    _, _, evals, _ = _pca_decomposition(data, variable)
    return k_for_variance_share(evals, threshold)


def encode(model: EncoderModel, data: "ChoiceDataset", variable: str) -> np.ndarray:
    """Row-per-observation encoding matrix (N x K) by category lookup.

    Categories absent from the fitted model map to the zero vector with a
    warning; this cannot happen with category maps frozen on the full dataset
    but guards lookups against external data.
    """
    enc = model.encoding(variable)
    lut = {c: i for i, c in enumerate(enc.categories)}
    values = data.cats[variable]
    out = np.zeros((len(values), enc.k))
    unseen = set()
    for n, v in enumerate(values):
        i = lut.get(str(v))
        if i is None:
            unseen.add(str(v))
        else:
            out[n] = enc.matrix[i]
    if unseen:
        warnings.warn(
            f"unseen categories for {variable!r} encoded as zero: {sorted(unseen)}",
            stacklevel=2,
        )
    return out
