"""Classical (Torgerson) multidimensional scaling for embedding plots.

Double-centers the squared-distance matrix, takes the leading eigenpairs,
and scales eigenvectors by sqrt(eigenvalue). Deterministic: eigenvector
signs follow the same largest-entry-positive convention as the encoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .encoders import _sorted_eig


class MdsError(ValueError):
    """Raised for inputs classical MDS cannot embed."""


@dataclass
class MdsLayout:
    labels: tuple[str, ...]
    coordinates: np.ndarray     # (D, dim)
    stress: float
    eigenvalues: np.ndarray     # (dim,)
    degenerate: bool = False


def pairwise_distances(matrix: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows: symmetric, zero diagonal."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.isfinite(matrix).all():
        raise MdsError("non-finite entries in input matrix")
    return cdist(matrix, matrix)


def classical_mds(
    distances: np.ndarray, dim: int = 2, labels: tuple[str, ...] | None = None
) -> MdsLayout:
    """Coordinates in ``dim`` dimensions preserving the given distances."""
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise MdsError("distance matrix must be square")
    if n < 3:
        raise MdsError("need at least 3 points")
    if np.abs(d - d.T).max() > 1e-9 or np.abs(np.diag(d)).max() > 1e-9:
        raise MdsError("distances must be symmetric with a zero diagonal")

    center = np.eye(n) - np.ones((n, n)) / n
    gram = -0.5 * center @ (d**2) @ center
    evals, evecs = _sorted_eig((gram + gram.T) / 2.0)

    positive = evals[:dim] > n * np.finfo(float).eps * max(abs(evals[0]), 1.0)
    degenerate = int(positive.sum()) < dim
    scale = np.sqrt(np.clip(evals[:dim], 0.0, None))
    coords = evecs[:, :dim] * scale
    coords = coords - coords.mean(axis=0)

    fitted = cdist(coords, coords)
    denom = float(np.sum(np.triu(d, 1) ** 2))
    if denom > 0.0:
        stress = float(np.sqrt(np.sum(np.triu(d - fitted, 1) ** 2) / denom))
    else:
        stress = 0.0

    return MdsLayout(
        labels=tuple(labels) if labels is not None else tuple(str(i) for i in range(n)),
        coordinates=coords,
        stress=stress,
        eigenvalues=evals[:dim].copy(),
        degenerate=degenerate,
    )


def layout_to_csv(layout: MdsLayout) -> str:
    lines = ["label,x,y"]
    for label, row in zip(layout.labels, layout.coordinates):
        y = row[1] if layout.coordinates.shape[1] > 1 else 0.0
        lines.append(f"\"{label}\",{row[0]:.8f},{y:.8f}")
    return "\n".join(lines) + "\n"


def layout_to_svg(layout: MdsLayout, width: int = 640, height: int = 480) -> str:
    """Self-contained scatter plot with text labels."""
    coords = layout.coordinates
    x, y = coords[:, 0], coords[:, 1] if coords.shape[1] > 1 else np.zeros(len(coords))
    pad = 50.0
    span_x = max(x.max() - x.min(), 1e-12)
    span_y = max(y.max() - y.min(), 1e-12)
    px = pad + (x - x.min()) / span_x * (width - 2 * pad)
    py = height - pad - (y - y.min()) / span_y * (height - 2 * pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for label, cx, cy in zip(layout.labels, px, py):
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="#1f77b4"/>')
        parts.append(
            f'<text x="{cx + 5:.2f}" y="{cy - 5:.2f}" font-size="10" '
            f'font-family="sans-serif">{_xml_escape(label)}</text>'
        )
    parts.append(
        f'<text x="{pad:.0f}" y="20" font-size="11" font-family="sans-serif">'
        f'stress={layout.stress:.2e}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_layout(layout: MdsLayout, csv_path: str | Path, svg_path: str | Path | None = None) -> None:
    Path(csv_path).write_text(layout_to_csv(layout))
    if svg_path is not None:
        Path(svg_path).write_text(layout_to_svg(layout))


def _xml_escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )
