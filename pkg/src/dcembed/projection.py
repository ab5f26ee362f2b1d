"""Back-projection of encoded-space coefficients into per-category space.

A category d with encoding row w_d contributes w_d . beta to a utility, so
its dummy-space coefficient is that inner product and its variance is the
quadratic form w_d' Cov w_d. With ``independent=True`` the cross terms are
dropped, i.e. the sum/scale rules for independent normals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.stats import norm

from .encoders import EncoderModel, VariableEncoding
from .mnl import EstimationResult


class ProjectionError(ValueError):
    """Raised for inconsistent coefficient/encoder inputs."""


@dataclass(frozen=True)
class ProjectedCoefficient:
    variable: str
    category: str
    alternative: int
    alt_name: str
    coefficient: float
    std_err: float
    z: float
    p: float
    significant: bool


def project(
    encoding: VariableEncoding,
    beta_sub: np.ndarray,
    cov_sub: np.ndarray,
    alternative: int = 0,
    alt_name: str = "",
    dims: Iterable[int] | None = None,
    independent: bool = False,
    alpha: float = 0.05,
) -> list[ProjectedCoefficient]:
    """Per-category coefficients with propagated standard errors.

    ``dims`` selects which encoder dimensions the coefficients cover
    (defaults to all K); coefficients for unlisted dimensions are treated
    as fixed zeros, which happens when design columns were dropped.
    """
    beta_sub = np.asarray(beta_sub, dtype=np.float64)
    cov_sub = np.asarray(cov_sub, dtype=np.float64)
    dims = tuple(dims) if dims is not None else tuple(range(encoding.k))
    if beta_sub.shape != (len(dims),):
        raise ProjectionError(
            f"expected {len(dims)} coefficients for {encoding.variable!r}, got {beta_sub.shape}"
        )
    if cov_sub.shape != (len(dims), len(dims)):
        raise ProjectionError(f"covariance block must be {len(dims)}x{len(dims)}")
    if np.abs(cov_sub - cov_sub.T).max(initial=0.0) > 1e-8:
        raise ProjectionError("covariance block is not symmetric")
    weights = encoding.matrix[:, dims]
    if independent:
        variances = weights**2 @ np.diag(cov_sub)
    else:
        variances = np.einsum("dk,kl,dl->d", weights, cov_sub, weights)
    if (variances < -1e-12).any():
        raise ProjectionError(f"negative propagated variance: min={variances.min():.3e}")
    variances = np.clip(variances, 0.0, None)
    coefs = weights @ beta_sub
    out = []
    for d, category in enumerate(encoding.categories):
        se = float(np.sqrt(variances[d]))
        coef = float(coefs[d])
        if se > 0.0:
            z = coef / se
            p = float(2.0 * norm.sf(abs(z)))
        else:
            z, p = 0.0, 1.0
        out.append(
            ProjectedCoefficient(
                variable=encoding.variable,
                category=category,
                alternative=alternative,
                alt_name=alt_name,
                coefficient=coef,
                std_err=se,
                z=float(z),
                p=p,
                significant=p < alpha,
            )
        )
    return out


@dataclass
class ProjectionTable:
    rows: list[ProjectedCoefficient]

    @property
    def n_significant(self) -> int:
        return sum(r.significant for r in self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def project_all(
    result: EstimationResult,
    encoders: EncoderModel,
    independent: bool = False,
    alpha: float = 0.05,
) -> ProjectionTable:
    """Project every encoded coefficient block of an estimated model."""
    if result.cov is None:
        raise ProjectionError("estimation result has no covariance; cannot propagate errors")
    if not result.blocks:
        raise ProjectionError("estimation result has no labeled coefficient blocks")
    rows: list[ProjectedCoefficient] = []
    for block in result.blocks:
        enc = encoders.encoding(block.variable)
        cols = np.array(block.cols, dtype=np.int64)
        rows.extend(
            project(
                enc,
                result.beta[cols],
                result.cov[np.ix_(cols, cols)],
                alternative=block.alternative,
                alt_name=result.alt_names[block.alternative],
                dims=block.dims,
                independent=independent,
                alpha=alpha,
            )
        )
    return ProjectionTable(rows)


def filter_report(
    table: ProjectionTable, min_abs: float = 0.05, alpha: float = 0.05
) -> ProjectionTable:
    """Rows that are both statistically significant and non-negligible."""
    kept = [r for r in table.rows if abs(r.coefficient) > min_abs and r.p < alpha]
    kept.sort(key=lambda r: (r.variable, r.category))
    return ProjectionTable(kept)


def format_projection(table: ProjectionTable, fmt: str = "md") -> str:
    def star(r: ProjectedCoefficient) -> str:
        if r.p < 0.05:
            return "**"
        if r.p < 0.1:
            return "*"
        return ""

    if fmt == "json":
        return json.dumps(
            [
                {
                    "variable": r.variable,
                    "category": r.category,
                    "alternative": r.alt_name or r.alternative,
                    "coef": r.coefficient,
                    "std_err": r.std_err,
                    "z": r.z,
                    "p": r.p,
                }
                for r in table.rows
            ],
            indent=2,
        )
    if fmt == "csv":
        lines = ["variable,category,alternative,coef,std_err,z,p,stars"]
        for r in table.rows:
            lines.append(
                f"{r.variable},\"{r.category}\",{r.alt_name or r.alternative},"
                f"{r.coefficient:.6f},{r.std_err:.6f},{r.z:.4f},{r.p:.4f},{star(r)}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "md":
        head = "| | coef | std err | z | P>|z| |\n|---|---|---|---|---|"
        body = [
            f"| {r.variable}_{r.category}_{r.alt_name or r.alternative} "
            f"| {r.coefficient:.3f} | {r.std_err:.3f} | {r.z:.3f} | {r.p:.3f}{star(r)} |"
            for r in table.rows
        ]
        return "\n".join([head, *body]) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
