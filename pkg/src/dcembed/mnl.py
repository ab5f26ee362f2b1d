"""Multinomial logit estimation with full inference statistics.

Utilities are linear in one shared coefficient vector; the design carries
one feature matrix per alternative (N x C x P). Estimation is damped
Newton on the analytic gradient and Hessian of the globally concave
log-likelihood, with availability-masked, log-sum-exp-stabilized
probabilities throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .dataset import ALTERNATIVES, SchemaError
from .encoders import EncoderModel
from .numeric import masked_log_softmax, masked_softmax

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import ChoiceDataset


class EstimationError(RuntimeError):
    """Raised when a model cannot be estimated."""


class RankError(EstimationError):
    """Design matrix is rank deficient; carries the offending columns."""

    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(f"rank-deficient design; offending columns: {list(columns)}")


@dataclass(frozen=True)
class Term:
    """One coefficient (shared=True) or one per listed alternative.

    ``features`` holds (alternative, feature-name) pairs; the name "1"
    denotes a constant (alternative-specific intercept).
    """

    label: str
    features: tuple[tuple[int, str], ...]
    shared: bool = True


@dataclass(frozen=True)
class CategoricalTerm:
    """An encoded variable entering the listed alternatives with an
    independent K-vector of coefficients per alternative."""

    variable: str
    alternatives: tuple[int, ...]


@dataclass(frozen=True)
class UtilitySpec:
    terms: tuple[Term, ...]
    categoricals: tuple[CategoricalTerm, ...] = ()
    n_alternatives: int = 3
    alt_names: tuple[str, ...] = ALTERNATIVES

    def __post_init__(self):
        pairs = []
        for term in self.terms:
            for alt, feat in term.features:
                if not 0 <= alt < self.n_alternatives:
                    raise SchemaError(f"term {term.label!r} references alternative {alt}")
                pairs.append((alt, feat))
        if len(set(pairs)) != len(pairs):
            raise SchemaError("duplicate (alternative, feature) pair in utility spec")
        keys = [(ct.variable, a) for ct in self.categoricals for a in ct.alternatives]
        if len(set(keys)) != len(keys):
            raise SchemaError("duplicate (variable, alternative) categorical term")


# Baseline specification: ASCs for train and SM (car is the base), shared
# train/SM travel time, car time, GA-gated train and SM costs, car cost,
# headways, SM seats, shared survey indicator, SM second-class indicator,
# and the two car luggage indicators. 14 coefficients.
def base_specification() -> UtilitySpec:
    terms = (
        Term("ASC Train", ((0, "1"),)),
        Term("ASC Swissmetro", ((1, "1"),)),
        Term("Travel Time, units:hrs (Train and Swissmetro)",
             ((0, "TRAIN_TT_HR"), (1, "SM_TT_HR"))),
        Term("Travel Time, units:hrs (Car)", ((2, "CAR_TT_HR"),)),
        Term("Travel Cost * (Annual Pass == 0) (Train)", ((0, "TRAIN_CO_SC"),)),
        Term("Travel Cost * (Annual Pass == 0) (Swissmetro)", ((1, "SM_CO_SC"),)),
        Term("Travel Cost (Car)", ((2, "CAR_CO_SC"),)),
        Term("Headway, units:hrs (Train)", ((0, "TRAIN_HE_HR"),)),
        Term("Headway, units:hrs (Swissmetro)", ((1, "SM_HE_HR"),)),
        Term("Airline Seat Configuration (Swissmetro)", ((1, "SEATS"),)),
        Term("Surveyed on a Train (Train and Swissmetro)",
             ((0, "SURVEY_TRAIN"), (1, "SURVEY_TRAIN"))),
        Term("First Class == False (Swissmetro)", ((1, "FIRST_NO"),)),
        Term("Number of Luggage Pieces == 1 (Car)", ((2, "LUGGAGE_1"),)),
        Term("Number of Luggage Pieces > 1 (Car)", ((2, "LUGGAGE_GT1"),)),
    )
    return UtilitySpec(terms)


# TICKET describes the rail ticket held, so it enters only the train
# utility; the other encoded variables enter train and swissmetro.
DEFAULT_CATEGORICAL_ALTS = {"TICKET": (0,)}


def with_encoding_set(
    spec: UtilitySpec,
    variables: Sequence[str],
    alt_map: Mapping[str, Sequence[int]] | None = None,
) -> UtilitySpec:
    cats = list(spec.categoricals)
    for v in variables:
        alts = (alt_map or {}).get(v, DEFAULT_CATEGORICAL_ALTS.get(v, (0, 1)))
        cats.append(CategoricalTerm(v, tuple(alts)))
    return replace(spec, categoricals=tuple(cats))


@dataclass(frozen=True)
class Block:
    """Where one (variable, alternative) coefficient block sits in the design.

    ``cols`` are design-column positions; ``dims`` the surviving encoder
    dimensions (identical to range(K) unless columns were dropped).
    """

    variable: str
    alternative: int
    cols: tuple[int, ...]
    dims: tuple[int, ...]


@dataclass
class Design:
    X: np.ndarray                 # (N, C, P)
    labels: tuple[str, ...]
    choices: np.ndarray           # (N,)
    avail: np.ndarray             # (N, C) bool
    blocks: tuple[Block, ...] = ()
    dropped: tuple[str, ...] = ()
    alt_names: tuple[str, ...] = ALTERNATIVES

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_params(self) -> int:
        return self.X.shape[2]

    def block(self, variable: str, alternative: int) -> Block:
        for b in self.blocks:
            if b.variable == variable and b.alternative == alternative:
                return b
        raise KeyError((variable, alternative))


def assemble_design(
    data: "ChoiceDataset",
    spec: UtilitySpec,
    encoders: EncoderModel | None = None,
    drop_deficient: bool = False,
) -> Design:
    """Expand a utility specification into per-alternative design matrices.

    Encoded variables expand into K labeled columns per alternative they
    enter. With ``drop_deficient`` rank-deficient columns are removed with
    a warning instead of failing later in estimation.
    """
    n, c = data.n, spec.n_alternatives
    columns: list[np.ndarray] = []   # each (N, C)
    labels: list[str] = []

    def col_values(alt: int, feat: str) -> np.ndarray:
        if feat == "1":
            return np.ones(n)
        if feat not in data.features:
            raise SchemaError(f"feature {feat!r} not present in dataset")
        return data.features[feat]

    for term in spec.terms:
        if term.shared:
            block = np.zeros((n, c))
            for alt, feat in term.features:
                block[:, alt] += col_values(alt, feat)
            columns.append(block)
            labels.append(term.label)
        else:
            for alt, feat in term.features:
                block = np.zeros((n, c))
                block[:, alt] = col_values(alt, feat)
                columns.append(block)
                labels.append(f"{term.label} ({spec.alt_names[alt]})")

    blocks: list[Block] = []
    for ct in spec.categoricals:
        if encoders is None:
            raise SchemaError(f"missing encoder for categorical term {ct.variable!r}")
        enc = encoders.encoding(ct.variable)
        values = encoders.encode(data, ct.variable)
        names = enc.column_names(encoders.kind)
        for alt in ct.alternatives:
            start = len(columns)
            for j in range(enc.k):
                block = np.zeros((n, c))
                block[:, alt] = values[:, j]
                columns.append(block)
                labels.append(f"{names[j]}_{spec.alt_names[alt]}")
            blocks.append(
                Block(ct.variable, alt, tuple(range(start, start + enc.k)), tuple(range(enc.k)))
            )

    if len(set(labels)) != len(labels):
        dupes = sorted({l for l in labels if labels.count(l) > 1})
        raise SchemaError(f"design label collision: {dupes}")

    x = np.stack(columns, axis=2) if columns else np.zeros((n, c, 0))
    design = Design(
        x, tuple(labels), data.choice.copy(), data.avail.copy(), tuple(blocks),
        alt_names=spec.alt_names,
    )
    if drop_deficient:
        deficient = rank_deficient_columns(design)
        if deficient:
            design = _drop_columns(design, deficient)
    return design


def _differenced(design: Design) -> np.ndarray:
    """Utility differences against each row's first available alternative.

    MNL identifies coefficients only through utility differences, so rank
    is checked on this matrix rather than the raw stacked design.
    """
    ref = np.argmax(design.avail, axis=1)
    x_ref = design.X[np.arange(design.n), ref]
    parts = []
    for c in range(design.X.shape[1]):
        mask = design.avail[:, c] & (ref != c)
        if mask.any():
            parts.append(design.X[mask, c] - x_ref[mask])
    if not parts:
        return np.zeros((0, design.n_params))
    return np.vstack(parts)


def rank_deficient_columns(design: Design) -> tuple[str, ...]:
    """Labels of columns that make the differenced design rank deficient."""
    a = _differenced(design)
    if a.shape[1] == 0:
        return ()
    if a.shape[0] == 0:
        return design.labels
    _, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(a.shape) * np.finfo(float).eps if diag.size and diag[0] > 0 else 0.0
    rank = int(np.sum(diag > tol))
    return tuple(design.labels[j] for j in sorted(piv[rank:]))


def _drop_columns(design: Design, dropped_labels: Sequence[str]) -> Design:
    import warnings

    warnings.warn(f"dropping rank-deficient design columns: {list(dropped_labels)}", stacklevel=3)
    drop = set(dropped_labels)
    keep = [j for j, l in enumerate(design.labels) if l not in drop]
    remap = {old: new for new, old in enumerate(keep)}
    new_blocks = []
    for b in design.blocks:
        pairs = [(remap[cj], dj) for cj, dj in zip(b.cols, b.dims) if cj in remap]
        if pairs:
            cols, dims = zip(*pairs)
            new_blocks.append(Block(b.variable, b.alternative, cols, dims))
    return Design(
        design.X[:, :, keep],
        tuple(design.labels[j] for j in keep),
        design.choices,
        design.avail,
        tuple(new_blocks),
        dropped=design.dropped + tuple(dropped_labels),
        alt_names=design.alt_names,
    )


def utilities(beta: np.ndarray, design: Design) -> np.ndarray:
    return design.X @ beta


def probabilities(beta: np.ndarray, design: Design) -> np.ndarray:
    return masked_softmax(utilities(beta, design), design.avail)


def log_likelihood(beta: np.ndarray, design: Design) -> float:
    logp = masked_log_softmax(utilities(beta, design), design.avail)
    return float(logp[np.arange(design.n), design.choices].sum())


def null_log_likelihood(design: Design) -> float:
    """LL of the zero-coefficient model: uniform over available alternatives."""
    return float(-np.log(design.avail.sum(axis=1)).sum())


def _grad_hess(beta: np.ndarray, design: Design) -> tuple[np.ndarray, np.ndarray]:
    probs = probabilities(beta, design)
    resid = -probs
    resid[np.arange(design.n), design.choices] += 1.0
    grad = np.einsum("nc,ncp->p", resid, design.X)
    xbar = np.einsum("nc,ncp->np", probs, design.X)
    weighted = design.X * np.sqrt(probs)[:, :, None]
    flat = weighted.reshape(-1, design.n_params)
    hess = -(flat.T @ flat - xbar.T @ xbar)
    return grad, hess


@dataclass(frozen=True)
class Metrics:
    ll: float
    ll0: float
    r2: float
    rbar2: float
    aic: float
    k: int


def metrics(ll: float, ll0: float, k: int) -> Metrics:
    """Pseudo R-squared family and AIC from a fitted and a null LL."""
    if ll0 == 0.0:
        raise EstimationError("LL0 is zero; metrics undefined")
    return Metrics(
        ll=ll,
        ll0=ll0,
        r2=1.0 - ll / ll0,
        rbar2=1.0 - (ll - k) / ll0,
        aic=2.0 * k - 2.0 * ll,
        k=k,
    )


@dataclass
class EstimationResult:
    labels: tuple[str, ...]
    beta: np.ndarray
    cov: np.ndarray | None
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    ll: float
    ll0: float
    n_obs: int
    k: int
    iterations: int
    grad_norm: float
    converged: bool
    blocks: tuple[Block, ...] = ()
    alt_names: tuple[str, ...] = ALTERNATIVES
    dropped: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def train_metrics(self) -> Metrics:
        return metrics(self.ll, self.ll0, self.k)


def estimate(
    design: Design,
    max_iter: int = 200,
    grad_tol: float = 1e-6,
    max_halvings: int = 50,
) -> EstimationResult:
    """Maximize the MNL log-likelihood by damped Newton iterations.

    The objective is concave, so every Newton direction with step halving
    is an ascent step; convergence is declared when the gradient
    infinity-norm drops below ``grad_tol``.
    """
    if design.n_params == 0:
        raise EstimationError("empty design")
    deficient = rank_deficient_columns(design)
    if deficient:
        raise RankError(deficient)

    beta = np.zeros(design.n_params)
    ll = log_likelihood(beta, design)
    notes: list[str] = []
    converged = False
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad, hess = _grad_hess(beta, design)
        grad_norm = float(np.abs(grad).max())
        if grad_norm < grad_tol:
            converged = True
            iterations -= 1
            break
        try:
            direction = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            notes.append(f"singular Hessian at iteration {iterations}")
            break
        step = 1.0
        improved = False
        for _ in range(max_halvings):
            candidate = beta + step * direction
            ll_new = log_likelihood(candidate, design)
            if np.isfinite(ll_new) and ll_new >= ll:
                beta, ll = candidate, ll_new
                improved = True
                break
            step *= 0.5
        if not improved:
            notes.append(f"line search stalled at iteration {iterations}")
            break
    else:
        iterations = max_iter

    # A saturated softmax satisfies any gradient tolerance on separable
    # data even though the MLE is unbounded; flag it instead of reporting
    # the stopping point as an optimum.
    if converged and ll > -1e-6 and np.abs(beta).max(initial=0.0) > 10.0:
        converged = False
        notes.append(
            "apparent perfect separation: log-likelihood ~ 0 with "
            f"|beta|_inf={np.abs(beta).max():.3e}; estimates are unbounded"
        )
    elif not converged:
        notes.append(
            f"not converged: grad_inf={grad_norm:.3e}, |beta|_inf={np.abs(beta).max():.3e} "
            f"after {iterations} iterations (separable data grows |beta| without bound)"
        )

    _, hess = _grad_hess(beta, design)
    cov: np.ndarray | None
    try:
        cov = np.linalg.inv(-hess)
        cov = (cov + cov.T) / 2.0
        if not np.isfinite(cov).all() or (np.diag(cov) < 0).any():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = None
        notes.append("Hessian numerically singular at optimum; no covariance reported")
    if cov is not None:
        se = np.sqrt(np.diag(cov))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, beta / np.where(se > 0, se, 1.0), 0.0)
        p = 2.0 * norm.sf(np.abs(z))
    else:
        se = np.full(design.n_params, np.nan)
        z = np.full(design.n_params, np.nan)
        p = np.full(design.n_params, np.nan)

    return EstimationResult(
        labels=design.labels,
        beta=beta,
        cov=cov,
        se=se,
        z=z,
        p=p,
        ll=ll,
        ll0=null_log_likelihood(design),
        n_obs=design.n,
        k=design.n_params,
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        blocks=design.blocks,
        alt_names=design.alt_names,
        dropped=design.dropped,
        notes=tuple(notes),
    )


def evaluate(beta: np.ndarray, design: Design, k: int | None = None) -> Metrics:
    """Out-of-sample metrics for fixed coefficients on a fresh design."""
    return metrics(log_likelihood(beta, design), null_log_likelihood(design), k if k is not None else len(beta))


def stars(p_value: float) -> str:
    if not np.isfinite(p_value):
        return ""
    if p_value < 0.05:
        return "**"
    if p_value < 0.1:
        return "*"
    return ""


def coefficient_rows(result: EstimationResult) -> list[dict]:
    rows = []
    for j, label in enumerate(result.labels):
        rows.append(
            {
                "label": label,
                "coef": float(result.beta[j]),
                "std_err": float(result.se[j]),
                "z": float(result.z[j]),
                "p": float(result.p[j]),
                "stars": stars(float(result.p[j])),
            }
        )
    return rows


def format_coefficients(result: EstimationResult, fmt: str = "md") -> str:
    """Coefficient table as markdown, CSV, or JSON text."""
    rows = coefficient_rows(result)
    if fmt == "json":
        return json.dumps(rows, indent=2)
    if fmt == "csv":
        lines = ["label,coef,std_err,z,p,stars"]
        for r in rows:
            lines.append(
                f"\"{r['label']}\",{r['coef']:.6f},{r['std_err']:.6f},"
                f"{r['z']:.4f},{r['p']:.4f},{r['stars']}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "md":
        head = "| | coef | std err | z | P>|z| |\n|---|---|---|---|---|"
        body = [
            f"| {r['label']} | {r['coef']:.4f} | {r['std_err']:.3f} "
            f"| {r['z']:.3f} | {r['p']:.3f}{r['stars']} |"
            for r in rows
        ]
        return "\n".join([head, *body]) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def result_to_json(result: EstimationResult) -> str:
    payload = {
        "labels": list(result.labels),
        "beta": result.beta.tolist(),
        "cov": result.cov.tolist() if result.cov is not None else None,
        "se": result.se.tolist(),
        "z": result.z.tolist(),
        "p": result.p.tolist(),
        "ll": result.ll,
        "ll0": result.ll0,
        "n_obs": result.n_obs,
        "k": result.k,
        "iterations": result.iterations,
        "grad_norm": result.grad_norm,
        "converged": result.converged,
        "blocks": [
            {"variable": b.variable, "alternative": b.alternative,
             "cols": list(b.cols), "dims": list(b.dims)}
            for b in result.blocks
        ],
        "alt_names": list(result.alt_names),
        "dropped": list(result.dropped),
        "notes": list(result.notes),
    }
    return json.dumps(payload, indent=2)


def result_from_json(text: str) -> EstimationResult:
    d = json.loads(text)
    return EstimationResult(
        labels=tuple(d["labels"]),
        beta=np.array(d["beta"], dtype=np.float64),
        cov=np.array(d["cov"], dtype=np.float64) if d["cov"] is not None else None,
        se=np.array(d["se"], dtype=np.float64),
        z=np.array(d["z"], dtype=np.float64),
        p=np.array(d["p"], dtype=np.float64),
        ll=d["ll"],
        ll0=d["ll0"],
        n_obs=d["n_obs"],
        k=d["k"],
        iterations=d["iterations"],
        grad_norm=d["grad_norm"],
        converged=d["converged"],
        blocks=tuple(
            Block(b["variable"], b["alternative"], tuple(b["cols"]), tuple(b["dims"]))
            for b in d["blocks"]
        ),
        alt_names=tuple(d["alt_names"]),
        dropped=tuple(d["dropped"]),
        notes=tuple(d["notes"]),
    )
