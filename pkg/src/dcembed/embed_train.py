"""Supervised category-embedding network for choice data.

Each encoded variable v owns an embedding matrix W_v (K_v x D_v). The
concatenated embeddings, together with directly-fed covariates, drive an
availability-masked softmax over the alternatives. Every variable also has
a reconstruction head: a softmax that must recover the original one-hot
vector from the K_v embedding, penalizing information loss. All variables
train simultaneously so the embeddings accommodate each other's effects.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .dataset import EncodingSetSpec
from .encoders import EncoderModel, VariableEncoding
from .numeric import masked_log_softmax, masked_softmax

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import ChoiceDataset


class TrainingError(RuntimeError):
    """Raised when training cannot produce a usable run."""


INIT_SCALE = 0.05
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class EmbeddingNetConfig:
    """Hyperparameters for one embedding training experiment."""

    encoding_set: EncodingSetSpec
    covariates: tuple[str, ...] = ()
    epochs: int = 80
    repeats: int = 1
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 128
    l2: float = 1e-4
    reg_weight: float | Mapping[str, float] = 1.0
    n_alternatives: int = 3

    def __post_init__(self):
        if self.epochs < 1 or self.repeats < 1 or self.batch_size < 1:
            raise ValueError("epochs, repeats and batch size must be >= 1")
        if self.learning_rate < 0 or self.l2 < 0:
            raise ValueError("learning rate and L2 weight must be nonnegative")
        if any(g < 0 for g in self._gammas().values()):
            raise ValueError("regularizer weights must be nonnegative")

    def _gammas(self) -> dict[str, float]:
        if isinstance(self.reg_weight, Mapping):
            return {e.variable: float(self.reg_weight.get(e.variable, 1.0)) for e in self.encoding_set}
        return {e.variable: float(self.reg_weight) for e in self.encoding_set}

    def gamma(self, variable: str) -> float:
        return self._gammas()[variable]


@dataclass
class EmbeddingNetParams:
    """All trainable parameters; also reused as the gradient container."""

    order: tuple[str, ...]
    w: dict[str, np.ndarray]          # variable -> (K_v, D_v)
    softmax_coef: np.ndarray          # (C, K_total), per-variable column blocks
    covar_coef: np.ndarray            # (C, Z)
    alpha: np.ndarray                 # (C,)
    reg_coef: dict[str, np.ndarray]   # variable -> (D_v, K_v)
    reg_alpha: dict[str, np.ndarray]  # variable -> (D_v,)

    @classmethod
    def initialize(cls, config: EmbeddingNetConfig, n_covariates: int, rng: np.random.Generator):
        c = config.n_alternatives

        def u(*shape):
            return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

        w = {e.variable: u(e.k, e.d) for e in config.encoding_set}
        k_total = sum(e.k for e in config.encoding_set)
        return cls(
            order=config.encoding_set.names,
            w=w,
            softmax_coef=u(c, k_total),
            covar_coef=u(c, n_covariates),
            alpha=u(c),
            reg_coef={e.variable: u(e.d, e.k) for e in config.encoding_set},
            reg_alpha={e.variable: u(e.d) for e in config.encoding_set},
        )

    @property
    def blocks(self) -> dict[str, slice]:
        out, start = {}, 0
        for v in self.order:
            k = self.w[v].shape[0]
            out[v] = slice(start, start + k)
            start += k
        return out

    def leaves(self):
        """(name, array) pairs in a fixed order shared by all instances."""
        for v in self.order:
            yield f"w:{v}", self.w[v]
        yield "softmax_coef", self.softmax_coef
        yield "covar_coef", self.covar_coef
        yield "alpha", self.alpha
        for v in self.order:
            yield f"reg_coef:{v}", self.reg_coef[v]
        for v in self.order:
            yield f"reg_alpha:{v}", self.reg_alpha[v]

    def copy(self) -> "EmbeddingNetParams":
        return EmbeddingNetParams(
            order=self.order,
            w={v: a.copy() for v, a in self.w.items()},
            softmax_coef=self.softmax_coef.copy(),
            covar_coef=self.covar_coef.copy(),
            alpha=self.alpha.copy(),
            reg_coef={v: a.copy() for v, a in self.reg_coef.items()},
            reg_alpha={v: a.copy() for v, a in self.reg_alpha.items()},
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.leaves()])

    def with_vector(self, vec: np.ndarray) -> "EmbeddingNetParams":
        out = self.copy()
        pos = 0
        for name, a in out.leaves():
            a[...] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != vec.size:
            raise ValueError(f"vector has {vec.size} entries, params need {pos}")
        return out

    def finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.leaves())


@dataclass
class Batch:
    """Index-form minibatch; category indices stand in for one-hot rows."""

    idx: dict[str, np.ndarray]
    covariates: np.ndarray
    choice: np.ndarray
    avail: np.ndarray

    @property
    def n(self) -> int:
        return len(self.choice)

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(
            {v: a[rows] for v, a in self.idx.items()},
            self.covariates[rows],
            self.choice[rows],
            self.avail[rows],
        )


def make_batch(data: "ChoiceDataset", config: EmbeddingNetConfig) -> Batch:
    return Batch(
        idx={e.variable: data.cat_indices(e.variable) for e in config.encoding_set},
        covariates=data.feature_matrix(list(config.covariates)),
        choice=data.choice,
        avail=data.avail,
    )


def _embeddings(params: EmbeddingNetParams, batch: Batch) -> dict[str, np.ndarray]:
    # one-hot selection: embedding of observation n is column idx_n of W_v
    return {v: params.w[v].T[batch.idx[v]] for v in params.order}


def _lse(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp with max subtraction (finite inputs)."""
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _scatter_rows(target_rows: int, idx: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum the rows of ``values`` into bins given by ``idx`` (D x K)."""
    out = np.empty((target_rows, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(idx, weights=values[:, k], minlength=target_rows)
    return out


def _logits(params: EmbeddingNetParams, emb: Mapping[str, np.ndarray], covariates) -> np.ndarray:
    blocks = params.blocks
    logits = params.alpha + covariates @ params.covar_coef.T
    for v in params.order:
        logits = logits + emb[v] @ params.softmax_coef[:, blocks[v]].T
    return logits


def forward(
    params: EmbeddingNetParams,
    onehots: Mapping[str, np.ndarray],
    covariates: np.ndarray,
    avail: np.ndarray,
) -> np.ndarray:
    """Choice probabilities for explicit one-hot inputs.

    Accepts single observations (1D arrays) or stacked rows; unavailable
    alternatives get exact zero probability.
    """
    single = np.asarray(avail).ndim == 1
    def rows(a):
        a = np.asarray(a, dtype=np.float64)
        return a[None, :] if a.ndim == 1 else a

    emb = {v: rows(onehots[v]) @ params.w[v].T for v in params.order}
    z = rows(covariates) if np.asarray(covariates).size else np.zeros((1 if single else len(avail), 0))
    probs = masked_softmax(_logits(params, emb, z), rows(avail))
    return probs[0] if single else probs


def loss(params: EmbeddingNetParams, batch: Batch, config: EmbeddingNetConfig) -> float:
    """Mean choice cross-entropy + weighted reconstruction cross-entropies
    + L2 penalty on the embedding matrices."""
    emb = _embeddings(params, batch)
    logp = masked_log_softmax(_logits(params, emb, batch.covariates), batch.avail)
    total = -logp[np.arange(batch.n), batch.choice]
    for v in params.order:
        gamma = config.gamma(v)
        if gamma == 0.0:
            continue
        logits_r = emb[v] @ params.reg_coef[v].T + params.reg_alpha[v]
        ce = _lse(logits_r) - logits_r[np.arange(batch.n), batch.idx[v]]
        total = total + gamma * ce
    penalty = config.l2 * sum(float(np.sum(params.w[v] ** 2)) for v in params.order)
    return float(total.mean() + penalty)


def gradient(params: EmbeddingNetParams, batch: Batch, config: EmbeddingNetConfig) -> EmbeddingNetParams:
    """Analytic gradient of :func:`loss`, shaped exactly like the parameters."""
    n = batch.n
    blocks = params.blocks
    emb = _embeddings(params, batch)
    probs = masked_softmax(_logits(params, emb, batch.covariates), batch.avail)

    g_logit = probs.copy()
    g_logit[np.arange(n), batch.choice] -= 1.0
    g_logit /= n

    d_alpha = g_logit.sum(axis=0)
    d_covar = g_logit.T @ batch.covariates
    d_softmax = np.zeros_like(params.softmax_coef)
    d_w, d_reg, d_reg_alpha = {}, {}, {}
    for v in params.order:
        d_softmax[:, blocks[v]] = g_logit.T @ emb[v]
        d_emb = g_logit @ params.softmax_coef[:, blocks[v]]

        gamma = config.gamma(v)
        if gamma > 0.0:
            logits_r = emb[v] @ params.reg_coef[v].T + params.reg_alpha[v]
            q = np.exp(logits_r - _lse(logits_r)[:, None])
            q[np.arange(n), batch.idx[v]] -= 1.0
            q *= gamma / n
            d_reg[v] = q.T @ emb[v]
            d_reg_alpha[v] = q.sum(axis=0)
            d_emb = d_emb + q @ params.reg_coef[v]
        else:
            d_reg[v] = np.zeros_like(params.reg_coef[v])
            d_reg_alpha[v] = np.zeros_like(params.reg_alpha[v])

        acc = _scatter_rows(params.w[v].shape[1], batch.idx[v], d_emb)  # (D, K)
        d_w[v] = acc.T + 2.0 * config.l2 * params.w[v]

    return EmbeddingNetParams(
        order=params.order,
        w=d_w,
        softmax_coef=d_softmax,
        covar_coef=d_covar,
        alpha=d_alpha,
        reg_coef=d_reg,
        reg_alpha=d_reg_alpha,
    )


def choice_log_likelihood(params: EmbeddingNetParams, batch: Batch) -> float:
    """Summed log-likelihood of the choice head (no regularizer terms)."""
    emb = _embeddings(params, batch)
    logp = masked_log_softmax(_logits(params, emb, batch.covariates), batch.avail)
    return float(logp[np.arange(batch.n), batch.choice].sum())


@dataclass
class TrainRun:
    """One completed (or aborted) training run."""

    params: EmbeddingNetParams
    train_loss: list[float]
    dev_ll_trace: list[float]
    dev_ll: float
    seed: int
    categories: dict[str, tuple[str, ...]]
    diverged: bool = False


def train(
    config: EmbeddingNetConfig,
    train_split: "ChoiceDataset",
    dev_split: "ChoiceDataset",
    seed: int | None = None,
) -> TrainRun:
    """Run seeded minibatch Adam for the configured number of epochs.

    Fully deterministic in (config, seed, data): initialization, epoch
    shuffles, and updates all come from one seeded generator.
    """
    for v in (e.variable for e in config.encoding_set):
        if train_split.category_maps[v].categories != dev_split.category_maps[v].categories:
            raise TrainingError(f"train/dev splits disagree on categories of {v!r}")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    full = make_batch(train_split, config)
    dev = make_batch(dev_split, config)
    params = EmbeddingNetParams.initialize(config, full.covariates.shape[1], rng)

    m = {name: np.zeros_like(a) for name, a in params.leaves()}
    v2 = {name: np.zeros_like(a) for name, a in params.leaves()}
    t = 0
    train_losses: list[float] = []
    dev_trace: list[float] = []
    diverged = False
    for _ in range(config.epochs):
        perm = rng.permutation(full.n)
        # overflow inside a doomed run is caught by the loss check below
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, full.n, config.batch_size):
                mini = full.take(perm[start : start + config.batch_size])
                grad = gradient(params, mini, config)
                t += 1
                corr1 = 1.0 - ADAM_BETA1**t
                corr2 = 1.0 - ADAM_BETA2**t
                for (name, a), (_, g) in zip(params.leaves(), grad.leaves()):
                    m[name] = ADAM_BETA1 * m[name] + (1.0 - ADAM_BETA1) * g
                    v2[name] = ADAM_BETA2 * v2[name] + (1.0 - ADAM_BETA2) * g * g
                    a -= config.learning_rate * (m[name] / corr1) / (
                        np.sqrt(v2[name] / corr2) + ADAM_EPS
                    )
            if not params.finite():
                diverged = True
                break
            epoch_loss = loss(params, full, config)
        if not np.isfinite(epoch_loss):
            diverged = True
            break
        train_losses.append(epoch_loss)
        dev_trace.append(choice_log_likelihood(params, dev))

    return TrainRun(
        params=params,
        train_loss=train_losses,
        dev_ll_trace=dev_trace,
        dev_ll=dev_trace[-1] if dev_trace else -np.inf,
        seed=seed,
        categories={
            e.variable: train_split.category_maps[e.variable].categories
            for e in config.encoding_set
        },
        diverged=diverged,
    )


def run_repeats(
    config: EmbeddingNetConfig,
    train_split: "ChoiceDataset",
    dev_split: "ChoiceDataset",
) -> tuple[TrainRun, list[TrainRun]]:
    """Train ``config.repeats`` times with consecutive seeds.

    Returns the run with the highest development log-likelihood plus the
    full list (divergent runs included, flagged) for mean/std reporting.
    """
    runs = [
        train(config, train_split, dev_split, seed=config.seed + i)
        for i in range(config.repeats)
    ]
    usable = [r for r in runs if not r.diverged]
    if not usable:
        raise TrainingError(
            f"all {config.repeats} runs diverged (seeds {config.seed}..{config.seed + config.repeats - 1})"
        )
    best = usable[int(np.argmax([r.dev_ll for r in usable]))]
    return best, runs


def export(run: TrainRun) -> EncoderModel:
    """Learned embeddings as an encoder: category d maps to column d of W_v."""
    if not run.params.finite():
        raise TrainingError("cannot export non-finite parameters")
    encodings = {}
    for v in run.params.order:
        encodings[v] = VariableEncoding(
            variable=v,
            categories=run.categories[v],
            matrix=run.params.w[v].T.copy(),
            metadata={"seed": run.seed, "dev_ll": run.dev_ll, "k": run.params.w[v].shape[0]},
        )
    return EncoderModel("embedding", encodings)


def save_trace(run: TrainRun, path: str | Path) -> None:
    """Training trace as CSV: epoch, train loss, dev log-likelihood."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "dev_ll"])
        for i, (tl, dl) in enumerate(zip(run.train_loss, run.dev_ll_trace), start=1):
            writer.writerow([i, repr(tl), repr(dl)])


def params_to_json(params: EmbeddingNetParams) -> str:
    payload = {
        "order": list(params.order),
        "arrays": {name: a.tolist() for name, a in params.leaves()},
    }
    return json.dumps(payload, indent=2)


def params_from_json(text: str) -> EmbeddingNetParams:
    payload = json.loads(text)
    order = tuple(payload["order"])
    arrays = {k: np.array(v, dtype=np.float64) for k, v in payload["arrays"].items()}
    return EmbeddingNetParams(
        order=order,
        w={v: arrays[f"w:{v}"] for v in order},
        softmax_coef=arrays["softmax_coef"],
        covar_coef=arrays["covar_coef"],
        alpha=arrays["alpha"],
        reg_coef={v: arrays[f"reg_coef:{v}"] for v in order},
        reg_alpha={v: arrays[f"reg_alpha:{v}"] for v in order},
    )
