"""End-to-end experiment orchestration.

Runs the full comparison protocol (baseline vs dummy vs PCA vs embedding
encodings, with repeated embedding trainings) and the survey-split
data-efficiency sweeps, then writes every artifact under one run
directory. All randomness derives from the single experiment seed.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import embed_train, encoders as enc_mod, mds as mds_mod, mnl, projection
from .dataset import (
    BASE_NUMERIC_FEATURES,
    DEFAULT_ENCODING_K,
    DEFAULT_FILTERS,
    ChoiceDataset,
    DataError,
    EncodingSetSpec,
    SplitSpec,
    file_sha256,
    filter_and_derive,
    load_raw,
    split_indices,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ROSTER = ("original", "dummy_full", "dummy_reduced", "pca", "embeddings")


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str
    out_dir: str | None = None
    seed: int = 0
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    filters: tuple[str, ...] = DEFAULT_FILTERS
    encoding_k: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_ENCODING_K))
    roster: tuple[str, ...] = ROSTER
    epochs: int = 80
    repeats: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 128
    l2: float = 1e-4
    reg_weight: float = 1.0
    covariates: tuple[str, ...] | None = None
    sweep_fractions: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    sweep_scenario: str = "light"

    def __post_init__(self):
        if not self.roster:
            raise DataError("model roster is empty")
        unknown = set(self.roster) - set(ROSTER)
        if unknown:
            raise DataError(f"unknown roster models: {sorted(unknown)}")
        if self.sweep_scenario not in ("light", "bigdata"):
            raise DataError(f"unknown sweep scenario {self.sweep_scenario!r}")
        if list(self.sweep_fractions) != sorted(set(self.sweep_fractions)) or any(
            not 0.0 < f <= 1.0 for f in self.sweep_fractions
        ):
            raise DataError("sweep fractions must be strictly increasing within (0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            raw = tomllib.loads(path.read_text())
        exp = raw.get("experiment", {})
        training = raw.get("training", {})
        sweep = raw.get("sweep", {})
        kwargs: dict = {}
        if "data" in exp:
            kwargs["data_path"] = exp["data"]
        if "out" in exp:
            kwargs["out_dir"] = exp["out"]
        for key in ("seed",):
            if key in exp:
                kwargs[key] = exp[key]
        if "ratios" in exp:
            kwargs["ratios"] = tuple(exp["ratios"])
        if "filters" in exp:
            kwargs["filters"] = tuple(exp["filters"])
        if "roster" in exp:
            kwargs["roster"] = tuple(exp["roster"])
        if "encoding_k" in raw:
            kwargs["encoding_k"] = {k: int(v) for k, v in raw["encoding_k"].items()}
        for key in ("epochs", "repeats", "batch_size"):
            if key in training:
                kwargs[key] = int(training[key])
        for key in ("learning_rate", "l2", "reg_weight"):
            if key in training:
                kwargs[key] = float(training[key])
        if "covariates" in training:
            kwargs["covariates"] = tuple(training["covariates"])
        if "fractions" in sweep:
            kwargs["sweep_fractions"] = tuple(float(f) for f in sweep["fractions"])
        if "scenario" in sweep:
            kwargs["sweep_scenario"] = sweep["scenario"]
        if "data_path" not in kwargs:
            raise DataError(f"config {path} is missing experiment.data")
        return cls(**kwargs)

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("out_dir")
        payload.pop("data_path")
        payload["encoding_k"] = dict(payload["encoding_k"])
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ComparisonRow:
    model: str
    n_params: int | None
    train_ll: float = np.nan
    train_r2: float = np.nan
    train_rbar2: float = np.nan
    train_aic: float = np.nan
    test_ll: float = np.nan
    test_r2: float = np.nan
    test_rbar2: float = np.nan
    test_aic: float = np.nan
    note: str = ""

    @classmethod
    def from_metrics(
        cls, model: str, train: mnl.Metrics, test: mnl.Metrics, note: str = ""
    ) -> "ComparisonRow":
        return cls(
            model=model,
            n_params=train.k,
            train_ll=train.ll,
            train_r2=train.r2,
            train_rbar2=train.rbar2,
            train_aic=train.aic,
            test_ll=test.ll,
            test_r2=test.r2,
            test_rbar2=test.rbar2,
            test_aic=test.aic,
            note=note,
        )


@dataclass
class SweepPoint:
    fraction: float
    scores: dict[str, float | None]
    notes: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentArtifacts:
    config: ExperimentConfig
    rows: list[ComparisonRow]
    results: dict[str, mnl.EstimationResult]
    projections: dict[str, projection.ProjectionTable]
    encoder_models: dict[str, enc_mod.EncoderModel]
    best_run: embed_train.TrainRun | None
    runs: list[embed_train.TrainRun]
    split_sizes: dict[str, int]
    filter_counts: dict[str, int]
    dataset_sha: str
    sweep_points: list[SweepPoint] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def n_diverged(self) -> int:
        return sum(r.diverged for r in self.runs)

    @property
    def fatal_failures(self) -> list[str]:
        return [r.model for r in self.rows if r.note.startswith("failed")]


def load_dataset(config: ExperimentConfig) -> ChoiceDataset:
    return filter_and_derive(load_raw(config.data_path), filters=config.filters)


def _spec_for(model: str, variables: Sequence[str]) -> mnl.UtilitySpec:
    base = mnl.base_specification()
    if model == "original":
        return base
    if model == "dummy_reduced":
        return mnl.with_encoding_set(base, [v for v in variables if v != "OD"])
    return mnl.with_encoding_set(base, list(variables))


def _dummy_encoders(train: ChoiceDataset, variables: Sequence[str]) -> enc_mod.EncoderModel:
    model = enc_mod.EncoderModel("dummy")
    for v in variables:
        model = model.merge(enc_mod.fit_dummy_from_data(train, v))
    return model


def _pca_encoders(
    train: ChoiceDataset, encoding_set: EncodingSetSpec
) -> enc_mod.EncoderModel:
    model = enc_mod.EncoderModel("pca")
    for entry in encoding_set:
        model = model.merge(enc_mod.fit_pca(train, entry.variable, entry.k))
    return model


def _estimate_and_score(
    model: str,
    spec: mnl.UtilitySpec,
    train: ChoiceDataset,
    test: ChoiceDataset,
    encoder_model: enc_mod.EncoderModel | None,
    drop_deficient: bool,
) -> tuple[ComparisonRow, mnl.EstimationResult | None]:
    try:
        design = mnl.assemble_design(train, spec, encoder_model, drop_deficient=drop_deficient)
        result = mnl.estimate(design)
        test_design = mnl.assemble_design(test, spec, encoder_model, drop_deficient=False)
        if result.dropped:
            keep = [j for j, l in enumerate(test_design.labels) if l not in set(result.dropped)]
            test_design = mnl.Design(
                test_design.X[:, :, keep],
                tuple(test_design.labels[j] for j in keep),
                test_design.choices,
                test_design.avail,
                alt_names=test_design.alt_names,
            )
        test_metrics = mnl.evaluate(result.beta, test_design, k=result.k)
        note = ""
        if result.dropped:
            note = f"dropped {len(result.dropped)} rank-deficient columns"
        if not result.converged:
            note = (note + "; " if note else "") + "no convergence"
        return ComparisonRow.from_metrics(model, result.train_metrics, test_metrics, note), result
    except (mnl.EstimationError, DataError, enc_mod.EncodingError) as exc:
        return ComparisonRow(model=model, n_params=None, note=f"failed: {exc}"), None


def run_comparison(
    config: ExperimentConfig, data: ChoiceDataset | None = None
) -> ExperimentArtifacts:
    """Execute the full protocol: split, train embeddings with repeats,
    fit PCA, estimate every roster model on train, evaluate on test."""
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    if data is None:
        data = load_dataset(config)
    dataset_sha = (
        file_sha256(config.data_path) if Path(config.data_path).exists() else "unavailable"
    )
    train_idx, dev_idx, test_idx = split_indices(data.n, SplitSpec(config.ratios, config.seed))
    train, dev, test = data.subset(train_idx), data.subset(dev_idx), data.subset(test_idx)
    timings["prepare"] = time.perf_counter() - t0

    encoding_set = EncodingSetSpec.from_data(data, dict(config.encoding_k))
    variables = encoding_set.names
    covariates = config.covariates if config.covariates is not None else BASE_NUMERIC_FEATURES

    best_run: embed_train.TrainRun | None = None
    runs: list[embed_train.TrainRun] = []
    encoder_models: dict[str, enc_mod.EncoderModel] = {}
    if "embeddings" in config.roster:
        t1 = time.perf_counter()
        net_config = embed_train.EmbeddingNetConfig(
            encoding_set=encoding_set,
            covariates=tuple(covariates),
            epochs=config.epochs,
            repeats=config.repeats,
            seed=config.seed,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            l2=config.l2,
            reg_weight=config.reg_weight,
        )
        best_run, runs = embed_train.run_repeats(net_config, train, dev)
        encoder_models["embeddings"] = embed_train.export(best_run)
        timings["train_embeddings"] = time.perf_counter() - t1
    if "pca" in config.roster:
        t1 = time.perf_counter()
        encoder_models["pca"] = _pca_encoders(train, encoding_set)
        timings["fit_pca"] = time.perf_counter() - t1
    if "dummy_full" in config.roster or "dummy_reduced" in config.roster:
        encoder_models["dummy"] = _dummy_encoders(train, variables)

    rows: list[ComparisonRow] = []
    results: dict[str, mnl.EstimationResult] = {}
    t1 = time.perf_counter()
    for model in config.roster:
        if model == "original":
            row, result = _estimate_and_score(
                model, _spec_for(model, variables), train, test, None, False
            )
        elif model == "dummy_full":
            row, result = _estimate_and_score(
                model, _spec_for(model, variables), train, test,
                encoder_models["dummy"], True,
            )
        elif model == "dummy_reduced":
            row, result = _estimate_and_score(
                model, _spec_for(model, variables), train, test,
                encoder_models["dummy"], False,
            )
        elif model == "pca":
            row, result = _estimate_and_score(
                model, _spec_for(model, variables), train, test,
                encoder_models["pca"], False,
            )
        else:  # embeddings: best run plus mean/std over all usable repeats
            row, result = _estimate_and_score(
                "embeddings (best)", _spec_for(model, variables), train, test,
                encoder_models["embeddings"], False,
            )
            rows.append(row)
            if result is not None:
                results["embeddings"] = result
            mean_row, std_row = _embedding_spread_rows(
                config, variables, runs, train, test
            )
            rows.append(mean_row)
            rows.append(std_row)
            continue
        rows.append(row)
        if result is not None:
            results[model] = result
    timings["estimate"] = time.perf_counter() - t1

    projections: dict[str, projection.ProjectionTable] = {}
    for name in ("embeddings", "pca"):
        if name in results and results[name].cov is not None and results[name].blocks:
            projections[name] = projection.project_all(results[name], encoder_models[name])

    timings["total"] = time.perf_counter() - t0
    return ExperimentArtifacts(
        config=config,
        rows=rows,
        results=results,
        projections=projections,
        encoder_models=encoder_models,
        best_run=best_run,
        runs=runs,
        split_sizes={"train": train.n, "dev": dev.n, "test": test.n},
        filter_counts=dict(data.filter_counts),
        dataset_sha=dataset_sha,
        timings=timings,
    )


def _embedding_spread_rows(
    config: ExperimentConfig,
    variables: Sequence[str],
    runs: list[embed_train.TrainRun],
    train: ChoiceDataset,
    test: ChoiceDataset,
) -> tuple[ComparisonRow, ComparisonRow]:
    """Estimate one MNL per non-diverged repeat and report mean/std."""
    spec = _spec_for("embeddings", variables)
    stats: list[tuple[float, ...]] = []
    for run in runs:
        if run.diverged:
            continue
        encoder_model = embed_train.export(run)
        try:
            design = mnl.assemble_design(train, spec, encoder_model)
            result = mnl.estimate(design)
            test_design = mnl.assemble_design(test, spec, encoder_model)
            tm = mnl.evaluate(result.beta, test_design, k=result.k)
            rm = result.train_metrics
            stats.append((rm.ll, rm.r2, rm.rbar2, rm.aic, tm.ll, tm.r2, tm.rbar2, tm.aic))
        except mnl.EstimationError:
            continue
    if not stats:
        empty = ComparisonRow(model="embeddings (mean)", n_params=None, note="failed: no usable repeats")
        return empty, ComparisonRow(model="embeddings (std)", n_params=None, note="")
    arr = np.array(stats)
    mean, std = arr.mean(axis=0), arr.std(axis=0, ddof=1 if len(stats) > 1 else 0)
    n_div = sum(r.diverged for r in runs)
    note = f"over {len(stats)} repeats" + (f", {n_div} diverged" if n_div else "")
    mean_row = ComparisonRow("embeddings (mean)", None, *mean, note=note)
    std_row = ComparisonRow("embeddings (std)", None, *std, note="")
    return mean_row, std_row


SCENARIO_VARIABLES = {"light": ("OD", "TICKET"), "bigdata": ("OD",)}


def run_sweep(
    config: ExperimentConfig,
    fractions: Sequence[float] | None = None,
    scenario: str | None = None,
    data: ChoiceDataset | None = None,
) -> list[SweepPoint]:
    """Data-efficiency sweep: encoders learned from the full non-test data
    restricted to the scenario variables (plus choice), choice models
    estimated on increasing fractions of the detailed survey."""
    if data is None:
        data = load_dataset(config)
    scenario = scenario or config.sweep_scenario
    if scenario not in SCENARIO_VARIABLES:
        raise DataError(f"unknown sweep scenario {scenario!r}")
    fractions = tuple(fractions) if fractions is not None else config.sweep_fractions
    if list(fractions) != sorted(set(fractions)) or any(not 0.0 < f <= 1.0 for f in fractions):
        raise DataError("sweep fractions must be strictly increasing within (0, 1]")

    train_idx, dev_idx, test_idx = split_indices(data.n, SplitSpec(config.ratios, config.seed))
    light_idx = np.sort(np.concatenate([train_idx, dev_idx]))
    light, dev, test = data.subset(light_idx), data.subset(dev_idx), data.subset(test_idx)

    variables = tuple(v for v in SCENARIO_VARIABLES[scenario] if v in config.encoding_k)
    if not variables:
        raise DataError(f"scenario {scenario!r} variables missing from encoding_k")
    encoding_set = EncodingSetSpec.from_data(data, {v: config.encoding_k[v] for v in variables})

    encoder_models: dict[str, enc_mod.EncoderModel] = {}
    if "embeddings" in config.roster:
        # Trained on the light survey only: categorical variables and the
        # choice target, no directly-fed covariates.
        net_config = embed_train.EmbeddingNetConfig(
            encoding_set=encoding_set,
            covariates=(),
            epochs=config.epochs,
            repeats=config.repeats,
            seed=config.seed,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            l2=config.l2,
            reg_weight=config.reg_weight,
        )
        best, _ = embed_train.run_repeats(net_config, light, dev)
        encoder_models["embeddings"] = embed_train.export(best)
    if "pca" in config.roster:
        encoder_models["pca"] = _pca_encoders(light, encoding_set)

    order = np.random.default_rng([config.seed, 7]).permutation(light.n)
    points: list[SweepPoint] = []
    for fraction in fractions:
        take = max(int(np.ceil(fraction * light.n)), 1)
        detailed = light.subset(np.sort(order[:take]))
        scores: dict[str, float | None] = {}
        notes: dict[str, str] = {}
        for model in config.roster:
            if model == "dummy_reduced" and all(v == "OD" for v in variables):
                notes[model] = "identical to original in this scenario"
                scores[model] = None
                continue
            spec = _spec_for(model, variables)
            if model in ("dummy_full", "dummy_reduced"):
                try:
                    encoder_model = _dummy_encoders(detailed, [v for v in variables if model == "dummy_full" or v != "OD"])
                except enc_mod.EncodingError as exc:
                    scores[model] = None
                    notes[model] = f"not estimable: {exc}"
                    continue
            elif model == "original":
                encoder_model = None
            else:
                encoder_model = encoder_models.get(model)
                if encoder_model is None:
                    continue
            row, _ = _estimate_and_score(
                model, spec, detailed, test, encoder_model,
                drop_deficient=model == "dummy_full",
            )
            if row.note.startswith("failed"):
                scores[model] = None
                notes[model] = f"not estimable: {row.note}"
            elif not np.isfinite(row.test_r2) or row.test_r2 < 0:
                scores[model] = None
                notes[model] = f"negative R2 ({row.test_r2:.3f})"
            else:
                scores[model] = float(row.test_r2)
                if row.note:
                    notes[model] = row.note
        points.append(SweepPoint(fraction=float(fraction), scores=scores, notes=notes))
    return points


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return f"{x:.4f}"


SUMMARY_FIELDS = (
    "model", "n_params", "train_ll", "train_r2", "train_rbar2", "train_aic",
    "test_ll", "test_r2", "test_rbar2", "test_aic", "note",
)


def summary_csv(rows: Sequence[ComparisonRow]) -> str:
    lines = [",".join(SUMMARY_FIELDS)]
    for r in rows:
        cells = [
            r.model,
            "" if r.n_params is None else str(r.n_params),
            _fmt(r.train_ll), _fmt(r.train_r2), _fmt(r.train_rbar2), _fmt(r.train_aic),
            _fmt(r.test_ll), _fmt(r.test_r2), _fmt(r.test_rbar2), _fmt(r.test_aic),
            f'"{r.note}"' if r.note else "",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_markdown(rows: Sequence[ComparisonRow]) -> str:
    head = (
        "| Model | #param | Train LL | R2 | Rbar2 | AIC | Test LL | R2 | Rbar2 | AIC | Note |\n"
        "|---|---|---|---|---|---|---|---|---|---|---|"
    )
    body = []
    for r in rows:
        body.append(
            f"| {r.model} | {r.n_params if r.n_params is not None else ''} "
            f"| {_fmt(r.train_ll)} | {_fmt(r.train_r2)} | {_fmt(r.train_rbar2)} | {_fmt(r.train_aic)} "
            f"| {_fmt(r.test_ll)} | {_fmt(r.test_r2)} | {_fmt(r.test_rbar2)} | {_fmt(r.test_aic)} "
            f"| {r.note} |"
        )
    return "\n".join([head, *body]) + "\n"


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    models = sorted({m for p in points for m in p.scores})
    lines = ["fraction," + ",".join(models)]
    for p in points:
        cells = [f"{p.fraction:.4f}"]
        for m in models:
            v = p.scores.get(m)
            cells.append("" if v is None else f"{v:.4f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def sweep_svg(points: Sequence[SweepPoint], width: int = 640, height: int = 480) -> str:
    """Line chart of test R2 against detailed-survey fraction."""
    models = sorted({m for p in points for m in p.scores})
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    values = [v for p in points for v in p.scores.values() if v is not None]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-9:
        hi = lo + 1.0
    pad = 55.0
    fracs = [p.fraction for p in points]
    fmin, fmax = min(fracs), max(fracs)
    span_f = max(fmax - fmin, 1e-9)

    def sx(f):
        return pad + (f - fmin) / span_f * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{width/2:.0f}" y="{height-15}" font-size="11" font-family="sans-serif" '
        f'text-anchor="middle">fraction of detailed survey</text>',
        f'<text x="15" y="{height/2:.0f}" font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 15 {height/2:.0f})" text-anchor="middle">test pseudo R2</text>',
    ]
    for i, m in enumerate(models):
        color = palette[i % len(palette)]
        pts = [
            (sx(p.fraction), sy(p.scores[m]))
            for p in points
            if p.scores.get(m) is not None
        ]
        if pts:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
            for x, y in pts:
                parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{width-pad+5:.0f}" y="{pad + 14*i:.0f}" font-size="10" '
            f'font-family="sans-serif" fill="{color}">{m}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_report(artifacts: ExperimentArtifacts, directory: str | Path) -> list[Path]:
    """Write summary, coefficient, projection, MDS, and sweep files plus a
    manifest. Returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = directory / name
        path.write_text(text)
        written.append(path)

    emit("summary.csv", summary_csv(artifacts.rows))
    emit("summary.md", summary_markdown(artifacts.rows))

    for model, result in artifacts.results.items():
        emit(f"coefficients_{model}.csv", mnl.format_coefficients(result, "csv"))
        emit(f"coefficients_{model}.md", mnl.format_coefficients(result, "md"))
        emit(f"result_{model}.json", mnl.result_to_json(result))

    significant_counts = {}
    for name, table in artifacts.projections.items():
        emit(f"projected_{name}.csv", projection.format_projection(table, "csv"))
        header = (
            f"{table.n_significant} statistically significant coefficients "
            f"(out of {len(table)})\n\n"
        )
        emit(f"projected_{name}.md", header + projection.format_projection(table, "md"))
        significant_counts[name] = {"significant": table.n_significant, "total": len(table)}

    if artifacts.best_run is not None:
        emit("encoders_embeddings.json", artifacts.encoder_models["embeddings"].to_json())
        trace_path = directory / "training_trace.csv"
        embed_train.save_trace(artifacts.best_run, trace_path)
        written.append(trace_path)
        for variable, enc in artifacts.encoder_models["embeddings"].encodings.items():
            layout = mds_mod.classical_mds(
                mds_mod.pairwise_distances(enc.matrix), dim=2, labels=enc.categories
            )
            emit(f"mds_{variable}.csv", mds_mod.layout_to_csv(layout))
            emit(f"mds_{variable}.svg", mds_mod.layout_to_svg(layout))

    if artifacts.sweep_points:
        emit("sweep.csv", sweep_csv(artifacts.sweep_points))
        emit("sweep.svg", sweep_svg(artifacts.sweep_points))

    manifest = {
        "config_hash": artifacts.config.config_hash(),
        "seed": artifacts.config.seed,
        "embedding_seeds": [r.seed for r in artifacts.runs],
        "diverged_runs": artifacts.n_diverged,
        "dataset_sha256": artifacts.dataset_sha,
        "filter_counts": artifacts.filter_counts,
        "split_sizes": artifacts.split_sizes,
        "significant_projected": significant_counts,
        "sweep": bool(artifacts.sweep_points)
        or "omitted: no sweep points were computed",
        "timings_s": {k: round(v, 3) for k, v in artifacts.timings.items()},
    }
    emit("manifest.json", json.dumps(manifest, indent=2))
    return written
