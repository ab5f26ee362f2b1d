"""Command-line entry points for the pipeline stages.

Every command prints a reproducibility banner (a hash of the effective
configuration plus the seed) and honors ``--seed``. Output directories can
be overridden globally with the DCEMBED_OUT environment variable.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import embed_train, encoders as enc_mod, harness, mds as mds_mod, mnl, projection
from .dataset import (
    BASE_NUMERIC_FEATURES,
    DEFAULT_ENCODING_K,
    DEFAULT_FILTERS,
    ChoiceDataset,
    EncodingSetSpec,
    SplitSpec,
    filter_and_derive,
    load_raw,
    split_indices,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


def _banner(command: str, payload: dict, seed: int | None) -> None:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    digest = hashlib.sha256(blob).hexdigest()[:16]
    click.echo(f"# dcembed {command} | config_hash={digest} seed={seed}")


def _out_dir(value: str | None, default: str) -> Path:
    override = os.environ.get("DCEMBED_OUT")
    path = Path(override) if override else Path(value) if value else Path(default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise click.UsageError("--ratios needs three comma-separated numbers")
    return tuple(parts)  # type: ignore[return-value]


def _load_prepared(directory: str) -> tuple[ChoiceDataset, dict[str, np.ndarray]]:
    data, splits = ChoiceDataset.load(directory)
    if splits is None:
        raise click.ClickException(f"{directory} has no stored splits; run `dcembed prepare`")
    return data, splits


def _spec_by_name(name: str, data: ChoiceDataset, k_table: dict[str, int]) -> mnl.UtilitySpec:
    if name == "base14":
        return mnl.base_specification()
    if name == "full":
        variables = [v for v in k_table if v in data.category_maps]
        return mnl.with_encoding_set(mnl.base_specification(), variables)
    return spec_from_toml(name)


def spec_from_toml(path: str | Path) -> mnl.UtilitySpec:
    """Utility specification from a TOML file with [[term]]/[[categorical]]."""
    raw = tomllib.loads(Path(path).read_text())
    terms = []
    for t in raw.get("term", []):
        features = tuple((int(a), str(f)) for a, f in t["features"])
        terms.append(mnl.Term(t["label"], features, bool(t.get("shared", True))))
    cats = tuple(
        mnl.CategoricalTerm(c["variable"], tuple(int(a) for a in c["alternatives"]))
        for c in raw.get("categorical", [])
    )
    return mnl.UtilitySpec(
        tuple(terms),
        cats,
        n_alternatives=int(raw.get("n_alternatives", 3)),
        alt_names=tuple(raw.get("alt_names", mnl.ALTERNATIVES)),
    )


@click.group(no_args_is_help=False)
def cli() -> None:
    """Supervised category embeddings and multinomial logit models."""


@cli.command()
@click.option("--input", "input_path", required=True, help="Raw survey file (tab/comma separated).")
@click.option("--out", "out", default=None, help="Output directory for the prepared dataset.")
@click.option("--seed", default=0, show_default=True, help="Split shuffle seed.")
@click.option("--ratios", default="0.6,0.2,0.2", show_default=True, help="train,dev,test ratios.")
@click.option(
    "--filters",
    default=",".join(DEFAULT_FILTERS),
    show_default=True,
    help="Comma-separated row filter rules.",
)
def prepare(input_path: str, out: str | None, seed: int, ratios: str, filters: str) -> None:
    """Ingest, filter, derive features, and write a split dataset."""
    ratio_tuple = _parse_ratios(ratios)
    filter_tuple = tuple(f for f in filters.split(",") if f)
    _banner("prepare", {"input": input_path, "ratios": ratio_tuple, "filters": filter_tuple}, seed)
    data = filter_and_derive(load_raw(input_path), filters=filter_tuple)
    train_idx, dev_idx, test_idx = split_indices(data.n, SplitSpec(ratio_tuple, seed))
    directory = _out_dir(out, "prepared")
    data.save(directory, splits={"train": train_idx, "dev": dev_idx, "test": test_idx})
    click.echo(
        f"prepared {data.n} observations "
        f"(train {len(train_idx)}, dev {len(dev_idx)}, test {len(test_idx)}) -> {directory}"
    )
    for rule, count in data.filter_counts.items():
        click.echo(f"  filter {rule}: {count}")


@cli.command("train-embeddings")
@click.option("--data", "data_dir", required=True, help="Prepared dataset directory.")
@click.option("--config", "config_path", default=None, help="TOML with [training] and [encoding_k].")
@click.option("--repeats", default=None, type=int, help="Override number of repeats.")
@click.option("--epochs", default=None, type=int, help="Override training epochs.")
@click.option("--seed", default=None, type=int, help="Override base seed.")
@click.option("--out", default=None, help="Output directory.")
def train_embeddings(
    data_dir: str,
    config_path: str | None,
    repeats: int | None,
    epochs: int | None,
    seed: int | None,
    out: str | None,
) -> None:
    """Train the embedding network and export the learned encoders."""
    data, splits = _load_prepared(data_dir)
    file_cfg: dict = {}
    k_table = dict(DEFAULT_ENCODING_K)
    if config_path:
        raw = tomllib.loads(Path(config_path).read_text())
        file_cfg = raw.get("training", {})
        if "encoding_k" in raw:
            k_table = {k: int(v) for k, v in raw["encoding_k"].items()}
    k_table = {k: v for k, v in k_table.items() if k in data.category_maps}
    net_config = embed_train.EmbeddingNetConfig(
        encoding_set=EncodingSetSpec.from_data(data, k_table),
        covariates=tuple(file_cfg.get("covariates", BASE_NUMERIC_FEATURES)),
        epochs=epochs if epochs is not None else int(file_cfg.get("epochs", 80)),
        repeats=repeats if repeats is not None else int(file_cfg.get("repeats", 30)),
        seed=seed if seed is not None else int(file_cfg.get("seed", 0)),
        learning_rate=float(file_cfg.get("learning_rate", 1e-3)),
        batch_size=int(file_cfg.get("batch_size", 128)),
        l2=float(file_cfg.get("l2", 1e-4)),
        reg_weight=float(file_cfg.get("reg_weight", 1.0)),
    )
    _banner(
        "train-embeddings",
        {"data": data_dir, "k": k_table, "epochs": net_config.epochs, "repeats": net_config.repeats},
        net_config.seed,
    )
    train = data.subset(splits["train"])
    dev = data.subset(splits["dev"])
    best, runs = embed_train.run_repeats(net_config, train, dev)
    directory = _out_dir(out, "embeddings")
    embed_train.export(best).save(directory / "encoders.json")
    embed_train.save_trace(best, directory / "trace.csv")
    (directory / "params.json").write_text(embed_train.params_to_json(best.params))
    diverged = sum(r.diverged for r in runs)
    click.echo(
        f"best run: seed={best.seed} dev_ll={best.dev_ll:.3f} "
        f"({len(runs)} runs, {diverged} diverged) -> {directory}"
    )


@cli.command()
@click.option("--data", "data_dir", required=True, help="Prepared dataset directory.")
@click.option(
    "--encoding",
    type=click.Choice(["dummy", "pca", "embedding"]),
    default=None,
    help="Encoder kind for categorical terms (omit for specs without them).",
)
@click.option("--spec", "spec_name", default="base14", show_default=True,
              help="base14, full, or a TOML utility spec file.")
@click.option("--encoders", "encoders_path", default=None,
              help="Encoder JSON (required for --encoding embedding).")
@click.option("--seed", default=0, show_default=True, help="Seed recorded in the banner.")
@click.option("--format", "fmt", type=click.Choice(["md", "csv", "json"]), default="md",
              show_default=True)
@click.option("--out", default=None, help="Directory for the result JSON (optional).")
def estimate(
    data_dir: str,
    encoding: str | None,
    spec_name: str,
    encoders_path: str | None,
    seed: int,
    fmt: str,
    out: str | None,
) -> None:
    """Estimate an MNL on the train split and print its coefficient table."""
    data, splits = _load_prepared(data_dir)
    _banner("estimate", {"data": data_dir, "encoding": encoding, "spec": spec_name}, seed)
    spec = _spec_by_name(spec_name, data, dict(DEFAULT_ENCODING_K))
    train = data.subset(splits["train"])
    test = data.subset(splits["test"])
    encoder_model = None
    if spec.categoricals:
        variables = [ct.variable for ct in spec.categoricals]
        if encoding == "dummy" or encoding is None:
            encoder_model = harness._dummy_encoders(train, variables)
        elif encoding == "pca":
            k_table = {v: DEFAULT_ENCODING_K[v] for v in variables}
            encoder_model = harness._pca_encoders(
                train, EncodingSetSpec.from_data(data, k_table)
            )
        else:
            if not encoders_path:
                raise click.UsageError("--encoding embedding requires --encoders")
            encoder_model = enc_mod.EncoderModel.load(encoders_path)
    design = mnl.assemble_design(train, spec, encoder_model,
                                 drop_deficient=encoding == "dummy" and "OD" in
                                 [ct.variable for ct in spec.categoricals])
    result = mnl.estimate(design)
    test_design = mnl.assemble_design(test, spec, encoder_model) if not result.dropped else None
    click.echo(mnl.format_coefficients(result, fmt))
    tm = result.train_metrics
    click.echo(
        f"train: LL={tm.ll:.3f} LL0={tm.ll0:.1f} R2={tm.r2:.4f} "
        f"Rbar2={tm.rbar2:.4f} AIC={tm.aic:.3f} k={tm.k}"
    )
    if test_design is not None:
        em = mnl.evaluate(result.beta, test_design, k=result.k)
        click.echo(f"test:  LL={em.ll:.3f} R2={em.r2:.4f} Rbar2={em.rbar2:.4f} AIC={em.aic:.3f}")
    if out:
        directory = _out_dir(out, "estimate")
        (directory / "result.json").write_text(mnl.result_to_json(result))
        click.echo(f"wrote {directory / 'result.json'}")


@cli.command()
@click.option("--result", "result_path", required=True, help="Estimation result JSON.")
@click.option("--encoders", "encoders_path", required=True, help="Encoder JSON.")
@click.option("--independent", is_flag=True,
              help="Propagate variances assuming independent coefficients.")
@click.option("--filtered", is_flag=True, help="Only significant rows with |coef| > min-abs.")
@click.option("--min-abs", default=0.05, show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Seed recorded in the banner.")
@click.option("--format", "fmt", type=click.Choice(["md", "csv", "json"]), default="md",
              show_default=True)
def project(
    result_path: str,
    encoders_path: str,
    independent: bool,
    filtered: bool,
    min_abs: float,
    alpha: float,
    seed: int,
    fmt: str,
) -> None:
    """Project encoded coefficients back to per-category (dummy) space."""
    _banner("project", {"result": result_path, "independent": independent}, seed)
    result = mnl.result_from_json(Path(result_path).read_text())
    encoder_model = enc_mod.EncoderModel.load(encoders_path)
    table = projection.project_all(result, encoder_model, independent=independent, alpha=alpha)
    click.echo(f"# {table.n_significant} significant of {len(table)} projected coefficients")
    if filtered:
        table = projection.filter_report(table, min_abs=min_abs, alpha=alpha)
    click.echo(projection.format_projection(table, fmt))


@cli.command()
@click.option("--encoders", "encoders_path", required=True, help="Encoder JSON.")
@click.option("--variable", required=True, help="Encoded variable to lay out.")
@click.option("--seed", default=0, show_default=True, help="Seed recorded in the banner.")
@click.option("--out", default=None, help="Output directory for CSV + SVG.")
def mds(encoders_path: str, variable: str, seed: int, out: str | None) -> None:
    """2D layout of a variable's embedding vectors via classical MDS."""
    _banner("mds", {"encoders": encoders_path, "variable": variable}, seed)
    encoder_model = enc_mod.EncoderModel.load(encoders_path)
    enc = encoder_model.encoding(variable)
    layout = mds_mod.classical_mds(
        mds_mod.pairwise_distances(enc.matrix), dim=2, labels=enc.categories
    )
    directory = _out_dir(out, "mds")
    mds_mod.save_layout(layout, directory / f"mds_{variable}.csv", directory / f"mds_{variable}.svg")
    click.echo(f"stress={layout.stress:.3e} -> {directory / f'mds_{variable}.csv'}")


def _experiment_config(
    config_path: str, seed: int | None, out: str | None, data: str | None
) -> harness.ExperimentConfig:
    config = harness.ExperimentConfig.from_file(config_path)
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out_dir"] = out
    if data is not None:
        updates["data_path"] = data
    if updates:
        from dataclasses import replace

        config = replace(config, **updates)
    return config


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment TOML/JSON config.")
@click.option("--seed", default=None, type=int, help="Override the experiment seed.")
@click.option("--out", default=None, help="Override the output directory.")
@click.option("--data", default=None, help="Override the dataset path.")
def experiment(config_path: str, seed: int | None, out: str | None, data: str | None) -> None:
    """One-shot reproduction: comparison table plus all report artifacts."""
    config = _experiment_config(config_path, seed, out, data)
    _banner("experiment", {"hash": config.config_hash()}, config.seed)
    artifacts = harness.run_comparison(config)
    directory = _out_dir(config.out_dir, "experiment_out")
    harness.export_report(artifacts, directory)
    click.echo(harness.summary_markdown(artifacts.rows))
    click.echo(f"report -> {directory}")
    if artifacts.fatal_failures:
        raise click.ClickException(f"models failed to estimate: {artifacts.fatal_failures}")


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment TOML/JSON config.")
@click.option("--scenario", type=click.Choice(["light", "bigdata"]), default=None)
@click.option("--fractions", default=None, help="Comma-separated fractions in (0, 1].")
@click.option("--seed", default=None, type=int, help="Override the experiment seed.")
@click.option("--out", default=None, help="Override the output directory.")
@click.option("--data", default=None, help="Override the dataset path.")
def sweep(
    config_path: str,
    scenario: str | None,
    fractions: str | None,
    seed: int | None,
    out: str | None,
    data: str | None,
) -> None:
    """Survey-split data-efficiency sweep."""
    config = _experiment_config(config_path, seed, out, data)
    fraction_tuple = (
        tuple(float(f) for f in fractions.split(",")) if fractions else None
    )
    _banner("sweep", {"hash": config.config_hash(), "scenario": scenario}, config.seed)
    points = harness.run_sweep(config, fractions=fraction_tuple, scenario=scenario)
    directory = _out_dir(config.out_dir, "sweep_out")
    (directory / "sweep.csv").write_text(harness.sweep_csv(points))
    (directory / "sweep.svg").write_text(harness.sweep_svg(points))
    click.echo(harness.sweep_csv(points))
    click.echo(f"report -> {directory}")


def dispatch(argv: list[str]) -> int:
    """Run the CLI programmatically; returns the process exit code."""
    try:
        cli(args=list(argv), prog_name="dcembed", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return int(exc.exit_code)
    except Exception as exc:  # runtime failure contract: message on stderr, exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
