import json

import numpy as np
import pytest

from dcembed.dataset import DataError
from dcembed.harness import (
    ComparisonRow,
    ExperimentConfig,
    export_report,
    run_comparison,
    run_sweep,
    summary_csv,
    summary_markdown,
    sweep_csv,
    sweep_svg,
)


def small_config(synth_file, **overrides):
    defaults = dict(
        data_path=str(synth_file),
        seed=11,
        epochs=6,
        repeats=3,
        roster=("original", "dummy_full", "dummy_reduced", "pca", "embeddings"),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def artifacts(synth_file, synth_data):
    config = small_config(synth_file)
    return run_comparison(config, data=synth_data)


class TestConfig:
    def test_from_toml(self, tmp_path, synth_file):
        text = f"""
[experiment]
data = "{synth_file}"
seed = 3
ratios = [0.6, 0.2, 0.2]
roster = ["original", "pca"]

[encoding_k]
OD = 3
WHO = 1

[training]
epochs = 4
repeats = 2
learning_rate = 5e-3

[sweep]
fractions = [0.5, 1.0]
scenario = "light"
"""
        path = tmp_path / "cfg.toml"
        path.write_text(text)
        config = ExperimentConfig.from_file(path)
        assert config.seed == 3
        assert config.roster == ("original", "pca")
        assert config.encoding_k == {"OD": 3, "WHO": 1}
        assert config.epochs == 4
        assert config.learning_rate == 5e-3
        assert config.sweep_fractions == (0.5, 1.0)

    def test_from_json(self, tmp_path, synth_file):
        payload = {"experiment": {"data": str(synth_file), "seed": 9}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(payload))
        assert ExperimentConfig.from_file(path).seed == 9

    def test_validation(self, synth_file):
        with pytest.raises(DataError):
            small_config(synth_file, roster=())
        with pytest.raises(DataError):
            small_config(synth_file, roster=("nope",))
        with pytest.raises(DataError):
            small_config(synth_file, sweep_fractions=(0.5, 0.5))
        with pytest.raises(DataError):
            small_config(synth_file, sweep_scenario="weird")

    def test_hash_stable_and_ignores_out_dir(self, synth_file):
        a = small_config(synth_file, out_dir="x")
        b = small_config(synth_file, out_dir="y")
        c = small_config(synth_file, seed=99)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()


class TestRunComparison:
    def test_row_cardinality_and_names(self, artifacts):
        names = [r.model for r in artifacts.rows]
        assert names == [
            "original",
            "dummy_full",
            "dummy_reduced",
            "pca",
            "embeddings (best)",
            "embeddings (mean)",
            "embeddings (std)",
        ]

    def test_parameter_counts_match_published_structure(self, artifacts):
        by_name = {r.model: r for r in artifacts.rows}
        assert by_name["original"].n_params == 14
        # synthetic cardinalities mirror the survey: TICKET 9, WHO 4,
        # AGE 5, INCOME 4 -> 42; K table 3/5/1/3/3 -> 39
        assert by_name["dummy_reduced"].n_params == 42
        assert by_name["pca"].n_params == 39
        assert by_name["embeddings (best)"].n_params == 39

    def test_metrics_populated_and_finite(self, artifacts):
        for row in artifacts.rows:
            if row.model == "embeddings (std)":
                continue
            if row.note.startswith("failed"):
                continue
            assert np.isfinite(row.train_ll)
            assert np.isfinite(row.test_ll)
            assert row.train_r2 > 0

    def test_mean_row_covers_non_diverged_repeats(self, artifacts):
        mean_row = next(r for r in artifacts.rows if r.model == "embeddings (mean)")
        assert "3 repeats" in mean_row.note
        assert artifacts.n_diverged == 0

    def test_split_sizes_recorded(self, artifacts, synth_data):
        sizes = artifacts.split_sizes
        assert sizes["train"] + sizes["dev"] + sizes["test"] == synth_data.n

    def test_projections_counted(self, artifacts):
        assert "embeddings" in artifacts.projections
        assert "pca" in artifacts.projections
        table = artifacts.projections["embeddings"]
        assert len(table) > 0
        assert 0 <= table.n_significant <= len(table)

    def test_determinism(self, synth_file, synth_data):
        config = small_config(synth_file)
        again = run_comparison(config, data=synth_data)
        first = run_comparison(config, data=synth_data)
        assert summary_csv(first.rows) == summary_csv(again.rows)


class TestExportReport:
    def test_files_written(self, artifacts, tmp_path):
        written = export_report(artifacts, tmp_path / "report")
        names = {p.name for p in written}
        assert {"summary.csv", "summary.md", "manifest.json"} <= names
        assert "coefficients_original.csv" in names
        assert "projected_embeddings.csv" in names
        assert "mds_OD.csv" in names and "mds_OD.svg" in names
        assert "encoders_embeddings.json" in names
        assert "training_trace.csv" in names
        # no sweep points -> no sweep files, manifest records the omission
        assert "sweep.csv" not in names
        manifest = json.loads((tmp_path / "report" / "manifest.json").read_text())
        assert "omitted" in manifest["sweep"]
        assert manifest["config_hash"] == artifacts.config.config_hash()
        assert manifest["split_sizes"] == artifacts.split_sizes

    def test_rerun_byte_identical_csvs(self, synth_file, synth_data, tmp_path):
        config = small_config(synth_file, roster=("original", "pca", "embeddings"))
        a = run_comparison(config, data=synth_data)
        b = run_comparison(config, data=synth_data)
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        export_report(a, dir_a)
        export_report(b, dir_b)
        for path_a in sorted(dir_a.iterdir()):
            if path_a.suffix == ".json" and path_a.name == "manifest.json":
                continue  # contains wall-clock timings
            path_b = dir_b / path_a.name
            assert path_b.exists(), path_a.name
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name


@pytest.fixture(scope="module")
def points(synth_file, synth_data):
    config = small_config(
        synth_file,
        roster=("original", "dummy_full", "pca", "embeddings"),
        epochs=6,
        repeats=2,
    )
    return run_sweep(config, fractions=(0.25, 1.0), scenario="light", data=synth_data)


class TestSweep:
    def test_point_structure(self, points):
        assert [p.fraction for p in points] == [0.25, 1.0]
        for p in points:
            assert set(p.scores) <= {"original", "dummy_full", "pca", "embeddings"}

    def test_full_fraction_uses_all_nontest_data(self, points, synth_data):
        # at fraction 1.0 every model should at least be estimable
        full = points[-1]
        assert full.scores.get("original") is not None or "original" in full.notes

    def test_absent_points_have_reasons(self, points):
        for p in points:
            for model, score in p.scores.items():
                if score is None:
                    assert model in p.notes

    def test_bigdata_scenario_runs(self, synth_file, synth_data):
        config = small_config(
            synth_file, roster=("original", "embeddings"), epochs=4, repeats=1
        )
        points = run_sweep(config, fractions=(1.0,), scenario="bigdata", data=synth_data)
        assert len(points) == 1

    def test_invalid_fractions(self, synth_file, synth_data):
        config = small_config(synth_file)
        with pytest.raises(DataError):
            run_sweep(config, fractions=(0.5, 0.2), data=synth_data)

    def test_csv_and_svg(self, points):
        csv = sweep_csv(points)
        assert csv.splitlines()[0].startswith("fraction,")
        svg = sweep_svg(points)
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


class TestSummaryFormats:
    def test_markdown_and_csv(self):
        rows = [
            ComparisonRow("m1", 3, -10.0, 0.1, 0.09, 26.0, -5.0, 0.08, 0.07, 16.0, ""),
            ComparisonRow("m2", None, note="failed: singular"),
        ]
        csv = summary_csv(rows)
        assert csv.splitlines()[1].startswith("m1,3,")
        assert '"failed: singular"' in csv
        md = summary_markdown(rows)
        assert "| m1 | 3 |" in md
