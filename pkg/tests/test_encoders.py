import numpy as np
import pytest

from dcembed.encoders import (
    CategoryMap,
    EncoderModel,
    EncodingError,
    VariableEncoding,
    encode,
    fit_dummy,
    fit_dummy_from_data,
    fit_pca,
    k_for_variance_share,
    select_k_by_variance,
)

from conftest import toy_dataset


def brute_force_pca(labels, categories, k):
    """Independent oracle: explicit one-hot loop, np.cov, np.linalg.eig.

    eig does not orthogonalize eigenvectors inside tied eigenspaces, so the
    selected columns are re-orthonormalized; with distinct eigenvalues this
    only touches signs.
    """
    d = len(categories)
    index = {c: i for i, c in enumerate(categories)}
    x = np.zeros((len(labels), d))
    for n, lab in enumerate(labels):
        x[n, index[lab]] = 1.0
    cov = np.cov(x, rowvar=False, ddof=1)
    evals, evecs = np.linalg.eig(cov)
    evals, evecs = evals.real, evecs.real
    order = np.argsort(-evals, kind="stable")
    components, _ = np.linalg.qr(evecs[:, order[:k]])
    means = x.mean(axis=0)
    return (np.eye(d) - means) @ components, evals[order]


def assert_equal_up_to_sign(a, b, atol=1e-8):
    assert a.shape == b.shape
    for j in range(a.shape[1]):
        direct = np.abs(a[:, j] - b[:, j]).max()
        flipped = np.abs(a[:, j] + b[:, j]).max()
        assert min(direct, flipped) < atol, f"column {j}: {min(direct, flipped)}"


class TestCategoryMap:
    def test_from_values_sorted_unique(self):
        cmap = CategoryMap.from_values("V", ["b", "a", "b", "c"])
        assert cmap.categories == ("a", "b", "c")
        assert cmap.index("b") == 1
        assert "c" in cmap and "z" not in cmap

    def test_unknown_label(self):
        cmap = CategoryMap.from_values("V", ["a", "b"])
        with pytest.raises(EncodingError, match="unknown category"):
            cmap.index("z")


class TestDummy:
    def test_three_categories(self):
        cmap = CategoryMap.from_values("V", ["a", "b", "c"])
        model = fit_dummy(cmap, base="a")
        enc = model.encoding("V")
        assert enc.row("a").tolist() == [0.0, 0.0]
        assert enc.row("b").tolist() == [1.0, 0.0]
        assert enc.row("c").tolist() == [0.0, 1.0]
        assert enc.metadata["columns"] == ["b", "c"]

    def test_two_categories_single_column(self):
        model = fit_dummy(CategoryMap.from_values("V", ["x", "y"]), base="x")
        assert model.encoding("V").k == 1

    def test_base_absent(self):
        with pytest.raises(EncodingError, match="base"):
            fit_dummy(CategoryMap.from_values("V", ["a", "b"]), base="q")

    def test_single_category_rejected(self):
        with pytest.raises(EncodingError, match="fewer than 2"):
            fit_dummy(CategoryMap.from_values("V", ["a"]), base="a")

    def test_base_is_most_frequent_in_training_data(self):
        data = toy_dataset({"V": ["a", "b", "b", "b", "c"]})
        model = fit_dummy_from_data(data, "V")
        assert model.encoding("V").metadata["base"] == "b"

    def test_round_trip_by_position(self):
        cmap = CategoryMap.from_values("V", list("abcd"))
        enc = fit_dummy(cmap, base="c").encoding("V")
        for cat in "abd":
            row = enc.row(cat)
            assert row.sum() == 1.0
            assert enc.metadata["columns"][int(np.argmax(row))] == cat


class TestPca:
    def test_matches_oracle_equal_frequencies(self):
        # equal frequencies tie the top two eigenvalues, so individual
        # eigenvectors are arbitrary within the eigenspace; the Gram matrix
        # of the encodings is the basis-free quantity to compare
        labels = ["a", "b", "c"] * 8
        data = toy_dataset({"V": labels})
        model = fit_pca(data, "V", k=2)
        expected, _ = brute_force_pca(labels, data.category_maps["V"].categories, 2)
        mine = model.encoding("V").matrix
        assert np.abs(mine @ mine.T - expected @ expected.T).max() < 1e-8

    def test_matches_oracle_five_categories(self):
        rng = np.random.default_rng(5)
        labels = list(rng.choice(list("abcde"), size=200, p=[0.4, 0.25, 0.15, 0.12, 0.08]))
        data = toy_dataset({"V": labels})
        for k in (1, 2, 3, 4):
            model = fit_pca(data, "V", k=k)
            expected, _ = brute_force_pca(labels, data.category_maps["V"].categories, k)
            assert_equal_up_to_sign(model.encoding("V").matrix, expected)

    def test_component_columns_orthonormal(self):
        rng = np.random.default_rng(6)
        data = toy_dataset({"V": list(rng.choice(list("abcd"), size=100))})
        model = fit_pca(data, "V", k=3)
        components = np.array(model.encoding("V").metadata["components"])
        gram = components.T @ components
        assert np.abs(gram - np.eye(3)).max() < 1e-8

    def test_full_k_reconstructs_centered_onehots(self):
        rng = np.random.default_rng(7)
        labels = list(rng.choice(list("abcd"), size=60))
        data = toy_dataset({"V": labels})
        cmap = data.category_maps["V"]
        model = fit_pca(data, "V", k=cmap.d)
        enc = model.encoding("V")
        components = np.array(enc.metadata["components"])
        means = np.array(enc.metadata["means"])
        reconstructed = enc.matrix @ components.T + means
        assert np.abs(reconstructed - np.eye(cmap.d)).max() < 1e-8

    def test_degenerate_single_observed_category(self):
        # frozen map has two categories but the training split sees only one
        data = toy_dataset({"V": ["a", "a", "b"]}).subset(np.array([0, 1]))
        with pytest.raises(EncodingError, match="degenerate"):
            fit_pca(data, "V", k=1)

    def test_k_out_of_range(self):
        data = toy_dataset({"V": ["a", "b", "a", "b"]})
        with pytest.raises(EncodingError, match="out of range"):
            fit_pca(data, "V", k=3)

    def test_choice_independence(self):
        # PCA is unsupervised: permuting the choice column changes nothing
        rng = np.random.default_rng(8)
        labels = list(rng.choice(list("abc"), size=90))
        a = toy_dataset({"V": labels}, choice=rng.integers(0, 3, size=90))
        b = toy_dataset({"V": labels}, choice=rng.permutation(a.choice))
        ma = fit_pca(a, "V", k=2).encoding("V").matrix
        mb = fit_pca(b, "V", k=2).encoding("V").matrix
        assert_equal_up_to_sign(ma, mb, atol=1e-12)


class TestVarianceSelector:
    def test_cumulative_examples(self):
        assert k_for_variance_share(np.array([0.5, 0.3, 0.2]), 0.9) == 3
        assert k_for_variance_share(np.array([0.95, 0.05]), 0.9) == 1
        assert k_for_variance_share(np.array([0.6, 0.3, 0.1]), 0.9) == 2

    def test_threshold_one_returns_rank(self):
        assert k_for_variance_share(np.array([0.7, 0.3, 0.0]), 1.0) == 2

    def test_threshold_validation(self):
        with pytest.raises(EncodingError):
            k_for_variance_share(np.array([1.0]), 0.0)
        with pytest.raises(EncodingError):
            k_for_variance_share(np.array([1.0]), 1.5)

    def test_on_data_rank_is_d_minus_one(self):
        rng = np.random.default_rng(9)
        data = toy_dataset({"V": list(rng.choice(list("abcd"), size=200))})
        # centered one-hot rows sum to zero, so the covariance rank is D-1
        assert select_k_by_variance(data, "V", 1.0) == 3


class TestEncode:
    def test_dummy_base_category_row_is_zero(self):
        data = toy_dataset({"V": ["a", "b", "c"]})
        model = fit_dummy(data.category_maps["V"], base="a")
        out = encode(model, data, "V")
        assert out[0].tolist() == [0.0, 0.0]
        assert out[1].tolist() == [1.0, 0.0]
        assert out[2].tolist() == [0.0, 1.0]

    def test_identity_slice_embedding_is_onehot_truncation(self):
        data = toy_dataset({"V": ["a", "b", "c"]})
        matrix = np.eye(3)[:, :2]
        model = EncoderModel(
            "embedding", {"V": VariableEncoding("V", ("a", "b", "c"), matrix)}
        )
        out = encode(model, data, "V")
        assert np.array_equal(out, np.eye(3)[:, :2])

    def test_pure_lookup(self):
        data = toy_dataset({"V": ["b", "a", "b"]})
        model = fit_pca(toy_dataset({"V": ["a", "b"] * 10}), "V", k=1)
        out = encode(model, data, "V")
        assert out[0] == out[2]

    def test_unseen_category_warns_and_zeroes(self):
        data = toy_dataset({"V": ["a", "z"]})
        model = fit_dummy(CategoryMap.from_values("V", ["a", "b"]), base="a")
        with pytest.warns(UserWarning, match="unseen"):
            out = encode(model, data, "V")
        assert out[1].tolist() == [0.0]


class TestSerialization:
    def test_bit_exact_round_trip(self):
        rng = np.random.default_rng(10)
        data = toy_dataset({"V": list(rng.choice(list("abcde"), size=120))})
        model = fit_pca(data, "V", k=3)
        restored = EncoderModel.from_json(model.to_json())
        before = encode(model, data, "V")
        after = encode(restored, data, "V")
        assert np.array_equal(before, after)
        assert before.tobytes() == after.tobytes()

    def test_merge_requires_same_kind(self):
        dummy = fit_dummy(CategoryMap.from_values("V", ["a", "b"]), base="a")
        pca = fit_pca(toy_dataset({"W": ["a", "b"] * 5}), "W", k=1)
        with pytest.raises(EncodingError, match="merge"):
            dummy.merge(pca)

    def test_missing_variable(self):
        model = EncoderModel("dummy")
        with pytest.raises(EncodingError, match="no dummy encoding"):
            model.encoding("V")
