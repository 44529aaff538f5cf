import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from morphlex.embeddings import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    NgramTable,
    extend_with_oov,
    length_normalize,
    load_embeddings,
    load_embeddings_file,
    load_ngram_table,
    mean_center,
    ngram_decompose,
    preprocess,
    save_embeddings,
    save_embeddings_file,
    synthesize_oov,
    truncate_vocab,
)

from helpers import matrix


def load(text):
    return load_embeddings(io.StringIO(text))


class TestLoad:
    def test_two_rows(self):
        m = load("2 3\ncat 1 0 0\ndog 0 1 0\n")
        assert m.words == ("cat", "dog")
        assert m.vectors.shape == (2, 3)
        assert m.rank_of("cat") == 0
        np.testing.assert_array_equal(m.vector("dog"), [0, 1, 0])

    def test_dimension_mismatch_names_line(self):
        with pytest.raises(EmbeddingFormatError, match="line 2: dimensionality mismatch"):
            load("1 2\na 1 2 3\n")

    def test_duplicate_keeps_first(self):
        m = load("3 2\ncat 1 0\ndog 0 1\ncat 5 5\n")
        assert m.words == ("cat", "dog")
        assert m.duplicates == 1
        np.testing.assert_array_equal(m.vector("cat"), [1, 0])

    @pytest.mark.parametrize("text, line", [
        ("x y\n", 1),
        ("2\n", 1),
        ("1 2\na 1 b\n", 2),
        ("2 2\na 1 2\nb 1\n", 3),
    ])
    def test_malformed(self, text, line):
        with pytest.raises(EmbeddingFormatError) as err:
            load(text)
        assert err.value.line == line

    def test_round_trip_six_digits(self, tmp_path):
        m = matrix("w", [[0.123456789, -2.0], [1e-7, 3.5]])
        path = tmp_path / "e.txt"
        save_embeddings_file(m, path)
        text = path.read_text()
        assert text.splitlines()[1] == "w0 0.123457 -2"
        back = load_embeddings_file(path)
        np.testing.assert_allclose(back.vectors, m.vectors, rtol=1e-5)

    def test_oov_flags_survive_sidecar(self, tmp_path):
        m = matrix("w", np.eye(3), oov=[False, False, True])
        path = tmp_path / "e.txt"
        save_embeddings_file(m, path)
        assert load_embeddings_file(path).oov.tolist() == [False, False, True]

    def test_matrix_is_immutable(self):
        m = matrix("w", np.eye(2))
        with pytest.raises(ValueError):
            m.vectors[0, 0] = 3.0


class TestNormalization:
    def test_three_four_five(self):
        m = length_normalize(matrix("w", [[3.0, 4.0]]))
        np.testing.assert_allclose(m.vectors, [[0.6, 0.8]])

    def test_zero_row_kept_and_counted(self):
        m = length_normalize(matrix("w", [[0.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(m.vectors, [[0, 0], [1, 0]])
        assert m.zero_rows == 1

    def test_unit_row_unchanged(self):
        m = length_normalize(matrix("w", [[1.0, 0.0]]))
        np.testing.assert_array_equal(m.vectors, [[1, 0]])

    def test_mean_center_examples(self):
        np.testing.assert_allclose(mean_center(matrix("w", [[1, 0], [3, 0]])).vectors, [[-1, 0], [1, 0]])
        np.testing.assert_allclose(mean_center(matrix("w", [[5, 5]])).vectors, [[0, 0]])
        centered = matrix("w", [[-1.0, 2.0], [1.0, -2.0]])
        np.testing.assert_allclose(mean_center(centered).vectors, centered.vectors, atol=1e-12)

    def test_mean_center_empty(self):
        with pytest.raises(ValueError):
            mean_center(EmbeddingMatrix((), np.zeros((0, 2))))

    def test_mean_ignores_oov_rows(self):
        m = matrix("w", [[1.0, 0.0], [3.0, 0.0], [100.0, 0.0]], oov=[False, False, True])
        np.testing.assert_allclose(mean_center(m).vectors, [[-1, 0], [1, 0], [98, 0]])

    def test_default_pipeline_gives_unit_rows(self):
        rng = np.random.default_rng(3)
        m = preprocess(matrix("w", rng.normal(size=(20, 4)) + 2.0))
        np.testing.assert_allclose(np.linalg.norm(m.vectors, axis=1), 1.0, atol=1e-12)

    def test_unknown_pipeline(self):
        with pytest.raises(ValueError, match="unknown preprocessing"):
            preprocess(matrix("w", np.eye(2)), "whiten")


finite_rows = arrays(
    np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)),
    elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
)


@settings(max_examples=60, deadline=None)
@given(finite_rows)
def test_length_normalize_idempotent(vectors):
    once = length_normalize(matrix("w", vectors))
    twice = length_normalize(once)
    np.testing.assert_allclose(twice.vectors, once.vectors, atol=1e-12, rtol=0)
    norms = np.linalg.norm(once.vectors, axis=1)
    nonzero = np.linalg.norm(vectors, axis=1) > 0
    np.testing.assert_allclose(norms[nonzero], 1.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(finite_rows)
def test_mean_center_zero_mean(vectors):
    out = mean_center(matrix("w", vectors))
    np.testing.assert_allclose(out.vectors.mean(axis=0), 0.0, atol=1e-9)


class TestTruncate:
    def test_first_rows(self):
        m = matrix("w", np.arange(10.0).reshape(5, 2))
        t = truncate_vocab(m, 2)
        assert t.words == ("w0", "w1")
        assert all(t.rank_of(w) == m.rank_of(w) for w in t.words)

    def test_clamped(self):
        m = matrix("w", np.eye(3))
        assert truncate_vocab(m, 200_000) is m

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            truncate_vocab(matrix("w", np.eye(2)), 0)


class TestNgrams:
    def test_examples(self):
        assert ngram_decompose("ab", 3, 3) == ["<ab", "ab>"]
        assert ngram_decompose("a", 3, 3) == ["<a>"]
        assert ngram_decompose("a", 5, 6) == ["<a>"]

    def test_space_is_a_character(self):
        # hand enumeration of the 2-grams of "<aa a>"
        assert ngram_decompose("aa a", 2, 2) == ["<a", "aa", "a ", " a", "a>"]

    def test_shortest_first_duplicates_kept(self):
        assert ngram_decompose("aa", 1, 2) == ["<", "a", "a", ">", "<a", "aa", "a>"]

    def test_empty_form(self):
        with pytest.raises(ValueError):
            ngram_decompose("", 3, 6)

    @settings(max_examples=100, deadline=None)
    @given(st.text(min_size=1, max_size=12), st.integers(1, 6), st.integers(0, 4))
    def test_gram_lengths(self, form, n_min, extra):
        n_max = n_min + extra
        marked = f"<{form}>"
        for g in ngram_decompose(form, n_min, n_max):
            assert n_min <= len(g) <= n_max or (g == marked and len(marked) < n_min)


class TestSynthesis:
    def test_single_gram(self):
        table = NgramTable({"<a>": np.array([1.0, 0.0])}, 3, 3)
        out = synthesize_oov("a", table)
        np.testing.assert_array_equal(out.vector, [1, 0])
        assert out.covered and out.missing == 0

    def test_two_grams(self):
        table = NgramTable({"<ab": np.array([1.0, 0.0]), "ab>": np.array([0.0, 1.0])}, 3, 3)
        np.testing.assert_array_equal(synthesize_oov("ab", table).vector, [1, 1])

    def test_uncovered(self):
        table = NgramTable({"zzz": np.array([1.0, 0.0])}, 3, 3)
        out = synthesize_oov("ab", table)
        np.testing.assert_array_equal(out.vector, [0, 0])
        assert not out.covered and out.missing == 2

    @settings(max_examples=80, deadline=None)
    @given(st.text(alphabet="abc", min_size=1, max_size=8), st.integers(0, 2**32 - 1))
    def test_equals_brute_force_sum(self, form, seed):
        rng = np.random.default_rng(seed)
        alphabet = "<>abc"
        keys = {"".join(rng.choice(list(alphabet), size=n)) for n in (2, 3, 3, 4) for _ in range(12)}
        table = NgramTable({k: rng.normal(size=3) for k in keys}, 2, 4)
        expected = np.zeros(3)
        marked = f"<{form}>"
        for n in range(2, 5):
            for i in range(len(marked) - n + 1):
                g = marked[i:i + n]
                if g in table.grams:
                    expected = expected + table.grams[g]
        np.testing.assert_array_equal(synthesize_oov(form, table).vector, expected)


class TestExtend:
    table = NgramTable({"<ab": np.array([1.0, 0.0]), "ab>": np.array([0.0, 1.0])}, 3, 3)

    def test_appends_flagged_row(self):
        m = matrix("w", [[1.0, 0.0], [0.0, 1.0]])
        ext, skipped = extend_with_oov(m, ["ab"], self.table)
        assert len(ext) == 3 and skipped == 0
        assert ext.oov.tolist() == [False, False, True]
        np.testing.assert_array_equal(ext.vector("ab"), synthesize_oov("ab", self.table).vector)

    def test_existing_form_skipped(self):
        m = matrix("w", [[1.0, 0.0], [0.0, 1.0]])
        ext, skipped = extend_with_oov(m, ["w1"], self.table)
        assert ext is m and skipped == 1

    def test_dimension_mismatch(self):
        m = matrix("w", np.eye(3))
        with pytest.raises(ValueError, match="dimension"):
            extend_with_oov(m, ["ab"], self.table)

    def test_table_file(self, tmp_path):
        path = tmp_path / "grams.txt"
        path.write_text("2 2\n<ab 1 0\nab> 0 1\n")
        (tmp_path / "grams.txt.meta").write_text("3 3\n")
        table = load_ngram_table(path)
        assert (table.n_min, table.n_max) == (3, 3)
        np.testing.assert_array_equal(synthesize_oov("ab", table).vector, [1, 1])


def test_writer_stream():
    buf = io.StringIO()
    save_embeddings(matrix("w", [[1.0, 2.0]]), buf)
    assert buf.getvalue() == "1 2\nw0 1 2\n"
