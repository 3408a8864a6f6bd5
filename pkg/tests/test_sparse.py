import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from helpers import FIG1
from selinv.sparse import (
    CoordMatrix, CSCMatrix, MatrixMarketError, PatternError, SparsityPattern, build_shifted,
    coord_to_csc, pattern_of, read_matrix_market, symmetrize_pattern, write_matrix_market,
)


def _write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestReadMatrixMarket:
    def test_identity(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n")
        m = read_matrix_market(p)
        assert m.n == 3 and m.nnz == 3
        assert np.all(m.values == 1.0)
        assert m.symmetric

    def test_out_of_range(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n3 3 1\n2 5 1.0\n")
        with pytest.raises(MatrixMarketError, match=r"\(2,5\)"):
            read_matrix_market(p)

    def test_fig1_fixture(self):
        m = read_matrix_market(FIG1)
        assert m.n == 29
        assert m.symmetric
        assert np.all(m.rows >= m.cols)

    def test_pattern_file_rejected(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate pattern symmetric\n2 2 1\n1 1\n")
        with pytest.raises(MatrixMarketError, match="pattern"):
            read_matrix_market(p)

    @pytest.mark.parametrize("header", [
        "%%MatrixMarket matrix array real general",
        "%MatrixMarket matrix coordinate real general",
        "%%MatrixMarket matrix coordinate real",
        "%%MatrixMarket matrix coordinate real hermitian",
    ])
    def test_bad_header(self, tmp_path, header):
        p = _write(tmp_path, header + "\n1 1 1\n1 1 1\n")
        with pytest.raises(MatrixMarketError):
            read_matrix_market(p)

    def test_entry_count_mismatch(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n2 2 1\n")
        with pytest.raises(MatrixMarketError, match="expected 3"):
            read_matrix_market(p)

    def test_complex_entries(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate complex symmetric\n"
                             "% a comment\n2 2 2\n1 1 1.5 -2\n2 1 0 1\n")
        m = read_matrix_market(p)
        assert m.is_complex
        assert m.values[0] == 1.5 - 2j and m.values[1] == 1j
        assert m.comments == [" a comment"]

    def test_upper_entries_moved_to_lower(self, tmp_path):
        p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n3 3 1\n1 3 7\n")
        m = read_matrix_market(p)
        assert (m.rows[0], m.cols[0]) == (2, 0)

    def test_round_trip(self, tmp_path):
        m = read_matrix_market(FIG1)
        out = tmp_path / "copy.mtx"
        write_matrix_market(out, m)
        m2 = read_matrix_market(out)
        a = set(zip(m.rows.tolist(), m.cols.tolist(), m.values.tolist()))
        b = set(zip(m2.rows.tolist(), m2.cols.tolist(), m2.values.tolist()))
        assert a == b

    def test_round_trip_complex(self, tmp_path):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        m = CoordMatrix(3, np.array([0, 1, 2, 2]), np.array([0, 0, 1, 2]), v)
        out = tmp_path / "c.mtx"
        write_matrix_market(out, m)
        m2 = read_matrix_market(out)
        assert np.array_equal(m2.values, v)


class TestCoordToCSC:
    def test_duplicates_summed(self):
        m = CoordMatrix(1, np.array([0, 0]), np.array([0, 0]), np.array([2.0, 3.0]))
        A = coord_to_csc(m)
        assert A.nnz == 1 and A.values[0] == 5.0

    def test_empty(self):
        m = CoordMatrix(4, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        A = coord_to_csc(m)
        assert A.colptr.tolist() == [0, 0, 0, 0, 0]

    def test_random_matches_dense_accumulation(self):
        rng = np.random.default_rng(11)
        rows = rng.integers(0, 8, 20)
        cols = rng.integers(0, 8, 20)
        vals = rng.standard_normal(20)
        A = coord_to_csc(CoordMatrix(8, rows, cols, vals, symmetric=False))
        ref = np.zeros((8, 8))
        for i, j, v in zip(rows, cols, vals):
            ref[i, j] += v
        assert np.allclose(A.to_dense(), ref, rtol=0, atol=1e-15)
        for j in range(8):
            r, _ = A.column(j)
            assert np.all(np.diff(r) > 0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.floats(-10, 10)),
                    max_size=30))
    def test_mass_preserved(self, trip):
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=float)
        A = coord_to_csc(CoordMatrix(6, rows, cols, vals, symmetric=False))
        dense = A.to_dense()
        for (i, j) in set(zip(rows.tolist(), cols.tolist())):
            expected = vals[(rows == i) & (cols == j)].sum()
            assert dense[i, j] == pytest.approx(expected, abs=1e-12)


class TestBuildShifted:
    def test_zero_shift(self):
        I3 = CSCMatrix.identity(3)
        A = build_shifted(I3, I3, 0)
        assert np.array_equal(A.to_dense(), np.eye(3))

    def test_real_shift(self):
        I3 = CSCMatrix.identity(3)
        A = build_shifted(I3, I3, 2)
        assert np.array_equal(A.to_dense(), -np.eye(3))

    def test_implicit_identity(self):
        H = CSCMatrix.from_dense(np.array([[2.0, 1.0], [1.0, 3.0]]))
        A = build_shifted(H, None, 0.5j)
        assert np.allclose(A.to_dense(), [[2 - 0.5j, 1], [1, 3 - 0.5j]])

    def test_random_complex_matches_dense(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((6, 6)) * (rng.random((6, 6)) < 0.5)
        H = M + M.T + 10 * np.eye(6)
        S = np.where(H != 0, rng.standard_normal((6, 6)), 0.0)
        S = np.tril(S) + np.tril(S, -1).T
        z = 0.3 + 0.1j
        A = build_shifted(CSCMatrix.from_dense(H), CSCMatrix.from_dense(S), z)
        ref = H - z * S
        assert np.allclose(A.to_dense(), ref, rtol=0, atol=1e-15)
        assert A.nnz == CSCMatrix.from_dense(H).nnz

    def test_zero_shift_values_exact(self):
        rng = np.random.default_rng(1)
        H = CSCMatrix.from_dense(np.tril(rng.standard_normal((5, 5))) + 5 * np.eye(5))
        A = build_shifted(H, None, 0)
        assert np.array_equal(A.values, H.values)

    def test_pattern_violation(self):
        H = CSCMatrix.identity(3)
        S = CSCMatrix.from_dense(np.array([[1.0, 0, 0], [1.0, 1, 0], [0, 0, 1]]))
        with pytest.raises(PatternError) as err:
            build_shifted(H, S, 1.0)
        assert (err.value.row, err.value.col) == (1, 0)


class TestSymmetrizePattern:
    def test_lower_entry(self):
        A = CSCMatrix(2, np.array([0, 1, 1]), np.array([1]), np.array([1.0]), symmetric=False)
        p = symmetrize_pattern(A)
        assert p.entries() == {(0, 1), (1, 0)}

    def test_diagonal_kept_as_stored(self):
        A = CSCMatrix.from_dense(np.array([[1.0, 0], [2.0, 0]]), symmetric=False)
        assert symmetrize_pattern(A).entries() == {(0, 0), (0, 1), (1, 0)}
        assert pattern_of(A).entries() == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_fixed_point(self):
        d = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
        A = CSCMatrix.from_dense(d, symmetric=False)
        assert symmetrize_pattern(A).entries() == SparsityPattern.from_dense(d).entries()

    def test_random_matches_boolean_or(self):
        rng = np.random.default_rng(3)
        d = (rng.random((10, 10)) < 0.25) * rng.standard_normal((10, 10))
        A = CSCMatrix.from_dense(d, symmetric=False)
        ref = (d != 0) | (d.T != 0)
        assert np.array_equal(symmetrize_pattern(A).to_dense(), ref)
        assert symmetrize_pattern(A).is_symmetric()

    def test_symmetric_storage_expanded(self):
        A = CSCMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert A.nnz == 3
        assert symmetrize_pattern(A).entries() == {(0, 0), (0, 1), (1, 0), (1, 1)}
