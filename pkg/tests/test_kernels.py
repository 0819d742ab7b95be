"""Backend parity: the compiled kernels and the numpy fallback must agree."""

import math
import subprocess
import sys

import numpy as np
import pytest

import rrfsim._core_py as core_py
from rrfsim import kernels

try:
    import rrfsim._core as core_cy
except ImportError:
    core_cy = None

needs_ext = pytest.mark.skipif(core_cy is None, reason="compiled kernels unavailable")

BACKENDS = [core_py] + ([core_cy] if core_cy is not None else [])


def random_pair(rng, k=17, d=64):
    a = np.ascontiguousarray(rng.standard_normal((k, d)))
    b = np.ascontiguousarray(rng.standard_normal((k, d)))
    return a, b


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestEachBackend:
    def test_pair_dot_matrix_against_loop(self, impl, rng):
        a, b = random_pair(rng, k=7, d=9)
        got = np.asarray(impl.pair_dot_matrix(a, b))
        for i in range(7):
            for j in range(7):
                assert got[i, j] == pytest.approx(float(np.dot(a[i], b[j])), rel=1e-13)

    def test_sum_all_against_fsum(self, impl, rng):
        m = np.ascontiguousarray(rng.standard_normal((31, 41)) * 100)
        assert impl.sum_all(m) == pytest.approx(math.fsum(m.ravel()), rel=1e-13, abs=1e-10)

    def test_row_col_sums_against_fsum(self, impl, rng):
        m = np.ascontiguousarray(rng.standard_normal((13, 9)))
        rows = np.asarray(impl.row_sums(m))
        cols = np.asarray(impl.col_sums(m))
        for i in range(13):
            assert rows[i] == pytest.approx(math.fsum(m[i]), rel=1e-13, abs=1e-12)
        for j in range(9):
            assert cols[j] == pytest.approx(math.fsum(m[:, j]), rel=1e-13, abs=1e-12)

    def test_row_cosines_matches_scalar(self, impl, rng):
        a, b = random_pair(rng, k=11, d=33)
        got = np.asarray(impl.row_cosines(a, b))
        for i in range(11):
            want = float(
                np.dot(a[i], b[i]) / (np.linalg.norm(a[i]) * np.linalg.norm(b[i]))
            )
            assert got[i] == pytest.approx(want, rel=1e-12)

    def test_vec_cosine(self, impl, rng):
        u = np.ascontiguousarray(rng.standard_normal(50))
        assert impl.vec_cosine(u, u) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_rerun(self, impl, rng):
        a, b = random_pair(rng)
        first = np.asarray(impl.pair_dot_matrix(a, b)).copy()
        second = np.asarray(impl.pair_dot_matrix(a, b))
        assert np.array_equal(first, second)
        assert impl.sum_all(a) == impl.sum_all(a)


@needs_ext
class TestBackendParity:
    def test_pair_dot_matrix(self, rng):
        a, b = random_pair(rng, k=33, d=512)
        g_py = core_py.pair_dot_matrix(a, b)
        g_cy = np.asarray(core_cy.pair_dot_matrix(a, b))
        assert np.allclose(g_py, g_cy, rtol=1e-12, atol=1e-10)

    def test_totals(self, rng):
        a, b = random_pair(rng, k=33, d=512)
        g = core_py.pair_dot_matrix(a, b)
        assert core_py.sum_all(g) == pytest.approx(core_cy.sum_all(g), rel=1e-12)
        assert np.allclose(core_py.row_sums(g), np.asarray(core_cy.row_sums(g)), rtol=1e-12)
        assert np.allclose(core_py.col_sums(g), np.asarray(core_cy.col_sums(g)), rtol=1e-12)

    def test_cosines(self, rng):
        a, b = random_pair(rng, k=21, d=128)
        assert np.allclose(
            core_py.row_cosines(a, b), np.asarray(core_cy.row_cosines(a, b)), rtol=1e-12
        )

    def test_read_only_input_accepted(self, rng):
        a, b = random_pair(rng, k=4, d=6)
        a.setflags(write=False)
        b.setflags(write=False)
        assert np.asarray(core_cy.pair_dot_matrix(a, b)).shape == (4, 4)


class TestDispatch:
    def test_backend_name(self):
        assert kernels.backend() in ("cython", "python")

    def test_wrapper_accepts_lists(self):
        g = kernels.pair_dot_matrix([[1.0, 0.0]], [[0.0, 1.0]])
        assert g.shape == (1, 1)
        assert g[0, 0] == 0.0

    def test_env_forces_python_backend(self):
        code = "import rrfsim.kernels as k; print(k.backend())"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "RRFSIM_BACKEND": "python"},
        )
        assert out.stdout.strip() == "python"
