import io
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oreyci.exceptions import (
    EmbeddingFailure,
    InvalidHstar,
    InvalidK,
    InvalidParameter,
    MalformedPath,
    NotPositiveDefinite,
    UnsupportedKernel,
)
from oreyci.gaussim import (
    GridSpec,
    ProcessModel,
    SamplePath,
    cholesky_factor,
    covariance,
    fgn_circulant_eigs,
    generate,
    generate_cholesky,
    generate_fbm,
    generate_fou,
    gram_matrix,
    make_rng,
    read_path_csv,
    write_path_csv,
)
import oreyci.gaussim as gaussim

KERNEL_MODELS = [
    ProcessModel.bm(),
    ProcessModel.fbm(0.3),
    ProcessModel.fbm(0.8),
    ProcessModel.subfbm(0.2),
    ProcessModel.subfbm(0.7),
    ProcessModel.bifbm(0.3, 0.5),
    ProcessModel.bifbm(0.45, 0.9),
]


# --------------------------------------------------------------------------- #
# Models
# --------------------------------------------------------------------------- #
class TestProcessModel:
    def test_orey_index(self):
        assert ProcessModel.fbm(0.3).orey_index == 0.3
        assert ProcessModel.bifbm(0.4, 0.5).orey_index == pytest.approx(0.2)

    @pytest.mark.parametrize("H", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_bad_H(self, H):
        with pytest.raises(InvalidParameter):
            ProcessModel.fbm(H)

    def test_bifbm_rules(self):
        with pytest.raises(InvalidK):
            ProcessModel.bifbm(0.3, 1.0)
        with pytest.raises(InvalidK):
            ProcessModel.bifbm(0.3, 0.0)
        with pytest.raises(InvalidParameter, match="H < 1/2"):
            ProcessModel.bifbm(0.6, 0.5)

    def test_fou_rules(self):
        with pytest.raises(InvalidHstar):
            ProcessModel.fou(0.8, 0.5, 1.0, 0.0, Hstar=0.7)
        with pytest.raises(InvalidParameter):
            ProcessModel.fou(0.5, 0.0, 1.0, 0.0, 0.9)
        with pytest.raises(InvalidParameter):
            ProcessModel.fou(0.5, 0.5, -1.0, 0.0, 0.9)
        with pytest.raises(InvalidParameter):
            ProcessModel("fou", 0.5)

    def test_stray_parameters_rejected(self):
        with pytest.raises(InvalidParameter):
            ProcessModel("fbm", 0.3, K=0.5)
        with pytest.raises(InvalidParameter):
            ProcessModel("subfbm", 0.3, mu=1.0)

    def test_grid(self):
        with pytest.raises(InvalidParameter):
            GridSpec(1.0, 2)
        with pytest.raises(InvalidParameter):
            GridSpec(0.0, 10)
        g = GridSpec(2.0, 4)
        np.testing.assert_allclose(g.times, [0, 0.5, 1, 1.5, 2])

    def test_sample_path_length(self):
        with pytest.raises(InvalidParameter):
            SamplePath(1.0, 5, np.zeros(5))


# --------------------------------------------------------------------------- #
# Covariance
# --------------------------------------------------------------------------- #
class TestCovariance:
    @pytest.mark.parametrize("H,K", [(0.1, 0.3), (0.3, 0.5), (0.49, 0.99)])
    def test_bifbm_diagonal(self, H, K):
        assert covariance(ProcessModel.bifbm(H, K), 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
        t = 2.7
        assert covariance(ProcessModel.bifbm(H, K), t, t) == pytest.approx(t ** (2 * H * K), rel=1e-13)

    @pytest.mark.parametrize("H", [0.1, 0.3, 0.7, 0.9])
    @pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
    def test_subfbm_diagonal(self, H, t):
        mp.mp.dps = 40
        Hm, tm = mp.mpf(H), mp.mpf(t)
        # G_H(t, t) evaluated directly at high precision
        direct = 2 * tm ** (2 * Hm) - (2 * tm) ** (2 * Hm) / 2
        closed = (2 - mp.mpf(2) ** (2 * Hm - 1)) * tm ** (2 * Hm)
        assert abs(direct - closed) < mp.mpf(10) ** -30
        assert covariance(ProcessModel.subfbm(H), t, t) == pytest.approx(float(closed), rel=1e-13)

    def test_brownian_min(self):
        assert covariance(ProcessModel.fbm(0.5), 1.0, 2.0) == pytest.approx(1.0)
        assert covariance(ProcessModel.bm(), 1.0, 2.0) == 1.0

    def test_fou_unsupported(self):
        with pytest.raises(UnsupportedKernel):
            covariance(ProcessModel.fou(0.5, 0.5, 1.0, 0.0, 0.9), 1.0, 1.0)

    @pytest.mark.parametrize("model", KERNEL_MODELS, ids=lambda m: m.describe())
    @given(s=st.floats(0, 10), t=st.floats(0, 10))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_nonnegative_variance(self, model, s, t):
        assert covariance(model, s, t) == pytest.approx(covariance(model, t, s), rel=1e-12, abs=1e-300)
        assert covariance(model, t, t) >= 0.0


# --------------------------------------------------------------------------- #
# Circulant embedding
# --------------------------------------------------------------------------- #
class TestCirculant:
    @pytest.mark.parametrize("N", [10, 100, 1000])
    def test_white_noise_at_half(self, N):
        M = 2 ** math.ceil(1 + math.log2(N - 1))
        row = gaussim._embedding_row(0.5, N, M)
        assert np.count_nonzero(np.abs(row) > 1e-15) == 1
        W = fgn_circulant_eigs(0.5, N, M)
        np.testing.assert_allclose(W, 1.0 / N, rtol=1e-12)

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.75])
    def test_zero_frequency_is_sum(self, H):
        N, M = 50, 128
        row = gaussim._embedding_row(H, N, M)
        W = fgn_circulant_eigs(H, N, M)
        assert W[0] == pytest.approx(row.sum(), rel=1e-12)

    def test_eigenvalues_match_dense_solver(self):
        H, N, M = 0.75, 8, 16
        row = gaussim._embedding_row(H, N, M)
        C = np.array([np.roll(row, k) for k in range(M)])
        dense = np.sort(np.linalg.eigvalsh(C))
        W = fgn_circulant_eigs(H, N, M)
        np.testing.assert_allclose(np.sort(W), dense, rtol=1e-10, atol=1e-14)
        assert np.all(dense > 0)

    def test_requires_power_of_two(self):
        with pytest.raises(InvalidParameter):
            fgn_circulant_eigs(0.5, 10, 24)

    def test_embedding_failure_is_raised(self, monkeypatch):
        monkeypatch.setattr(gaussim, "fgn_circulant_eigs", lambda H, N, M: -np.ones(M))
        monkeypatch.setattr(gaussim, "MAX_EMBEDDING", 64)
        gaussim._embedding.cache_clear()
        try:
            with pytest.raises(EmbeddingFailure):
                generate_fbm(0.3, GridSpec(1.0, 20), make_rng(0))
        finally:
            gaussim._embedding.cache_clear()


class TestGenerateFbm:
    def test_starts_at_zero_and_length(self):
        p = generate_fbm(0.3, GridSpec(2.0, 100), make_rng(1))
        assert p.values[0] == 0.0
        assert p.values.size == 101

    def test_bit_reproducible(self):
        a = generate_fbm(0.7, GridSpec(1.0, 300), make_rng(5, 1, 2))
        b = generate_fbm(0.7, GridSpec(1.0, 300), make_rng(5, 1, 2))
        assert a.values.tobytes() == b.values.tobytes()
        c = generate_fbm(0.7, GridSpec(1.0, 300), make_rng(5, 1, 3))
        assert a.values.tobytes() != c.values.tobytes()

    def test_brownian_increments(self):
        from scipy import stats

        T, n = 2.0, 100
        incs = np.concatenate(
            [np.diff(generate_fbm(0.5, GridSpec(T, n), make_rng(11, r)).values) for r in range(100)]
        )
        assert incs.size == 10_000
        var = T / n
        se = var * math.sqrt(2.0 / incs.size)
        assert abs(incs.var() - var) < 3 * se
        assert stats.kstest(incs / math.sqrt(var), "norm").pvalue > 1e-3

    @pytest.mark.slow
    def test_covariance_matches_kernel(self):
        H, T, n, reps = 0.75, 2.0, 64, 5000
        grid = GridSpec(T, n)
        paths = np.stack([generate_fbm(H, grid, make_rng(3, r)).values for r in range(reps)])
        _assert_cov(paths, ProcessModel.fbm(H), grid)


def _assert_cov(paths, model, grid, pairs=((8, 8), (16, 48), (32, 32), (5, 60), (64, 64))):
    t = grid.times
    for i, j in pairs:
        prod = paths[:, i] * paths[:, j]
        se = prod.std(ddof=1) / math.sqrt(paths.shape[0])
        exact = covariance(model, t[i], t[j])
        assert abs(prod.mean() - exact) < 3 * se, (i, j, prod.mean(), exact, se)


# --------------------------------------------------------------------------- #
# Cholesky
# --------------------------------------------------------------------------- #
class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky_factor(np.eye(4)), np.eye(4))

    def test_two_by_two(self):
        L = cholesky_factor([[4.0, 2.0], [2.0, 5.0]])
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, 2.0]])

    def test_subfbm_reconstruction(self):
        G = gram_matrix(ProcessModel.subfbm(0.3), GridSpec(1.0, 16))
        L = cholesky_factor(G)
        assert np.max(np.abs(L @ L.T - G)) < 1e-10
        assert np.allclose(L, np.tril(L))

    @pytest.mark.parametrize(
        "model",
        [ProcessModel.subfbm(0.25), ProcessModel.subfbm(0.75), ProcessModel.bifbm(0.25, 0.5)],
        ids=lambda m: m.describe(),
    )
    def test_reconstruction_at_largest_grid(self, model):
        G = gram_matrix(model, GridSpec(1.0, 1600))
        L = cholesky_factor(G)
        assert np.max(np.abs(L @ L.T - G)) < 1e-8

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor([[1.0, 2.0], [2.0, 1.0]])

    def test_not_symmetric(self):
        with pytest.raises(InvalidParameter):
            cholesky_factor([[1.0, 0.5], [0.0, 1.0]])

    def test_values_start_at_zero(self):
        p = generate_cholesky(ProcessModel.subfbm(0.3), GridSpec(1.0, 50), make_rng(0))
        assert p.values[0] == 0.0 and p.values.size == 51

    @pytest.mark.slow
    def test_subfbm_covariance(self):
        model, grid = ProcessModel.subfbm(0.7), GridSpec(1.5, 64)
        paths = np.stack([generate_cholesky(model, grid, make_rng(4, r)).values for r in range(5000)])
        _assert_cov(paths, model, grid)

    @pytest.mark.slow
    def test_bifbm_terminal_variance(self):
        model, grid = ProcessModel.bifbm(0.3, 0.5), GridSpec(2.0, 40)
        end = np.array([generate_cholesky(model, grid, make_rng(6, r)).values[-1] for r in range(5000)])
        expected = 2.0 ** (2 * 0.3 * 0.5)
        se = expected * math.sqrt(2.0 / end.size)
        assert abs(np.mean(end**2) - expected) < 3 * se


# --------------------------------------------------------------------------- #
# fO-U
# --------------------------------------------------------------------------- #
class TestFou:
    def test_vanishing_drift(self):
        grid = GridSpec(1.0, 200)
        model = ProcessModel.fou(0.7, 1e-300, 0.8, 1.5, 0.9)
        x = generate_fou(model, grid, make_rng(9)).values
        b = generate_fbm(0.7, grid, make_rng(9)).values
        np.testing.assert_allclose(x, 1.5 + 0.8 * b, rtol=0, atol=1e-12)

    def test_vanishing_noise(self):
        mu, x0, T = 0.8, 2.0, 1.5
        for n in (100, 1000):
            grid = GridSpec(T, n)
            model = ProcessModel.fou(0.6, mu, 1e-300, x0, 0.9)
            x = generate_fou(model, grid, make_rng(1)).values
            k = np.arange(n + 1)
            np.testing.assert_allclose(x, x0 * (1 - mu * T / n) ** k, rtol=1e-12)
            # Euler error is first order in the step
            assert abs(x[-1] - x0 * math.exp(-mu * T)) < 2.0 * x0 * mu**2 * T**2 / n

    def test_refinement_subsamples(self):
        grid = GridSpec(1.0, 50)
        model = ProcessModel.fou(0.6, 0.5, 1.0, 0.3, 0.9)
        p = generate_fou(model, grid, make_rng(2), refine=4)
        assert p.n == 50 and p.values[0] == 0.3

    @pytest.mark.slow
    def test_second_moment_bound(self):
        x0, mu, tau, T = 0.0, 0.5, 1.0, 1.0
        model = ProcessModel.fou(0.75, mu, tau, x0, 0.99)
        grid = GridSpec(T, 800)
        paths = np.stack([generate_fou(model, grid, make_rng(8, r)).values for r in range(1000)])
        assert np.max(np.mean(paths**2, axis=0)) <= 3 * x0**2 + 6 * tau**2 * T**2


# --------------------------------------------------------------------------- #
def test_three_brownian_routes_agree():
    """Bm, fBm(1/2) and subfBm(1/2) all have increment variance T/n."""
    T, n = 1.0, 100
    var = T / n
    se = var * math.sqrt(2.0 / 10_000)
    for model in (ProcessModel.bm(), ProcessModel.fbm(0.5), ProcessModel.subfbm(0.5)):
        grid = GridSpec(T, n)
        incs = np.concatenate([np.diff(generate(model, grid, make_rng(21, r)).values) for r in range(100)])
        assert abs(incs.var() - var) < 3 * se, model.describe()


class TestPathCsv:
    def test_round_trip(self, tmp_path):
        p = generate_fbm(0.4, GridSpec(3.0, 20), make_rng(0))
        dest = tmp_path / "p.csv"
        write_path_csv(p, dest)
        lines = dest.read_text().splitlines()
        assert lines[0] == "t,x" and len(lines) == 22
        q = read_path_csv(dest)
        assert q.n == 20 and q.T == 3.0
        assert q.values.tobytes() == p.values.tobytes()

    @pytest.mark.parametrize(
        "text",
        [
            "t,x\n0,0\n1,1\n2,nan\n3,1\n",
            "t,x\n0,0\n1,1\n2.5,2\n3,1\n",
            "a,b\n0,0\n1,1\n2,2\n3,3\n",
            "t,x\n0,0\n1,1\n",
            "t,x\n0,0\n1,x\n2,2\n3,3\n",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedPath):
            read_path_csv(io.StringIO(text))
