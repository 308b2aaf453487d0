import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pelrec.errors import ConfigurationError, DegenerateComponentError, SingularSystemError
from pelrec.image import ObservationSystem
from pelrec.solvers import RegularizerSpec, as_regularizer, ols, pca, pcr1, pcr2, rls, solve_batch


def system(rows, z):
    return ObservationSystem(np.array(rows, dtype=float), np.array(z, dtype=float))


def random_system(rng, n=25, p=2):
    while True:
        g = rng.normal(size=(n, p)) * rng.uniform(0.5, 20, p)
        if np.linalg.cond(g.T @ g) < 1e4:
            return ObservationSystem(g, rng.normal(size=n) * 5)


def cramer_2x2(a, b):
    """Independent closed-form solve of a 2x2 system."""
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return np.array([(b[0] * a[1, 1] - a[0, 1] * b[1]) / det, (a[0, 0] * b[1] - b[0] * a[1, 0]) / det])


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestOls:
    def test_identity(self):
        np.testing.assert_allclose(ols(system(np.eye(2), [2, 3])), [2, 3], atol=1e-14)

    def test_hand_solved_normal_equations(self):
        np.testing.assert_allclose(ols(system([[1, 0], [1, 0], [0, 1]], [1, 3, 5])), [2, 5], atol=1e-13)

    def test_diagonal(self):
        np.testing.assert_allclose(ols(system([[1, 0], [0, 2]], [1, 4])), [1, 2], atol=1e-14)

    def test_matches_cramer(self, rng):
        for _ in range(50):
            s = random_system(rng)
            assert rel(ols(s), cramer_2x2(s.g.T @ s.g, s.g.T @ s.z)) < 1e-10

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            ols(system([[1, 2], [2, 4], [3, 6]], [1, 2, 3]))
        with pytest.raises(SingularSystemError):
            ols(system(np.zeros((5, 2)), np.ones(5)))

    def test_residual_optimality(self, rng):
        for _ in range(20):
            s = random_system(rng, n=9)
            u = ols(s)
            best = np.sum((s.z - s.g @ u) ** 2)
            dirs = rng.normal(size=(100, 2))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            for step in dirs * 1e-3:
                assert np.sum((s.z - s.g @ (u + step)) ** 2) >= best

    def test_accepts_tuple(self):
        np.testing.assert_allclose(ols((np.eye(2), [1.0, 2.0])), [1, 2])


class TestRls:
    def test_zero_penalty_equals_ols(self, rng):
        s = random_system(rng)
        assert rel(rls(s, 0.0), ols(s)) < 1e-10

    def test_identity_unit_penalty(self):
        np.testing.assert_allclose(rls(system(np.eye(2), [2, 0]), 1.0), [1, 0], atol=1e-14)

    def test_dominant_penalty(self, rng):
        s = random_system(rng)
        assert np.linalg.norm(rls(s, 1e12)) <= 1e-9 * np.linalg.norm(s.g.T @ s.z)

    def test_diagonal_penalty(self):
        np.testing.assert_allclose(rls(system(np.eye(2), [2, 2]), [1.0, 3.0]), [1.0, 0.5])

    def test_regularises_singular_system(self):
        u = rls(system(np.zeros((4, 2)), np.ones(4)), 1.0)
        np.testing.assert_array_equal(u, [0, 0])
        with pytest.raises(SingularSystemError):
            rls(system(np.zeros((4, 2)), np.ones(4)), 0.0)


class TestRegularizerSpec:
    def test_coercion(self):
        assert as_regularizer(None).kind == "none"
        assert as_regularizer(2.0) == RegularizerSpec.scalar(2.0)
        assert as_regularizer([1, 2]) == RegularizerSpec.diagonal((1.0, 2.0))
        np.testing.assert_array_equal(as_regularizer(3).matrix(2), 3 * np.eye(2))

    @pytest.mark.parametrize("bad", [-1.0, np.inf, np.nan])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            RegularizerSpec.scalar(bad)

    def test_short_diagonal(self):
        with pytest.raises(ConfigurationError):
            RegularizerSpec.diagonal([1.0]).diag(2)


class TestPca:
    def test_hand_example(self):
        f = pca(system([[3, 0], [0, 1], [0, 0]], [0, 0, 0]), 2)
        np.testing.assert_allclose(f.eigenvalues, [9, 1], atol=1e-12)
        np.testing.assert_allclose(f.loadings, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(f.scores, [[3, 0], [0, 1], [0, 0]], atol=1e-12)
        assert not f.rank_deficient

    def test_rank_one(self):
        g = np.outer([1.0, -2.0, 3.0, 0.5], [2.0, 1.0])
        f = pca(g, 2)
        assert f.eigenvalues[1] <= 1e-12 * f.eigenvalues[0]
        assert f.rank == 1 and f.rank_deficient

    def test_centering(self, rng):
        g = rng.normal(size=(30, 2)) + [5, -3]
        f = pca(g, 2, center=True)
        np.testing.assert_allclose(f.column_means, g.mean(axis=0))
        np.testing.assert_allclose(f.scores.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(f.reconstruct(), g, atol=1e-12)

    def test_sign_convention(self, rng):
        for _ in range(20):
            f = pca(rng.normal(size=(10, 3)), 3)
            for col in f.loadings.T:
                assert col[np.argmax(np.abs(col))] > 0

    def test_invalid_k(self, rng):
        with pytest.raises(ConfigurationError):
            pca(rng.normal(size=(5, 2)), 3)
        with pytest.raises(ConfigurationError):
            pca(rng.normal(size=(1, 2)), 2)

    @settings(max_examples=100, deadline=None)
    @given(
        g=hnp.arrays(np.float64, st.tuples(st.integers(4, 30), st.integers(1, 4)), elements=st.floats(-100, 100)),
        center=st.booleans(),
    )
    def test_factor_contract(self, g, center):
        p = g.shape[1]
        f = pca(g, p, center=center)
        np.testing.assert_allclose(f.loadings.T @ f.loadings, np.eye(p), atol=1e-10)
        ttt = f.scores.T @ f.scores
        off = ttt - np.diag(np.diag(ttt))
        assert np.abs(off).max() <= 1e-9 * max(np.abs(ttt).max(), 1e-300) + 1e-12
        assert np.all(np.diff(f.eigenvalues) <= 1e-9 * max(f.eigenvalues[0], 1e-300))
        scale = max(np.linalg.norm(g), 1e-300)
        assert np.linalg.norm(f.reconstruct() - g) <= 1e-9 * scale + 1e-12


class TestPcr:
    def test_full_components_equal_ols(self, rng):
        for _ in range(50):
            s = random_system(rng)
            assert rel(pcr1(s, 2), ols(s)) < 1e-8

    def test_hand_example(self):
        s = system([[3, 0], [0, 1], [0, 0]], [3, 1, 0])
        np.testing.assert_allclose(pcr1(s, 2), [1, 1], atol=1e-12)
        np.testing.assert_allclose(pcr1(s, 1), [1, 0], atol=1e-12)

    def test_identity(self):
        np.testing.assert_allclose(pcr1(system(np.eye(2), [2, 3]), 2), [2, 3], atol=1e-14)

    def test_truncation_handles_rank_deficiency(self):
        g = np.outer([1.0, 2.0, -1.0, 0.5], [3.0, 4.0])
        s = ObservationSystem(g, g @ [1.0, 1.0])
        u = pcr1(s, 2)
        # minimum-norm solution lies along the single loading
        np.testing.assert_allclose(u, np.array([3.0, 4.0]) * 7 / 25, atol=1e-10)
        with pytest.raises(DegenerateComponentError):
            pcr1(s, 2, ratio_floor=None)

    def test_all_zero_gradients(self):
        with pytest.raises(DegenerateComponentError):
            pcr1(system(np.zeros((5, 2)), np.ones(5)), 2)

    def test_pcr2_zero_penalty_is_pcr1(self, rng):
        for _ in range(20):
            s = random_system(rng)
            for k in (1, 2):
                assert rel(pcr2(s, k, 0.0), pcr1(s, k)) <= 1e-12

    @pytest.mark.parametrize("lam", [1e-3, 1.0, 1e3])
    def test_pcr2_full_equals_rls(self, rng, lam):
        for _ in range(50):
            s = random_system(rng)
            assert rel(pcr2(s, 2, lam), rls(s, lam)) < 1e-8

    def test_pcr2_dominant_penalty(self, rng):
        s = random_system(rng)
        f = pca(s, 2)
        assert np.linalg.norm(pcr2(s, 2, 1e12)) <= 1e-9 * np.linalg.norm(f.scores.T @ s.z)

    def test_pcr2_diagonal_penalty(self):
        s = system([[3, 0], [0, 1], [0, 0]], [3, 1, 0])
        # scores are the columns of G; penalties act per component
        np.testing.assert_allclose(pcr2(s, 2, [9.0, 1.0]), [0.5, 0.5], atol=1e-12)

    def test_general_p(self, rng):
        g = rng.normal(size=(40, 4))
        s = ObservationSystem(g, rng.normal(size=40))
        assert rel(pcr1(s, 4), ols(s)) < 1e-8
        assert rel(pcr2(s, 4, 2.0), rls(s, 2.0)) < 1e-8


class TestLinearity:
    @pytest.mark.parametrize("c", [-3.0, 0.5, 7.0])
    def test_scaling_z_scales_output(self, rng, c):
        s = random_system(rng)
        scaled = ObservationSystem(s.g, c * s.z)
        for solve in (ols, lambda t: rls(t, 2.0), lambda t: pcr1(t, 2), lambda t: pcr1(t, 1), lambda t: pcr2(t, 2, 2.0)):
            np.testing.assert_allclose(solve(scaled), c * solve(s), rtol=1e-12, atol=1e-14)

    def test_row_permutation(self, rng):
        s = random_system(rng)
        perm = s.permuted(rng.permutation(s.n_obs))
        for solve in (ols, lambda t: rls(t, 2.0), lambda t: pcr1(t, 1), lambda t: pcr2(t, 2, 2.0)):
            np.testing.assert_allclose(solve(perm), solve(s), rtol=1e-10)
        np.testing.assert_allclose(np.abs(pca(perm, 2).loadings), np.abs(pca(s, 2).loadings), atol=1e-12)


class TestSolveBatch:
    """The batched normal-equation route must agree with the per-system solvers."""

    @pytest.fixture
    def batch(self, rng):
        systems = [random_system(rng, n=int(rng.choice([9, 25]))) for _ in range(200)]
        gtg = np.stack([s.g.T @ s.g for s in systems])
        gtz = np.stack([s.g.T @ s.z for s in systems])
        return systems, gtg, gtz

    @pytest.mark.parametrize(
        "name,kwargs,single",
        [
            ("ols", {}, ols),
            ("rls", {"lam": 5.0}, lambda s: rls(s, 5.0)),
            ("pcr1", {"k": 2}, lambda s: pcr1(s, 2)),
            ("pcr1", {"k": 1}, lambda s: pcr1(s, 1)),
            ("pcr2", {"k": 2, "xi": 5.0}, lambda s: pcr2(s, 2, 5.0)),
            ("pcr2", {"k": 1, "xi": 5.0}, lambda s: pcr2(s, 1, 5.0)),
        ],
    )
    def test_agrees_with_single_system(self, batch, name, kwargs, single):
        systems, gtg, gtz = batch
        u, ok = solve_batch(gtg, gtz, name, **kwargs)
        assert ok.all()
        for i, s in enumerate(systems):
            assert rel(u[i], single(s)) < 1e-8

    def test_flags_singular_rows(self):
        gtg = np.stack([np.zeros((2, 2)), np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]])])
        gtz = np.ones((3, 2))
        _, ok = solve_batch(gtg, gtz, "ols")
        assert ok.tolist() == [False, True, False]
        _, ok = solve_batch(gtg, gtz, "pcr1", k=2)
        assert ok.tolist() == [False, True, True]
        u, ok = solve_batch(gtg, gtz, "rls", lam=1.0)
        assert ok.all()

    def test_unknown_estimator(self):
        with pytest.raises(ConfigurationError):
            solve_batch(np.eye(2)[None], np.ones((1, 2)), "lasso")
