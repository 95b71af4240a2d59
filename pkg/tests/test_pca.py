import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from idsample.ingest import Dataset
from idsample.pca import (
    INDEPENDENT, SHARED, JacobiPCA, PcaModel, compare_pca, covariance, fit_matrix, fit_pca,
    jacobi_eigh, project, variance_summary,
)

from conftest import make_dataset


def charpoly_eigenvalues(matrix):
    """Roots of det(lambda*I - A) via Faddeev-LeVerrier at 60 digits."""
    with mpmath.workdps(60):
        a = mpmath.matrix(matrix.tolist())
        n = a.rows
        coeffs = [mpmath.mpf(1)]
        m = mpmath.zeros(n, n)
        for k in range(1, n + 1):
            m = a * m + coeffs[-1] * mpmath.eye(n)
            am = a * m
            coeffs.append(-sum(am[i, i] for i in range(n)) / k)
        roots = mpmath.polyroots(coeffs, maxsteps=500, extraprec=300)
        return sorted(float(mpmath.re(r)) for r in roots)


def as_dataset(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    return Dataset(x, tuple(f"f{i}" for i in range(x.shape[1])), np.zeros(n), np.zeros(n), ("n",), "n")


def random_symmetric(rng, d):
    b = rng.standard_normal((d, d))
    return (b + b.T) / 2


# points with exact sample covariance diag(4, 1): var = 2*a^2/3
DIAG41 = np.array([[math.sqrt(6), 0], [-math.sqrt(6), 0], [0, math.sqrt(1.5)], [0, -math.sqrt(1.5)]])


class TestJacobi:
    @pytest.mark.parametrize("d", range(1, 11))
    def test_orthonormal_and_residual(self, d):
        rng = np.random.default_rng(d)
        for _ in range(5):
            c = random_symmetric(rng, d)
            values, vectors = jacobi_eigh(c)
            assert np.abs(vectors.T @ vectors - np.eye(d)).max() <= 1e-9
            norm = np.linalg.norm(c)
            for lam, v in zip(values, vectors.T):
                assert np.linalg.norm(c @ v - lam * v) <= 1e-8 * norm

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_matches_characteristic_polynomial(self, d):
        rng = np.random.default_rng(100 + d)
        for _ in range(10):
            c = random_symmetric(rng, d)
            got = sorted(jacobi_eigh(c)[0])
            assert np.allclose(got, charpoly_eigenvalues(c), rtol=0, atol=1e-8)

    def test_diagonal_is_fixed_point(self):
        values, vectors = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
        assert values.tolist() == [3.0, 1.0, 2.0]
        assert np.array_equal(vectors, np.eye(3))

    def test_zero_matrix(self):
        values, _ = jacobi_eigh(np.zeros((3, 3)))
        assert values.tolist() == [0.0, 0.0, 0.0]

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_wide_dynamic_range(self):
        # byte counters next to flags: variances 1e13 and 1e-3
        c = np.diag([1e13, 5.0, 1e-3])
        c[0, 1] = c[1, 0] = 1e5
        values, vectors = jacobi_eigh(c)
        norm = np.linalg.norm(c)
        for lam, v in zip(values, vectors.T):
            assert np.linalg.norm(c @ v - lam * v) <= 1e-8 * norm


class TestFit:
    def test_diag41(self):
        assert np.allclose(covariance(DIAG41, DIAG41.mean(axis=0)), np.diag([4.0, 1.0]), atol=1e-14)
        model = fit_pca(as_dataset(DIAG41), k=2)
        assert np.allclose(model.eigenvalues, [4.0, 1.0], atol=1e-12)
        s = variance_summary(model)
        assert abs(s.per_dim_ratio[0] - 0.8) <= 1e-9 and abs(s.per_dim_ratio[1] - 0.2) <= 1e-9
        assert abs(s.cumulative[1] - 1.0) <= 1e-9

    def test_project_point_on_first_axis(self):
        model = fit_pca(as_dataset(DIAG41), k=2)
        z = project(model, np.array([[2.0, 0.0]]))
        assert np.allclose(z, [[2.0, 0.0]], atol=1e-12)

    def test_diag_three(self):
        # sample variances 4, 1, 0.01 from +/- points on each axis (var = 2*a^2/5)
        pts = []
        for axis, var in enumerate([4.0, 1.0, 0.01]):
            e = np.zeros(3)
            e[axis] = math.sqrt(var * 5 / 2)
            pts += [e, -e]
        s = variance_summary(fit_pca(as_dataset(pts), 3))
        assert np.allclose(s.cumulative, [4 / 5.01, 5 / 5.01, 1.0], atol=1e-12)

    def test_identical_rows(self):
        model = fit_pca(as_dataset(np.ones((5, 3))), 2)
        assert model.eigenvalues.tolist() == [0.0, 0.0]
        s = variance_summary(model)
        assert s.per_dim_ratio == (0.0, 0.0)

    def test_equal_eigenvalues(self):
        pts = np.vstack([np.eye(3), -np.eye(3)])
        s = variance_summary(fit_pca(as_dataset(pts), 3))
        assert np.allclose(s.per_dim_ratio, [1 / 3] * 3)
        assert np.allclose(s.cumulative, [1 / 3, 2 / 3, 1.0])

    def test_tie_order_and_sign(self):
        # degenerate spectrum: components follow axis order, largest loading positive
        pts = np.vstack([np.eye(3), -np.eye(3)])
        model = fit_pca(as_dataset(pts), 3)
        assert np.allclose(model.components, np.eye(3))

    def test_sign_convention(self):
        rng = np.random.default_rng(5)
        model = fit_pca(as_dataset(rng.standard_normal((40, 5)) @ rng.standard_normal((5, 5))), 3)
        for row in model.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_errors(self):
        with pytest.raises(ValueError, match="k=4"):
            fit_pca(as_dataset(np.eye(3)), 4)
        with pytest.raises(ValueError, match="2 rows"):
            fit_pca(as_dataset([[1.0, 2.0]]), 1)
        model = fit_pca(as_dataset(np.eye(3)), 2)
        with pytest.raises(ValueError, match="dimension mismatch"):
            project(model, np.ones((2, 4)))

    def test_reconstruction_full_rank(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 4)) * [100, 1, 0.1, 5]
        est = JacobiPCA(n_components=4).fit(x)
        assert np.abs(est.inverse_transform(est.transform(x)) - x).max() <= 1e-8

    def test_mean_maps_to_zero(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((20, 3))
        model = fit_pca(as_dataset(x), 3)
        assert np.allclose(project(model, model.mean[None, :]), 0.0)

    def test_total_variance_equals_eigen_sum(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 6)) @ rng.standard_normal((6, 6))
        model = fit_pca(as_dataset(x), 3)
        assert model.all_eigenvalues.sum() == pytest.approx(model.total_variance, rel=1e-6)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((25, 4))
        model = fit_pca(as_dataset(x), 3)
        perm = rng.permutation(25)
        assert np.allclose(project(model, x[perm]), project(model, x)[perm])

    def test_duplicate_row_effect_is_small(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5000, 4)) * [3, 2, 1, 0.5]
        base = variance_summary(fit_pca(as_dataset(x), 3)).per_dim_ratio
        more = variance_summary(fit_pca(as_dataset(np.vstack([x, x[:1]])), 3)).per_dim_ratio
        assert max(abs(a - b) for a, b in zip(base, more)) < 10 / 5000

    def test_standardize(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((200, 3)) * [1000, 1, 1]
        raw = variance_summary(fit_matrix(x, 3)).per_dim_ratio
        std = variance_summary(fit_matrix(x, 3, standardize=True)).per_dim_ratio
        assert raw[0] > 0.99 and std[0] < 0.5

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                  elements=st.floats(-1e4, 1e4)),
           st.integers(1, 6))
    def test_summary_invariants(self, x, k):
        k = min(k, x.shape[1])
        model = fit_matrix(x, k)
        s = variance_summary(model)
        assert all(b >= a for a, b in zip(s.cumulative, s.cumulative[1:]))
        assert s.accumulative_variance <= 1 + 1e-9
        assert all(v >= 0 for v in model.eigenvalues)
        # tied values (within 1e-12 of the trace) are ordered by axis instead
        tie = 1e-12 * model.total_variance
        assert all(b <= a + tie for a, b in zip(model.eigenvalues, model.eigenvalues[1:]))
        for i in range(k):
            assert abs(s.cumulative[i] - sum(s.per_dim_ratio[: i + 1])) <= 1e-12
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(k)).max() <= 1e-9

    def test_json_roundtrip(self):
        model = fit_pca(as_dataset(DIAG41), 2)
        back = PcaModel.from_dict(json.loads(model.to_json()))
        assert np.array_equal(back.components, model.components)
        assert np.array_equal(back.mean, model.mean)


class TestComparePca:
    def test_self_both_modes(self):
        ds = make_dataset({"n": 50, "a": 40, "b": 30}, "n", n_features=4)
        for mode in (SHARED, INDEPENDENT):
            rep = compare_pca(ds, ds, 3, mode=mode)
            assert rep.overall_similar and rep.method == "pca"
            assert [r.dimension_name for r in rep.per_dimension] == ["pc1", "pc2", "pc3"]

    def test_independent_always_similar(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = as_dataset(rng.standard_normal((rng.integers(10, 200), 5)) * rng.uniform(0.1, 100, 5))
            b = as_dataset(rng.standard_normal((rng.integers(10, 200), 5)) + rng.uniform(-50, 50, 5))
            rep = compare_pca(a, b, 3, mode=INDEPENDENT)
            assert rep.overall_similar

    def test_shared_detects_shift(self):
        rng = np.random.default_rng(12)
        a = as_dataset(rng.standard_normal((500, 3)) * [5, 2, 1])
        b = as_dataset(rng.standard_normal((500, 3)) * [5, 2, 1] + [10, 0, 0])
        assert not compare_pca(a, b, 3, mode=SHARED).overall_similar

    def test_mismatch(self):
        with pytest.raises(ValueError, match="feature count"):
            compare_pca(as_dataset(np.eye(3)), as_dataset(np.eye(4)), 2)

    def test_bad_mode(self):
        ds = as_dataset(np.eye(3))
        with pytest.raises(ValueError, match="unknown PCA mode"):
            compare_pca(ds, ds, 2, mode="both")


class TestEstimator:
    def test_sklearn_attributes(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((100, 5)) * [10, 5, 2, 1, 0.1]
        est = JacobiPCA(n_components=3).fit(x)
        assert est.components_.shape == (3, 5)
        assert est.transform(x).shape == (100, 3)
        ref = np.linalg.eigvalsh(np.cov(x, rowvar=False))[::-1][:3]
        assert np.allclose(est.explained_variance_, ref, rtol=1e-10)

    def test_not_fitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            JacobiPCA().transform(np.eye(3))

    def test_clone(self):
        from sklearn.base import clone
        est = JacobiPCA(n_components=2, standardize=True)
        assert clone(est).get_params() == {"n_components": 2, "standardize": True}
