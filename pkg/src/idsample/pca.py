"""Principal component analysis on a cyclic Jacobi eigensolver.

Features are centred but not scaled unless ``standardize=True``; raw-scale
PCA lets high-magnitude byte counters dominate the leading component, which
is the behaviour wanted when comparing a dataset with its samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ingest import Dataset
from .stats import PCA, SimilarityReport, compare_columns

SHARED = "shared"
INDEPENDENT = "independent"


class NumericalFailure(ArithmeticError):
    pass


def jacobi_eigh(matrix, tol: float = 1e-12, max_sweeps: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over every upper off-diagonal pair until the off-diagonal
    Frobenius norm is at most ``tol * ||matrix||_F`` or ``max_sweeps`` is
    reached. Returns unsorted ``(eigenvalues, vectors)`` with eigenvectors in
    the columns of ``vectors``.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eigh expects a square matrix")
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("matrix has non-finite entries")
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * np.linalg.norm(a):
        raise ValueError("jacobi_eigh expects a symmetric matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    limit = tol * np.linalg.norm(a)
    upper = np.triu_indices(n, 1)

    def off_norm():
        return math.sqrt(2.0) * float(np.linalg.norm(a[upper]))

    for _ in range(max_sweeps):
        if off_norm() <= limit:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    # below rounding of both diagonal entries
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if off_norm() > limit * 1e4:
            raise NumericalFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.diag(a).copy(), v


def _order(values: np.ndarray, vectors: np.ndarray, total: float) -> np.ndarray:
    """Indices sorting eigenpairs by descending value.

    Values within ``1e-12 * total`` of each other are ordered by the axis
    index of their eigenvector's largest loading.
    """
    tie = 1e-12 * abs(total)
    order = list(np.argsort(-values, kind="stable"))
    axis = np.argmax(np.abs(vectors), axis=0)
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and values[order[i]] - values[order[j]] <= tie:
            j += 1
        out.extend(sorted(order[i:j], key=lambda k: axis[k]))
        i = j
    return np.asarray(out, dtype=np.intp)


def covariance(X: np.ndarray, mean: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
    """Sample covariance (``n - 1`` divisor), accumulated in row chunks."""
    n, d = X.shape
    acc = np.zeros((d, d))
    for start in range(0, n, chunk):
        block = X[start:start + chunk] - mean
        acc += block.T @ block
    acc = 0.5 * (acc + acc.T)
    return acc / (n - 1)


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float
    all_eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "total_variance": self.total_variance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        eig = np.asarray(data["eigenvalues"], dtype=np.float64)
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            components=np.asarray(data["components"], dtype=np.float64),
            eigenvalues=eig,
            total_variance=float(data["total_variance"]),
            all_eigenvalues=eig,
        )


def fit_matrix(X: np.ndarray, k: int, standardize: bool = False) -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 rows")
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must lie in [1, {d}]")
    mean = X.mean(axis=0)
    if standardize:
        scale = X.std(axis=0, ddof=1)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(d)
    cov = covariance(X / scale if standardize else X, mean / scale)
    total = float(np.trace(cov))

    values, vectors = jacobi_eigh(cov)
    values = np.maximum(values, 0.0)
    order = _order(values, vectors, total)
    values, vectors = values[order], vectors[:, order]

    components = vectors[:, :k].T.copy()
    lead = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), lead])
    signs[signs == 0] = 1.0
    components *= signs[:, None]
    return PcaModel(mean, scale, components, values[:k].copy(), total, values)


def fit_pca(ds: Dataset, k: int = 3, standardize: bool = False) -> PcaModel:
    return fit_matrix(ds.features, k, standardize)


def project(model: PcaModel, ds) -> np.ndarray:
    """Coordinates ``components @ (x - mean)`` for every row (n x k)."""
    X = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"dimension mismatch: model has {model.n_features} features, data has "
            f"{X.shape[-1] if X.ndim else 0}"
        )
    return ((X - model.mean) / model.scale) @ model.components.T


@dataclass(frozen=True)
class VarianceSummary:
    per_dim_ratio: Tuple[float, ...]
    cumulative: Tuple[float, ...]

    @property
    def accumulative_variance(self) -> float:
        return self.cumulative[-1]

    def format(self) -> str:
        per = " ".join(f"{r:.8f}" for r in self.per_dim_ratio)
        cum = " ".join(f"{r:.8f}" for r in self.cumulative)
        return (f"Per-dim Var=[{per}] Cumulative Var=[{cum}] "
                f"Acc Var={self.accumulative_variance!r}")


def variance_summary(model: PcaModel) -> VarianceSummary:
    if model.total_variance > 0:
        ratios = model.eigenvalues / model.total_variance
    else:
        ratios = np.zeros(model.k)
    return VarianceSummary(tuple(float(r) for r in ratios),
                           tuple(float(c) for c in np.cumsum(ratios)))


def compare_pca(ds: Dataset, sample: Dataset, k: int = 3, alpha: float = 0.05,
                mode: str = SHARED, standardize: bool = False) -> SimilarityReport:
    """Z-test each principal coordinate of ``sample`` against ``ds``.

    ``shared`` fits one model on ``ds`` and projects both sets onto it.
    ``independent`` fits each set separately and projects it onto its own
    model, so both coordinate means are zero up to rounding.
    """
    if ds.n_features != sample.n_features:
        raise ValueError(f"feature count mismatch: {ds.n_features} vs {sample.n_features}")
    if mode == SHARED:
        model = fit_pca(ds, k, standardize)
        a, b = project(model, ds), project(model, sample)
    elif mode == INDEPENDENT:
        a = project(fit_pca(ds, k, standardize), ds)
        b = project(fit_pca(sample, k, standardize), sample)
    else:
        raise ValueError(f"unknown PCA mode {mode!r}")
    names = [f"pc{i + 1}" for i in range(k)]
    return compare_columns(a, b, names, alpha, PCA)


class JacobiPCA(TransformerMixin, BaseEstimator):
    """PCA transformer backed by :func:`jacobi_eigh`.

    Parameters
    ----------
    n_components : int, default=3
    standardize : bool, default=False
        Divide each centred feature by its sample standard deviation first.

    Attributes
    ----------
    model_ : PcaModel
    components_ : ndarray of shape (n_components, n_features)
    explained_variance_ : ndarray of shape (n_components,)
    explained_variance_ratio_ : ndarray of shape (n_components,)
    mean_ : ndarray of shape (n_features,)
    """

    def __init__(self, n_components: int = 3, standardize: bool = False):
        self.n_components = n_components
        self.standardize = standardize

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.model_ = fit_matrix(X, self.n_components, self.standardize)
        self.n_features_in_ = X.shape[1]
        self.components_ = self.model_.components
        self.mean_ = self.model_.mean
        self.explained_variance_ = self.model_.eigenvalues
        self.explained_variance_ratio_ = np.asarray(variance_summary(self.model_).per_dim_ratio)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        return project(self.model_, X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        Z = np.asarray(Z, dtype=np.float64)
        return Z @ self.model_.components * self.model_.scale + self.model_.mean
