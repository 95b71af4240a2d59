"""Two-sample Z-tests of means and per-dimension similarity reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import List, Sequence

import numpy as np

from .ingest import Dataset

ALL_FEATURES = "all_features"
PCA = "pca"

_SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF, via ``erfc`` so both tails keep full precision."""
    return 0.5 * math.erfc(-x / _SQRT2)


def two_sided_p(z: float) -> float:
    """``2 * (1 - normal_cdf(|z|))`` without the cancellation."""
    return math.erfc(abs(z) / _SQRT2)


@dataclass(frozen=True)
class ZTestResult:
    dimension_name: str
    mean_a: float
    mean_b: float
    variance_a: float
    variance_b: float
    n_a: int
    n_b: int
    z_statistic: float
    p_value: float
    similar: bool


def z_test(a, b, dimension_name: str = "", alpha: float = 0.05) -> ZTestResult:
    """Two-sided Z-test of ``mean(a) == mean(b)`` using sample variances.

    When both variances are zero the test is decided by the means alone:
    equal means give ``z=0, p=1``; different means give ``z=nan, p=0``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("z_test needs at least 2 values on each side")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a, var_b = float(a.var(ddof=1)), float(b.var(ddof=1))
    se2 = var_a / a.size + var_b / b.size
    if se2 > 0:
        z = (mean_a - mean_b) / math.sqrt(se2)
        p = two_sided_p(z)
    elif mean_a == mean_b:
        z, p = 0.0, 1.0
    else:
        z, p = math.nan, 0.0
    return ZTestResult(dimension_name, mean_a, mean_b, var_a, var_b, int(a.size), int(b.size),
                       z, p, p >= alpha)


@dataclass(frozen=True)
class SimilarityReport:
    method: str
    alpha: float
    per_dimension: tuple

    @property
    def n_similar(self) -> int:
        return sum(r.similar for r in self.per_dimension)

    @property
    def n_different(self) -> int:
        return len(self.per_dimension) - self.n_similar

    @property
    def overall_similar(self) -> bool:
        return self.n_different == 0

    def summary(self) -> str:
        return f"{self.n_similar} similar, {self.n_different} different"

    def to_dict(self) -> dict:
        rows = []
        for r in self.per_dimension:
            row = asdict(r)
            if math.isnan(row["z_statistic"]):
                row["z_statistic"] = None
            rows.append(row)
        return {
            "method": self.method,
            "alpha": self.alpha,
            "n_similar": self.n_similar,
            "n_different": self.n_different,
            "overall_similar": self.overall_similar,
            "summary": self.summary(),
            "per_dimension": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compare_columns(a: np.ndarray, b: np.ndarray, names: Sequence[str], alpha: float,
                    method: str) -> SimilarityReport:
    results: List[ZTestResult] = [
        z_test(a[:, j], b[:, j], names[j], alpha) for j in range(a.shape[1])
    ]
    return SimilarityReport(method, alpha, tuple(results))


def compare_all_features(ds: Dataset, sample: Dataset, alpha: float = 0.05) -> SimilarityReport:
    """Z-test every feature column of ``sample`` against ``ds``."""
    if ds.feature_names != sample.feature_names:
        raise ValueError(
            "feature names differ between dataset and sample: "
            f"{len(ds.feature_names)} vs {len(sample.feature_names)} columns"
        )
    return compare_columns(ds.features, sample.features, ds.feature_names, alpha, ALL_FEATURES)
