"""Representative and balanced sampling.

``get_sample`` draws a uniformly random subset through a seeded Fisher-Yates
shuffle and redraws until the subset's traffic-type distribution passes a
chi-square goodness-of-fit check against the source. ``get_balanced_sample``
keeps every row of the smaller binary class and pairs it with an equally
sized representative sample of the other class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import chi2
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length

from .ingest import Dataset

logger = logging.getLogger(__name__)

BINARY = "binary"
TRAFFIC_TYPE = "traffic_type"


class SamplingError(ValueError):
    pass


class UndecidableSimilarity(SamplingError):
    """Fewer than two buckets remain after pooling; no test is possible."""


class AttemptsExhausted(SamplingError):
    def __init__(self, attempts: int, best: float):
        super().__init__(
            f"no similar sample after {attempts} attempts (best chi-square statistic {best:.6g})"
        )
        self.attempts = attempts
        self.best_statistic = best


@dataclass(frozen=True)
class SampleRecipe:
    seed: int = 0
    similarity_alpha: float = 0.05
    min_expected_count: float = 5.0
    max_attempts: int = 100

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 < self.similarity_alpha < 1:
            raise ValueError("similarity_alpha must lie in (0, 1)")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


@dataclass(frozen=True)
class LabelDistribution:
    granularity: str
    counts: Dict[int, int]
    total: int

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("counts do not sum to total")

    @property
    def proportions(self) -> Dict[int, float]:
        return {k: c / self.total for k, c in self.counts.items()}


@dataclass(frozen=True)
class SimilarityVerdict:
    statistic: float
    threshold: float
    degrees_of_freedom: int
    merged_classes: Tuple[int, ...]
    similar: bool


def label_distribution(ds: Dataset, granularity: str = TRAFFIC_TYPE) -> LabelDistribution:
    """Exact per-class counts of the binary or traffic-type label."""
    if ds.n_rows == 0:
        raise SamplingError("empty dataset has no label distribution")
    if granularity == BINARY:
        labels = ds.binary_label
    elif granularity == TRAFFIC_TYPE:
        labels = ds.traffic_type
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    values, counts = np.unique(labels, return_counts=True)
    return LabelDistribution(
        granularity, {int(v): int(c) for v, c in zip(values, counts)}, int(ds.n_rows)
    )


def distribution_similar(
    reference: LabelDistribution, candidate: LabelDistribution, recipe: SampleRecipe
) -> SimilarityVerdict:
    """Chi-square goodness of fit of ``candidate`` counts to ``reference`` proportions.

    Classes expected fewer than ``recipe.min_expected_count`` times are pooled
    into a single bucket before testing. A class seen in the candidate but
    absent from the reference makes the verdict dissimilar outright.
    """
    if reference.granularity != candidate.granularity:
        raise ValueError("distributions have different granularity")
    if candidate.total < 1:
        raise ValueError("candidate distribution is empty")

    n = candidate.total
    ref_props = reference.proportions
    expected = {k: n * p for k, p in ref_props.items()}
    pooled = tuple(sorted(k for k, e in expected.items() if e < recipe.min_expected_count))

    buckets: List[Tuple[float, float]] = [
        (candidate.counts.get(k, 0), e) for k, e in sorted(expected.items()) if k not in pooled
    ]
    if pooled:
        buckets.append(
            (sum(candidate.counts.get(k, 0) for k in pooled), sum(expected[k] for k in pooled))
        )
    if len(buckets) < 2:
        raise UndecidableSimilarity(
            f"{len(buckets)} bucket(s) after pooling; need at least 2 to test similarity"
        )

    df = len(buckets) - 1
    threshold = float(chi2.ppf(1.0 - recipe.similarity_alpha, df))
    statistic = float(sum((o - e) ** 2 / e for o, e in buckets))

    foreign = any(k not in ref_props and c > 0 for k, c in candidate.counts.items())
    return SimilarityVerdict(
        statistic=statistic,
        threshold=threshold,
        degrees_of_freedom=df,
        merged_classes=pooled,
        similar=(statistic <= threshold) and not foreign,
    )


def fisher_yates_head(n: int, num: int, rng: np.random.Generator) -> np.ndarray:
    """First ``num`` entries of a uniform random permutation of ``range(n)``.

    Forward Fisher-Yates: step ``i`` swaps position ``i`` with a uniform
    position in ``[i, n)``. Later steps never touch earlier positions, so
    stopping after ``num`` steps yields exactly the head of the full shuffle.
    """
    if not 0 <= num <= n:
        raise ValueError(f"num={num} outside [0, {n}]")
    if num == 0:
        return np.empty(0, dtype=np.int64)
    steps = min(num, n - 1)
    targets = rng.integers(np.arange(steps), n).tolist()
    perm = list(range(n))
    for i, j in enumerate(targets):
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm[:num], dtype=np.int64)


@dataclass
class SampleOutcome:
    indices: np.ndarray
    attempts: int
    verdict: Optional[SimilarityVerdict]
    notes: List[str] = field(default_factory=list)


def draw_representative(
    ds: Dataset, num: int, recipe: SampleRecipe, rng: np.random.Generator
) -> SampleOutcome:
    if not 1 <= num <= ds.n_rows:
        raise SamplingError(f"sample size {num} outside [1, {ds.n_rows}]")
    reference = label_distribution(ds, TRAFFIC_TYPE)
    best = np.inf
    for attempt in range(1, recipe.max_attempts + 1):
        idx = fisher_yates_head(ds.n_rows, num, rng)
        candidate = LabelDistribution(
            TRAFFIC_TYPE,
            {int(v): int(c) for v, c in zip(*np.unique(ds.traffic_type[idx], return_counts=True))},
            num,
        )
        try:
            verdict = distribution_similar(reference, candidate, recipe)
        except UndecidableSimilarity as exc:
            # a single class or all-pooled sample cannot deviate testably
            return SampleOutcome(idx, attempt, None, [f"similarity not testable: {exc}"])
        if verdict.similar:
            return SampleOutcome(idx, attempt, verdict)
        best = min(best, verdict.statistic)
        logger.debug("attempt %d rejected: chi2=%.4g > %.4g", attempt, verdict.statistic, verdict.threshold)
    raise AttemptsExhausted(recipe.max_attempts, best)


def describe_outcome(outcome: SampleOutcome, recipe: SampleRecipe) -> str:
    stat = "n/a" if outcome.verdict is None else f"{outcome.verdict.statistic:.10g}"
    return (
        f"sample: seed={recipe.seed} attempts={outcome.attempts} chi2={stat}"
        + "".join(f"; {n}" for n in outcome.notes)
    )


def get_sample(ds: Dataset, num: int, recipe: SampleRecipe = SampleRecipe()) -> Dataset:
    """Random ``num``-row subset whose traffic-type mix matches ``ds``.

    Rows come out in shuffled order. Each rejected draw advances the same
    random stream, so retries never repeat a permutation.
    """
    outcome = draw_representative(ds, num, recipe, recipe.generator())
    return ds.take(outcome.indices, note=describe_outcome(outcome, recipe))


def balanced_indices(ds: Dataset, recipe: SampleRecipe) -> Tuple[np.ndarray, Optional[SampleOutcome], str]:
    counts = np.bincount(ds.binary_label, minlength=2)
    if counts.min() == 0:
        raise SamplingError("dataset lacks one of the binary classes; cannot balance")
    if counts[0] == counts[1]:
        return np.arange(ds.n_rows), None, "balance: classes already equal, dataset unchanged"
    min_label = int(np.argmin(counts))
    minority = np.flatnonzero(ds.binary_label == min_label)
    majority = np.flatnonzero(ds.binary_label != min_label)
    majority_ds = ds.take(majority)
    outcome = draw_representative(majority_ds, len(minority), recipe, recipe.generator())
    idx = np.concatenate([minority, majority[outcome.indices]])
    note = f"balance: min_label={min_label} m={len(minority)}; {describe_outcome(outcome, recipe)}"
    return idx, outcome, note


def get_balanced_sample(ds: Dataset, recipe: SampleRecipe = SampleRecipe()) -> Dataset:
    """Every minority-class row followed by an equal-size sample of the rest."""
    idx, _, note = balanced_indices(ds, recipe)
    return ds.take(idx, note=note)


# ------------------------------------------------------------------ #
#  Estimator interface                                                #
# ------------------------------------------------------------------ #


def _as_dataset(X, y, normal_label=None) -> Tuple[Dataset, np.ndarray]:
    X = check_array(X, dtype=np.float64)
    y = np.asarray(y)
    check_consistent_length(X, y)
    classes, ids = np.unique(y, return_inverse=True)
    if normal_label is None:
        binary = np.zeros(len(y), dtype=np.int8)
        normal = str(classes[0])
    else:
        binary = (y != normal_label).astype(np.int8)
        normal = str(normal_label)
    ds = Dataset(
        features=X,
        feature_names=tuple(f"x{i}" for i in range(X.shape[1])),
        binary_label=binary,
        traffic_type=ids.reshape(-1),
        class_names=tuple(str(c) for c in classes),
        normal_class=normal,
    )
    return ds, classes


class RepresentativeSampler(BaseEstimator):
    """Draw ``n_samples`` (or ``fraction`` of) rows preserving the label mix.

    Parameters
    ----------
    n_samples : int, optional
        Absolute sample size; overrides ``fraction``.
    fraction : float, default=0.5
        Sample size as a share of the input rows (rounded half-to-even).
    random_state : int, default=0
    alpha : float, default=0.05
        Chi-square significance level of the acceptance check.
    min_expected_count : float, default=5.0
    max_attempts : int, default=100

    Attributes
    ----------
    sample_indices_ : ndarray
        Rows of the input selected by the last :meth:`fit_resample`.
    n_attempts_ : int
    verdict_ : SimilarityVerdict or None
    """

    def __init__(self, n_samples=None, fraction=0.5, random_state=0, alpha=0.05,
                 min_expected_count=5.0, max_attempts=100):
        self.n_samples = n_samples
        self.fraction = fraction
        self.random_state = random_state
        self.alpha = alpha
        self.min_expected_count = min_expected_count
        self.max_attempts = max_attempts

    def _recipe(self) -> SampleRecipe:
        return SampleRecipe(int(self.random_state), self.alpha, self.min_expected_count,
                            self.max_attempts)

    def fit_resample(self, X, y):
        ds, classes = _as_dataset(X, y)
        num = self.n_samples if self.n_samples is not None else int(round(self.fraction * ds.n_rows))
        recipe = self._recipe()
        outcome = draw_representative(ds, num, recipe, recipe.generator())
        self.sample_indices_ = outcome.indices
        self.n_attempts_ = outcome.attempts
        self.verdict_ = outcome.verdict
        return np.asarray(X)[outcome.indices], np.asarray(y)[outcome.indices]


class BalancedSampler(RepresentativeSampler):
    """Undersample the larger of normal/attack down to the smaller one.

    ``y`` holds traffic types; rows equal to ``normal_label`` form class 0 and
    everything else class 1. All rows of the smaller class are kept.
    """

    def __init__(self, normal_label="normal", random_state=0, alpha=0.05,
                 min_expected_count=5.0, max_attempts=100):
        self.normal_label = normal_label
        self.random_state = random_state
        self.alpha = alpha
        self.min_expected_count = min_expected_count
        self.max_attempts = max_attempts

    def fit_resample(self, X, y):
        ds, _ = _as_dataset(X, y, normal_label=self.normal_label)
        idx, outcome, _ = balanced_indices(ds, self._recipe())
        self.sample_indices_ = idx
        self.n_attempts_ = 0 if outcome is None else outcome.attempts
        self.verdict_ = None if outcome is None else outcome.verdict
        return np.asarray(X)[idx], np.asarray(y)[idx]
