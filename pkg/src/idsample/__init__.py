"""Representative and balanced sampling of labeled traffic datasets."""

from .ingest import (
    Dataset, RawTable, SchemaSpec, CategoricalRankEncoder, ConstantColumnDropper,
    parse_csv, infer_schema, encode, dedup, drop_constant_columns, read_dataset, write_dataset,
)
from .sampling import (
    SampleRecipe, LabelDistribution, SimilarityVerdict, RepresentativeSampler, BalancedSampler,
    label_distribution, distribution_similar, get_sample, get_balanced_sample,
)
from .stats import ZTestResult, SimilarityReport, normal_cdf, z_test, compare_all_features
from .pca import JacobiPCA, PcaModel, VarianceSummary, fit_pca, project, variance_summary, compare_pca

__version__ = "0.1.0"

__all__ = [
    "Dataset", "RawTable", "SchemaSpec", "CategoricalRankEncoder", "ConstantColumnDropper",
    "parse_csv", "infer_schema", "encode", "dedup", "drop_constant_columns", "read_dataset",
    "write_dataset", "SampleRecipe", "LabelDistribution", "SimilarityVerdict",
    "RepresentativeSampler", "BalancedSampler", "label_distribution", "distribution_similar",
    "get_sample", "get_balanced_sample", "ZTestResult", "SimilarityReport", "normal_cdf",
    "z_test", "compare_all_features", "JacobiPCA", "PcaModel", "VarianceSummary", "fit_pca",
    "project", "variance_summary", "compare_pca",
]
