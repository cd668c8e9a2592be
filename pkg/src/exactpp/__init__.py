"""Exact sampling of cluster point processes, Boolean models, and Hawkes processes.

Samplers produce point patterns on bounded windows whose law is exactly the
restriction of the stationary target process, germ truncation and retention
thinning included. The package is organized by construction:

- core: windows, point patterns, reproducible RNG streams, intensity measures
- poisson: homogeneous / dominated / finite-density Poisson samplers
- cluster_exact: retention thinning with clusters conditioned to hit the window
- boolean_model: grain processes (disks, segments, lines) with edge correction
- germ_thinning: thinned grids, renewal streams, Matern hard cores,
  non-linear self-exciting germs
- hawkes_mr: perfect sampling of linear Hawkes processes via fixed-point
  sandwich bounds on the cluster-length distribution
- branching_approx: generation-truncated branching with variation-distance
  certificates
- validation: statistical acceptance harness (KS, chi-square, Laplace, Holm)
- oracles: independently-coded reference samplers used only by validation
- cli: `exactpp sample | validate | plotdata` driven by JSON configs
"""

from .boolean_model import (
    BooleanSample,
    DiskGrains,
    DiskWindow,
    ExpRadius,
    FixedRadius,
    SegmentGrains,
    UniformRadius,
    boolean_exact_sample,
    hit_prob_poisson_line,
    sample_poisson_lines,
)
from .branching_approx import (
    TruncationCertificate,
    approx_branching_sample,
    certificate_generations_for,
)
from .cluster_exact import (
    BrixKendallSampler,
    TranslatedPoissonCluster,
    UniformDisplacement,
    brix_kendall_sample,
    retention_prob_cox,
    sample_conditioned_cluster,
)
from .core import (
    AtomicIntensity,
    ConfigError,
    DensityIntensity,
    LebesgueIntensity,
    PointPattern,
    RngStream,
    SamplerError,
    Window,
    branching_total_intensity,
    cluster_intensity,
    window_volume,
)
from .germ_thinning import (
    GeometricGrid,
    InverseSquareGrid,
    TableGrid,
    grid_last_point,
    matern_thin_first,
    nonlinear_hawkes_germ,
    renewal_thin_first,
    thin_grid,
    thin_grid_dominated,
)
from .hawkes_mr import (
    ExponentialFertility,
    GWCluster,
    HawkesSampler,
    PhiOperator,
    PiecewiseConstantFertility,
    PolynomialFertility,
    Sandwich,
    build_sandwich,
    mr_perfect_sample,
    phi_apply,
    sample_gw_cluster,
)

__version__ = "0.1.0"

__all__ = [
    "AtomicIntensity",
    "BooleanSample",
    "BrixKendallSampler",
    "ConfigError",
    "DensityIntensity",
    "DiskGrains",
    "DiskWindow",
    "ExpRadius",
    "ExponentialFertility",
    "FixedRadius",
    "GWCluster",
    "GeometricGrid",
    "HawkesSampler",
    "InverseSquareGrid",
    "LebesgueIntensity",
    "PhiOperator",
    "PiecewiseConstantFertility",
    "PointPattern",
    "PolynomialFertility",
    "RngStream",
    "SamplerError",
    "Sandwich",
    "SegmentGrains",
    "TableGrid",
    "TranslatedPoissonCluster",
    "TruncationCertificate",
    "UniformDisplacement",
    "UniformRadius",
    "Window",
    "approx_branching_sample",
    "boolean_exact_sample",
    "branching_total_intensity",
    "brix_kendall_sample",
    "build_sandwich",
    "certificate_generations_for",
    "cluster_intensity",
    "grid_last_point",
    "hit_prob_poisson_line",
    "matern_thin_first",
    "mr_perfect_sample",
    "nonlinear_hawkes_germ",
    "phi_apply",
    "renewal_thin_first",
    "retention_prob_cox",
    "sample_conditioned_cluster",
    "sample_gw_cluster",
    "sample_poisson_lines",
    "thin_grid",
    "thin_grid_dominated",
    "window_volume",
]
