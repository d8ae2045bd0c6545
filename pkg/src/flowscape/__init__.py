"""flowscape: potential landscapes and principal-component trajectories
from time series of origin-destination mobility matrices.

Two reduction steps: (1) each hourly OD matrix becomes a scalar potential
over grid cells, the minimal-norm weighted least-squares fit of net flow by
potential differences on a distance-thresholded graph; (2) PCA over the
stacked potentials yields spatial eigenvector maps and temporal score
trajectories.
"""

from .errors import (
    ConfigError,
    DegenerateCentroids,
    DimensionMismatch,
    DuplicateCellId,
    DuplicateLabel,
    EdgeNotInSystem,
    EmptyEdgeSet,
    EmptySelection,
    FlowscapeError,
    MalformedRow,
    MissingArtifacts,
    MixedGrids,
    NegativeCount,
    NoTrips,
    NotCentered,
    SolverDiverged,
    TooFewCells,
    UnknownCellId,
    VolumeUnderflow,
)
from .grid import (
    CoordinateSystem,
    DistanceMatrix,
    EARTH_RADIUS_KM,
    ODSnapshot,
    ProfileBin,
    SliceLabel,
    SpatialGrid,
    load_grid,
    load_od,
    load_od_all,
    nonzero_pair_profile,
    pairwise_distances,
)
from .hodge import (
    EdgeFlow,
    EdgeSystem,
    PotentialField,
    SolverConfig,
    SolverMethod,
    build_edge_system,
    curl,
    div,
    flow_inner,
    flow_norm_sq,
    grad,
    gradient_projection,
    net_flow,
    solve_potential,
    weighted_div,
)
from .pca import (
    ObservationMatrix,
    PcaModel,
    ScreeRow,
    fit,
    reconstruct,
    scores,
    scree,
    stack_potentials,
)
from .pipeline import (
    PipelineConfig,
    run_pca,
    run_pipeline,
    run_potential,
    run_report,
    run_synth,
)
from .synth import (
    DEFAULT_SCENARIOS,
    Factor,
    SynthSpec,
    SynthResult,
    default_factors,
    generate,
    lattice_grid,
    slice_rng,
)
from .weighting import (
    ThresholdRule,
    WeightingMode,
    binary_weights,
    fit_threshold,
    threshold_report,
)

__version__ = "0.1.0"
