"""Spatial 5G downlink throughput prediction and model comparison toolkit."""

from .dataset import (
    MeasurementSet,
    PairedPoint,
    PairingResult,
    ParseResult,
    RawSample,
    Waypoint,
    aggregate_by_location,
    pair_nearest_neighbor,
    parse_raw_csv,
    split_train_test,
)
from .gpr import (
    GprModel,
    Prediction,
    build_model,
    fit,
    init_heuristics,
    load_model,
    log_marginal_likelihood,
    predict,
    predict_grid,
    save_model,
)
from .kernels import (
    KernelKind,
    KernelSpec,
    base_eval,
    composite_eval,
    covariance_gradients,
    covariance_matrix,
)
from .linklayer import (
    LayerRule,
    McsTableEntry,
    PathLossModel,
    RadioConfig,
    default_mcs_table,
    layers_from_sinr,
    mcs_from_sinr,
    path_loss,
    predict_map,
    sinr_at,
    throughput_from_link,
)
from .raster import GridMap, build_grid, export_heatmap, read_grid_csv, write_grid_csv
from .scorecard import (
    ErrorScorecard,
    HistogramSpec,
    compute_scorecard,
    pdf_histogram,
    relative_errors,
    signed_errors,
)

__version__ = "0.1.0"
