"""Secret-key-rate estimation from dual-frequency GNSS carrier phase.

The pipeline: decode raw receiver captures (ubx), form geometry-free
combinations and flag cycle slips (observables), align three receivers and
cut validated blocks (segmentation), detrend/smooth/normalize (preprocess),
estimate mutual information and key rates (infotheory), aggregate into
session tables and sky plots (analysis). The synth module generates
scenarios with closed-form ground truth, and cli ties everything into
reproducible batch commands.
"""

from .analysis import (
    AvailabilityRow,
    CriteriaFilter,
    CriteriaRow,
    availability_table,
    builtin_filters,
    criteria_table,
    filter_records,
    mi_export,
    rsk_distribution,
    skyplot_export,
)
from .errors import PhaseKeyError
from .infotheory import (
    MiEstimate,
    SkrRecord,
    evaluate_block,
    ksg_mi,
    secret_key_rate,
    secure_bit_rate,
)
from .observables import GfSample, GfSeries, build_gf_series, detect_cycle_slips, geometry_free
from .preprocess import (
    CascadeParams,
    ProcessedSeries,
    detrend_poly,
    normalize,
    preprocess_cascade,
    savgol,
)
from .segmentation import AlignedBlock, align_epochs, block_geometry, make_blocks
from .synth import (
    ScenarioSpec,
    closed_form_gaussian_mi,
    gen_gaussian_triple,
    gen_satellite_like,
)
from .ubx import (
    Band,
    CarrierPhaseObs,
    Constellation,
    ObservationStore,
    Role,
    SatelliteId,
    SatGeometry,
    UbxFrame,
    decode_navsat,
    decode_rawx,
    ingest_file,
    parse_ubx_stream,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedBlock",
    "AvailabilityRow",
    "Band",
    "CarrierPhaseObs",
    "CascadeParams",
    "Constellation",
    "CriteriaFilter",
    "CriteriaRow",
    "GfSample",
    "GfSeries",
    "MiEstimate",
    "ObservationStore",
    "PhaseKeyError",
    "ProcessedSeries",
    "Role",
    "SatGeometry",
    "SatelliteId",
    "ScenarioSpec",
    "SkrRecord",
    "UbxFrame",
    "align_epochs",
    "availability_table",
    "block_geometry",
    "build_gf_series",
    "builtin_filters",
    "closed_form_gaussian_mi",
    "criteria_table",
    "decode_navsat",
    "decode_rawx",
    "detect_cycle_slips",
    "detrend_poly",
    "evaluate_block",
    "filter_records",
    "gen_gaussian_triple",
    "gen_satellite_like",
    "geometry_free",
    "ingest_file",
    "ksg_mi",
    "make_blocks",
    "mi_export",
    "normalize",
    "parse_ubx_stream",
    "preprocess_cascade",
    "rsk_distribution",
    "savgol",
    "secret_key_rate",
    "secure_bit_rate",
    "skyplot_export",
]
