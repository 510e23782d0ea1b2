"""Discrete Urysohn operators: evaluation, iterative identification and analysis."""
from .errors import (
    BadBlockSize, BadPinPattern, DegenerateReference, Inconsistent, InsufficientQueries,
    LengthMismatch, LevelOutOfRange, MalformedModel, NonFinite, SeriesTooShort,
    SingularGeometry, TooLarge, UrysohnError,
)
from .operator import (
    InterpolationStencil, SignalSeries, UrysohnModel, eval_interpolated, eval_quantized,
    flatten_levels, flatten_multi_input, quantize, quantize_levels, stencil, unflatten_level,
)
from .identify import (
    CoverageReport, IdentConfig, IdentState, coverage_report, extrapolate_edges,
    ident_step_interpolated, ident_step_quantized, identify_levels, predict_with_validity,
    run_epochs, run_identification,
)
from .analysis import (
    AssembledSystem, DescribabilityReport, Structure, StructureReport, assemble_system,
    block_column_rank, brute_rank, check_describability, check_describability_recorded,
    classify_structure, enumerate_full_system, min_norm_solve, pin_and_solve,
)

__version__ = "0.1.0"
