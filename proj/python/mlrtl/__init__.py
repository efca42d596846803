"""Fixed-point emulation and Verilog generation for tree ensembles and dense networks."""

from ._mlrtl import (
    SCHEMA_VERSION,
    MlrtlError,
    __version__,
    calibrate_and_quantize,
    compile,
    demo_bdt,
    demo_fcnn,
    dequantize,
    fxp_add,
    fxp_mul,
    ingest,
    lint_verilog,
    make_synthetic,
    metric_accuracy,
    metric_auc,
    normalize_format,
    normalize_model,
    predict_fixed,
    predict_float,
    quantize_real,
)


def error_code(exc):
    """Machine-readable code of an MlrtlError, e.g. "MalformedJson"."""
    return str(exc).split(":", 1)[0]


__all__ = [
    "SCHEMA_VERSION",
    "MlrtlError",
    "__version__",
    "calibrate_and_quantize",
    "compile",
    "demo_bdt",
    "demo_fcnn",
    "dequantize",
    "error_code",
    "fxp_add",
    "fxp_mul",
    "ingest",
    "lint_verilog",
    "make_synthetic",
    "metric_accuracy",
    "metric_auc",
    "normalize_format",
    "normalize_model",
    "predict_fixed",
    "predict_float",
    "quantize_real",
]
