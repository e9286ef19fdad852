"""Quantized message passing decoding of SC-LDPC codes with higher-order
modulation and probabilistic amplitude shaping: density evolution,
finite-length decoders and a Monte Carlo FER harness.
"""

from .constellation import (
    SignalingMode,
    preset_mode,
    preset_names,
    make_mode,
    load_mode,
    save_mode,
    rbmd,
    rbmd_inv,
    surrogate_channels,
    empirical_channels,
)
from .protograph import (
    ScEnsemble,
    sc_ensemble,
    coupled_base,
    window_base,
    LiftedCode,
    lift,
    load_code,
    save_code,
    to_alist,
)
from .de import (
    DeConfig,
    DeResult,
    WeightSchedule,
    de_run,
    threshold,
    load_schedule,
    save_schedule,
    mapping_for,
)
from .decoders import (
    DecoderGraph,
    DecodeResult,
    decode,
    decode_bp,
    quantize,
)
from .sim import (
    SimPlan,
    FerRecord,
    run_fer,
    cp_interval,
    write_fer_csv,
    read_fer_csv,
)

__version__ = "0.1.0"

__all__ = [
    "SignalingMode", "preset_mode", "preset_names", "make_mode",
    "load_mode", "save_mode", "rbmd", "rbmd_inv",
    "surrogate_channels", "empirical_channels",
    "ScEnsemble", "sc_ensemble", "coupled_base", "window_base",
    "LiftedCode", "lift", "load_code", "save_code", "to_alist",
    "DeConfig", "DeResult", "WeightSchedule", "de_run", "threshold",
    "load_schedule", "save_schedule", "mapping_for",
    "DecoderGraph", "DecodeResult", "decode", "decode_bp", "quantize",
    "SimPlan", "FerRecord", "run_fer", "cp_interval",
    "write_fer_csv", "read_fer_csv",
]
