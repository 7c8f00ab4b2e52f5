"""Block-codec simulator for DNN-predicted frames."""

from .encoder import (
    CODEC_MODES,
    MODES,
    BlockDecision,
    CodecConfig,
    SequenceResult,
    decode_sequence,
    encode_at_psnr,
    encode_sequence,
    rate_at_psnr,
    rdo_select,
    report,
)
from .predictors import ShiftPredictor, translating_sequence
from .refs import Ref, RefLists, Replacement, build_lists, can_predict, rlu_update
from .residual import code_residual, lagrangian, qstep

__all__ = [
    "CODEC_MODES", "MODES", "BlockDecision", "CodecConfig", "SequenceResult", "decode_sequence",
    "encode_at_psnr", "encode_sequence", "rate_at_psnr", "rdo_select", "report", "ShiftPredictor", "translating_sequence",
    "Ref", "RefLists", "Replacement", "build_lists", "can_predict", "rlu_update", "code_residual",
    "lagrangian", "qstep",
]
