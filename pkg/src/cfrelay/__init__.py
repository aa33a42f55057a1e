"""Compress-forward relaying over the AWGN relay channel.

Multilevel LDPC coding at the source, trellis-coded quantization plus
systematic LDPC at the relay, and joint iterative decoding at the
destination, with mutual-information tooling for per-level rate assignment
and quantizer optimization.
"""

from .channel import ChannelParams
from .constellation import Constellation, build
from .joint_decoder import JointDecoder, JointResult
from .kernels import BACKEND, HAS_NUMBA
from .ldpc import LdpcCode
from .mlc_rates import RateProfile, assign_rates, mi_chainrule_check
from .scalar_baseline import ProductQuantizer, ScalarQuantizer, lloyd_max
from .sim import SimConfig, compare_baselines, load_config, run_sweep
from .tcq import (
    DEFAULT_GENERATOR,
    QuantizerModel,
    TrellisCode,
    bcjr_soft,
    build_trellis,
    make_model,
    viterbi_quantize,
)

__all__ = [
    "BACKEND",
    "ChannelParams",
    "Constellation",
    "HAS_NUMBA",
    "JointDecoder",
    "JointResult",
    "LdpcCode",
    "DEFAULT_GENERATOR",
    "ProductQuantizer",
    "QuantizerModel",
    "RateProfile",
    "ScalarQuantizer",
    "SimConfig",
    "TrellisCode",
    "assign_rates",
    "bcjr_soft",
    "build",
    "build_trellis",
    "compare_baselines",
    "load_config",
    "lloyd_max",
    "make_model",
    "mi_chainrule_check",
    "run_sweep",
    "viterbi_quantize",
]
__version__ = "0.1.0"
