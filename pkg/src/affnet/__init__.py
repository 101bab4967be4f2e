"""Adaptive frequency filtering token mixers and a micro-scale backbone.

Hot kernels come from the compiled ``affnet._kernels`` extension when it is
built, otherwise from a numpy fallback; ``affnet.backend_name()`` reports
which one is in use.
"""

from ._backend import kernels as _kernels
from .autodiff import ParamStore, Tape, gradcheck
from .errors import (AffError, AgreementError, AxisError, ConfigError, DeterminismError, FormatError,
                     NonFiniteError, PlanError, RankError, ShapeError, SizeError, TrainingDiverged)
from .mixers import (AffMixerParams, MixerKind, aff_forward, circular_dwconv_oracle, commutativity_check,
                     effective_kernel, variant_forward)
from .network import (AffNet, AffNetConfig, build_affnet, count_flops, count_params, load_checkpoint,
                      micro_config, model_forward, save_checkpoint)
from .spectral import FftPlan, dft2_naive, fft2, fft2_real, ifft2
from .train import TrainConfig, adamw_step, lr_at, train_loop

__version__ = "0.1.0"


def backend_name() -> str:
    return _kernels.NAME


__all__ = [
    "AffError", "AffMixerParams", "AffNet", "AffNetConfig", "AgreementError", "AxisError", "ConfigError",
    "DeterminismError", "FftPlan", "FormatError", "MixerKind", "NonFiniteError", "ParamStore", "PlanError",
    "RankError", "ShapeError", "SizeError", "Tape", "TrainConfig", "TrainingDiverged", "adamw_step",
    "aff_forward", "backend_name", "build_affnet", "circular_dwconv_oracle", "commutativity_check",
    "count_flops", "count_params", "dft2_naive", "effective_kernel", "fft2", "fft2_real", "gradcheck",
    "ifft2", "load_checkpoint", "lr_at", "micro_config", "model_forward", "save_checkpoint", "train_loop",
    "variant_forward",
]
