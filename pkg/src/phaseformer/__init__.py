"""Phase-token time series forecasting with router cross-attention, plus
drift and subspace-stability diagnostics."""

__version__ = "0.1.0"

from .data import (RawDataset, SplitSpec, SyntheticLowRank, gen_drifting_cycles,
                   gen_low_rank, load_csv, standardize, windows)
from .diagnostics import (DriftCurves, StabilityReport, TokenSet,
                          build_token_sets, effective_dim, rbf_mmd2,
                          subspace_distance, verify_stability, weekly_drift)
from .estimator import PhaseFormerForecaster
from .model import (ModelConfig, ModelParams, backward, count_params,
                    estimate_flops, forward, init_params, load_checkpoint,
                    mha, save_checkpoint)
from .numerics import (EigenResult, finite_diff_grad, matmul, softmax_rows,
                       sym_eig, top_r_svd)
from .preprocessing import (InstanceStats, estimate_period, phase_detokenize,
                            phase_tokenize, revin_denormalize, revin_normalize)
from .training import (AdamState, TrainReport, adam_step, evaluate, mse_loss,
                       predict_windows, train)

__all__ = [
    "AdamState", "DriftCurves", "EigenResult", "InstanceStats", "ModelConfig",
    "ModelParams", "PhaseFormerForecaster", "RawDataset", "SplitSpec",
    "StabilityReport", "SyntheticLowRank", "TokenSet", "TrainReport",
    "adam_step", "backward",
    "build_token_sets", "count_params", "effective_dim", "estimate_flops",
    "estimate_period", "evaluate", "finite_diff_grad", "forward",
    "gen_drifting_cycles", "gen_low_rank", "init_params", "load_checkpoint",
    "load_csv", "matmul", "mha", "mse_loss", "phase_detokenize",
    "phase_tokenize", "predict_windows", "rbf_mmd2", "revin_denormalize",
    "revin_normalize", "save_checkpoint", "softmax_rows", "standardize",
    "subspace_distance", "sym_eig", "top_r_svd", "train", "verify_stability",
    "weekly_drift", "windows",
]
