"""Rectified diffusion on synthetic conditional 2-D data."""

from .data import SyntheticDataset, make_dataset, mode_assignment
from .denoiser import NULL, DenoiserModel, GradientBundle, load_checkpoint, save_checkpoint
from .errors import (DomainError, FormatError, GenerationError, RangeError, RectikitError,
                     TrainingError)
from .metrics import condition_fidelity, endpoint_gap, frechet_gaussian, prediction_drift
from .optim import AdamState, adamw_step
from .rectify import (PairDataset, PairRecord, Provenance, TrainConfig, generate_pairs,
                      load_pairs, rectify_student, save_pairs, train_teacher)
from .report import EvalReport, run_sweep
from .sampler import TimeGrid, Trajectory, ddim_step, euler_step, guided_eps, make_grid, sample
from .schedule import (T_MIN_CLIP, NoiseSchedule, alpha_sigma, drift_diffusion, lambda_of_t,
                       t_of_lambda)

__version__ = "0.1.0"
