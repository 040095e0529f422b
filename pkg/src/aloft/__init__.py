"""Low-frequency spectrum perturbation for domain generalization with global filter networks."""

from .analysis import DomainGapReport, FreqCurve, domain_features, emit_csv, freq_response, inter_domain_distance
from .data import DomainDataset, SyntheticSpec, gen_synthetic, load_folder, save_folder
from .errors import AloftError, DimensionError, NumericError, ParseError, ValidationError
from .model import Checkpoint, ModelConfig, init_params, model_forward, param_count, predict, presets
from .pipeline import RunResult, TrainConfig, evaluate, lodo_run, lodo_seeds, train
from .rng import Rng
from .spectral import build_mask, dft2, filter_image, idft2, split_bands
from .transforms import AloftConfig, aloft_e, aloft_s, apply_aloft, perturb_spectrum

__all__ = [
    "DomainGapReport",
    "FreqCurve",
    "domain_features",
    "emit_csv",
    "freq_response",
    "inter_domain_distance",
    "DomainDataset",
    "SyntheticSpec",
    "gen_synthetic",
    "load_folder",
    "save_folder",
    "AloftError",
    "DimensionError",
    "NumericError",
    "ParseError",
    "ValidationError",
    "Checkpoint",
    "ModelConfig",
    "init_params",
    "model_forward",
    "param_count",
    "predict",
    "presets",
    "RunResult",
    "TrainConfig",
    "evaluate",
    "lodo_run",
    "lodo_seeds",
    "train",
    "Rng",
    "build_mask",
    "dft2",
    "filter_image",
    "idft2",
    "split_bands",
    "AloftConfig",
    "aloft_e",
    "aloft_s",
    "apply_aloft",
    "perturb_spectrum",
]

__version__ = "0.1.0"
