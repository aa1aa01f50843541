"""Hawkes-process analysis of multi-neuron spike trains and a Hawkes-driven
jump-diffusion model of a membrane potential."""
from .adm4 import Adm4Config, fit_adm4, select_subnetwork
from .core import (
    SamplePath,
    SpikeDataset,
    Window,
    drop_empty,
    extract_spikes_from_potential,
    load_potential,
    load_spike_dataset,
    write_potential,
    write_spike_dataset,
)
from .depth import curve_depth, depth_validation
from .errors import ConfigError, DataError, HawkesNeuroError, NumericalError
from .gof import GofConfig, quantile, run_gof, subsample_size
from .jumpdiff import (
    EstimConfig,
    JumpDiffusionModel,
    fit_diffusion,
    fit_jumpdiff,
    regenerate,
    simulate_path,
)
from .model import (
    ExpHawkesModel,
    PiecewiseHawkesModel,
    adjacency,
    compensator,
    intensity_at,
    load_model,
    save_model,
    spectral_radius,
)
from .network import matrix_distance, psth, sparsity_fraction, triggered_coefficient
from .npl import NplConfig, fit_npl
from .pipeline import run_pipeline
from .simulation import SimConfig, simulate

__version__ = "0.1.0"
