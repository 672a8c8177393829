"""Real-time privacy-preserving release of smart-meter load with adversarially trained recurrent networks.

The releaser perturbs a household load series step by step so that an
adversary cannot infer occupancy, while keeping the distortion small.  Two
releaser objectives are available: ``CAL`` minimises the adversary's
log-likelihood of the true labels and ``DI`` maximises the adversary's
predictive entropy.  Evaluation trains an independent attacker that may also
see calendar side information.
"""
from .data import (DatasetSplit, NormStats, SynthParams, load_raw_csv, resample_hourly, split_dataset,
                   synthesize_dataset, window_days)
from .evaluation import (AttackReport, evaluate_attacker, evaluate_release, generate_release,
                         si_only_baseline, si_predictability_probe, train_attacker)
from .nets import AdversaryNet, AttackerNet, ReleaserNet, init_networks
from .objectives import (adversary_loss, balanced_accuracy, binary_entropy, cal_releaser_loss,
                         di_releaser_loss, distortion, ne2)
from .training import TrainingDiverged, run_training, sweep_lambda
from .types import (ConfigError, ConfusionCounts, ExperimentConfig, LoadSequence, SideInfo,
                    TradeoffPoint, validate_config)

__version__ = "0.1.0"

__all__ = [
    "AdversaryNet",
    "AttackReport",
    "AttackerNet",
    "ConfigError",
    "ConfusionCounts",
    "DatasetSplit",
    "ExperimentConfig",
    "LoadSequence",
    "NormStats",
    "ReleaserNet",
    "SideInfo",
    "SynthParams",
    "TradeoffPoint",
    "TrainingDiverged",
    "adversary_loss",
    "balanced_accuracy",
    "binary_entropy",
    "cal_releaser_loss",
    "di_releaser_loss",
    "distortion",
    "evaluate_attacker",
    "evaluate_release",
    "generate_release",
    "init_networks",
    "load_raw_csv",
    "ne2",
    "resample_hourly",
    "run_training",
    "si_only_baseline",
    "si_predictability_probe",
    "split_dataset",
    "sweep_lambda",
    "synthesize_dataset",
    "train_attacker",
    "validate_config",
    "window_days",
]
