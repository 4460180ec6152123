"""Simulated multi-aggregator deployment, toy training and attack scenarios."""
from .attacks import ScenarioVerdict, default_attack_config, run_attack_scenario
from .config import (
    AdversarySpec,
    DropEvent,
    ExperimentConfig,
    TrainerSpec,
    load_config,
    parse_config,
)
from .data import Dataset, load_csv, make_two_class, partition_data
from .simulation import (
    ExperimentResult,
    RoundRecord,
    Simulation,
    run_experiment,
    run_plaintext_fedavg,
    run_round,
)
from .trainer import ToyModel, train_local
from .transport import Transport

__all__ = [
    "AdversarySpec", "Dataset", "DropEvent", "ExperimentConfig", "ExperimentResult",
    "RoundRecord", "ScenarioVerdict", "Simulation", "ToyModel", "TrainerSpec", "Transport",
    "default_attack_config", "load_config", "load_csv", "make_two_class", "parse_config",
    "partition_data", "run_attack_scenario", "run_experiment", "run_plaintext_fedavg",
    "run_round", "train_local",
]
