"""Orchestration: configuration, data synthesis, training, inference,
evaluation, the gradient audit suite, and the command-line entry point."""

from .checkpoint import Checkpoint, load_checkpoint, load_tensors, save_checkpoint, save_tensors
from .config import RunConfig, config_to_text, load_config, parse_config, save_config
from .dataset import Sample, SynthDataset, load_dataset, save_dataset, synth_dataset
from .evaluate import evaluate
from .gradsuite import COMPONENTS, SuiteRow, run_gradcheck_suite
from .inference import infer
from .optim import Adam
from .system import SampleForward, System, build_system, refine_sample, resolve_model
from .training import Trainer, train

__all__ = [
    "Adam",
    "COMPONENTS",
    "Checkpoint",
    "RunConfig",
    "Sample",
    "SampleForward",
    "SuiteRow",
    "SynthDataset",
    "System",
    "Trainer",
    "build_system",
    "config_to_text",
    "evaluate",
    "infer",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_tensors",
    "parse_config",
    "refine_sample",
    "resolve_model",
    "run_gradcheck_suite",
    "save_checkpoint",
    "save_config",
    "save_dataset",
    "save_tensors",
    "synth_dataset",
    "train",
]
