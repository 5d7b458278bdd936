from .approx import approx_demo
from .checkpoint import Checkpoint, load_checkpoint, model_records, restore, save_checkpoint
from .config import ExperimentConfig, from_dict, load_config
from .data import Dataset, load_dataset
from .report import perplexity, read_report, write_report
from .runner import build_model, run_experiment, run_repeated
from .sweep import sweep_nway
