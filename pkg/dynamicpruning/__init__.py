"""
Dynamic data pruning: re-deciding the training subset at every checkpoint.
"""

__version_number__ = '1.0.0'

from .dataset import Dataset, gen_blobs, gen_engineered_blobs, load_csv, save_csv, apply_imbalance, downsample, split_holdout
from .learner import Architecture, LearnerConfig, init_learner, sgd_epoch, per_sample_loss, accuracy
from .scoreboard import Scoreboard, init_scores
from .policies import PolicySpec, StaticSource, compute_k, select_subset
from .driver import RunConfig, RunRecord, SweepGrid, run_experiment, baseline_run, run_sweep
from .analysis import selection_profile, classify_groups, cumulative_curve, retrain_modes
from .config import parse_config, dump_config, build_datasets
from .report import emit_report

from . import exceptions
from . import commons
from . import policies
from . import analysis
from . import config
from . import report
