"""Causal dataset-bias simulation, fair representation learning and evaluation."""

__version__ = "0.1.0"

from .errors import CapacityError, InputError, TrainingDivergenceError
from .graph import (BIASED_MECHANISMS, BiasMechanism, CausalDag, Fairness, NodeRole,
                    d_separated, graphically_unbiased, mechanism_template,
                    remove_unfair_pathways)
from .scm import (PRESETS, DiscreteScm, JointTable, ScmConfig, build_scm, exact_joint,
                  preset_config, random_scm, sample_dataset, unbiased_counterpart)
from .datasets import Dataset, SplitSpec, inject_label_bias, read_dataset, split, write_dataset
from .models import (FrlPenaltySpec, ModelSpec, TrainedModel, load_model, predict, save_model,
                     train_erm, train_frl, train_oracle_frl)
from .metrics import (FairnessVerdict, MiEstimate, auc, bayes_logit, fairness_verdict,
                      group_accuracy, measure_separability, mutual_information_exact,
                      mutual_information_plugin, representation_mi)
from .stats import TestResult, bootstrap_ci, holm_bonferroni, kendall_tau, mann_whitney_u
from .experiments import ExperimentConfig, ExperimentReport, load_config, run_experiment
