"""Desk-scale class-incremental continual learning lab.

Rehearsal methods (ER, DER, DER++) with pluggable regularizers, a
class-balanced reservoir buffer, and an accuracy/forgetting evaluation
harness. Everything runs deterministically per seed in float64.
"""

from .buffer import BufferEntry, ReplayBuffer, stack_entries
from .data import (Dataset, LabeledData, TaskSpec, TaskStream,
                   load_dataset_csv, make_synthetic_gaussian,
                   save_dataset_csv, split_class_incremental, split_per_class)
from .errors import (ConfigError, DataError, NumericError, ParseError,
                     ReplayLabError)
from .harness import (ExperimentConfig, ResultRecord, config_from_dict,
                      emit_results, parse_config, run_grid, summarize)
from .metrics import AccuracyMatrix, compute_acc, compute_fr
from .net import (Gradients, Mlp, backward, cross_entropy,
                  cross_entropy_grad, forward, sgd_step, softmax)
from .regularizers import (EwcState, RegKind, RegTarget, SiState,
                           diversity_term, em_grad_wrt_logits, em_loss,
                           entropy_term, ewc_consolidate, ewc_penalty,
                           ewc_penalty_grad, im_grad_wrt_logits, im_loss,
                           si_accumulate, si_consolidate, si_penalty,
                           si_penalty_grad)
from .training import (LossBreakdown, Method, TrainConfig, der_loss,
                       derpp_loss, er_loss, evaluate_accuracy, run_sequence,
                       train_batch, train_task)

__version__ = "0.1.0"
