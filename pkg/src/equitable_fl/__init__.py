"""Equitable federated learning simulator.

Clients are clustered by the similarity of their activation vectors and
aggregated so that every cluster carries equal total weight.
"""

from .clustering import ClusterAssignment, cluster_cohort, equitable_weights, similarity, spectral_cluster
from .data import ClientDataset, Dataset, PartitionSpec, generate_synthetic, load_idx, partition_planted
from .errors import (CapacityError, ContractViolation, ConvergenceError, DegenerateRowError,
                     DivergenceError, FormatError)
from .experiment import ExperimentConfig, RunSummary, load_config, run_experiment, sweep, write_records
from .federation import HyperParams, aggregate, local_update, run_round, sample_powd, sample_uniform
from .metrics import RoundRecord, client_disagreement, evaluate, nmi, sigma_acc
from .model import ModelParams, activation_vector, init_mlp, log_softmax, loss_and_grad
from .numkernel import jacobi_eigh, kmeans, matmul
from .theory import theorem_eta, validate_theorem_conditions

__version__ = "0.1.0"
