"""Moment-matching compression of weighted point sets, with applications to
dataset distillation and two-layer network width reduction.

The core guarantee: any nonnegative weighted set of d points in R^m can be
reduced to at most C(m+k, k) supported points with every mixed moment up to
order k preserved, which keeps all symmetric analytic functionals of the set
approximately (often exactly) unchanged.
"""

from .caratheodory import (
    MomentToleranceError,
    ReductionReport,
    null_vector,
    reduce_support,
)
from .clustering import ClusterAssignment, greedy_smallest_cluster, kmeans, pairwise_distances
from .compressor import CompressionConfig, compress, compression_error
from .data import (
    LabeledDataset,
    bessel_j,
    cylindrical_harmonic,
    load_dataset_binary,
    load_dataset_csv,
    make_harmonic_dataset,
    make_teacher_student,
    save_dataset_binary,
    save_dataset_csv,
    weighted_minibatch,
)
from .estimator import SetCompressor
from .experiments import (
    ExperimentReport,
    PowerLawFit,
    fit_power_law,
    run_dataset_compression,
    run_error_scaling,
    run_lth,
    run_nsl,
)
from .moments import (
    MomentVector,
    WeightedSet,
    feature_map,
    feature_matrix,
    load_weighted_set_csv,
    moment_vector,
    multi_index_basis,
    n_basis,
    save_weighted_set_csv,
)
from .nn import (
    OptState,
    TrainConfig,
    TwoLayerNet,
    compress_width,
    finite_diff_grad_check,
    fold,
    forward,
    from_neuron_objects,
    init_net,
    load_checkpoint,
    loss_and_grads,
    mse_eval,
    neuron_objects,
    save_checkpoint,
    train,
)
from .seeding import derive_seed
from .symfunc import ProbeFunction, eval_probe, make_probes, sigmoid

__version__ = "0.1.0"

__all__ = [
    "MomentToleranceError",
    "ReductionReport",
    "null_vector",
    "reduce_support",
    "ClusterAssignment",
    "greedy_smallest_cluster",
    "kmeans",
    "pairwise_distances",
    "CompressionConfig",
    "compress",
    "compression_error",
    "LabeledDataset",
    "bessel_j",
    "cylindrical_harmonic",
    "load_dataset_binary",
    "load_dataset_csv",
    "make_harmonic_dataset",
    "make_teacher_student",
    "save_dataset_binary",
    "save_dataset_csv",
    "weighted_minibatch",
    "SetCompressor",
    "ExperimentReport",
    "PowerLawFit",
    "fit_power_law",
    "run_dataset_compression",
    "run_error_scaling",
    "run_lth",
    "run_nsl",
    "MomentVector",
    "WeightedSet",
    "feature_map",
    "feature_matrix",
    "load_weighted_set_csv",
    "moment_vector",
    "multi_index_basis",
    "n_basis",
    "save_weighted_set_csv",
    "OptState",
    "TrainConfig",
    "TwoLayerNet",
    "compress_width",
    "finite_diff_grad_check",
    "fold",
    "forward",
    "from_neuron_objects",
    "init_net",
    "load_checkpoint",
    "loss_and_grads",
    "mse_eval",
    "neuron_objects",
    "save_checkpoint",
    "train",
    "derive_seed",
    "ProbeFunction",
    "eval_probe",
    "make_probes",
    "sigmoid",
    "__version__",
]
