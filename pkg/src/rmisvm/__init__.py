"""Relaxed multiple-instance SVM: Noisy-OR bag model trained by projected SGD."""

from .data import (
    Bag,
    Dataset,
    DatasetFormatError,
    GroundTruth,
    Instance,
    SynthConfig,
    generate_synthetic,
    l2_normalize,
    parse_dataset,
    read_dataset,
    serialize_dataset,
    write_dataset,
)
from .evaluation import CvReport, DetectionCurve, accuracy, detection_rate_curve, kfold_cv
from .misvm import MisvmConfig, impute_labels, train_misvm
from .model import (
    HyperParams,
    bag_prob,
    instance_prob,
    load_model,
    predict_bag,
    predict_instance,
    save_model,
    select_top_instances,
)
from .objective import ObjectiveBreakdown, stochastic_grad
from .solver import TrainReport, project, sgd_step, train

__version__ = "0.1.0"
