"""Bayesian accelerated-failure-time survival modelling.

Log event times are modelled as a neural risk function of the covariates
plus scaled normal noise; right-censored records contribute survival
probabilities. The parameter posterior is approximated by a mean-field
variational family fitted with score-function gradients, and per-person
survival curves come from Monte Carlo draws of the posterior predictive.
"""

__version__ = "0.1.0"

from .data import (
    CovariateSchema,
    Dataset,
    GeneratorConfig,
    generate_synthetic,
    load_csv,
    load_schema_config,
    split_train_eval,
)
from .network import InterceptRisk, NetworkConfig, RiskNetwork, embedding_dim
from .predict import (
    Model,
    evaluation_report,
    kaplan_meier,
    predict_survival,
    roc_and_threshold,
)
from .stats import LogNormalParams, RngStream
from .store import load_model, make_artifact, save_model
from .training import TrainConfig, lr_range_test, train
from .variational import LatentParams, init_latent

__all__ = [
    "__version__",
    "CovariateSchema",
    "Dataset",
    "GeneratorConfig",
    "generate_synthetic",
    "load_csv",
    "load_schema_config",
    "split_train_eval",
    "InterceptRisk",
    "NetworkConfig",
    "RiskNetwork",
    "embedding_dim",
    "Model",
    "evaluation_report",
    "kaplan_meier",
    "predict_survival",
    "roc_and_threshold",
    "LogNormalParams",
    "RngStream",
    "load_model",
    "make_artifact",
    "save_model",
    "TrainConfig",
    "lr_range_test",
    "train",
    "LatentParams",
    "init_latent",
]
