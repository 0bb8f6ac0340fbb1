"""Shared fixtures: synthetic datasets and the reference trained model."""

import math

import numpy as np
import pytest

from survaft.data import (
    CONTINUOUS,
    Covariate,
    CovariateSchema,
    Dataset,
    GeneratorConfig,
    NormStats,
    Record,
    Vocabulary,
    default_ground_truth,
    default_schema,
    generate_synthetic,
    split_train_eval,
)
from survaft.network import NetworkConfig, RiskNetwork
from survaft.training import TrainConfig, train, warm_start_latent


def make_location_dataset(y_values):
    """Dataset with one inert covariate; used with the intercept risk."""
    schema = CovariateSchema(
        (Covariate("x1", CONTINUOUS),), "duration_days", "censored"
    )
    records = [
        Record(x_cont=np.array([0.0]), x_cat=np.zeros(0, dtype=np.int64),
               y=float(v), c=0)
        for v in y_values
    ]
    return Dataset(schema, Vocabulary({}), NormStats({"x1": (0.0, 1.0)}), records)


def oracle_parameters(net, dataset, truth):
    """Flat parameter vector reproducing the generator's linear location.

    Works for a RiskNetwork with no hidden layers: the linear layer reads
    the normalized continuous values and one-hot-style embedding rows.
    """
    assert net.config.hidden == ()
    schema = dataset.schema
    z = np.zeros(net.param_count)
    w = net.layout.view(z, "w0")
    b = net.layout.view(z, "b0")
    col = 0
    bias = truth.intercept
    for cov in schema.categorical:
        width = net.config.embedding_dims[
            [c.name for c in schema.categorical].index(cov.name)
        ]
        table = net.layout.view(z, f"emb:{cov.name}")
        for value, idx in dataset.vocabulary.maps[cov.name].items():
            table[idx, 0] = truth.cat_offsets[cov.name][value]
        w[col, 0] = 1.0
        col += width
    for cov in schema.continuous:
        mean, std = dataset.norms.stats[cov.name]
        beta = truth.cont_coeffs[cov.name]
        w[col, 0] = beta * std
        bias += beta * mean
        col += 1
    b[0] = bias
    return z


def linear_oracle_net(dataset):
    config = NetworkConfig.from_schema(
        dataset.schema, hidden=(), dropout=(0.0,)
    )
    return RiskNetwork(dataset.schema, config)


@pytest.fixture(scope="session")
def synthetic_case():
    """The censored-recovery scenario: n=2000, ~50% censored, known truth."""
    truth_template = default_ground_truth(sigma=1.0, censor_window_days=60.0)
    config = GeneratorConfig(
        n=2000,
        schema=default_schema(),
        true_sigma=1.0,
        censor_window_days=60.0,
        seed=11,
        intercept=truth_template.intercept,
        cont_coeffs=truth_template.cont_coeffs,
        cat_offsets=truth_template.cat_offsets,
    )
    dataset, truth = generate_synthetic(config)
    train_ds, eval_ds = split_train_eval(dataset, 0.8, seed=5)
    return {"train": train_ds, "eval": eval_ds, "truth": truth, "full": dataset}


@pytest.fixture(scope="session")
def trained_case(synthetic_case):
    """The scenario model fitted with the two-stage recipe."""
    train_ds = synthetic_case["train"]
    net_config = NetworkConfig.from_schema(
        default_schema(), hidden=(32, 16), dropout=(0.0, 0.0, 0.0)
    )
    net = RiskNetwork(train_ds.schema, net_config)
    init = warm_start_latent(net, train_ds)
    init.log_sigma[:] = math.log(0.05)
    state = net.new_state(training=True)
    base = dict(
        samples_per_step=4,
        stop_rtol=0.0,
        dropout_enabled=False,
        profile_sigma=True,
        prior_std=1.0,
        seed=4,
    )
    cfg1 = TrainConfig(learning_rate=0.02, max_iterations=2500, **base)
    omega, trace1 = train(train_ds, net, cfg1, state=state, init=init)
    cfg2 = TrainConfig(
        learning_rate=0.006,
        max_iterations=2000,
        fixed_sigma=trace1.sigma_hat,
        **base,
    )
    omega, trace2 = train(train_ds, net, cfg2, state=state, init=omega)
    return {
        "net": net,
        "omega": omega,
        "state": state.copy(training=False),
        "sigma_hat": trace2.sigma_hat,
        "trace_first_stage": trace1,
        "seconds": sum(trace1.seconds) + sum(trace2.seconds),
    }
