"""Versioned JSON persistence of trained models.

One self-describing document holds the covariate schema, fitted
vocabularies and normalization statistics, the network architecture,
frozen batch-norm statistics, the variational latent parameters and
training metadata. Latent scales are stored on the log axis so a
save/load round trip reproduces the parameter vector bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import (
    CATEGORICAL,
    Covariate,
    CovariateSchema,
    NormStats,
    Vocabulary,
)
from .network import InterceptRisk, NetworkConfig, NetworkRunState, RiskNetwork
from .predict import Model
from .variational import LatentParams

__all__ = ["FORMAT_VERSION", "StoreError", "ModelArtifact", "save_model", "load_model"]

FORMAT_VERSION = 1


class StoreError(ValueError):
    """Malformed, incompatible or inconsistent model document."""


@dataclass
class ModelArtifact:
    """Everything needed to reload and run a trained model."""

    schema: CovariateSchema
    vocabulary: Vocabulary
    norms: NormStats
    network: dict
    bn_state: dict
    mu: np.ndarray
    log_sigma: np.ndarray
    log_sigma_sigma: float
    fixed_sigma: float | None = None
    metadata: dict = field(default_factory=dict)

    def build_net(self):
        kind = self.network.get("kind")
        if kind == "mlp":
            return RiskNetwork(self.schema, NetworkConfig.from_dict(self.network))
        if kind == "intercept":
            return InterceptRisk()
        raise StoreError(f"unknown network kind '{kind}'")

    def expected_param_count(self) -> int:
        return self.build_net().param_count

    def validate(self):
        k = self.expected_param_count()
        if len(self.mu) != k or len(self.log_sigma) != k:
            raise StoreError(
                f"latent vector length {len(self.mu)}/{len(self.log_sigma)} does "
                f"not match the {k} parameters implied by the architecture"
            )

    def latent(self) -> LatentParams:
        return LatentParams(
            mu=np.asarray(self.mu, dtype=float),
            log_sigma=np.asarray(self.log_sigma, dtype=float),
            log_sigma_sigma=float(self.log_sigma_sigma),
        )

    def to_model(self) -> Model:
        self.validate()
        net = self.build_net()
        state = NetworkRunState.from_dict(self.bn_state, training=False)
        return Model(
            schema=self.schema,
            vocabulary=self.vocabulary,
            norms=self.norms,
            net=net,
            state=state,
            omega=self.latent(),
            fixed_sigma=self.fixed_sigma,
            metadata=dict(self.metadata),
        )


def _schema_to_dict(schema: CovariateSchema) -> dict:
    return {
        "covariates": [
            {"name": c.name, "kind": c.kind, "cardinality": c.cardinality}
            for c in schema.covariates
        ],
        "duration_column": schema.duration_column,
        "censor_column": schema.censor_column,
    }


def _schema_from_dict(d: dict) -> CovariateSchema:
    covs = tuple(
        Covariate(
            name=c["name"],
            kind=c["kind"],
            cardinality=c["cardinality"] if c["kind"] == CATEGORICAL else None,
        )
        for c in d["covariates"]
    )
    return CovariateSchema(covs, d["duration_column"], d["censor_column"])


def save_model(artifact: ModelArtifact, path):
    """Write the artifact as a format-versioned JSON document."""
    artifact.validate()
    doc = {
        "format_version": FORMAT_VERSION,
        "schema": _schema_to_dict(artifact.schema),
        "vocabulary": artifact.vocabulary.to_dict(),
        "norm_stats": artifact.norms.to_dict(),
        "network": artifact.network,
        "bn_state": artifact.bn_state,
        "latent": {
            "mu": [float(v) for v in artifact.mu],
            "log_sigma": [float(v) for v in artifact.log_sigma],
            "log_sigma_sigma": float(artifact.log_sigma_sigma),
        },
        "fixed_sigma": artifact.fixed_sigma,
        "metadata": artifact.metadata,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise StoreError(f"cannot write model file {path}: {exc}") from exc


_REQUIRED_KEYS = (
    "format_version",
    "schema",
    "vocabulary",
    "norm_stats",
    "network",
    "bn_state",
    "latent",
)


def load_model(path) -> ModelArtifact:
    """Read and validate a model document; future versions are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise StoreError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StoreError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise StoreError("model document must be a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise StoreError(f"model document missing key '{key}'")
    version = doc["format_version"]
    if version != FORMAT_VERSION:
        raise StoreError(
            f"model format version {version} is not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    latent = doc["latent"]
    for key in ("mu", "log_sigma", "log_sigma_sigma"):
        if key not in latent:
            raise StoreError(f"model document missing key 'latent.{key}'")
    fixed_sigma = doc.get("fixed_sigma")
    artifact = ModelArtifact(
        schema=_schema_from_dict(doc["schema"]),
        vocabulary=Vocabulary.from_dict(doc["vocabulary"]),
        norms=NormStats.from_dict(doc["norm_stats"]),
        network=doc["network"],
        bn_state=doc["bn_state"],
        mu=np.asarray(latent["mu"], dtype=float),
        log_sigma=np.asarray(latent["log_sigma"], dtype=float),
        log_sigma_sigma=float(latent["log_sigma_sigma"]),
        fixed_sigma=None if fixed_sigma is None else float(fixed_sigma),
        metadata=doc.get("metadata", {}),
    )
    artifact.validate()
    return artifact


def make_artifact(
    schema: CovariateSchema,
    vocabulary: Vocabulary,
    norms: NormStats,
    net,
    state,
    omega: LatentParams,
    fixed_sigma: float | None = None,
    metadata: dict | None = None,
) -> ModelArtifact:
    """Assemble an artifact from training outputs."""
    if isinstance(net, RiskNetwork):
        network = {"kind": "mlp", **net.config.to_dict()}
    elif isinstance(net, InterceptRisk):
        network = {"kind": "intercept"}
    else:
        raise StoreError(f"cannot persist network of type {type(net).__name__}")
    return ModelArtifact(
        schema=schema,
        vocabulary=vocabulary,
        norms=norms,
        network=network,
        bn_state=state.to_dict(),
        mu=omega.mu.copy(),
        log_sigma=omega.log_sigma.copy(),
        log_sigma_sigma=float(omega.log_sigma_sigma),
        fixed_sigma=fixed_sigma,
        metadata=metadata or {},
    )
