"""Deterministic risk function h_z(x): embeddings plus a small MLP.

Categorical covariates are looked up in per-covariate embedding tables
(row 0 is the trained out-of-vocabulary row), concatenated with the
normalized continuous covariates and pushed through linear blocks with
dropout and batch normalization to a scalar log-time location. All
parameters live in one flat vector ``z`` so the variational layer can
treat the network as a black box; nothing here ever needs a gradient
in ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CovariateSchema, Record
from .stats import RngStream

__all__ = [
    "NetworkConfig",
    "ParameterLayout",
    "LayoutSegment",
    "NetworkRunState",
    "RiskNetwork",
    "InterceptRisk",
    "embedding_dim",
    "build_layout",
]

_EMBED_CAP = 50


def embedding_dim(d: int) -> int:
    """Embedding width for a categorical of cardinality ``d``.

    n = min(50, floor(d/2) + 1). Cardinality-2 covariates are treated as
    continuous upstream, so d must be at least 3.
    """
    if d < 3:
        raise ValueError(f"embedding needs cardinality >= 3 (got {d})")
    return min(_EMBED_CAP, d // 2 + 1)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture description: embedding widths, hidden widths, dropout.

    ``dropout`` has one rate per drop site: after the embedding block,
    then after each hidden linear layer. Batch-norm layers carry running
    statistics with the given momentum and no learnable affine terms.
    """

    embedding_dims: tuple[int, ...]
    n_continuous: int
    hidden: tuple[int, ...] = (200, 70)
    dropout: tuple[float, ...] = (0.6, 0.6, 0.4)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.n_continuous < 0:
            raise ValueError("n_continuous must be >= 0")
        if self.n_continuous + len(self.embedding_dims) == 0:
            raise ValueError("network needs at least one input covariate")
        if any(n < 1 for n in self.embedding_dims):
            raise ValueError("embedding widths must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if len(self.dropout) != len(self.hidden) + 1:
            raise ValueError(
                "need one dropout rate per drop site "
                f"({len(self.hidden) + 1}), got {len(self.dropout)}"
            )
        if any(not (0.0 <= r < 1.0) for r in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")

    @classmethod
    def from_schema(
        cls,
        schema: CovariateSchema,
        hidden: tuple[int, ...] = (200, 70),
        dropout: tuple[float, ...] | None = None,
    ) -> "NetworkConfig":
        """Derive embedding widths from the schema's declared cardinalities."""
        dims = tuple(embedding_dim(c.cardinality) for c in schema.categorical)
        if dropout is None:
            base = (0.6, 0.6, 0.4)
            if len(hidden) + 1 == len(base):
                dropout = base
            else:
                dropout = (0.6,) + (0.5,) * len(hidden)
        return cls(
            embedding_dims=dims,
            n_continuous=len(schema.continuous),
            hidden=tuple(hidden),
            dropout=tuple(dropout),
        )

    @property
    def embedded_width(self) -> int:
        return sum(self.embedding_dims)

    @property
    def input_width(self) -> int:
        return self.embedded_width + self.n_continuous

    def to_dict(self) -> dict:
        return {
            "embedding_dims": list(self.embedding_dims),
            "n_continuous": self.n_continuous,
            "hidden": list(self.hidden),
            "dropout": list(self.dropout),
            "bn_momentum": self.bn_momentum,
            "bn_eps": self.bn_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            embedding_dims=tuple(d["embedding_dims"]),
            n_continuous=int(d["n_continuous"]),
            hidden=tuple(d["hidden"]),
            dropout=tuple(d["dropout"]),
            bn_momentum=float(d["bn_momentum"]),
            bn_eps=float(d["bn_eps"]),
        )


@dataclass(frozen=True)
class LayoutSegment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def length(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ParameterLayout:
    """Flat index map of every network parameter.

    Segments are contiguous, non-overlapping and cover [0, K) exactly:
    embedding tables in schema order, then weight/bias pairs per linear
    layer.
    """

    segments: tuple[LayoutSegment, ...]
    total: int

    def __post_init__(self):
        cursor = 0
        for seg in self.segments:
            if seg.offset != cursor:
                raise ValueError(f"segment {seg.name} breaks contiguity")
            cursor += seg.length
        if cursor != self.total:
            raise ValueError("segments do not cover the parameter vector")

    def view(self, z: np.ndarray, name: str) -> np.ndarray:
        seg = self[name]
        return z[seg.offset : seg.offset + seg.length].reshape(seg.shape)

    def __getitem__(self, name: str) -> LayoutSegment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise KeyError(name)


def build_layout(
    schema: CovariateSchema, config: NetworkConfig
) -> tuple[ParameterLayout, int]:
    """Lay out embedding tables, weights and biases into one flat vector.

    Each embedding table has cardinality + 1 rows (row 0 serves unseen
    categories). Returns the layout and the parameter count K.
    """
    cats = schema.categorical
    if len(cats) != len(config.embedding_dims):
        raise ValueError(
            f"schema has {len(cats)} categorical covariates but config "
            f"declares {len(config.embedding_dims)} embedding widths"
        )
    if len(schema.continuous) != config.n_continuous:
        raise ValueError(
            f"schema has {len(schema.continuous)} continuous covariates but "
            f"config declares {config.n_continuous}"
        )
    segments = []
    offset = 0
    for cov, width in zip(cats, config.embedding_dims):
        shape = (cov.cardinality + 1, width)
        segments.append(LayoutSegment(f"emb:{cov.name}", offset, shape))
        offset += shape[0] * shape[1]
    widths = [config.input_width, *config.hidden, 1]
    for i in range(len(widths) - 1):
        w_shape = (widths[i], widths[i + 1])
        segments.append(LayoutSegment(f"w{i}", offset, w_shape))
        offset += w_shape[0] * w_shape[1]
        segments.append(LayoutSegment(f"b{i}", offset, (widths[i + 1],)))
        offset += widths[i + 1]
    layout = ParameterLayout(segments=tuple(segments), total=offset)
    return layout, offset


@dataclass
class NetworkRunState:
    """Running batch-norm statistics plus the training/inference flag.

    In training mode a forward pass normalizes with the current running
    statistics and then folds the batch moments in (momentum 0.1), so
    per-record outputs within one batch stay order-independent. Inference
    mode freezes the statistics. ``dropout`` switches the dropout layers
    off even in training mode.
    """

    bn_mean: list = field(default_factory=list)
    bn_var: list = field(default_factory=list)
    training: bool = False
    dropout: bool = True

    def __post_init__(self):
        for v in self.bn_var:
            if np.any(np.asarray(v) < 0.0):
                raise ValueError("running variance must be >= 0")

    def copy(self, training: bool | None = None) -> "NetworkRunState":
        return NetworkRunState(
            bn_mean=[m.copy() for m in self.bn_mean],
            bn_var=[v.copy() for v in self.bn_var],
            training=self.training if training is None else training,
            dropout=self.dropout,
        )

    def to_dict(self) -> dict:
        return {
            "bn_mean": [m.tolist() for m in self.bn_mean],
            "bn_var": [v.tolist() for v in self.bn_var],
        }

    @classmethod
    def from_dict(cls, d: dict, training: bool = False) -> "NetworkRunState":
        return cls(
            bn_mean=[np.asarray(m, dtype=float) for m in d["bn_mean"]],
            bn_var=[np.asarray(v, dtype=float) for v in d["bn_var"]],
            training=training,
        )


class RiskNetwork:
    """The embedding MLP risk function over a covariate schema."""

    def __init__(self, schema: CovariateSchema, config: NetworkConfig):
        self.schema = schema
        self.config = config
        self.layout, self.param_count = build_layout(schema, config)
        self._cardinalities = tuple(c.cardinality for c in schema.categorical)

    def new_state(self, training: bool = False) -> NetworkRunState:
        return NetworkRunState(
            bn_mean=[np.zeros(h) for h in self.config.hidden],
            bn_var=[np.ones(h) for h in self.config.hidden],
            training=training,
        )

    @property
    def output_bias_index(self) -> int:
        return self.layout[f"b{len(self.config.hidden)}"].offset

    def forward(
        self,
        z: np.ndarray,
        record: Record,
        state: NetworkRunState,
        rng: RngStream | None = None,
    ) -> float:
        """Scalar risk for one record; see :meth:`forward_batch`."""
        out = self.forward_batch(
            z, record.x_cont[None, :], record.x_cat[None, :], state, rng
        )
        return float(out[0])

    def forward_batch(
        self,
        z: np.ndarray,
        x_cont: np.ndarray,
        x_cat: np.ndarray,
        state: NetworkRunState,
        rng: RngStream | None = None,
    ) -> np.ndarray:
        """Risk values for a batch, shape (N,).

        Training mode applies inverted dropout (masks drawn from ``rng``)
        and updates the running batch-norm statistics; inference mode is
        deterministic given frozen statistics.
        """
        z = np.asarray(z, dtype=float)
        if z.shape != (self.param_count,):
            raise ValueError(
                f"parameter vector has length {z.size}, layout needs {self.param_count}"
            )
        cfg = self.config
        training = state.training
        drop = training and state.dropout
        if drop and rng is None and any(r > 0 for r in cfg.dropout):
            raise ValueError("training-mode forward with dropout needs an rng")

        parts = []
        for i, cov in enumerate(self.schema.categorical):
            idx = x_cat[:, i]
            if idx.size and (idx.min() < 0 or idx.max() > self._cardinalities[i]):
                raise ValueError(
                    f"category index out of range for covariate "
                    f"'{cov.name}' (valid 0..{self._cardinalities[i]})"
                )
            table = self.layout.view(z, f"emb:{cov.name}")
            parts.append(table[idx])
        if parts:
            emb = np.concatenate(parts, axis=1)
            if drop and cfg.dropout[0] > 0.0:
                emb = _dropout(emb, cfg.dropout[0], rng)
            parts = [emb]
        if cfg.n_continuous:
            parts.append(x_cont)
        a = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]

        for j in range(len(cfg.hidden)):
            w = self.layout.view(z, f"w{j}")
            b = self.layout.view(z, f"b{j}")
            a = a @ w + b
            if drop and cfg.dropout[j + 1] > 0.0:
                a = _dropout(a, cfg.dropout[j + 1], rng)
            a = self._batch_norm(a, j, state)
            np.maximum(a, 0.0, out=a)
        j = len(cfg.hidden)
        w = self.layout.view(z, f"w{j}")
        b = self.layout.view(z, f"b{j}")
        out = (a @ w + b)[:, 0]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite activation in risk network")
        return out

    def _batch_norm(
        self, a: np.ndarray, layer: int, state: NetworkRunState
    ) -> np.ndarray:
        mean = state.bn_mean[layer]
        var = state.bn_var[layer]
        out = (a - mean) / np.sqrt(var + self.config.bn_eps)
        if state.training and a.shape[0] >= 2:
            m = self.config.bn_momentum
            state.bn_mean[layer] = (1.0 - m) * mean + m * a.mean(axis=0)
            state.bn_var[layer] = (1.0 - m) * var + m * a.var(axis=0)
        return out


def _dropout(a: np.ndarray, rate: float, rng: RngStream) -> np.ndarray:
    keep = 1.0 - rate
    mask = (rng.random(a.shape) < keep) / keep
    return a * mask


class InterceptRisk:
    """Covariate-free risk function h(x) = z_0, a single location.

    Serves as the trivial baseline model and as the exactly-conjugate
    test bed for the trainer.
    """

    param_count = 1
    output_bias_index = 0

    def new_state(self, training: bool = False) -> NetworkRunState:
        return NetworkRunState(bn_mean=[], bn_var=[], training=training)

    def forward(self, z, record, state, rng=None) -> float:
        return float(np.asarray(z)[0])

    def forward_batch(self, z, x_cont, x_cat, state, rng=None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (1,):
            raise ValueError("intercept risk has exactly one parameter")
        n = x_cont.shape[0] if x_cont is not None else x_cat.shape[0]
        return np.full(n, z[0])
