"""Covariate schema, CSV ingestion, encoding and synthetic data.

A schema declares each covariate as continuous or categorical (with its
cardinality), plus the duration and censoring columns. Categorical
values map to integer indices through a vocabulary fitted on training
data, with index 0 reserved for unseen values; continuous values are
standardized by training-set mean and standard deviation. The synthetic
generator produces right-censored log-normal event times from a known
linear ground truth, standing in for confidential registry data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .stats import RngStream

__all__ = [
    "DataError",
    "Covariate",
    "CovariateSchema",
    "Vocabulary",
    "NormStats",
    "Record",
    "Dataset",
    "GeneratorConfig",
    "GroundTruth",
    "parse_schema_config",
    "load_schema_config",
    "format_schema_config",
    "load_csv",
    "encode_record",
    "encode_covariates",
    "prediction_record",
    "generate_synthetic",
    "split_train_eval",
    "default_schema",
    "default_ground_truth",
]

# Records with shorter (or zero) durations are floored here before the
# logarithm; daily-granularity data cannot resolve below half a day.
MIN_DURATION_DAYS = 0.5

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Schema, parsing or encoding failure in user-supplied data."""


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"unknown covariate kind '{self.kind}'")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 3:
                raise DataError(
                    f"categorical covariate '{self.name}' needs cardinality >= 3 "
                    "(cardinality-2 covariates are declared continuous)"
                )
        elif self.cardinality is not None:
            raise DataError(f"continuous covariate '{self.name}' takes no cardinality")


@dataclass(frozen=True)
class CovariateSchema:
    covariates: tuple[Covariate, ...]
    duration_column: str
    censor_column: str

    def __post_init__(self):
        if not self.covariates:
            raise DataError("schema declares no covariates")
        names = [c.name for c in self.covariates] + [
            self.duration_column,
            self.censor_column,
        ]
        if len(set(names)) != len(names):
            raise DataError("covariate/duration/censor names must be unique")

    @property
    def continuous(self) -> tuple[Covariate, ...]:
        return tuple(c for c in self.covariates if c.kind == CONTINUOUS)

    @property
    def categorical(self) -> tuple[Covariate, ...]:
        return tuple(c for c in self.covariates if c.kind == CATEGORICAL)


def parse_schema_config(text: str) -> CovariateSchema:
    """Parse the key/value schema format.

    One covariate per line, ``name = continuous`` or
    ``name = categorical(<d>)``, plus ``duration_column = <name>`` and
    ``censor_column = <name>``. Blank lines and ``#`` comments allowed.
    """
    covariates = []
    duration = None
    censor = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"schema line {lineno}: expected 'name = kind'")
        name, _, value = (part.strip() for part in line.partition("="))
        if not name:
            raise DataError(f"schema line {lineno}: missing name")
        if name == "duration_column":
            duration = value
        elif name == "censor_column":
            censor = value
        elif value == CONTINUOUS:
            covariates.append(Covariate(name, CONTINUOUS))
        elif value.startswith("categorical(") and value.endswith(")"):
            inner = value[len("categorical(") : -1]
            try:
                card = int(inner)
            except ValueError:
                raise DataError(
                    f"schema line {lineno}: bad cardinality '{inner}'"
                ) from None
            covariates.append(Covariate(name, CATEGORICAL, card))
        else:
            raise DataError(
                f"schema line {lineno}: expected 'continuous' or "
                f"'categorical(<d>)', got '{value}'"
            )
    if duration is None:
        raise DataError("schema missing duration_column")
    if censor is None:
        raise DataError("schema missing censor_column")
    return CovariateSchema(tuple(covariates), duration, censor)


def load_schema_config(path) -> CovariateSchema:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_schema_config(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc


def format_schema_config(schema: CovariateSchema) -> str:
    lines = [
        f"duration_column = {schema.duration_column}",
        f"censor_column = {schema.censor_column}",
    ]
    for cov in schema.covariates:
        if cov.kind == CONTINUOUS:
            lines.append(f"{cov.name} = continuous")
        else:
            lines.append(f"{cov.name} = categorical({cov.cardinality})")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Vocabulary:
    """Per-covariate category-to-index maps; index 0 is out-of-vocabulary."""

    maps: dict

    def index_of(self, name: str, value: str) -> int:
        return self.maps[name].get(value, 0)

    def values_of(self, name: str) -> list[str]:
        m = self.maps[name]
        return sorted(m, key=m.get)

    def seen_count(self, name: str) -> int:
        return len(self.maps[name])

    @classmethod
    def fit(cls, rows: list[dict], schema: CovariateSchema) -> "Vocabulary":
        maps: dict = {}
        for cov in schema.categorical:
            index: dict = {}
            for row in rows:
                value = row[cov.name]
                if value not in index:
                    index[value] = len(index) + 1
            if len(index) > cov.cardinality:
                raise DataError(
                    f"covariate '{cov.name}' has {len(index)} distinct values, "
                    f"more than its declared cardinality {cov.cardinality}"
                )
            maps[cov.name] = index
        return cls(maps)

    def to_dict(self) -> dict:
        return {name: dict(m) for name, m in self.maps.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls({name: {str(k): int(v) for k, v in m.items()} for name, m in d.items()})


@dataclass(frozen=True)
class NormStats:
    """Training-set mean/std per continuous covariate; std floored to 1
    for degenerate columns."""

    stats: dict

    def normalize(self, name: str, value: float) -> float:
        mean, std = self.stats[name]
        return (value - mean) / std

    @classmethod
    def fit(cls, rows: list[dict], schema: CovariateSchema) -> "NormStats":
        stats = {}
        for cov in schema.continuous:
            col = np.array([row[cov.name] for row in rows], dtype=float)
            mean = float(col.mean())
            std = float(col.std())
            if std <= 0.0:
                std = 1.0
            stats[cov.name] = (mean, std)
        return cls(stats)

    def to_dict(self) -> dict:
        return {name: [m, s] for name, (m, s) in self.stats.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({name: (float(v[0]), float(v[1])) for name, v in d.items()})


@dataclass(frozen=True)
class Record:
    """One encoded individual: covariates, log duration, censoring flag."""

    x_cont: np.ndarray
    x_cat: np.ndarray
    y: float
    c: int

    def __post_init__(self):
        if self.c not in (0, 1):
            raise DataError(f"censoring flag must be 0 or 1 (got {self.c})")

    @property
    def duration_days(self) -> float:
        return math.exp(self.y)


class Dataset:
    """Immutable collection of encoded records plus the fitted encoders.

    Raw rows are retained so splits can refit vocabularies and
    normalization on their own training part.
    """

    def __init__(
        self,
        schema: CovariateSchema,
        vocabulary: Vocabulary,
        norms: NormStats,
        records: list[Record],
        raw_rows: list[dict] | None = None,
        provenance: str = "",
    ):
        self.schema = schema
        self.vocabulary = vocabulary
        self.norms = norms
        self.records = tuple(records)
        self.raw_rows = tuple(raw_rows) if raw_rows is not None else None
        self.provenance = provenance
        n = len(self.records)
        n_cont = len(schema.continuous)
        n_cat = len(schema.categorical)
        self.x_cont = np.zeros((n, n_cont))
        self.x_cat = np.zeros((n, n_cat), dtype=np.int64)
        self.y = np.zeros(n)
        self.c = np.zeros(n, dtype=np.int64)
        for i, rec in enumerate(self.records):
            self.x_cont[i] = rec.x_cont
            self.x_cat[i] = rec.x_cat
            self.y[i] = rec.y
            self.c[i] = rec.c
        self.x_cont.setflags(write=False)
        self.x_cat.setflags(write=False)
        self.y.setflags(write=False)
        self.c.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def censored_fraction(self) -> float:
        return float(self.c.mean()) if len(self.records) else 0.0


def encode_covariates(
    raw: dict, schema: CovariateSchema, vocab: Vocabulary, norms: NormStats
) -> tuple[np.ndarray, np.ndarray]:
    """Encode one raw row's covariates to (x_cont, x_cat).

    Unseen categorical values map to index 0; continuous values are
    standardized. Raises DataError on a missing field.
    """
    cont = np.zeros(len(schema.continuous))
    cat = np.zeros(len(schema.categorical), dtype=np.int64)
    for j, cov in enumerate(schema.continuous):
        if cov.name not in raw:
            raise DataError(f"missing field '{cov.name}'")
        cont[j] = norms.normalize(cov.name, float(raw[cov.name]))
    for j, cov in enumerate(schema.categorical):
        if cov.name not in raw:
            raise DataError(f"missing field '{cov.name}'")
        cat[j] = vocab.index_of(cov.name, str(raw[cov.name]))
    return cont, cat


def encode_record(
    raw: dict, schema: CovariateSchema, vocab: Vocabulary, norms: NormStats
) -> Record:
    """Encode one raw row including duration and censoring label."""
    cont, cat = encode_covariates(raw, schema, vocab, norms)
    for key in (schema.duration_column, schema.censor_column):
        if key not in raw:
            raise DataError(f"missing field '{key}'")
    duration = float(raw[schema.duration_column])
    y = math.log(max(duration, MIN_DURATION_DAYS))
    return Record(x_cont=cont, x_cat=cat, y=y, c=int(raw[schema.censor_column]))


def prediction_record(x_cont: np.ndarray, x_cat: np.ndarray) -> Record:
    """Covariates-only record for prediction paths (outcome fields unused)."""
    return Record(x_cont=np.asarray(x_cont, dtype=float),
                  x_cat=np.asarray(x_cat, dtype=np.int64), y=0.0, c=1)


def _parse_raw_rows(path, schema: CovariateSchema) -> list[dict]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [c.name for c in schema.covariates] + [
            schema.duration_column,
            schema.censor_column,
        ]
        missing = [name for name in needed if name not in header]
        if missing:
            raise DataError(f"data file missing column(s): {', '.join(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            parsed: dict = {}
            for cov in schema.covariates:
                cell = row[cov.name]
                if cov.kind == CONTINUOUS:
                    try:
                        parsed[cov.name] = float(cell)
                    except (TypeError, ValueError):
                        raise DataError(
                            f"row {lineno}, column '{cov.name}': "
                            f"cannot parse '{cell}' as a number"
                        ) from None
                else:
                    parsed[cov.name] = "" if cell is None else str(cell)
            cell = row[schema.duration_column]
            try:
                duration = float(cell)
            except (TypeError, ValueError):
                raise DataError(
                    f"row {lineno}, column '{schema.duration_column}': "
                    f"cannot parse '{cell}' as a duration in days"
                ) from None
            if not math.isfinite(duration) or duration < 0.0:
                raise DataError(
                    f"row {lineno}, column '{schema.duration_column}': "
                    f"duration must be a non-negative number of days (got {cell})"
                )
            parsed[schema.duration_column] = duration
            cell = row[schema.censor_column]
            if str(cell).strip() not in ("0", "1"):
                raise DataError(
                    f"row {lineno}, column '{schema.censor_column}': "
                    f"censoring flag must be 0 or 1 (got '{cell}')"
                )
            parsed[schema.censor_column] = int(cell)
            rows.append(parsed)
    if not rows:
        raise DataError(f"data file {path} contains no records")
    return rows


def _build_dataset(
    rows: list[dict], schema: CovariateSchema, provenance: str
) -> Dataset:
    vocab = Vocabulary.fit(rows, schema)
    norms = NormStats.fit(rows, schema)
    records = [encode_record(row, schema, vocab, norms) for row in rows]
    return Dataset(schema, vocab, norms, records, raw_rows=rows, provenance=provenance)


def load_csv(path, schema: CovariateSchema) -> Dataset:
    """Read a CSV file and fit vocabularies/normalization from it."""
    rows = _parse_raw_rows(path, schema)
    return _build_dataset(rows, schema, provenance=str(path))


def load_csv_encoded(
    path, schema: CovariateSchema, vocab: Vocabulary, norms: NormStats
) -> Dataset:
    """Read a CSV file and encode it with already-fitted encoders.

    Evaluation and prediction data must go through the training-time
    vocabularies and normalization; unseen categories map to index 0.
    """
    rows = _parse_raw_rows(path, schema)
    records = [encode_record(row, schema, vocab, norms) for row in rows]
    return Dataset(schema, vocab, norms, records, raw_rows=rows, provenance=str(path))


def split_train_eval(
    dataset: Dataset, fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split; encoders are refit on the training part only."""
    if not (0.0 < fraction < 1.0):
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    if dataset.raw_rows is None:
        raise DataError("dataset was loaded without raw rows and cannot be split")
    n = dataset.n
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(f"cannot split {n} records at fraction {fraction}")
    perm = RngStream(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    eval_idx = np.sort(perm[n_train:])
    train_rows = [dataset.raw_rows[i] for i in train_idx]
    eval_rows = [dataset.raw_rows[i] for i in eval_idx]
    train = _build_dataset(train_rows, dataset.schema, dataset.provenance + " [train]")
    eval_records = [
        encode_record(row, dataset.schema, train.vocabulary, train.norms)
        for row in eval_rows
    ]
    eval_ds = Dataset(
        dataset.schema,
        train.vocabulary,
        train.norms,
        eval_records,
        raw_rows=eval_rows,
        provenance=dataset.provenance + " [eval]",
    )
    return train, eval_ds


@dataclass(frozen=True)
class GroundTruth:
    """The generator's linear location model, emitted for verification."""

    intercept: float
    cont_coeffs: dict
    cat_offsets: dict
    sigma: float
    censor_window_days: float

    def location(self, raw: dict) -> float:
        h = self.intercept
        for name, beta in self.cont_coeffs.items():
            h += beta * float(raw[name])
        for name, offsets in self.cat_offsets.items():
            h += offsets[str(raw[name])]
        return h

    def locations(self, dataset: Dataset) -> np.ndarray:
        if dataset.raw_rows is None:
            raise DataError("dataset carries no raw rows")
        return np.array([self.location(row) for row in dataset.raw_rows])

    def population_survival(self, t_grid: np.ndarray, locations: np.ndarray) -> np.ndarray:
        """Average of the per-individual true survival curves."""
        from scipy.special import ndtr

        t_grid = np.asarray(t_grid, dtype=float)
        u = (np.log(t_grid)[None, :] - locations[:, None]) / self.sigma
        return (1.0 - ndtr(u)).mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "cont_coeffs": dict(self.cont_coeffs),
            "cat_offsets": {k: dict(v) for k, v in self.cat_offsets.items()},
            "sigma": self.sigma,
            "censor_window_days": self.censor_window_days,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            intercept=float(d["intercept"]),
            cont_coeffs={k: float(v) for k, v in d["cont_coeffs"].items()},
            cat_offsets={
                k: {vk: float(vv) for vk, vv in v.items()}
                for k, v in d["cat_offsets"].items()
            },
            sigma=float(d["sigma"]),
            censor_window_days=float(d["censor_window_days"]),
        )


@dataclass
class GeneratorConfig:
    """Synthetic-data knobs; unspecified coefficients are drawn from the seed."""

    n: int
    schema: CovariateSchema
    true_sigma: float = 1.0
    censor_window_days: float = 60.0
    seed: int = 0
    intercept: float | None = None
    cont_coeffs: dict | None = None
    cat_offsets: dict | None = None

    def __post_init__(self):
        if self.n < 1:
            raise DataError(f"generator needs n >= 1 (got {self.n})")
        if not (self.true_sigma > 0.0):
            raise DataError("true_sigma must be positive")
        if not (self.censor_window_days > 0.0):
            raise DataError("censor window must be positive")


def generate_synthetic(config: GeneratorConfig) -> tuple[Dataset, GroundTruth]:
    """Draw covariates, event times and censoring from a known model.

    Continuous covariates are standard normal; categorical values are
    uniform over labels v1..vd. The true location is linear in the
    continuous values plus a per-category offset. Event time is
    exp(location + sigma * W) with standard-normal W, censored at the
    window.
    """
    schema = config.schema
    root = RngStream(config.seed)
    coeff_rng = root.derive(0)
    data_rng = root.derive(1)

    # median event time at the window gives ~50% censoring by symmetry
    if config.intercept is not None:
        intercept = config.intercept
    elif math.isfinite(config.censor_window_days):
        intercept = math.log(config.censor_window_days)
    else:
        intercept = math.log(60.0)
    cont_coeffs = config.cont_coeffs
    if cont_coeffs is None:
        cont_coeffs = {
            c.name: float(coeff_rng.uniform(-0.5, 0.5)) for c in schema.continuous
        }
    cat_offsets = config.cat_offsets
    if cat_offsets is None:
        cat_offsets = {}
        for cov in schema.categorical:
            raw = coeff_rng.uniform(-0.5, 0.5, cov.cardinality)
            raw = raw - raw.mean()
            cat_offsets[cov.name] = {
                f"v{i + 1}": float(raw[i]) for i in range(cov.cardinality)
            }
    truth = GroundTruth(
        intercept=intercept,
        cont_coeffs=cont_coeffs,
        cat_offsets=cat_offsets,
        sigma=config.true_sigma,
        censor_window_days=config.censor_window_days,
    )

    cont_names = [c.name for c in schema.continuous]
    rows = []
    for _ in range(config.n):
        row: dict = {}
        for name in cont_names:
            row[name] = float(data_rng.normal())
        for cov in schema.categorical:
            row[cov.name] = f"v{int(data_rng.integers(1, cov.cardinality + 1))}"
        h = truth.location(row)
        t_event = math.exp(h + config.true_sigma * float(data_rng.normal()))
        if t_event > config.censor_window_days:
            row[schema.duration_column] = config.censor_window_days
            row[schema.censor_column] = 1
        else:
            row[schema.duration_column] = t_event
            row[schema.censor_column] = 0
        rows.append(row)
    dataset = _build_dataset(
        rows, schema, provenance=f"synthetic(seed={config.seed}, n={config.n})"
    )
    return dataset, truth


def default_schema() -> CovariateSchema:
    """Small mixed schema used by the simulator CLI and tests."""
    return CovariateSchema(
        covariates=(
            Covariate("x1", CONTINUOUS),
            Covariate("x2", CONTINUOUS),
            Covariate("x3", CONTINUOUS),
            Covariate("g1", CATEGORICAL, 4),
            Covariate("g2", CATEGORICAL, 6),
        ),
        duration_column="duration_days",
        censor_column="censored",
    )


def default_ground_truth(
    sigma: float = 1.0, censor_window_days: float = 60.0
) -> GroundTruth:
    """Fixed informative coefficients for the default schema."""
    intercept = (
        math.log(censor_window_days)
        if math.isfinite(censor_window_days)
        else math.log(60.0)
    )
    return GroundTruth(
        intercept=intercept,
        cont_coeffs={"x1": 0.5, "x2": -0.4, "x3": 0.3},
        cat_offsets={
            "g1": {"v1": -0.45, "v2": -0.15, "v3": 0.15, "v4": 0.45},
            "g2": {"v1": -0.5, "v2": -0.3, "v3": -0.1, "v4": 0.1, "v5": 0.3, "v6": 0.5},
        },
        sigma=sigma,
        censor_window_days=censor_window_days,
    )
