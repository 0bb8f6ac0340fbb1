"""Posterior-predictive survival curves and the evaluation suite.

A survival curve for one individual is estimated by drawing model
parameters from the fitted variational distribution, drawing a log event
time from each, and counting the fraction of draws that outlive each
grid point. Repeating the estimate gives pale realisation curves whose
average is the reported curve and whose pointwise percentiles form the
credible band. The module also provides the Kaplan-Meier product-limit
baseline, horizon classification, ROC/AUC with Youden threshold
selection, and the aggregated evaluation report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (
    CovariateSchema,
    Dataset,
    NormStats,
    Record,
    Vocabulary,
    encode_covariates,
    prediction_record,
)
from .stats import RngStream
from .variational import LatentParams, sample_theta_batch

__all__ = [
    "SurvivalCurve",
    "KaplanMeierCurve",
    "RocResult",
    "ClassificationResult",
    "EvalReport",
    "Model",
    "default_grid",
    "predict_survival",
    "population_survival_matrix",
    "kaplan_meier",
    "classify_at_horizon",
    "roc_and_threshold",
    "evaluation_report",
]

DEFAULT_N_MCMC = 200
DEFAULT_REALISATIONS = 80
DEFAULT_HORIZON_DAYS = 180.0
HISTOGRAM_BIN_WIDTH = 0.02
SURVIVAL_BANDS = (0.4, 0.61)


def default_grid() -> np.ndarray:
    """Daily grid over one year, 1..365 days."""
    return np.arange(1.0, 366.0)


@dataclass
class SurvivalCurve:
    """Monte Carlo survival estimate on a time grid with credible band.

    ``s_hat`` is the average over realisations; ``lo``/``hi`` are the
    pointwise 5th/95th percentiles across realisations, clipped so the
    band always contains the point estimate.
    """

    t: np.ndarray
    s_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_mcmc: int
    realisations: int
    curves: np.ndarray | None = None

    def __post_init__(self):
        s = self.s_hat
        if np.any(s < -1e-12) or np.any(s > 1.0 + 1e-12):
            raise ValueError("survival estimates must lie in [0, 1]")
        if np.any(np.diff(s) > 1e-12):
            raise ValueError("survival estimate must be non-increasing")
        if np.any(self.lo > s) or np.any(self.hi < s):
            raise ValueError("credible band must contain the point estimate")

    def at(self, t: float) -> float:
        idx = np.nonzero(self.t == t)[0]
        if idx.size == 0:
            raise ValueError(f"t={t} is not on the curve grid")
        return float(self.s_hat[idx[0]])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,s_hat,lo,hi\n")
            for t, s, lo, hi in zip(self.t, self.s_hat, self.lo, self.hi):
                fh.write(
                    f"{float(t)!r},{float(s)!r},{float(lo)!r},{float(hi)!r}\n"
                )


def _validate_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("time grid must be a non-empty 1-d array")
    if np.any(grid <= 0.0):
        raise ValueError("time grid must be positive (days)")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("time grid must be strictly ascending")
    return grid


def _inference_state(net, state):
    if state is None:
        return net.new_state(training=False)
    if state.training:
        return state.copy(training=False)
    return state


def predict_survival(
    omega: LatentParams,
    record: Record,
    net,
    state=None,
    grid=None,
    n_mcmc: int = DEFAULT_N_MCMC,
    rng: RngStream | None = None,
    realisations: int = DEFAULT_REALISATIONS,
    fixed_sigma: float | None = None,
    keep_realisations: bool = False,
) -> SurvivalCurve:
    """Survival curve for one individual from the fitted posterior.

    Each realisation draws ``n_mcmc`` parameter samples and one log event
    time per sample; the curve counts draws outliving each grid point.
    Dropout is off and batch-norm statistics are frozen.
    """
    if n_mcmc < 1 or realisations < 1:
        raise ValueError("n_mcmc and realisations must be >= 1")
    grid = _validate_grid(default_grid() if grid is None else grid)
    rng = rng if rng is not None else RngStream(0)
    state = _inference_state(net, state)
    log_grid = np.log(grid)
    x_cont = record.x_cont[None, :]
    x_cat = record.x_cat[None, :]
    curves = np.empty((realisations, grid.size))
    for r in range(realisations):
        sigmas, zs = sample_theta_batch(omega, rng, n_mcmc, fixed_sigma=fixed_sigma)
        h = np.empty(n_mcmc)
        for k in range(n_mcmc):
            h[k] = net.forward_batch(zs[k], x_cont, x_cat, state)[0]
        y = h + sigmas * rng.standard_normal(n_mcmc)
        curves[r] = (y[:, None] > log_grid[None, :]).mean(axis=0)
    s_hat = curves.mean(axis=0)
    lo = np.percentile(curves, 5.0, axis=0)
    hi = np.percentile(curves, 95.0, axis=0)
    return SurvivalCurve(
        t=grid,
        s_hat=s_hat,
        lo=np.minimum(lo, s_hat),
        hi=np.maximum(hi, s_hat),
        n_mcmc=n_mcmc,
        realisations=realisations,
        curves=curves if keep_realisations else None,
    )


def population_survival_matrix(
    omega: LatentParams,
    x_cont: np.ndarray,
    x_cat: np.ndarray,
    net,
    state=None,
    grid=None,
    n_mcmc: int = 1000,
    rng: RngStream | None = None,
    fixed_sigma: float | None = None,
) -> np.ndarray:
    """Per-record survival estimates, shape (N, T), sharing draws.

    One set of parameter draws is reused across all records, which makes
    population-level evaluation cheap and lets paired comparisons reflect
    covariates rather than Monte Carlo noise.
    """
    if n_mcmc < 1:
        raise ValueError("n_mcmc must be >= 1")
    grid = _validate_grid(default_grid() if grid is None else grid)
    rng = rng if rng is not None else RngStream(0)
    state = _inference_state(net, state)
    n = x_cont.shape[0] if x_cont.size else x_cat.shape[0]
    log_grid = np.log(grid)
    sigmas, zs = sample_theta_batch(omega, rng, n_mcmc, fixed_sigma=fixed_sigma)
    y = np.empty((n_mcmc, n))
    for k in range(n_mcmc):
        h = net.forward_batch(zs[k], x_cont, x_cat, state)
        y[k] = h + sigmas[k] * rng.standard_normal(n)
    out = np.empty((n, grid.size))
    for i in range(n):
        col = np.sort(y[:, i])
        out[i] = 1.0 - np.searchsorted(col, log_grid, side="right") / n_mcmc
    return out


@dataclass
class KaplanMeierCurve:
    """Product-limit survival estimate as a right-continuous step function."""

    event_times: np.ndarray
    survival: np.ndarray

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.event_times, t, side="right")
        values = np.concatenate([[1.0], self.survival])
        return values[idx]


def kaplan_meier(data) -> KaplanMeierCurve:
    """Kaplan-Meier estimator; censored records leave the risk set
    without contributing an event.

    Accepts a Dataset or a (times, events) pair where ``events`` is true
    for observed events.
    """
    if isinstance(data, Dataset):
        if data.n == 0:
            raise ValueError("need at least one record")
        times = np.exp(data.y)
        events = data.c == 0
    else:
        times, events = data
        times = np.asarray(times, dtype=float)
        events = np.asarray(events, dtype=bool)
        if times.size == 0:
            raise ValueError("need at least one record")
    order = np.argsort(times, kind="stable")
    times = times[order]
    events = events[order]
    n = times.size
    event_times = []
    survival = []
    s = 1.0
    i = 0
    while i < n:
        t = times[i]
        j = i
        d = 0
        while j < n and times[j] == t:
            d += int(events[j])
            j += 1
        if d > 0:
            at_risk = n - i
            s *= 1.0 - d / at_risk
            event_times.append(t)
            survival.append(s)
        i = j
    return KaplanMeierCurve(
        event_times=np.array(event_times), survival=np.array(survival)
    )


@dataclass
class ClassificationResult:
    horizon_days: float
    threshold: float
    predictions: np.ndarray
    labels: np.ndarray
    excluded: np.ndarray
    accuracy: float
    n_included: int
    n_excluded: int
    majority_accuracy: float


def _label_and_exclude(y, c, horizon_days):
    # durations round-trip through the log axis; a 1e-9 relative band keeps
    # records censored exactly at the horizon on the "survived" side
    durations = np.exp(y)
    lo = horizon_days * (1.0 - 1e-9)
    hi = horizon_days * (1.0 + 1e-9)
    excluded = (c == 1) & (durations < lo)
    labels = (c == 0) & (durations <= hi)
    return labels, excluded


def _classify_core(
    s_at_horizon: np.ndarray,
    y: np.ndarray,
    c: np.ndarray,
    horizon_days: float,
    threshold: float,
) -> ClassificationResult:
    labels, excluded = _label_and_exclude(y, c, horizon_days)
    predictions = s_at_horizon < threshold
    included = ~excluded
    n_inc = int(included.sum())
    if n_inc == 0:
        raise ValueError("every record is censored before the horizon")
    correct = predictions[included] == labels[included]
    pos_share = float(labels[included].mean())
    return ClassificationResult(
        horizon_days=float(horizon_days),
        threshold=float(threshold),
        predictions=predictions,
        labels=labels,
        excluded=excluded,
        accuracy=float(correct.mean()),
        n_included=n_inc,
        n_excluded=int(excluded.sum()),
        majority_accuracy=max(pos_share, 1.0 - pos_share),
    )


def classify_at_horizon(
    curves, records, horizon_days: float, threshold: float
) -> ClassificationResult:
    """Classify "exit before horizon" from survival curves.

    Predicts an exit when the survival estimate at the horizon falls
    below the threshold. Records censored before the horizon have an
    unknowable label and are excluded from the accuracy, counted
    separately.
    """
    s_h = np.array([curve.at(horizon_days) for curve in curves])
    y = np.array([rec.y for rec in records])
    c = np.array([rec.c for rec in records])
    return _classify_core(s_h, y, c, horizon_days, threshold)


@dataclass
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    threshold: float
    youden_j: float

    @property
    def survival_threshold(self) -> float:
        """The score threshold mapped back to the survival axis."""
        return 1.0 - self.threshold


def roc_and_threshold(scores: np.ndarray, labels: np.ndarray) -> RocResult:
    """ROC curve over the unique scores, trapezoid AUC, Youden threshold.

    A record is called positive when its score strictly exceeds the
    threshold; the selected threshold maximizes TPR - FPR (first maximum
    in sweep order).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1-d arrays")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    last_of_group = np.concatenate([distinct, [scores.size - 1]])
    cum_tp = np.cumsum(sorted_labels)[last_of_group]
    cum_fp = np.cumsum(~sorted_labels)[last_of_group]
    # point m: predict positive for scores strictly above u_m
    tpr = np.concatenate([[0.0], cum_tp[:-1], [n_pos]]) / n_pos
    fpr = np.concatenate([[0.0], cum_fp[:-1], [n_neg]]) / n_neg
    thresholds = np.concatenate([sorted_scores[last_of_group], [-np.inf]])
    auc = float(np.trapezoid(tpr, fpr))
    j = tpr - fpr
    best = int(np.argmax(j))
    return RocResult(
        fpr=fpr,
        tpr=tpr,
        thresholds=thresholds,
        auc=auc,
        threshold=float(thresholds[best]),
        youden_j=float(j[best]),
    )


@dataclass
class Model:
    """A fitted model bundle ready for prediction."""

    schema: CovariateSchema
    vocabulary: Vocabulary
    norms: NormStats
    net: object
    state: object
    omega: LatentParams
    fixed_sigma: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def param_count(self) -> int:
        return self.net.param_count

    def encode(self, raw: dict) -> Record:
        cont, cat = encode_covariates(raw, self.schema, self.vocabulary, self.norms)
        return prediction_record(cont, cat)

    def predict(
        self,
        record: Record,
        grid=None,
        n_mcmc: int = DEFAULT_N_MCMC,
        realisations: int = DEFAULT_REALISATIONS,
        rng: RngStream | None = None,
    ) -> SurvivalCurve:
        return predict_survival(
            self.omega,
            record,
            self.net,
            state=self.state,
            grid=grid,
            n_mcmc=n_mcmc,
            rng=rng,
            realisations=realisations,
            fixed_sigma=self.fixed_sigma,
        )

    def population_matrix(
        self, dataset: Dataset, grid=None, n_mcmc: int = 1000, rng=None
    ) -> np.ndarray:
        return population_survival_matrix(
            self.omega,
            dataset.x_cont,
            dataset.x_cat,
            self.net,
            state=self.state,
            grid=grid,
            n_mcmc=n_mcmc,
            rng=rng,
            fixed_sigma=self.fixed_sigma,
        )


@dataclass
class EvalReport:
    """Horizon-classification metrics plus the survival histogram."""

    horizon_days: float
    n_mcmc: int
    n_records: int
    n_excluded: int
    accuracy: float
    majority_accuracy: float
    auc: float
    youden_j: float
    threshold_score: float
    threshold_survival: float
    roc: RocResult
    s_at_horizon: np.ndarray
    labels: np.ndarray
    excluded: np.ndarray
    histogram_edges: np.ndarray
    histogram_exited: np.ndarray
    histogram_stayed: np.ndarray
    band_counts: dict

    def to_json_dict(self) -> dict:
        return {
            "horizon_days": float(self.horizon_days),
            "n_mcmc": int(self.n_mcmc),
            "n_records": int(self.n_records),
            "n_excluded": int(self.n_excluded),
            "accuracy": float(self.accuracy),
            "majority_accuracy": float(self.majority_accuracy),
            "auc": float(self.auc),
            "youden_j": float(self.youden_j),
            "threshold_score": float(self.threshold_score),
            "threshold_survival": float(self.threshold_survival),
            "band_counts": self.band_counts,
            "roc": {
                "fpr": [float(v) for v in self.roc.fpr],
                "tpr": [float(v) for v in self.roc.tpr],
            },
        }

    def histogram_csv_rows(self):
        yield "bin_lo,bin_hi,exited_before_horizon,stayed"
        for i in range(self.histogram_exited.size):
            lo = float(self.histogram_edges[i])
            hi = float(self.histogram_edges[i + 1])
            yield (
                f"{lo!r},{hi!r},{int(self.histogram_exited[i])},"
                f"{int(self.histogram_stayed[i])}"
            )


def _band_label(lo, hi) -> str:
    if lo is None:
        return f"lt_{hi}"
    if hi is None:
        return f"gt_{lo}"
    return f"{lo}_to_{hi}"


def evaluation_report(
    model: Model,
    eval_dataset: Dataset,
    horizon_days: float = DEFAULT_HORIZON_DAYS,
    n_mcmc: int = DEFAULT_N_MCMC,
    rng: RngStream | None = None,
    threshold: float | None = None,
) -> EvalReport:
    """Full evaluation at a horizon: classification, ROC, histogram.

    When no threshold is supplied the Youden-optimal one is used; an
    explicit survival threshold (e.g. a replication value) overrides it.
    """
    if eval_dataset.n == 0:
        raise ValueError("evaluation dataset is empty")
    rng = rng if rng is not None else RngStream(0)
    s_h = model.population_matrix(
        eval_dataset, grid=np.array([float(horizon_days)]), n_mcmc=n_mcmc, rng=rng
    )[:, 0]
    labels, excluded = _label_and_exclude(eval_dataset.y, eval_dataset.c, horizon_days)
    included = ~excluded
    if included.sum() == 0:
        raise ValueError("every record is censored before the horizon")
    scores = 1.0 - s_h
    roc = roc_and_threshold(scores[included], labels[included])
    if threshold is None:
        pred = scores > roc.threshold
        threshold_survival = roc.survival_threshold
        threshold_score = roc.threshold
    else:
        pred = s_h < threshold
        threshold_survival = float(threshold)
        threshold_score = 1.0 - float(threshold)
    correct = pred[included] == labels[included]
    pos_share = float(labels[included].mean())
    majority = max(pos_share, 1.0 - pos_share)

    edges = np.arange(0.0, 1.0 + HISTOGRAM_BIN_WIDTH, HISTOGRAM_BIN_WIDTH)
    hist_exited, _ = np.histogram(s_h[included & labels], bins=edges)
    hist_stayed, _ = np.histogram(s_h[included & ~labels], bins=edges)

    lo_band, hi_band = SURVIVAL_BANDS
    band_counts = {}
    for band, mask in (
        (_band_label(None, lo_band), s_h < lo_band),
        (_band_label(lo_band, hi_band), (s_h >= lo_band) & (s_h <= hi_band)),
        (_band_label(hi_band, None), s_h > hi_band),
    ):
        band_counts[band] = {
            "exited_before_horizon": int((mask & included & labels).sum()),
            "stayed": int((mask & included & ~labels).sum()),
            "indeterminate": int((mask & excluded).sum()),
        }

    return EvalReport(
        horizon_days=float(horizon_days),
        n_mcmc=int(n_mcmc),
        n_records=int(eval_dataset.n),
        n_excluded=int(excluded.sum()),
        accuracy=float(correct.mean()),
        majority_accuracy=majority,
        auc=roc.auc,
        youden_j=roc.youden_j,
        threshold_score=threshold_score,
        threshold_survival=threshold_survival,
        roc=roc,
        s_at_horizon=s_h,
        labels=labels,
        excluded=excluded,
        histogram_edges=edges,
        histogram_exited=hist_exited,
        histogram_stayed=hist_stayed,
        band_counts=band_counts,
    )
