"""HTTP service exposing schema introspection and survival prediction.

Endpoints: GET /health, GET /schema, POST /predict, POST /predict-batch.
The loaded model is shared read-only; every request draws from its own
random stream, either fresh or pinned by an optional per-request seed so
scenario comparisons can share draws.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .data import CONTINUOUS
from .predict import DEFAULT_N_MCMC, DEFAULT_REALISATIONS, Model, SurvivalCurve
from .stats import RngStream

__all__ = ["create_app", "SCHEMA_VALUE_CAP", "BATCH_LIMIT"]

SCHEMA_VALUE_CAP = 200
BATCH_LIMIT = 32
HIGHLIGHT_HORIZON_DAYS = 180.0


class PredictRequest(BaseModel):
    covariates: dict[str, Any]
    grid: list[float] | None = None
    n_mcmc: int | None = None
    realisations: int | None = None
    seed: int | None = None


class _RequestFault(Exception):
    def __init__(self, status: int, errors: dict):
        super().__init__(str(errors))
        self.status = status
        self.errors = errors


def _validate_covariates(model: Model, covariates: dict) -> tuple[dict, list[str]]:
    """Check presence and types; returns (raw row, warnings)."""
    errors: dict = {}
    warnings: list[str] = []
    row: dict = {}
    for cov in model.schema.covariates:
        if cov.name not in covariates:
            errors[cov.name] = "missing covariate"
            continue
        value = covariates[cov.name]
        if cov.kind == CONTINUOUS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors[cov.name] = "expected a number"
                continue
            value = float(value)
            if not math.isfinite(value):
                raise _RequestFault(
                    422, {cov.name: "value must be a finite number"}
                )
            row[cov.name] = value
        else:
            value = str(value)
            if model.vocabulary.index_of(cov.name, value) == 0:
                warnings.append(
                    f"unknown value for '{cov.name}'; treated as out-of-vocabulary"
                )
            row[cov.name] = value
    unknown = set(covariates) - {c.name for c in model.schema.covariates}
    for name in sorted(unknown):
        errors[name] = "not a schema covariate"
    if errors:
        raise _RequestFault(400, errors)
    return row, warnings


def _validate_options(req: PredictRequest) -> dict:
    errors = {}
    if req.grid is not None:
        grid = req.grid
        if not grid or any(
            not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0
            for v in grid
        ):
            errors["grid"] = "grid must be positive finite days"
        elif any(b <= a for a, b in zip(grid, grid[1:])):
            errors["grid"] = "grid must be strictly ascending"
    if req.n_mcmc is not None and req.n_mcmc < 1:
        errors["n_mcmc"] = "must be >= 1"
    if req.realisations is not None and req.realisations < 1:
        errors["realisations"] = "must be >= 1"
    if errors:
        raise _RequestFault(400, errors)
    return {
        "grid": np.asarray(req.grid, dtype=float) if req.grid is not None else None,
        "n_mcmc": req.n_mcmc or DEFAULT_N_MCMC,
        "realisations": req.realisations or DEFAULT_REALISATIONS,
    }


def _curve_payload(curve: SurvivalCurve, warnings: list[str]) -> dict:
    t = curve.t
    payload = {
        "t": [float(v) for v in t],
        "s_hat": [float(v) for v in curve.s_hat],
        "lo": [float(v) for v in curve.lo],
        "hi": [float(v) for v in curve.hi],
        "n_mcmc": curve.n_mcmc,
        "realisations": curve.realisations,
        "warnings": warnings,
        "horizon_days": HIGHLIGHT_HORIZON_DAYS,
        "s_at_horizon": None,
    }
    idx = np.nonzero(t == HIGHLIGHT_HORIZON_DAYS)[0]
    if idx.size:
        payload["s_at_horizon"] = float(curve.s_hat[idx[0]])
    return payload


def _predict_one(model: Model, req: PredictRequest, fallback_seed: int) -> dict:
    row, warnings = _validate_covariates(model, req.covariates)
    options = _validate_options(req)
    record = model.encode(row)
    seed = req.seed if req.seed is not None else fallback_seed
    curve = model.predict(
        record,
        grid=options["grid"],
        n_mcmc=options["n_mcmc"],
        realisations=options["realisations"],
        rng=RngStream(seed),
    )
    payload = _curve_payload(curve, warnings)
    payload["seed"] = seed
    return payload


def create_app(model: Model | None, ui_dir=None) -> FastAPI:
    """Build the service around one loaded model (or none, for probes)."""
    app = FastAPI(title="survaft", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    # independent stream per request when the client does not pin a seed
    seed_counter = {"next": 0}

    def fresh_seed() -> int:
        seed_counter["next"] += 1
        return RngStream(seed_counter["next"]).seed

    @app.get("/health")
    def health():
        return {
            "version": __version__,
            "k": model.param_count if model is not None else None,
            "model_loaded": model is not None,
        }

    @app.get("/schema")
    def schema():
        if model is None:
            return JSONResponse(status_code=503, content={"detail": "no model loaded"})
        covariates = []
        for cov in model.schema.covariates:
            entry: dict = {"name": cov.name, "kind": cov.kind}
            if cov.kind == CONTINUOUS:
                mean, _ = model.norms.stats[cov.name]
                entry["mean"] = mean
            else:
                values = model.vocabulary.values_of(cov.name)
                entry["cardinality"] = cov.cardinality
                entry["truncated"] = len(values) > SCHEMA_VALUE_CAP
                entry["values"] = values[:SCHEMA_VALUE_CAP]
            covariates.append(entry)
        return {
            "covariates": covariates,
            "duration_column": model.schema.duration_column,
            "censor_column": model.schema.censor_column,
            "default_horizon_days": HIGHLIGHT_HORIZON_DAYS,
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        if model is None:
            return JSONResponse(status_code=503, content={"detail": "no model loaded"})
        try:
            return _predict_one(model, req, fresh_seed())
        except _RequestFault as fault:
            return JSONResponse(
                status_code=fault.status, content={"errors": fault.errors}
            )

    @app.post("/predict-batch")
    def predict_batch(reqs: list[PredictRequest], request: Request):
        if model is None:
            return JSONResponse(status_code=503, content={"detail": "no model loaded"})
        if len(reqs) > BATCH_LIMIT:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch limited to {BATCH_LIMIT} scenarios"},
            )
        results = []
        for req in reqs:
            try:
                results.append(_predict_one(model, req, fresh_seed()))
            except _RequestFault as fault:
                results.append({"error": {"status": fault.status, "errors": fault.errors}})
        return results

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
