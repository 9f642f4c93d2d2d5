"""HTTP JSON API over a trained model, its dataset, and the explanation db."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .cases import similar_cases
from .data import RawDataset
from .errors import InfeasibleExplanation, OutlierError
from .model import ArmModel
from .setcover import (
    DatasetIndex,
    ExplanationDb,
    SolverBudget,
    explain,
    pattern_key,
    verify_rule,
)


@dataclass
class AppState:
    model: ArmModel | None = None
    dataset: RawDataset | None = None
    index: DatasetIndex | None = None
    db: ExplanationDb | None = None
    budget: SolverBudget | None = None
    write_through: bool = False


def _parse_features(state: AppState, payload: dict):
    """Validate and order the raw feature map; returns (row, error_response)."""
    features = payload.get("features")
    if not isinstance(features, dict):
        return None, JSONResponse(
            {"error": "body must contain a 'features' object"}, status_code=400
        )
    names = [s.name for s in state.model.binarizer.specs]
    unknown = sorted(set(features) - set(names))
    missing = sorted(set(names) - set(features))
    if unknown or missing:
        detail = {}
        if unknown:
            detail["unknown_features"] = unknown
        if missing:
            detail["missing_features"] = missing
        return None, JSONResponse({"error": "bad feature map", **detail}, status_code=400)
    row = []
    for n in names:
        v = features[n]
        if v == "missing" or v is None:
            row.append(float("nan"))
        else:
            try:
                row.append(float(v))
            except (TypeError, ValueError):
                return None, JSONResponse(
                    {"error": f"unparsable value for {n!r}: {v!r}"}, status_code=400
                )
    return row, None


def _prediction_doc(model: ArmModel, prediction) -> dict:
    return {
        "probability": prediction.probability,
        "subscales": [
            {
                "name": s.name,
                "points": s.points,
                "risk": s.risk,
                "weight": s.weight,
                "weighted_score": s.weighted,
            }
            for s in prediction.breakdown
        ],
        "important_factors": [
            {
                "feature": f.feature,
                "subscale": f.subscale,
                "contribution": f.contribution,
            }
            for f in prediction.important_factors
        ],
        "model_hash": model.model_hash,
    }


def _scoring_tables_doc(model: ArmModel) -> list:
    out = []
    for sub in model.subscales:
        tables = []
        for p in sub.feature_indices:
            t = model.to_scoring_table(sub, p)
            tables.append(
                {
                    "feature": t.feature_name,
                    "rows": [
                        {"interval": r.label(t.feature_name), "points": r.points}
                        for r in t.rows
                    ],
                    "missing_points": t.missing_points,
                }
            )
        out.append({"subscale": sub.name, "tables": tables})
    return out


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="additive risk model service")
    app.state.arm = state

    @app.get("/health")
    def health():
        return {"status": "ok", "model_loaded": state.model is not None}

    @app.get("/model")
    def model_topology(request: Request):
        if state.model is None:
            return JSONResponse({"error": "no model loaded"}, status_code=503)
        model = state.model
        etag = model.model_hash
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304)
        doc = model.to_document()
        doc["scoring_tables"] = _scoring_tables_doc(model)
        doc["model_hash"] = etag
        return JSONResponse(doc, headers={"ETag": etag})

    @app.post("/predict")
    async def predict(request: Request):
        if state.model is None:
            return JSONResponse({"error": "no model loaded"}, status_code=503)
        row, err = _parse_features(state, await request.json())
        if err is not None:
            return err
        prediction = state.model.predict(row)
        return _prediction_doc(state.model, prediction)

    @app.post("/explain")
    async def explain_endpoint(request: Request):
        if state.model is None or state.index is None:
            return JSONResponse({"error": "model or dataset not loaded"}, status_code=503)
        row, err = _parse_features(state, await request.json())
        if err is not None:
            return err
        bits = state.model.binarizer.binarize_row(row)
        y_e = int(state.model.predict_bits(bits).probability >= 0.5)
        try:
            result = explain(bits, state.index, y_e, db=state.db, budget=state.budget)
        except OutlierError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        rule = result.rule
        if state.write_through and state.db is not None:
            key = pattern_key(bits)
            if key not in state.db.entries:
                from .setcover import DbEntry
                state.db.entries[key] = DbEntry(rules={result.step: rule})
        return {
            "rule": {
                "features": [
                    {"column": c, "name": state.model.binarizer.column_name(c)}
                    for c in rule.features
                ],
                "label": rule.label,
                "support": rule.support,
                "sparsity": rule.sparsity,
                "text": rule.render(state.model.binarizer),
            },
            "step": result.step,
            "support_threshold": result.support_threshold,
            "model_hash": state.model.model_hash,
        }

    @app.post("/cases")
    async def cases_endpoint(request: Request):
        if state.model is None or state.index is None:
            return JSONResponse({"error": "model or dataset not loaded"}, status_code=503)
        payload = await request.json()
        row, err = _parse_features(state, payload)
        if err is not None:
            return err
        bits = state.model.binarizer.binarize_row(row)
        y_e = int(state.model.predict_bits(bits).probability >= 0.5)
        try:
            result = explain(bits, state.index, y_e, db=state.db, budget=state.budget)
        except OutlierError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        # Server-side re-verification before serving cases off the rule.
        check = verify_rule(result.rule, state.index)
        if not check.consistent:
            return JSONResponse({"error": "stale rule failed verification"}, status_code=500)
        k = int(payload.get("k", 5))
        cases = similar_cases(bits, result.rule, state.index, state.dataset, k=k)
        return {
            "rule_text": result.rule.render(state.model.binarizer),
            "cases": [
                {
                    "row_index": c.row_index,
                    "raw_values": c.raw_values,
                    "model_label": c.model_label,
                    "shared_feature_count": c.shared_feature_count,
                }
                for c in cases
            ],
            "model_hash": state.model.model_hash,
        }

    static_dir = os.environ.get("ARM_STATIC_DIR")
    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def build_state(model: ArmModel, dataset: RawDataset | None = None,
                db: ExplanationDb | None = None,
                budget: SolverBudget | None = None,
                write_through: bool = False) -> AppState:
    index = None
    if dataset is not None:
        bits = model.binarizer.binarize_matrix(dataset.X)
        labels = model.model_labels(bits)
        index = DatasetIndex(bits, labels, model=model)
    return AppState(model=model, dataset=dataset, index=index, db=db,
                    budget=budget or SolverBudget(), write_through=write_through)
