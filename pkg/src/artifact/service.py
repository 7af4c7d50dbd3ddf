"""Read-only HTTP face of a trained snapshot.

Every endpoint computes against one immutable ModelSnapshot fixed at
startup; nothing here mutates state, so concurrent requests are safe. The
snapshot hash rides along in an X-Snapshot-Hash response header and inside
each JSON body that has a natural place for it. Clients that pin a hash
via the X-Snapshot-Hash request header get 409 when it no longer matches.
"""
from __future__ import annotations

import uuid
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .corpus import Dataset, instance_from_text
from .feature_attr import grad_saliency, integrated_gradients, top_k
from .instance_attr import rank
from .model import ModelSnapshot, build_head_hessian, predict
from .pipeline import load_aggregate_report
from .tfa import heatmap
from .verify import edit_and_compare, mask_flip_rate


class PredictIn(BaseModel):
    text: str = Field(min_length=1)
    text_b: str | None = None


class FeatureIn(BaseModel):
    text: str = Field(min_length=1)
    text_b: str | None = None
    method: Literal["G", "IG"] = "IG"
    k: int = Field(default=5, ge=1)
    steps: int = Field(default=64, ge=1)
    target_class: int | None = None


class InstanceIn(BaseModel):
    text: str = Field(min_length=1)
    text_b: str | None = None
    method: Literal["IF", "RIF", "EUC"] = "EUC"
    variant: Literal["theta", "ell"] = "theta"
    top_k: int = Field(default=10, ge=1)


class TfaIn(BaseModel):
    text: str = Field(min_length=1)
    text_b: str | None = None
    instance_method: Literal["IF", "RIF", "EUC"] = "EUC"
    feature_method: Literal["G", "IG"] = "IG"
    variant: Literal["theta", "ell"] = "theta"
    k: int = Field(default=5, ge=1)
    steps: int = Field(default=32, ge=1)


class WhatifIn(BaseModel):
    original: str = Field(min_length=1)
    edited: str = Field(min_length=1)
    original_b: str | None = None
    edited_b: str | None = None


class MaskIn(BaseModel):
    token: str | None = None
    random_trials: int | None = Field(default=None, ge=1)
    seed: int = 0


def create_app(snapshot: ModelSnapshot, train: Dataset,
               study: Dataset | None = None,
               report_dir: str | Path | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    """Wire the endpoints around one snapshot and its training data.

    study is the split mask verification runs over (falls back to train);
    report_dir is where GET /report/aggregate looks for aggregate.json.
    """
    app = FastAPI(title="artifact", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    snap_hash = snapshot.snapshot_hash
    hessian = build_head_hessian(snapshot, train)
    verify_ds = study if study is not None else train

    @app.middleware("http")
    async def snapshot_header(request: Request, call_next):
        pinned = request.headers.get("x-snapshot-hash")
        if pinned is not None and pinned != snap_hash:
            return JSONResponse(
                status_code=409,
                content={"error": "snapshot_mismatch", "serving": snap_hash},
                headers={"X-Snapshot-Hash": snap_hash})
        response = await call_next(request)
        response.headers["X-Snapshot-Hash"] = snap_hash
        return response

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": "bad_request",
                                     "detail": exc.errors()})

    @app.exception_handler(ValueError)
    async def domain_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"error": "bad_request",
                                     "detail": str(exc)})

    @app.exception_handler(Exception)
    async def internal(request: Request, exc: Exception):
        return JSONResponse(status_code=500,
                            content={"error": "internal",
                                     "id": uuid.uuid4().hex[:12]})

    @app.get("/health")
    def health():
        return {"status": "ok", "snapshot_hash": snap_hash,
                "classes": list(train.class_names),
                "vocab_size": len(snapshot.vocab),
                "n_train": len(train),
                "study_role": verify_ds.role}

    @app.post("/predict")
    def do_predict(body: PredictIn):
        inst = instance_from_text(snapshot.vocab, body.text, body.text_b)
        label, probs, _ = predict(snapshot, inst)
        return {"label": label, "class_name": train.class_names[label],
                "probabilities": [float(p) for p in probs],
                "tokens": list(snapshot.vocab.decode(inst.input_ids())),
                "snapshot_hash": snap_hash}

    @app.post("/attribute/feature")
    def attribute_feature(body: FeatureIn):
        inst = instance_from_text(snapshot.vocab, body.text, body.text_b)
        if body.method == "G":
            sal = grad_saliency(snapshot, inst, body.target_class)
        else:
            sal = integrated_gradients(snapshot, inst, body.target_class,
                                       steps=body.steps)
        label, probs, _ = predict(snapshot, inst)
        return {"saliency": sal.to_dict(), "top_tokens": top_k(sal, body.k),
                "predicted": label,
                "probabilities": [float(p) for p in probs],
                "snapshot_hash": snap_hash}

    @app.post("/attribute/instance")
    def attribute_instance(body: InstanceIn):
        inst = instance_from_text(snapshot.vocab, body.text, body.text_b)
        ranking = rank(snapshot, inst, train, body.method, hessian=hessian,
                       variant=body.variant)
        out = ranking.to_dict()
        out["entries"] = out["entries"][:body.top_k]
        out["n_train"] = len(train)
        return out

    @app.post("/attribute/tfa")
    def attribute_tfa(body: TfaIn):
        inst = instance_from_text(snapshot.vocab, body.text, body.text_b)
        payload = heatmap(snapshot, inst, train,
                          instance_method=body.instance_method,
                          feature_method=body.feature_method, k=body.k,
                          hessian=hessian, steps=body.steps,
                          variant=body.variant)
        return payload.to_dict()

    @app.post("/whatif")
    def whatif(body: WhatifIn):
        result = edit_and_compare(snapshot, body.original, body.edited,
                                  body.original_b, body.edited_b)
        out = result.to_dict()
        out["snapshot_hash"] = snap_hash
        return out

    @app.post("/verify/mask")
    def verify_mask(body: MaskIn):
        if (body.token is None) == (body.random_trials is None):
            raise ValueError("pass exactly one of token or random_trials")
        rep = mask_flip_rate(snapshot, verify_ds, token=body.token,
                             random_trials=body.random_trials, seed=body.seed)
        return {"token": rep.token, "n_affected": rep.n_affected,
                "flip_fraction": rep.flip_fraction,
                "mean_delta": rep.mean_delta, "trials": rep.trials,
                "on": verify_ds.role, "snapshot_hash": snap_hash}

    @app.get("/report/aggregate")
    def report_aggregate():
        if report_dir is None:
            return JSONResponse(status_code=404,
                                content={"error": "no report directory configured"})
        report = load_aggregate_report(report_dir)
        if report is None:
            return JSONResponse(status_code=404,
                                content={"error": "no aggregate report; "
                                         "run the aggregate or discover command"})
        return report

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

    return app
