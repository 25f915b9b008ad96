"""HTTP surface for the worker.

POST /evaluate implements the evaluation protocol: the response always has
status 200 with the job_id echoed and either an accuracy or a classified
error, so the orchestrator can tell candidate failures from transport
failures (which never produce a 200).

POST /finetune runs an adapter training job over a dataset file emitted by
the orchestrator and reports where the adapter landed.
"""

from __future__ import annotations

from fastapi import FastAPI
from pydantic import BaseModel, Field

from . import __version__
from .evaluate import WorkerSettings, evaluate_candidate
from .finetune import load_samples, run_finetune


class EvaluateRequest(BaseModel):
    job_id: str
    code: str
    config: dict = Field(default_factory=dict)


class FinetuneRequest(BaseModel):
    job_id: str
    dataset_path: str
    out_dir: str
    adapter_config: dict | None = None
    training_config: dict | None = None
    seed: int = 0


def create_app(settings: WorkerSettings | None = None) -> FastAPI:
    settings = settings or WorkerSettings.from_env()
    app = FastAPI(title="augforge-worker", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/evaluate")
    def evaluate(request: EvaluateRequest) -> dict:
        result = evaluate_candidate(request.code, request.config, settings)
        return {"job_id": request.job_id, **result}

    @app.post("/finetune")
    def finetune(request: FinetuneRequest) -> dict:
        samples = load_samples(request.dataset_path)
        report = run_finetune(
            samples,
            request.out_dir,
            adapter_config=request.adapter_config,
            training_config=request.training_config,
            seed=request.seed,
        )
        return {
            "job_id": request.job_id,
            "adapter_dir": str(report.adapter_dir),
            "epoch_losses": report.epoch_losses,
            "optimizer_requested": report.optimizer_requested,
            "optimizer_used": report.optimizer_used,
            "n_samples": report.n_samples,
        }

    return app
