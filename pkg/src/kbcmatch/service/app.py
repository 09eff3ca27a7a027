"""FastAPI service wrapping the matching engine.

Every endpoint is a thin shell over the core package; the CLI calls the same
core functions directly, so both surfaces produce identical records.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import bench_conv4d
from ..config import RunConfig
from ..errors import KbcMatchError
from ..features import ToyFeatureProvider
from ..gradcheck_harness import run_gradcheck
from ..pipeline import ModelWeights
from ..runner import evaluate_pairs, infer_pairs
from ..selftest import run_selftest
from ..synthetic import generate_benchmark
from .schemas import (
    BenchRequest,
    EvaluateRequest,
    EvaluateResponse,
    GradcheckRequest,
    GradcheckResponse,
    HealthResponse,
    InferRequest,
    InferResponse,
    PredictionModel,
    SelftestResponse,
    SyntheticRequest,
    SyntheticResponse,
    TensorPayload,
)

app = FastAPI(
    title="kbcmatch",
    description="Semantic keypoint correspondence with crop-gated inference",
    version=__version__,
)


def _bad_request(exc: KbcMatchError) -> HTTPException:
    return HTTPException(status_code=422, detail={"error": exc.code, "detail": str(exc)})


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/config/defaults")
def config_defaults() -> dict:
    return RunConfig().to_dict()


@app.post("/infer", response_model=InferResponse)
def infer(request: InferRequest) -> InferResponse:
    try:
        cfg = RunConfig.from_dict(request.config) if request.config else RunConfig()
        annotations = [p.to_annotation() for p in request.pairs]
        images = {key: payload.to_array() for key, payload in request.images.items()}
        weights = ModelWeights.inference_default(cfg.seed, cfg.feature_channels)
        provider = ToyFeatureProvider(cfg.seed, cfg.feature_channels)
        records = infer_pairs(annotations, lambda i: images[i], weights, provider,
                              cfg, kbc_mode=request.kbc)
    except KbcMatchError as exc:
        raise _bad_request(exc) from exc
    except KeyError as exc:
        raise HTTPException(status_code=422,
                            detail={"error": "missing_image", "detail": str(exc)}) from exc
    return InferResponse(predictions=[PredictionModel(**r) for r in records])


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(request: EvaluateRequest) -> EvaluateResponse:
    try:
        annotations = [a.to_annotation() for a in request.annotations]
        predictions = [p.to_record() for p in request.predictions]
        report = evaluate_pairs(annotations, predictions, alphas=tuple(request.alphas),
                                alpha_reference=request.alpha_reference)
    except KbcMatchError as exc:
        raise _bad_request(exc) from exc
    return EvaluateResponse(report=report)


@app.post("/bench/conv4d")
def bench(request: BenchRequest) -> dict:
    try:
        return bench_conv4d(shape=tuple(request.shape), kernel_size=request.kernel,
                            repeats=request.repeats, seed=request.seed)
    except KbcMatchError as exc:
        raise _bad_request(exc) from exc


@app.post("/gradcheck", response_model=GradcheckResponse)
def gradcheck_endpoint(request: GradcheckRequest) -> GradcheckResponse:
    report = run_gradcheck(seed=request.seed, step=request.step,
                           temperature=request.temperature,
                           max_per_group=request.max_per_group)
    return GradcheckResponse(max_rel_error=report["max"], per_group=report["groups"],
                             checked=report["checked"], kink_skipped=report["kink_skipped"])


@app.post("/selftest", response_model=SelftestResponse)
def selftest_endpoint() -> SelftestResponse:
    results = run_selftest()
    return SelftestResponse(results=results, all_passed=all(r["passed"] for r in results))


@app.post("/synthetic", response_model=SyntheticResponse)
def synthetic(request: SyntheticRequest) -> SyntheticResponse:
    try:
        annotations, images = generate_benchmark(request.n_pairs, request.seed, request.size)
    except KbcMatchError as exc:
        raise _bad_request(exc) from exc
    return SyntheticResponse(
        annotations=[a.to_record() for a in annotations],
        images={k: TensorPayload.from_array(v) for k, v in images.items()},
    )
