"""FastAPI service wrapping the signature pipeline.

Single-image operations (extract, compare) take file uploads and return
JSON; batch operations (train, eval, analyze) reference manifest and image
paths readable by the server process. Domain errors map to a structured
``{code, message}`` body so thin clients can translate them to exit codes.
"""

import base64
from importlib.metadata import PackageNotFoundError, version as pkg_version

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse

from .. import boosting, evaluation, features, images, scoring
from ..distances import distance_vector
from ..errors import (
    BadMagic,
    BadTail,
    Cd2Error,
    CodecError,
    DegenerateVariance,
    DimensionMismatch,
    DimensionTooSmall,
    EmptyDataset,
    FeatureOrderMismatch,
    GridMismatch,
    GridTooFine,
    LengthMismatch,
    MissingColumn,
    OutOfDomain,
    ParseError,
    SchemeMismatch,
    TooFewGroups,
    UnknownOperation,
    VersionMismatch,
)
from . import schemas

# error code -> (HTTP status, CLI exit code); see docs in the CLI module
_INPUT = ("input", 400)
_INCOMPATIBLE = ("incompatible", 409)
_CONFIG = ("config", 422)
_DATA = ("data", 422)

_ERROR_MAP = {
    BadMagic: _INPUT,
    CodecError: _INPUT,
    ParseError: _INPUT,
    MissingColumn: _INPUT,
    DimensionTooSmall: _INPUT,
    VersionMismatch: _INCOMPATIBLE,
    SchemeMismatch: _INCOMPATIBLE,
    GridMismatch: _INCOMPATIBLE,
    DimensionMismatch: _INCOMPATIBLE,
    FeatureOrderMismatch: _INCOMPATIBLE,
    GridTooFine: _CONFIG,
    OutOfDomain: _CONFIG,
    BadTail: _CONFIG,
    UnknownOperation: _CONFIG,
    LengthMismatch: _CONFIG,
    EmptyDataset: _DATA,
    DegenerateVariance: _DATA,
    TooFewGroups: _DATA,
}


def _classify_error(exc: Exception) -> tuple[str, int]:
    for cls in type(exc).__mro__:
        if cls in _ERROR_MAP:
            return _ERROR_MAP[cls]
    return ("internal", 500)


def _service_version() -> str:
    try:
        return pkg_version("cd2")
    except PackageNotFoundError:
        return "0.0.0-dev"


def create_app() -> FastAPI:
    app = FastAPI(title="cd2", version=_service_version())

    @app.exception_handler(Cd2Error)
    async def domain_error_handler(request, exc: Cd2Error):
        code, status = _classify_error(exc)
        return JSONResponse(
            status_code=status, content={"code": code, "message": str(exc)}
        )

    @app.exception_handler(FileNotFoundError)
    async def missing_file_handler(request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=400, content={"code": "input", "message": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(request, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"code": "config", "message": str(exc)}
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=_service_version())

    @app.post("/signatures/extract", response_model=schemas.ExtractResponse)
    async def extract(
        image: UploadFile = File(...),
        grid_rows: int = Form(6),
        grid_cols: int = Form(16),
    ):
        data = await image.read()
        lum = _decode_image(data, image.filename)
        fs = features.extract_features(lum, grid_rows, grid_cols)
        blob = features.encode_signature(fs)
        return schemas.ExtractResponse(
            width=fs.width,
            height=fs.height,
            grid_rows=fs.grid.rows,
            grid_cols=fs.grid.cols,
            bits_per_bin=features.bits_per_bin(fs.width * fs.height),
            size_bytes=len(blob),
            signature_b64=base64.b64encode(blob).decode("ascii"),
        )

    @app.post("/signatures/compare", response_model=schemas.CompareResponse)
    async def compare(
        reference: UploadFile = File(...),
        processed: UploadFile = File(...),
        eps: float = Form(1e-6),
        aggregation: str = Form("abs"),
        operation: str | None = Form(None),
        thresholds: str | None = Form(None),  # "op=tau" lines
        heatmap: bool = Form(False),
        heatmap_format: str = Form("pgm"),
        heatmap_upscale: bool = Form(False),
    ):
        ref_blob = await reference.read()
        if not features.is_signature(ref_blob):
            raise BadMagic("reference must be a signature file")
        ref_fs = features.decode_signature(ref_blob)

        proc_blob = await processed.read()
        if features.is_signature(proc_blob):
            proc_fs = features.decode_signature(proc_blob)
        else:
            lum = _decode_image(proc_blob, processed.filename)
            proc_fs = features.extract_features(
                lum, ref_fs.grid.rows, ref_fs.grid.cols, ref_fs.binning
            )

        dmap = scoring.distortion_map(ref_fs, proc_fs, eps)
        score = scoring.cd2a_score(dmap, aggregation)
        dvec = distance_vector(ref_fs, proc_fs, eps)

        verdict = None
        if operation is not None:
            table = scoring.parse_thresholds(thresholds or "")
            verdict = scoring.classify(score, operation, table)

        heatmap_b64 = None
        if heatmap:
            target = (ref_fs.width, ref_fs.height) if heatmap_upscale else None
            img = scoring.render_heatmap(dmap, upscale_to=target)
            heatmap_b64 = base64.b64encode(
                images.grayscale_bytes(img, heatmap_format)
            ).decode("ascii")

        return schemas.CompareResponse(
            score=score.value,
            aggregation=score.aggregation,
            distances=dvec.as_dict(),
            distortion_map=[[float(v) for v in row] for row in dmap],
            verdict=verdict,
            heatmap_b64=heatmap_b64,
        )

    @app.post("/models/train", response_model=schemas.TrainResponse)
    def train_model(req: schemas.TrainRequest):
        manifest = evaluation.load_manifest(req.manifest_path)
        cfg = _train_config(req.settings)
        model, warnings = evaluation.train_on_manifest(
            manifest, cfg, (req.grid_rows, req.grid_cols), req.eps
        )
        blob = boosting.save_model(model)
        return schemas.TrainResponse(
            model_b64=base64.b64encode(blob).decode("ascii"),
            n_trees=len(model.trees),
            degenerate=model.degenerate,
            n_rows=len(manifest.rows),
            warnings=warnings,
        )

    @app.post("/evaluations/run", response_model=schemas.EvalResponse)
    def run_eval(req: schemas.EvalRequest):
        manifest = evaluation.load_manifest(req.manifest_path)
        grid = (req.grid_rows, req.grid_cols)
        if req.method == "cd2a":
            report = evaluation.run_cd2a_eval(manifest, grid, req.eps, req.aggregation)
        elif req.method == "psnr":
            report = evaluation.run_psnr_eval(manifest)
        elif req.method == "cd2b":
            model = None
            if req.model_b64 is not None:
                model = boosting.load_model(base64.b64decode(req.model_b64))
            report = evaluation.run_cd2b_eval(
                manifest, _train_config(req.settings), grid, req.eps,
                k=req.folds, model=model,
            )
        else:
            raise ValueError(f"unknown method {req.method!r}")
        return schemas.EvalResponse(
            method=report.method,
            rmse=report.rmse,
            rmse_calibration=report.rmse_calibration,
            plcc=report.plcc,
            srocc=report.srocc,
            folds=[
                schemas.FoldResult(
                    fold=f.fold, n=f.n, rmse=f.rmse, plcc=f.plcc, srocc=f.srocc
                )
                for f in report.folds
            ],
            n_rows=report.n_rows,
            n_failed=report.n_failed,
            warnings=report.warnings,
        )

    @app.post("/analyses/gradient-dependency", response_model=schemas.AnalyzeResponse)
    def analyze(req: schemas.AnalyzeRequest):
        paths: list[str] = []
        if req.image_paths:
            paths.extend(req.image_paths)
        if req.manifest_path:
            manifest = evaluation.load_manifest(req.manifest_path)
            seen = dict.fromkeys(row.ref for row in manifest.rows)
            paths.extend(seen)
        if not paths:
            raise ValueError("no images to analyze")
        report = evaluation.gradient_dependency_analysis(
            images.load_luminance(p) for p in paths
        )
        return schemas.AnalyzeResponse(
            n_images=report.n_images,
            pearson_median=report.pearson_median,
            pearson_std=report.pearson_std,
            spearman_median=report.spearman_median,
            spearman_std=report.spearman_std,
            iqr_median=report.iqr_median,
            iqr_std=report.iqr_std,
            per_image=[
                schemas.ImageCorrelationResult(
                    pearson=c.pearson, spearman=c.spearman, iqr=c.iqr
                )
                for c in report.per_image
            ],
        )

    return app


def _decode_image(data: bytes, filename: str | None):
    try:
        return images.load_luminance(data)
    except Exception as exc:
        raise FileNotFoundError(f"cannot decode image {filename or '<upload>'}: {exc}")


def _train_config(settings: schemas.TrainSettings) -> boosting.TrainConfig:
    return boosting.TrainConfig(
        n_trees=settings.n_trees,
        max_depth=settings.max_depth,
        learning_rate=settings.learning_rate,
        min_samples_leaf=settings.min_samples_leaf,
        feature_fraction=settings.feature_fraction,
        seed=settings.seed,
    )
