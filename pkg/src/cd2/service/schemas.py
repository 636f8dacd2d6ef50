"""Pydantic request/response models for the HTTP service."""

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ExtractResponse(BaseModel):
    width: int
    height: int
    grid_rows: int
    grid_cols: int
    bits_per_bin: int
    size_bytes: int
    signature_b64: str


class CompareResponse(BaseModel):
    score: float
    aggregation: str
    distances: dict[str, float]
    distortion_map: list[list[float]]
    verdict: str | None = None
    heatmap_b64: str | None = None


class TrainSettings(BaseModel):
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.05
    min_samples_leaf: int = 5
    feature_fraction: float = 0.8
    seed: int = 0


class TrainRequest(BaseModel):
    manifest_path: str
    grid_rows: int = 6
    grid_cols: int = 16
    eps: float = 1e-6
    settings: TrainSettings = Field(default_factory=TrainSettings)


class TrainResponse(BaseModel):
    model_b64: str
    n_trees: int
    degenerate: bool
    n_rows: int
    warnings: list[str]


class EvalRequest(BaseModel):
    manifest_path: str
    method: str = "cd2a"
    grid_rows: int = 6
    grid_cols: int = 16
    eps: float = 1e-6
    aggregation: str = "abs"
    folds: int = 5
    settings: TrainSettings = Field(default_factory=TrainSettings)
    model_b64: str | None = None


class FoldResult(BaseModel):
    fold: int
    n: int
    rmse: float
    plcc: float
    srocc: float


class EvalResponse(BaseModel):
    method: str
    rmse: float
    rmse_calibration: str
    plcc: float
    srocc: float
    folds: list[FoldResult]
    n_rows: int
    n_failed: int
    warnings: list[str]


class AnalyzeRequest(BaseModel):
    image_paths: list[str] | None = None
    manifest_path: str | None = None


class ImageCorrelationResult(BaseModel):
    pearson: float
    spearman: float
    iqr: float


class AnalyzeResponse(BaseModel):
    n_images: int
    pearson_median: float
    pearson_std: float
    spearman_median: float
    spearman_std: float
    iqr_median: float
    iqr_std: float
    per_image: list[ImageCorrelationResult]


class ErrorBody(BaseModel):
    code: str
    message: str
