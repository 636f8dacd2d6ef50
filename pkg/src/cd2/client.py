"""Thin HTTP client for the cd2 service.

The CLI talks to the service exclusively through this client. Without a
server URL it mounts the ASGI app in-process, so the same request path is
exercised with no socket or separate process involved.
"""

import base64
from dataclasses import dataclass

import httpx

# error body code -> CLI exit code (0 ok, 1 generic, 2 input I/O,
# 3 incompatibility, 4 config error)
EXIT_CODES = {"input": 2, "incompatible": 3, "config": 4, "data": 1, "internal": 1}


@dataclass
class ServiceError(Exception):
    code: str
    message: str

    @property
    def exit_code(self) -> int:
        return EXIT_CODES.get(self.code, 1)

    def __str__(self):
        return f"{self.code}: {self.message}"


def _local_client() -> httpx.Client:
    # in-process ASGI mount; same dispatch machinery a test client uses
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # testclient import warns on some stacks
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 600.0):
        if server:
            self._http = httpx.Client(base_url=server, timeout=timeout)
        else:
            self._http = _local_client()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _check(self, resp: httpx.Response) -> dict:
        if resp.status_code >= 400:
            try:
                body = resp.json()
                raise ServiceError(body["code"], body["message"])
            except (KeyError, ValueError):
                raise ServiceError("internal", resp.text[:500])
        return resp.json()

    def health(self) -> dict:
        return self._check(self._http.get("/health"))

    def extract(self, image_bytes: bytes, filename: str, grid: tuple[int, int]) -> dict:
        resp = self._http.post(
            "/signatures/extract",
            files={"image": (filename, image_bytes)},
            data={"grid_rows": str(grid[0]), "grid_cols": str(grid[1])},
        )
        out = self._check(resp)
        out["signature"] = base64.b64decode(out.pop("signature_b64"))
        return out

    def compare(
        self,
        reference: bytes,
        processed: bytes,
        processed_name: str,
        eps: float,
        aggregation: str,
        operation: str | None = None,
        thresholds_text: str | None = None,
        heatmap: bool = False,
        heatmap_format: str = "pgm",
        heatmap_upscale: bool = False,
    ) -> dict:
        data = {
            "eps": str(eps),
            "aggregation": aggregation,
            "heatmap": str(heatmap).lower(),
            "heatmap_format": heatmap_format,
            "heatmap_upscale": str(heatmap_upscale).lower(),
        }
        if operation is not None:
            data["operation"] = operation
        if thresholds_text is not None:
            data["thresholds"] = thresholds_text
        resp = self._http.post(
            "/signatures/compare",
            files={
                "reference": ("reference.cd2", reference),
                "processed": (processed_name, processed),
            },
            data=data,
        )
        out = self._check(resp)
        if out.get("heatmap_b64"):
            out["heatmap"] = base64.b64decode(out.pop("heatmap_b64"))
        return out

    def train(self, manifest_path: str, grid: tuple[int, int], eps: float, settings: dict) -> dict:
        resp = self._http.post(
            "/models/train",
            json={
                "manifest_path": manifest_path,
                "grid_rows": grid[0],
                "grid_cols": grid[1],
                "eps": eps,
                "settings": settings,
            },
        )
        out = self._check(resp)
        out["model"] = base64.b64decode(out.pop("model_b64"))
        return out

    def evaluate(
        self,
        manifest_path: str,
        method: str,
        grid: tuple[int, int],
        eps: float,
        aggregation: str,
        folds: int,
        settings: dict,
        model_bytes: bytes | None = None,
    ) -> dict:
        payload = {
            "manifest_path": manifest_path,
            "method": method,
            "grid_rows": grid[0],
            "grid_cols": grid[1],
            "eps": eps,
            "aggregation": aggregation,
            "folds": folds,
            "settings": settings,
        }
        if model_bytes is not None:
            payload["model_b64"] = base64.b64encode(model_bytes).decode("ascii")
        return self._check(self._http.post("/evaluations/run", json=payload))

    def analyze(self, image_paths: list[str], manifest_path: str | None = None) -> dict:
        return self._check(
            self._http.post(
                "/analyses/gradient-dependency",
                json={"image_paths": image_paths, "manifest_path": manifest_path},
            )
        )
