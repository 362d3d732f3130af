"""HTTP client for the enhancement service.

Without a server URL the client mounts the FastAPI app in-process through an
ASGI transport, so the CLI works standalone while all logic stays behind the
service API.  With a URL it talks to a remote instance; note that dataset
and output paths in requests then refer to the server's filesystem.
"""

from __future__ import annotations

import asyncio

import httpx


class ServiceError(RuntimeError):
    """Error response from the service, carrying the HTTP status code."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


class _InProcessTransport(httpx.BaseTransport):
    """Sync transport that serves each request from an ASGI app, no socket."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def call():
            response = await self._asgi.handle_async_request(request)
            content = await response.aread()
            await response.aclose()
            return response.status_code, response.headers, content

        status, headers, content = asyncio.run(call())
        return httpx.Response(status_code=status, headers=headers, content=content)


class ServiceClient:
    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from .service import create_app

            self._client = httpx.Client(
                transport=_InProcessTransport(create_app()), base_url="http://sctkit.internal"
            )

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> dict:
        response = self._client.request(method, path, **kwargs)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(response.status_code, _format_detail(detail))
        return response.json()

    def health(self) -> dict:
        return self._request("GET", "/health")

    def defaults(self) -> dict:
        return self._request("GET", "/defaults")

    def ablation_variants(self) -> list[str]:
        return self._request("GET", "/ablation")["variants"]

    def ablation(self, name: str) -> dict:
        return self._request("GET", f"/ablation/{name}")

    def enhance(self, image_png_base64: str, checkpoint: str) -> dict:
        payload = {"image_png_base64": image_png_base64, "checkpoint": checkpoint}
        return self._request("POST", "/enhance", json=payload)

    def synth(self, count: int, size: int, seed: int, output_dir: str) -> dict:
        payload = {"count": count, "size": size, "seed": seed, "output_dir": output_dir}
        return self._request("POST", "/synth", json=payload)

    def train(self, request: dict) -> dict:
        return self._request("POST", "/train", json=request)

    def evaluate(self, predictions_dir: str, ground_truth_dir: str, report_path=None, curves_path=None) -> dict:
        payload = {
            "predictions_dir": predictions_dir,
            "ground_truth_dir": ground_truth_dir,
            "report_path": report_path,
            "curves_path": curves_path,
        }
        return self._request("POST", "/eval", json=payload)


def _format_detail(detail) -> str:
    """Flatten FastAPI validation-error payloads to 'key: message' lines."""
    if isinstance(detail, str):
        return detail
    if isinstance(detail, list):
        lines = []
        for item in detail:
            if isinstance(item, dict):
                loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
                lines.append(f"{loc}: {item.get('msg', item)}")
            else:
                lines.append(str(item))
        return "; ".join(lines)
    return str(detail)
