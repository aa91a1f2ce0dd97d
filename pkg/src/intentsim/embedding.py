"""Embedding providers for semantic fidelity.

The built-in surrogate keeps the whole pipeline hermetic and deterministic:
a 64-bin intensity histogram concatenated with an 8-bin gradient-orientation
histogram (central differences, magnitude-weighted), L2-normalized, 72 dims.

An external model runs as a sidecar process speaking line-delimited JSON on
stdio (see the protocol notes in the README); the subprocess provider is the
client side of that protocol and refuses non-deterministic providers at
handshake.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess

import numpy as np

SURROGATE_DIM = 72
_ORIENT_EPS = 1e-12


class ProviderError(RuntimeError):
    """Embedding provider failure; evaluation marks the flow invalid."""


def surrogate_embed(pixels: np.ndarray) -> np.ndarray:
    """Deterministic image signature: intensity + gradient-orientation
    histograms, unit L2 norm.

    Constant images have zero gradient mass; the orientation bins then get a
    uniform epsilon before normalization so the vector stays well defined.
    """
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a non-empty grayscale matrix")
    clipped = np.clip(img, 0.0, 255.0)
    # 4-intensity-wide bins, same layout as histogram(range=(0, 256), bins=64)
    idx = (clipped.ravel() * 0.25).astype(np.intp)
    intensity = np.bincount(idx, minlength=64).astype(np.float64) / img.size
    # central differences on the interior
    gx = (clipped[1:-1, 2:] - clipped[1:-1, :-2]) * 0.5
    gy = (clipped[2:, 1:-1] - clipped[:-2, 1:-1]) * 0.5
    mag = np.hypot(gx, gy)
    angle = np.arctan2(gy, gx)  # [-pi, pi]
    bins = np.minimum((angle + np.pi) / (2.0 * np.pi / 8.0), 7.0).astype(np.intp)
    orient = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=8)
    orient = orient + _ORIENT_EPS
    orient = orient / orient.sum()
    vec = np.concatenate([intensity, orient])
    return vec / np.linalg.norm(vec)


class SurrogateProvider:
    """In-process deterministic provider (the default)."""

    dim = SURROGATE_DIM
    deterministic = True

    def embed(self, pixels: np.ndarray) -> np.ndarray:
        return surrogate_embed(pixels)

    def close(self):
        pass


class SubprocessProvider:
    """Client for the stdio JSON-lines embedding protocol.

    One request per line, responses carry the request id; the provider must
    announce itself with a hello line carrying its dimension and a
    ``deterministic`` flag before serving.
    """

    def __init__(self, command: str):
        self._proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self._next_id = 0
        hello_line = self._proc.stdout.readline()
        if not hello_line:
            raise ProviderError("provider exited before the hello handshake")
        try:
            hello = json.loads(hello_line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"bad handshake line: {exc}") from exc
        if hello.get("op") != "hello" or "dim" not in hello:
            raise ProviderError(f"bad handshake payload: {hello!r}")
        if not hello.get("deterministic", False):
            self.close()
            raise ProviderError("provider did not declare deterministic mode")
        self.dim = int(hello["dim"])
        self.deterministic = True

    def embed(self, pixels: np.ndarray) -> np.ndarray:
        img = np.clip(np.asarray(pixels, dtype=np.float64), 0, 255)
        if img.ndim != 2 or img.size == 0:
            raise ValueError("subprocess provider expects a grayscale matrix")
        quantized = np.round(img).astype(np.uint8)
        if img.shape == (224, 224):
            raw = quantized.tobytes()  # raw fast path is fixed at 224x224
        else:
            from .pngcodec import write_png
            raw = write_png(quantized, min_idat_chunks=1,
                            idat_chunk_bytes=1 << 20)
        req_id = self._next_id
        self._next_id += 1
        req = {"id": req_id, "op": "embed",
               "image": base64.b64encode(raw).decode("ascii")}
        try:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderError(f"provider pipe failed: {exc}") from exc
        if not line:
            raise ProviderError("provider closed the stream")
        resp = json.loads(line)
        if resp.get("id") != req_id:
            raise ProviderError(f"response id {resp.get('id')} != {req_id}")
        if "error" in resp:
            raise ProviderError(str(resp["error"]))
        vec = np.asarray(resp["embedding"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ProviderError(f"embedding dim {vec.shape} != {self.dim}")
        norm = np.linalg.norm(vec)
        if not (abs(norm - 1.0) <= 1e-6):
            raise ProviderError(f"embedding norm {norm} not unit")
        return vec

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


def make_provider(embedding_cmd: str | None):
    return SubprocessProvider(embedding_cmd) if embedding_cmd else SurrogateProvider()
