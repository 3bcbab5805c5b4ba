"""The FastAPI application: POST /transcribe and GET /healthz.

Error contract (JSON body {"error": <name>, "detail": <message>}):
  400 UnsupportedAudio   undecodable audio, bad request shape, non-WAV hint
  413 TooLong            audio exceeds the configured maximum duration
  503 ModelNotReady      checkpoint still loading (or failed to load)
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .audio import UnsupportedAudioError, duration_seconds, load_audio, to_model_rate
from .model import Transcriber


class ShimHttpError(Exception):
    def __init__(self, status: int, name: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.name = name
        self.detail = detail


class TranscribeRequest(BaseModel):
    audio_path: Optional[str] = None
    audio_b64: Optional[str] = None
    format: Optional[str] = None


class TranscribeResponse(BaseModel):
    text: str
    model_id: str
    audio_seconds: float


class ShimState:
    """Holds the (eventually) loaded model; requests 503 until it arrives."""

    def __init__(self, checkpoint: Union[str, Path], max_seconds: float):
        self.checkpoint = Path(checkpoint)
        self.max_seconds = max_seconds
        self.transcriber: Optional[Transcriber] = None
        self.load_error: Optional[str] = None
        self._load_lock = threading.Lock()

    @property
    def model_id(self) -> str:
        return self.checkpoint.name

    @property
    def ready(self) -> bool:
        return self.transcriber is not None

    def load(self) -> None:
        with self._load_lock:
            if self.transcriber is None:
                self.transcriber = Transcriber(self.checkpoint)

    def load_in_background(self) -> None:
        def target():
            try:
                self.load()
            except Exception as exc:  # surfaced through 503 detail
                self.load_error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=target, daemon=True).start()


def create_app(
    checkpoint: Union[str, Path],
    max_seconds: float = 120.0,
    load: str = "eager",
) -> FastAPI:
    """Build the service around one checkpoint.

    load: "eager" loads during startup (requests never see 503),
    "background" starts serving immediately and loads in a thread,
    "none" never loads (for exercising the not-ready path).
    """
    if load not in ("eager", "background", "none"):
        raise ValueError(f"bad load mode {load!r}")
    state = ShimState(checkpoint, max_seconds)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if load == "eager":
            state.load()
        elif load == "background":
            state.load_in_background()
        yield

    app = FastAPI(title="asr-shim", lifespan=lifespan)
    app.state.shim = state

    @app.exception_handler(ShimHttpError)
    async def shim_error(request: Request, exc: ShimHttpError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.name, "detail": exc.detail}
        )

    @app.get("/healthz")
    def healthz():
        return {"model_id": state.model_id, "ready": state.ready}

    @app.post("/transcribe", response_model=TranscribeResponse)
    def transcribe(req: TranscribeRequest) -> TranscribeResponse:
        if state.transcriber is None:
            detail = state.load_error or "model checkpoint is still loading"
            raise ShimHttpError(503, "ModelNotReady", detail)
        if req.format is not None and req.format.lower() not in ("wav", "wave"):
            raise ShimHttpError(
                400, "UnsupportedAudio", f"unsupported format hint {req.format!r}"
            )
        try:
            samples, rate = load_audio(req.audio_path, req.audio_b64)
        except UnsupportedAudioError as exc:
            raise ShimHttpError(400, "UnsupportedAudio", str(exc)) from exc

        seconds = duration_seconds(samples, rate)
        if seconds > state.max_seconds:
            raise ShimHttpError(
                413,
                "TooLong",
                f"audio is {seconds:.2f}s, limit is {state.max_seconds:.2f}s",
            )
        text = state.transcriber.transcribe(to_model_rate(samples, rate))
        return TranscribeResponse(
            text=text, model_id=state.transcriber.model_id, audio_seconds=seconds
        )

    return app
