"""Human review service and export.

Serves the dataset read-only over HTTP for the browser UI and persists
per-video operator decisions (original vs corrected annotations) to a
single JSON file with atomic replace on every write. The export step
materializes the chosen annotation per video into a merged output tree.
"""

from __future__ import annotations

import io
import json
import os
import shutil
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import dataset
from .core import write_annotations
from .imaging import FrameLoadError, FrameSequence
from .render import frame_to_image

CHOICES = ("original", "corrected")


@dataclass(frozen=True)
class DecisionRecord:
    video_id: str
    choice: str
    operator: str
    timestamp: float

    def as_dict(self) -> dict:
        return {"video_id": self.video_id, "choice": self.choice,
                "operator": self.operator, "timestamp": self.timestamp}


class DecisionStore:
    """Decision file of shape ``{"decisions": [DecisionRecord, ...]}``.

    Writes are serialized and atomic (write temp file, then rename); a
    corrupt file refuses to load rather than being silently replaced.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, DecisionRecord] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            doc = json.loads(self.path.read_text("utf-8"))
            for raw in doc["decisions"]:
                if raw["choice"] not in CHOICES:
                    raise ValueError(f"invalid choice {raw['choice']!r}")
                record = DecisionRecord(video_id=raw["video_id"], choice=raw["choice"],
                                        operator=raw.get("operator", ""),
                                        timestamp=float(raw.get("timestamp", 0.0)))
                self._records[record.video_id] = record
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"corrupt decisions file {self.path}: {exc}") from exc

    def get(self, video_id: str) -> DecisionRecord | None:
        with self._lock:
            return self._records.get(video_id)

    def all(self) -> list[DecisionRecord]:
        with self._lock:
            return sorted(self._records.values(), key=lambda r: r.video_id)

    def decide(self, video_id: str, choice: str, operator: str) -> DecisionRecord:
        if choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {choice!r}")
        record = DecisionRecord(video_id=video_id, choice=choice,
                                operator=operator, timestamp=time.time())
        with self._lock:
            self._records[video_id] = record
            self._write()
        return record

    def _write(self) -> None:
        doc = {"decisions": [r.as_dict() for r in
                             sorted(self._records.values(), key=lambda r: r.video_id)]}
        data = json.dumps(doc, indent=1).encode("utf-8")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, self.path)
        except BaseException:
            os.unlink(tmp)
            raise


class DecisionBody(BaseModel):
    choice: str
    operator: str = ""


def build_manifest(dataset_root: Path, corrected_root: Path | None,
                   store: DecisionStore) -> list[dict]:
    entries = []
    for video_id in dataset.discover_videos(dataset_root):
        track = dataset.load_track(dataset_root, video_id)
        corrected = (corrected_root is not None
                     and dataset.label_path(corrected_root, video_id).is_file())
        record = store.get(video_id)
        entries.append({
            "video_id": video_id,
            "frame_count": len(track),
            "fps": track.fps,
            "frames_available": dataset.has_frames(dataset_root, video_id),
            "original_available": True,
            "corrected_available": corrected,
            "decision": record.choice if record else "none",
            "operator": record.operator if record else None,
            "timestamp": record.timestamp if record else None,
        })
    return entries


def create_app(dataset_root: str | Path, corrected_root: str | Path | None,
               decisions_path: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    """Review service over a dataset tree; raises on a corrupt decisions file."""
    dataset_root = Path(dataset_root)
    corrected_root = Path(corrected_root) if corrected_root else None
    store = DecisionStore(decisions_path)
    app = FastAPI(title="annolab review")
    app.state.store = store

    def check_video(video_id: str) -> None:
        if not dataset.label_path(dataset_root, video_id).is_file():
            raise HTTPException(status_code=404, detail=f"unknown video {video_id!r}")

    @app.get("/api/videos")
    def videos():
        return {"videos": build_manifest(dataset_root, corrected_root, store)}

    @app.get("/api/videos/{video_id}/frames/{t}")
    def frame(video_id: str, t: int):
        check_video(video_id)
        try:
            seq = FrameSequence(dataset.frames_path(dataset_root, video_id))
            image = frame_to_image(seq.load(t))
        except (FrameLoadError, IndexError) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    @app.get("/api/videos/{video_id}/annotations")
    def annotations(video_id: str, set: str = "original"):
        check_video(video_id)
        if set == "original":
            track = dataset.load_track(dataset_root, video_id)
        elif set == "corrected":
            if corrected_root is None or not dataset.label_path(corrected_root, video_id).is_file():
                raise HTTPException(status_code=404,
                                    detail=f"no corrected annotations for {video_id!r}")
            track = dataset.load_track(corrected_root, video_id)
        else:
            raise HTTPException(status_code=400, detail="set must be original or corrected")
        return Response(content=write_annotations(track), media_type="application/json")

    @app.post("/api/videos/{video_id}/decision")
    def decide(video_id: str, body: DecisionBody):
        check_video(video_id)
        try:
            record = store.decide(video_id, body.choice, body.operator)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return JSONResponse(record.as_dict())

    @app.get("/api/decisions")
    def decisions():
        return {"decisions": [r.as_dict() for r in store.all()]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve(dataset_root, corrected_root, decisions_path, host="127.0.0.1",
          port=8008, ui_dir=None) -> None:
    import uvicorn

    app = create_app(dataset_root, corrected_root, decisions_path, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


def export_decisions(dataset_root: str | Path, corrected_root: str | Path,
                     decisions_path: str | Path, out_dir: str | Path,
                     default: str | None = None) -> dict:
    """Copy each video's chosen annotation file into ``out_dir`` and return a
    summary with per-choice counts.

    Undecided videos take ``default`` when given, otherwise the export fails
    before writing anything.
    """
    dataset_root = Path(dataset_root)
    corrected_root = Path(corrected_root)
    out_dir = Path(out_dir)
    store = DecisionStore(decisions_path)
    if default is not None and default not in CHOICES:
        raise ValueError(f"default must be one of {CHOICES}, got {default!r}")

    videos = dataset.discover_videos(dataset_root)
    plan: dict[str, str] = {}
    undecided = []
    for video_id in videos:
        record = store.get(video_id)
        if record is not None:
            plan[video_id] = record.choice
        elif default is not None:
            plan[video_id] = default
        else:
            undecided.append(video_id)
    if undecided:
        raise ValueError(
            f"{len(undecided)} video(s) undecided and no default given: "
            + ", ".join(undecided[:10]))

    counts = {"original": 0, "corrected": 0}
    for video_id, choice in plan.items():
        root = dataset_root if choice == "original" else corrected_root
        source = dataset.label_path(root, video_id)
        if not source.is_file():
            raise FileNotFoundError(f"{choice} annotations missing for {video_id!r}: {source}")
        target = dataset.label_path(out_dir, video_id)
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(source, target)
        counts[choice] += 1

    summary = {"total": len(plan), "corrected": counts["corrected"],
               "original": counts["original"], "videos": plan}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary
