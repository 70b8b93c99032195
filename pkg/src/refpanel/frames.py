"""Frame acquisition for video questions.

The pipelines consume pre-extracted JPEG frames rather than decoding
video. Frames for `<dir>/<stem>.mp4` are read from `<dir>/<stem>_frames/`
(a clip path that is itself a directory is read directly); an optional
command source shells out to a user-configured extractor first.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Protocol

from .errors import FrameSourceError

DEFAULT_FRAME_BUDGET = 8


class FrameSource(Protocol):
    def frames(self, clip_path: str) -> list[bytes]: ...


def _uniform_sample(items: list, budget: int) -> list:
    if len(items) <= budget:
        return items
    n = len(items)
    return [items[(i * n) // budget] for i in range(budget)]


def _read_frame_dir(directory: Path, budget: int, clip_path: str) -> list[bytes]:
    files = sorted(directory.glob("frame_*.jpg")) or sorted(directory.glob("*.jpg"))
    if not files:
        raise FrameSourceError(f"no frame images in {directory} for clip {clip_path}")
    return [f.read_bytes() for f in _uniform_sample(files, budget)]


class DirectoryFrameSource:
    """Reads pre-extracted frames named frame_*.jpg next to the clip."""

    def __init__(self, budget: int = DEFAULT_FRAME_BUDGET):
        if budget < 1:
            raise ValueError("frame budget must be positive")
        self.budget = budget

    def frames(self, clip_path: str) -> list[bytes]:
        path = Path(clip_path)
        if path.is_dir():
            return _read_frame_dir(path, self.budget, clip_path)
        frame_dir = path.parent / f"{path.stem}_frames"
        if not frame_dir.is_dir():
            raise FrameSourceError(
                f"no frame directory {frame_dir} for clip {clip_path}"
            )
        return _read_frame_dir(frame_dir, self.budget, clip_path)


class CommandFrameSource:
    """Runs a user-configured extractor command, then reads its output.

    The command template must contain {clip} and {outdir} placeholders,
    e.g. `ffmpeg -i {clip} -vf fps=2 {outdir}/frame_%04d.jpg`.
    """

    def __init__(self, command_template: str, budget: int = DEFAULT_FRAME_BUDGET):
        if "{clip}" not in command_template or "{outdir}" not in command_template:
            raise ValueError("command template needs {clip} and {outdir} placeholders")
        self.command_template = command_template
        self.budget = budget

    def frames(self, clip_path: str) -> list[bytes]:
        with tempfile.TemporaryDirectory(prefix="refpanel-frames-") as outdir:
            command = [
                part.replace("{clip}", clip_path).replace("{outdir}", outdir)
                for part in shlex.split(self.command_template)
            ]
            try:
                subprocess.run(command, check=True, capture_output=True)
            except (subprocess.CalledProcessError, OSError) as exc:
                raise FrameSourceError(
                    f"frame extractor failed for {clip_path}: {exc}"
                ) from exc
            return _read_frame_dir(Path(outdir), self.budget, clip_path)
