"""Run manifests: every pipeline command records what it ran on."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    tool_version: str = ""
    started: str = field(default_factory=_now)
    finished: str = ""

    def add_input(self, path) -> None:
        if path and os.path.isfile(path):
            self.inputs[str(path)] = file_sha256(path)
        elif path and os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                full = os.path.join(path, name)
                if os.path.isfile(full):
                    self.inputs[full] = file_sha256(full)

    def write(self, out_dir) -> str:
        self.finished = _now()
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=1)
        return path
