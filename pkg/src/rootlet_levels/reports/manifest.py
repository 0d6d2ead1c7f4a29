"""Run manifests: tool version, resolved config, input checksums, outputs."""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from ..exceptions import VolumeIOError

MANIFEST_NAME = "manifest.json"
_CHUNK = 1 << 20


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    try:
        with Path(path).open("rb") as handle:
            for chunk in iter(lambda: handle.read(_CHUNK), b""):
                digest.update(chunk)
    except OSError as exc:
        raise VolumeIOError(f"{path}: cannot checksum input ({exc})") from exc
    return digest.hexdigest()


def build_manifest(
    *,
    tool: str,
    version: str,
    command: str,
    config: Mapping[str, Any],
    inputs: Iterable[Path],
    outputs: Iterable[Path],
    out_dir: Path,
) -> dict[str, Any]:
    """No timestamps: reruns on identical inputs give an identical manifest."""

    def _relative(path: Path) -> str:
        try:
            return str(Path(path).relative_to(out_dir))
        except ValueError:
            return str(path)

    return {
        "tool": tool,
        "version": version,
        "command": command,
        "config": dict(config),
        "inputs": {str(p): sha256_file(p) for p in sorted(set(inputs), key=str)},
        "outputs": sorted(_relative(p) for p in outputs),
    }
