"""Facade writing fixed-shape reports into one output directory."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from ..volume_io import Volume3D, write_nifti
from .manifest import MANIFEST_NAME, build_manifest
from .tables import FieldMapping, write_csv, write_json


class ReportWriter:
    """Write CSV/JSON reports per the requested format and remember every output."""

    def __init__(self, out_dir: Path, *, output_format: str = "both") -> None:
        self._out_dir = Path(out_dir)
        self._format = output_format
        self._outputs: list[Path] = []

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    @property
    def outputs(self) -> list[Path]:
        return list(self._outputs)

    def _track(self, path: Path) -> Path:
        self._outputs.append(path)
        return path

    def csv(
        self, name: str, rows: Iterable[Mapping[str, Any]], mappings: Sequence[FieldMapping]
    ) -> Path | None:
        if self._format not in ("csv", "both"):
            return None
        return self._track(write_csv(self._out_dir / name, rows, mappings))

    def json(self, name: str, payload: Any, *, always: bool = False) -> Path | None:
        if not always and self._format not in ("json", "both"):
            return None
        return self._track(write_json(self._out_dir / name, payload))

    def volume(self, name: str, volume: Volume3D) -> Path:
        return self._track(write_nifti(volume, self._out_dir / name))

    def adopt(self, paths: Iterable[Path]) -> None:
        for path in paths:
            self._track(Path(path))

    def manifest(
        self,
        *,
        tool: str,
        version: str,
        command: str,
        config: Mapping[str, Any],
        inputs: Iterable[Path],
    ) -> Path:
        payload = build_manifest(
            tool=tool,
            version=version,
            command=command,
            config=config,
            inputs=inputs,
            outputs=self._outputs,
            out_dir=self._out_dir,
        )
        return write_json(self._out_dir / MANIFEST_NAME, payload)
