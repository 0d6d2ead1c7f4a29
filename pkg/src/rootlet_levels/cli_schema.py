"""Rich table layouts for the report rows each command prints."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

Row = Mapping[str, Any]
ValueFormatter = Callable[[Any], str]
SortKey = Callable[[Row], Any]


@dataclass(frozen=True)
class Column:
    """One report field shown as a table column; missing values render blank."""

    header: str
    key: str
    formatter: ValueFormatter = str
    justify: str = "left"

    def render(self, row: Row) -> str:
        value = row.get(self.key)
        return "" if value is None else self.formatter(value)


@dataclass(frozen=True)
class TableView:
    title: str
    columns: tuple[Column, ...]
    sort_key: SortKey | None = None


def _fixed(precision: int = 2) -> ValueFormatter:
    return lambda value: f"{float(value):.{precision}f}"


def _level_name(level: Any) -> str:
    return f"C{level}"


def _yes_no(value: Any) -> str:
    return "yes" if value else "no"


def _flags(value: Any, max_chars: int = 40) -> str:
    text = ", ".join(str(v) for v in value) if isinstance(value, (list, tuple)) else str(value)
    return text if len(text) <= max_chars else text[: max_chars - 3] + "..."


def _sort_level(row: Row) -> Any:
    return (row.get("spacing_mm") or 0.0, row.get("level") or 0, str(row.get("rater") or ""))


_MM = _fixed()

_EXTENT_COLUMNS = (
    Column("Level", key="level", formatter=_level_name),
    Column("Rostral", key="rostral_slice", justify="right"),
    Column("Caudal", key="caudal_slice", justify="right"),
    Column("PMJ rostral (mm)", key="pmj_rostral_mm", formatter=_MM, justify="right"),
    Column("PMJ mid (mm)", key="pmj_mid_mm", formatter=_MM, justify="right"),
    Column("PMJ caudal (mm)", key="pmj_caudal_mm", formatter=_MM, justify="right"),
    Column("Length (mm)", key="length_mm", formatter=_MM, justify="right"),
    Column("Flags", key="flags", formatter=_flags),
)

CLI_TABLE_VIEWS: dict[str, TableView] = {
    "levels": TableView(title="Spinal levels", columns=_EXTENT_COLUMNS, sort_key=_sort_level),
    "phantom": TableView(title="Phantom truth", columns=_EXTENT_COLUMNS, sort_key=_sort_level),
    "staple": TableView(
        title="Rater performance",
        columns=(
            Column("Rater", key="rater"),
            Column("Level", key="level", formatter=_level_name),
            Column("Sensitivity", key="sensitivity", formatter=_fixed(4)),
            Column("Specificity", key="specificity", formatter=_fixed(4)),
            Column("Iterations", key="iterations", justify="right"),
            Column("Converged", key="converged", formatter=_yes_no),
        ),
        sort_key=_sort_level,
    ),
    "metrics": TableView(
        title="Metrics",
        columns=(
            Column("Metric", key="metric"),
            Column("Key", key="key"),
            Column("Value", key="value", formatter=_fixed(4), justify="right"),
        ),
    ),
    "resample-study": TableView(
        title="Resolution study",
        columns=(
            Column("Spacing (mm)", key="spacing_mm", formatter=_fixed()),
            Column("Level", key="level", formatter=_level_name),
            Column("Reference (mm)", key="reference_mm", formatter=_fixed()),
            Column("PMJ mid (mm)", key="pmj_mid_mm", formatter=_fixed()),
            Column("|Error| (mm)", key="abs_error_mm", formatter=_fixed()),
        ),
        sort_key=_sort_level,
    ),
}
