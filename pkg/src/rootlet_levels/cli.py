"""Command-line interface for rootlet-level analyses."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import typer

try:  # pragma: no cover - exercised in runtime environments
    from rich import box
    from rich.console import Console
    from rich.table import Table
except ImportError as exc:  # pragma: no cover - optional dependency guard
    raise RuntimeError(
        "The CLI requires Rich for table rendering. Install the CLI extras via "
        "'pip install rootlet-levels[cli]' to enable this command."
    ) from exc

from . import __version__
from .cli_schema import CLI_TABLE_VIEWS, TableView
from .config import (
    DEFAULT_DILATION_RADIUS,
    DEFAULT_SMOOTHING_WINDOW,
    DEFAULT_STAPLE_MAX_ITER,
    DEFAULT_STAPLE_TOL,
    DEFAULT_STUDY_SPACINGS,
    THREADS_ENV,
    DilationConfig,
    RunConfig,
    resolve_threads,
)
from .consensus import RaterSet, staple_multiclass
from .exceptions import EXIT_DEGENERATE, ArgumentError, RootletLevelsError, VolumeIOError
from .levels import run_levels
from .metrics import MetricsReport, dice_multiclass, inter_rater_cov, mae_levels
from .phantom import PhantomSpec, generate_phantom, resample_study, truth_manifest, write_phantom
from .reports import (
    CENTERLINE_FIELDS,
    LEVEL_FIELDS,
    METRIC_FIELDS,
    PERFORMANCE_FIELDS,
    STUDY_FIELDS,
    ReportWriter,
    json_text,
    level_rows,
    read_level_csv,
    staple_payload,
)
from .volume_io import read_nifti, read_pmj

TOOL_NAME = "rootlet-levels"

_HELP_SETTINGS = {"context_settings": {"help_option_names": ["-h", "--help"]}}

app = typer.Typer(
    help="Spinal levels and PMJ distances from nerve-rootlet segmentations.",
    no_args_is_help=True,
    **_HELP_SETTINGS,
)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level."),
) -> None:
    """Batch analyses over NIfTI label maps; every run writes a manifest.json."""

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _echo_json(payload: Any) -> None:
    typer.echo(json_text(payload), nl=False)


console = Console(force_terminal=False, color_system=None)


def _render_rich_table(view: TableView, rows: Sequence[Mapping[str, Any]]) -> None:
    table = Table(
        title=view.title,
        box=box.SIMPLE,
        show_lines=False,
        header_style="bold cyan",
    )
    for column in view.columns:
        table.add_column(column.header, justify=column.justify)
    ordered_rows = list(rows)
    if view.sort_key:
        ordered_rows.sort(key=view.sort_key)
    for row in ordered_rows:
        table.add_row(*(column.render(row) for column in view.columns))
    console.print(table)


def _present_output(
    payload: Any, rows: Sequence[Mapping[str, Any]], *, view_id: str, json_output: bool
) -> None:
    if json_output:
        _echo_json(payload)
        return
    view = CLI_TABLE_VIEWS.get(view_id)
    if not view or not rows:
        _echo_json(payload)
        return
    _render_rich_table(view, rows)


def _handle_error(exc: RootletLevelsError) -> None:
    message = f"{type(exc).__name__}: {exc}"
    if exc.details:
        message += f"\nDetails: {exc.details}"
    typer.secho(message, err=True, fg=typer.colors.RED)
    raise typer.Exit(code=exc.exit_code)


def _warn_degenerate(message: str) -> None:
    typer.secho(message, err=True, fg=typer.colors.YELLOW)
    raise typer.Exit(code=EXIT_DEGENERATE)


def _shared_options() -> dict[str, Any]:  # pragma: no cover - helper indirection
    return {
        "rootlets": typer.Option(
            ..., "--rootlets", help="Rootlet label map (0 background, 2..8 = C2..C8)."
        ),
        "cord": typer.Option(..., "--cord", help="Binary spinal cord mask on the rootlet grid."),
        "pmj": typer.Option(
            ...,
            "--pmj",
            help="PMJ as a single-voxel NIfTI label or a JSON file with x_mm/y_mm/z_mm.",
        ),
        "dilate_radius": typer.Option(
            float(DEFAULT_DILATION_RADIUS),
            "--dilate-radius",
            help="Cord dilation radius (see --dilate-unit).",
            show_default=True,
        ),
        "dilate_unit": typer.Option(
            "vox", "--dilate-unit", help="Dilation radius unit (vox or mm).", show_default=True
        ),
        "dilate_shape": typer.Option(
            "ball",
            "--dilate-shape",
            help="Structuring element (ball, cube or cross).",
            show_default=True,
        ),
        "smooth_window": typer.Option(
            DEFAULT_SMOOTHING_WINDOW,
            "--smooth-window",
            help="Odd moving-average window (slices) for the centerline.",
            show_default=True,
        ),
        "cov": typer.Option(
            "sample",
            "--cov",
            help="COV standard deviation convention (sample or population).",
            show_default=True,
        ),
        "out": typer.Option(..., "--out", "-o", help="Output directory (created if missing)."),
        "output_format": typer.Option(
            "both", "--format", help="Tabular report format (csv, json or both).", show_default=True
        ),
        "threads": typer.Option(
            None,
            "--threads",
            envvar=THREADS_ENV,
            help="Worker cap for per-class and per-spacing parallelism.",
        ),
        "output_json": typer.Option(
            False,
            "--json",
            "-j",
            help="Print the JSON report instead of rendering a table.",
        ),
    }


_SHARED_OPTIONS = _shared_options()


def _run_config(
    out: Path,
    *,
    output_format: str,
    threads: int | None,
    rootlets: Path | None = None,
    cord: Path | None = None,
    pmj: Path | None = None,
    raters: Iterable[Path] = (),
    dilation: DilationConfig | None = None,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
    cov_convention: str = "sample",
    extras: Mapping[str, Any] | None = None,
) -> RunConfig:
    config = RunConfig(
        out_dir=out,
        rootlets=rootlets,
        cord=cord,
        pmj=pmj,
        raters=list(raters),
        dilation=dilation or DilationConfig(),
        smoothing_window=smoothing_window,
        cov_convention=cov_convention,
        output_format=output_format.lower(),
        threads=resolve_threads(threads),
        extras=dict(extras or {}),
    )
    _require_files(config.input_paths())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise VolumeIOError(f"{out}: cannot create output directory ({exc})") from exc
    return config


def _require_files(paths: Iterable[Path]) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise VolumeIOError(f"input file not found: {', '.join(missing)}")


def _write_manifest(
    writer: ReportWriter, config: RunConfig, command: str, extra_inputs: Iterable[Path] = ()
) -> None:
    writer.manifest(
        tool=TOOL_NAME,
        version=__version__,
        command=command,
        config=config.resolved(),
        inputs=[*config.input_paths(), *extra_inputs],
    )


def _rater_names(paths: Sequence[Path]) -> list[str]:
    names = [p.name for p in paths]
    if len(set(names)) == len(names):
        return names
    return [f"rater_{index + 1}" for index in range(len(paths))]


@app.command("levels")
def levels_command(
    rootlets: Path = _SHARED_OPTIONS["rootlets"],
    cord: Path = _SHARED_OPTIONS["cord"],
    pmj: Path = _SHARED_OPTIONS["pmj"],
    dilate_radius: float = _SHARED_OPTIONS["dilate_radius"],
    dilate_unit: str = _SHARED_OPTIONS["dilate_unit"],
    dilate_shape: str = _SHARED_OPTIONS["dilate_shape"],
    smooth_window: int = _SHARED_OPTIONS["smooth_window"],
    out: Path = _SHARED_OPTIONS["out"],
    output_format: str = _SHARED_OPTIONS["output_format"],
    threads: int | None = _SHARED_OPTIONS["threads"],
    output_json: bool = _SHARED_OPTIONS["output_json"],
    subject: str = typer.Option("", "--subject", help="Subject identifier for the CSV rows."),
) -> None:
    """Identify spinal levels and measure their distance from the PMJ along the cord."""

    try:
        config = _run_config(
            out,
            output_format=output_format,
            threads=threads,
            rootlets=rootlets,
            cord=cord,
            pmj=pmj,
            dilation=DilationConfig(dilate_radius, dilate_unit, dilate_shape),
            smoothing_window=smooth_window,
            extras={"subject": subject},
        )
        cord_volume = read_nifti(cord, label=True)
        result = run_levels(
            read_nifti(rootlets, label=True),
            cord_volume,
            read_pmj(pmj, reference=cord_volume),
            dilation=config.dilation,
            smoothing_window=config.smoothing_window,
        )
        rows = level_rows(result.extents, subject)
        payload = {
            "subject": subject,
            "levels": rows,
            "centerline_length_mm": result.centerline.length_mm,
            "flags": list(result.flags),
        }
        writer = ReportWriter(config.out_dir, output_format=config.output_format)
        writer.volume("levels.nii.gz", result.level_map.flattened)
        writer.csv("levels.csv", rows, LEVEL_FIELDS)
        writer.csv("centerline.csv", result.centerline.to_rows(), CENTERLINE_FIELDS)
        writer.json("levels.json", payload, always=True)
        _write_manifest(writer, config, "levels")
    except RootletLevelsError as exc:
        _handle_error(exc)
        return

    _present_output(payload, rows, view_id="levels", json_output=output_json)
    if result.all_empty:
        _warn_degenerate("No rootlet level intersects the dilated cord.")


@app.command("staple")
def staple_command(
    rater: list[Path] = typer.Option(
        [], "--rater", "-r", help="Rater label map; repeat once per rater."
    ),
    tol: float = typer.Option(
        DEFAULT_STAPLE_TOL, "--tol", help="EM convergence tolerance.", show_default=True
    ),
    max_iter: int = typer.Option(
        DEFAULT_STAPLE_MAX_ITER, "--max-iter", help="EM iteration cap.", show_default=True
    ),
    out: Path = _SHARED_OPTIONS["out"],
    output_format: str = _SHARED_OPTIONS["output_format"],
    threads: int | None = _SHARED_OPTIONS["threads"],
    output_json: bool = _SHARED_OPTIONS["output_json"],
) -> None:
    """Fuse rater segmentations with per-class STAPLE into one consensus label map."""

    try:
        if len(rater) < 2:
            raise ArgumentError(f"staple needs at least 2 --rater inputs, got {len(rater)}")
        config = _run_config(
            out,
            output_format=output_format,
            threads=threads,
            raters=rater,
            extras={"tol": tol, "max_iter": max_iter},
        )
        raters = RaterSet.from_volumes(
            [read_nifti(path, label=True) for path in rater], _rater_names(rater)
        )
        fusion = staple_multiclass(raters, tol, max_iter, threads=config.threads)
        payload = staple_payload(fusion)
        writer = ReportWriter(config.out_dir, output_format=config.output_format)
        writer.volume("consensus.nii.gz", fusion.consensus)
        writer.json("staple.json", payload, always=True)
        writer.csv("staple_performance.csv", payload["performance"], PERFORMANCE_FIELDS)
        _write_manifest(writer, config, "staple")
    except RootletLevelsError as exc:
        _handle_error(exc)
        return

    _present_output(payload, payload["performance"], view_id="staple", json_output=output_json)


@app.command("metrics")
def metrics_command(
    pred: list[Path] = typer.Option(
        [], "--pred", help="Predicted label map; repeat, paired in order with --truth."
    ),
    truth: list[Path] = typer.Option([], "--truth", help="Reference label map; repeat."),
    levels_csv: list[Path] = typer.Option(
        [], "--levels-csv", help="Levels CSV of one rater; repeat for inter-rater COV."
    ),
    mae_reference: Path | None = typer.Option(
        None, "--mae-reference", help="Levels CSV measured at native resolution."
    ),
    mae_test: list[Path] = typer.Option(
        [], "--mae-test", help="Levels CSV measured after resampling; repeat."
    ),
    mae_spacing: list[float] = typer.Option(
        [], "--mae-spacing", help="Spacing (mm) of each --mae-test, in the same order."
    ),
    cov_convention: str = _SHARED_OPTIONS["cov"],
    out: Path = _SHARED_OPTIONS["out"],
    output_format: str = _SHARED_OPTIONS["output_format"],
    output_json: bool = _SHARED_OPTIONS["output_json"],
) -> None:
    """Compute Dice, inter-rater COV and per-resolution MAE from existing outputs."""

    try:
        if len(pred) != len(truth):
            raise ArgumentError("--pred and --truth must be given the same number of times")
        if len(mae_test) != len(mae_spacing):
            raise ArgumentError("each --mae-test needs a matching --mae-spacing")
        if mae_test and mae_reference is None:
            raise ArgumentError("--mae-test needs --mae-reference")
        if levels_csv and len(levels_csv) < 2:
            raise ArgumentError("inter-rater COV needs at least 2 --levels-csv inputs")
        if not (pred or levels_csv or mae_test):
            raise ArgumentError("nothing to compute: pass --pred, --levels-csv or --mae-test")
        extra_inputs = [*pred, *truth, *levels_csv, *mae_test]
        if mae_reference is not None:
            extra_inputs.append(mae_reference)
        config = _run_config(
            out,
            output_format=output_format,
            threads=None,
            cov_convention=cov_convention.lower(),
            extras={"mae_spacing": list(mae_spacing)},
        )
        _require_files(extra_inputs)

        report = MetricsReport()
        if pred:
            report.add_dice_images(
                [
                    dice_multiclass(read_nifti(p, label=True), read_nifti(t, label=True))
                    for p, t in zip(pred, truth, strict=True)
                ]
            )
        if levels_csv:
            table = inter_rater_cov(
                {f"rater_{i + 1}": read_level_csv(p) for i, p in enumerate(levels_csv)},
                config.cov_convention,
            )
            report.cov = dict(table.per_level)
            report.flags.extend(table.flags)
            report.aggregation["cov"] = table.to_dict()
        if mae_test and mae_reference is not None:
            reference = read_level_csv(mae_reference)
            for spacing, path in zip(mae_spacing, mae_test, strict=True):
                flags: list[str] = []
                measured = read_level_csv(path)
                report.mae[float(spacing)] = mae_levels(reference, measured, flags=flags)
                report.flags.extend(f"spacing_{spacing:g}:{flag}" for flag in flags)

        payload = report.to_dict()
        rows = report.rows()
        writer = ReportWriter(config.out_dir, output_format=config.output_format)
        writer.json("metrics.json", payload, always=True)
        writer.csv("metrics.csv", rows, METRIC_FIELDS)
        _write_manifest(writer, config, "metrics", extra_inputs)
    except RootletLevelsError as exc:
        _handle_error(exc)
        return

    _present_output(payload, rows, view_id="metrics", json_output=output_json)


@app.command("resample-study")
def resample_study_command(
    rootlets: Path = _SHARED_OPTIONS["rootlets"],
    cord: Path = _SHARED_OPTIONS["cord"],
    pmj: Path = _SHARED_OPTIONS["pmj"],
    spacing: list[float] = typer.Option(
        [], "--spacing", help="Isotropic spacing in mm; repeat. Defaults to 0.6..1.6 mm."
    ),
    image: Path | None = typer.Option(
        None, "--image", help="Intensity image to resample; written as image_<spacing>mm.nii.gz."
    ),
    dilate_radius: float = _SHARED_OPTIONS["dilate_radius"],
    dilate_unit: str = _SHARED_OPTIONS["dilate_unit"],
    dilate_shape: str = _SHARED_OPTIONS["dilate_shape"],
    smooth_window: int = _SHARED_OPTIONS["smooth_window"],
    out: Path = _SHARED_OPTIONS["out"],
    output_format: str = _SHARED_OPTIONS["output_format"],
    threads: int | None = _SHARED_OPTIONS["threads"],
    output_json: bool = _SHARED_OPTIONS["output_json"],
) -> None:
    """Rerun level identification at several isotropic spacings; MAE vs native resolution."""

    spacings = list(spacing) or list(DEFAULT_STUDY_SPACINGS)
    try:
        config = _run_config(
            out,
            output_format=output_format,
            threads=threads,
            rootlets=rootlets,
            cord=cord,
            pmj=pmj,
            dilation=DilationConfig(dilate_radius, dilate_unit, dilate_shape),
            smoothing_window=smooth_window,
            extras={"spacings": spacings, "image": None if image is None else str(image)},
        )
        extra_inputs = [] if image is None else [image]
        _require_files(extra_inputs)
        cord_volume = read_nifti(cord, label=True)
        study = resample_study(
            read_nifti(rootlets, label=True),
            cord_volume,
            read_pmj(pmj, reference=cord_volume),
            spacings,
            image=None if image is None else read_nifti(image),
            dilation=config.dilation,
            smoothing_window=config.smoothing_window,
            threads=config.threads,
        )
        rows = study.rows()
        payload = {
            "native_spacing_mm": study.native_spacing_mm,
            "reference": study.reference,
            "mae": {f"{s:g}": value for s, value in study.mae().items()},
            "flags": list(study.flags),
        }
        writer = ReportWriter(config.out_dir, output_format=config.output_format)
        writer.csv("resample_study.csv", rows, STUDY_FIELDS)
        writer.json("resample_study.json", payload, always=True)
        for entry in study.entries:
            if entry.image is not None:
                writer.volume(f"image_{entry.spacing_mm:g}mm.nii.gz", entry.image)
        _write_manifest(writer, config, "resample-study", extra_inputs)
    except RootletLevelsError as exc:
        _handle_error(exc)
        return

    _present_output(payload, rows, view_id="resample-study", json_output=output_json)
    if not study.reference:
        _warn_degenerate("No level was found at native resolution; the study is empty.")


@app.command("phantom")
def phantom_command(
    out: Path = _SHARED_OPTIONS["out"],
    seed: int = typer.Option(0, "--seed", help="Noise RNG seed.", show_default=True),
    mode: str = typer.Option(
        "straight", "--mode", help="Cord shape (straight, bowed or helical).", show_default=True
    ),
    spacing: float = typer.Option(
        0.8, "--spacing", help="Isotropic voxel spacing (mm).", show_default=True
    ),
    amplitude: float = typer.Option(
        2.0, "--amplitude", help="Bow amplitude (mm) for --mode bowed.", show_default=True
    ),
    helix_radius: float = typer.Option(
        2.0, "--helix-radius", help="Helix radius (mm) for --mode helical.", show_default=True
    ),
    angulation_max: float = typer.Option(
        45.0, "--angulation-max", help="C8 rootlet angulation (deg).", show_default=True
    ),
    noise_sd: float = typer.Option(
        0.0, "--noise-sd", help="Gaussian noise SD on the image.", show_default=True
    ),
    rootlet_radius: float | None = typer.Option(
        None, "--rootlet-radius", help="Rootlet strand radius (mm); defaults to the spacing."
    ),
    output_json: bool = _SHARED_OPTIONS["output_json"],
) -> None:
    """Generate a synthetic C2..C8 phantom with its truth manifest."""

    try:
        spec = PhantomSpec.default(
            spacing=spacing,
            curve=mode.lower(),
            amplitude_mm=amplitude if mode.lower() == "bowed" else 0.0,
            helix_radius_mm=helix_radius if mode.lower() == "helical" else 0.0,
            angulation_max_deg=angulation_max,
            rootlet_radius_mm=rootlet_radius,
            noise_sd=noise_sd,
            seed=seed,
        )
        config = _run_config(
            out, output_format="both", threads=None, extras={"phantom": spec.to_dict()}
        )
        phantom = generate_phantom(spec)
        rows = level_rows(phantom.truth)
        manifest = truth_manifest(phantom)
        x_mm, y_mm, z_mm = phantom.pmj.xyz_mm
        writer = ReportWriter(config.out_dir, output_format=config.output_format)
        writer.adopt(write_phantom(phantom, config.out_dir).values())
        writer.json("truth.json", manifest, always=True)
        writer.json("pmj.json", {"x_mm": x_mm, "y_mm": y_mm, "z_mm": z_mm}, always=True)
        writer.csv("truth_levels.csv", rows, LEVEL_FIELDS)
        _write_manifest(writer, config, "phantom")
    except RootletLevelsError as exc:
        _handle_error(exc)
        return

    _present_output(manifest, rows, view_id="phantom", json_output=output_json)


@app.command("version")
def version_command() -> None:
    """Print the tool version."""

    typer.echo(f"{TOOL_NAME} {__version__}")


if __name__ == "__main__":  # pragma: no cover
    app()
