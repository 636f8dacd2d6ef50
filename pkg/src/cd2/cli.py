"""Command-line front door; a thin client over the HTTP service.

Commands default to an in-process service instance; pass ``--server`` (or
set CD2_SERVER) to target a running deployment instead. Exit codes: 0 ok,
1 generic failure, 2 input I/O, 3 incompatibility, 4 config error.
"""

import sys
from pathlib import Path

import click
import httpx

from .client import ServiceClient, ServiceError


def _parse_grid(value: str) -> tuple[int, int]:
    try:
        m, n = value.lower().split("x")
        return int(m), int(n)
    except ValueError:
        raise click.BadParameter(f"expected MxN, got {value!r}")


def _read_file(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        click.echo(f"error: cannot read {path}: {exc}", err=True)
        sys.exit(2)


def _write_file(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        click.echo(f"error: cannot write {path}: {exc}", err=True)
        sys.exit(2)


def _run(ctx, call):
    try:
        with ServiceClient(ctx.obj["server"]) as client:
            return call(client)
    except ServiceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except httpx.HTTPError as exc:
        click.echo(f"error: service unreachable: {exc}", err=True)
        sys.exit(1)


@click.group()
@click.option("--server", envvar="CD2_SERVER", default=None, metavar="URL",
              help="Service base URL; defaults to an in-process instance.")
@click.pass_context
def main(ctx, server):
    """Reduced-reference image quality analysis."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.argument("image", type=click.Path())
@click.option("-o", "--out", required=True, type=click.Path(), help="Output .cd2 path.")
@click.option("--grid", default="6x16", metavar="MxN", help="Patch grid, rows x cols.")
@click.pass_context
def extract(ctx, image, out, grid):
    """Extract the signature of IMAGE to a .cd2 file."""
    rows, cols = _parse_grid(grid)
    blob = _read_file(image)
    res = _run(ctx, lambda c: c.extract(blob, Path(image).name, (rows, cols)))
    _write_file(out, res["signature"])
    click.echo(
        f"{out}: {res['size_bytes']} bytes "
        f"({res['grid_rows']}x{res['grid_cols']} grid, "
        f"{res['bits_per_bin']} bits/bin, {res['width']}x{res['height']} source)"
    )


@main.command()
@click.argument("reference", type=click.Path())
@click.argument("processed", type=click.Path())
@click.option("--eps", default=1e-6, show_default=True, help="KL smoothing constant.")
@click.option("--agg", default="abs", type=click.Choice(["abs", "sq"]),
              show_default=True, help="Distortion map aggregation.")
@click.option("--heatmap", default=None, type=click.Path(),
              help="Write the distortion heatmap here (.pgm or .png).")
@click.option("--heatmap-scale", is_flag=True,
              help="Upscale the heatmap to source image dimensions.")
@click.option("--operation", default=None, help="Processing operation label.")
@click.option("--thresholds", default=None, type=click.Path(),
              help="operation=tau table for safety classification.")
@click.pass_context
def compare(ctx, reference, processed, eps, agg, heatmap, heatmap_scale,
            operation, thresholds):
    """Compare a REFERENCE signature against a PROCESSED image or signature."""
    ref_blob = _read_file(reference)
    proc_blob = _read_file(processed)
    thresholds_text = None
    if thresholds is not None:
        thresholds_text = _read_file(thresholds).decode("utf-8")
    if operation is not None and thresholds_text is None:
        click.echo("error: --operation requires --thresholds", err=True)
        sys.exit(4)

    fmt = "png" if heatmap and heatmap.lower().endswith(".png") else "pgm"
    res = _run(ctx, lambda c: c.compare(
        ref_blob, proc_blob, Path(processed).name, eps, agg,
        operation=operation, thresholds_text=thresholds_text,
        heatmap=heatmap is not None, heatmap_format=fmt,
        heatmap_upscale=heatmap_scale,
    ))

    click.echo(f"score {res['score']:.6f} ({res['aggregation']})")
    for name, value in res["distances"].items():
        click.echo(f"{name} {value:.6f}")
    if res.get("verdict"):
        click.echo(f"verdict {res['verdict']} (operation={operation})")
    if heatmap:
        _write_file(heatmap, res["heatmap"])
        click.echo(f"heatmap written to {heatmap}")


def _settings(trees, depth, learning_rate, min_leaf, feature_fraction, seed):
    return {
        "n_trees": trees,
        "max_depth": depth,
        "learning_rate": learning_rate,
        "min_samples_leaf": min_leaf,
        "feature_fraction": feature_fraction,
        "seed": seed,
    }


_train_options = [
    click.option("--trees", default=200, show_default=True),
    click.option("--depth", default=4, show_default=True),
    click.option("--learning-rate", default=0.05, show_default=True),
    click.option("--min-leaf", default=5, show_default=True),
    click.option("--feature-fraction", default=0.8, show_default=True),
    click.option("--seed", default=0, show_default=True),
]


def _with_train_options(fn):
    for opt in reversed(_train_options):
        fn = opt(fn)
    return fn


@main.command()
@click.argument("manifest", type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path(),
              help="Output .cd2b model path.")
@click.option("--grid", default="6x16", metavar="MxN", show_default=True)
@click.option("--eps", default=1e-6, show_default=True)
@_with_train_options
@click.pass_context
def train(ctx, manifest, model_path, grid, eps, trees, depth, learning_rate,
          min_leaf, feature_fraction, seed):
    """Train the boosted scorer on all rows of MANIFEST."""
    rows, cols = _parse_grid(grid)
    settings = _settings(trees, depth, learning_rate, min_leaf, feature_fraction, seed)
    res = _run(ctx, lambda c: c.train(str(Path(manifest).resolve()), (rows, cols),
                                      eps, settings))
    _write_file(model_path, res["model"])
    for warning in res["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    flag = " (degenerate targets)" if res["degenerate"] else ""
    click.echo(f"{model_path}: {res['n_trees']} trees from {res['n_rows']} rows{flag}")


@main.command("eval")
@click.argument("manifest", type=click.Path())
@click.option("--method", "methods", multiple=True,
              type=click.Choice(["cd2a", "cd2b", "psnr"]), default=("cd2a",),
              show_default=True, help="Repeatable.")
@click.option("--grid", default="6x16", metavar="MxN", show_default=True)
@click.option("--eps", default=1e-6, show_default=True)
@click.option("--agg", default="abs", type=click.Choice(["abs", "sq"]), show_default=True)
@click.option("--folds", default=5, show_default=True)
@click.option("--model", "model_path", default=None, type=click.Path(),
              help="Evaluate this pre-trained .cd2b instead of fold training.")
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="Also write the metrics as CSV.")
@_with_train_options
@click.pass_context
def eval_cmd(ctx, manifest, methods, grid, eps, agg, folds, model_path, csv_path,
             trees, depth, learning_rate, min_leaf, feature_fraction, seed):
    """Benchmark predictors against the DMOS scores in MANIFEST."""
    rows, cols = _parse_grid(grid)
    settings = _settings(trees, depth, learning_rate, min_leaf, feature_fraction, seed)
    model_bytes = _read_file(model_path) if model_path else None

    reports = []
    for method in methods:
        res = _run(ctx, lambda c, m=method: c.evaluate(
            str(Path(manifest).resolve()), m, (rows, cols), eps, agg, folds,
            settings, model_bytes if m == "cd2b" else None,
        ))
        reports.append(res)
        calib = "" if res["rmse_calibration"] == "none" else f" ({res['rmse_calibration']}-calibrated)"
        click.echo(f"method  {res['method']}")
        click.echo(f"rows    {res['n_rows']} evaluated, {res['n_failed']} failed")
        click.echo(f"rmse    {res['rmse']:.6f}{calib}")
        click.echo(f"plcc    {res['plcc']:.6f}")
        click.echo(f"srocc   {res['srocc']:.6f}")
        for f in res["folds"]:
            click.echo(
                f"fold {f['fold']}  n={f['n']}  rmse={f['rmse']:.6f}  "
                f"plcc={f['plcc']:.6f}  srocc={f['srocc']:.6f}"
            )
        for warning in res["warnings"]:
            click.echo(f"warning: {warning}", err=True)
        click.echo("")

    if csv_path:
        lines = ["method,scope,n,rmse,plcc,srocc"]
        for res in reports:
            lines.append(f"{res['method']},overall,{res['n_rows']},"
                         f"{res['rmse']!r},{res['plcc']!r},{res['srocc']!r}")
            for f in res["folds"]:
                lines.append(f"{res['method']},fold{f['fold']},{f['n']},"
                             f"{f['rmse']!r},{f['plcc']!r},{f['srocc']!r}")
        _write_file(csv_path, ("\n".join(lines) + "\n").encode("ascii"))

    if any(res["n_failed"] > 0 for res in reports):
        sys.exit(1)


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path())
@click.pass_context
def analyze(ctx, paths):
    """Gradient-axis correlation analysis over images or a manifest CSV."""
    image_paths, manifest_path = [], None
    for p in paths:
        if p.lower().endswith(".csv"):
            manifest_path = str(Path(p).resolve())
        else:
            image_paths.append(str(Path(p).resolve()))
    res = _run(ctx, lambda c: c.analyze(image_paths, manifest_path))
    click.echo(f"images   {res['n_images']}")
    click.echo(f"pearson  median {res['pearson_median']:.4f}  std {res['pearson_std']:.4f}")
    click.echo(f"spearman median {res['spearman_median']:.4f}  std {res['spearman_std']:.4f}")
    click.echo(f"iqr      median {res['iqr_median']:.4f}  std {res['iqr_std']:.4f}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
