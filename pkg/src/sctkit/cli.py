"""Command-line interface: a thin client of the enhancement service.

Every subcommand talks to the service API; by default the service runs
in-process, with ``--server`` (or SCT_SERVER) pointing at a remote instance
instead.  Exit codes: 0 clean, 1 completed with warnings (skipped images,
orphan sequences), 2 fatal.

Environment overrides: SCT_SERVER (service URL), SCT_SEED (default seed),
SCT_THREADS (CPU thread count).
"""

from __future__ import annotations

import base64
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .client import ServiceClient, ServiceError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def _apply_thread_env():
    threads = os.environ.get("SCT_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))


def _fatal(message: str) -> "SystemExit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(2)


@click.group()
@click.version_option(__version__)
@click.option("--server", envvar="SCT_SERVER", default=None, metavar="URL",
              help="Service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Low-light enhancement toolkit client."""
    _apply_thread_env()
    ctx.obj = {"server": server}


def _client(ctx) -> ServiceClient:
    return ServiceClient(ctx.obj["server"])


@main.command()
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.option("-c", "--checkpoint", required=True, type=click.Path(path_type=Path), help="Model checkpoint (.npz).")
@click.option("-o", "--output", required=True, type=click.Path(path_type=Path), help="Output directory.")
@click.pass_context
def enhance(ctx, source: Path, checkpoint: Path, output: Path):
    """Enhance one image file or every image in a directory.

    Outputs keep their input filenames, written as 8-bit PNG. Unreadable
    inputs are skipped with a warning; a missing checkpoint is fatal.
    """
    if source.is_dir():
        files = sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise _fatal(f"no image files in {source}")
    else:
        files = [source]
    output.mkdir(parents=True, exist_ok=True)

    skipped = []
    with _client(ctx) as client:
        for path in files:
            try:
                payload = base64.b64encode(path.read_bytes()).decode("ascii")
                result = client.enhance(payload, str(checkpoint))
            except ServiceError as exc:
                if exc.status_code == 404:
                    raise _fatal(exc.detail) from exc
                click.echo(f"warning: skipping {path.name}: {exc.detail}", err=True)
                skipped.append(path.name)
                continue
            except OSError as exc:
                click.echo(f"warning: skipping {path.name}: {exc}", err=True)
                skipped.append(path.name)
                continue
            out_path = output / f"{path.stem}.png"
            out_path.write_bytes(base64.b64decode(result["image_png_base64"]))
    done = len(files) - len(skipped)
    click.echo(f"enhanced {done} image(s) -> {output}")
    if skipped:
        click.echo(f"skipped {len(skipped)} unreadable input(s): {', '.join(skipped)}", err=True)
        raise SystemExit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              help="JSON training config (flags override file values).")
@click.option("--dataset", type=click.Path(path_type=Path), help="Dataset root with low/ and normal/.")
@click.option("--synthetic", is_flag=True, help="Train on generated synthetic pairs instead of a dataset.")
@click.option("--pairs", default=8, show_default=True, help="Synthetic pair count.")
@click.option("--size", default=64, show_default=True, help="Synthetic image size.")
@click.option("--steps", type=int, default=None, help="Cap on optimizer steps (sets the schedule horizon).")
@click.option("--epochs", type=int, default=None, help="Override total epochs.")
@click.option("--batch", type=int, default=None, help="Override batch size.")
@click.option("--tiny", is_flag=True,
              help="Desk-scale preset: tiny architecture plus crop 64 / batch 8.")
@click.option("--variant", default=None, help="Ablation variant for the model architecture.")
@click.option("--seed", envvar="SCT_SEED", type=int, default=None, help="Training and init seed.")
@click.option("-o", "--out", required=True, type=click.Path(path_type=Path), help="Output directory.")
@click.pass_context
def train(ctx, config_path, dataset, synthetic, pairs, size, steps, epochs, batch, tiny, variant, seed, out):
    """Train an enhancer; writes checkpoints and the loss-history CSV.

    The effective config is echoed as JSON before training starts.
    """
    request: dict = {"output_dir": str(out), "settings": {}, "model": {}}
    if config_path is not None:
        try:
            request.update(json.loads(config_path.read_text()))
        except json.JSONDecodeError as exc:
            raise _fatal(f"malformed config {config_path}: {exc}") from exc
    request["output_dir"] = str(out)
    settings = request.setdefault("settings", {})
    model_spec = request.setdefault("model", {})

    if synthetic:
        request["synthetic"] = {"count": pairs, "size": size}
        request.pop("dataset_root", None)
    elif dataset is not None:
        request["dataset_root"] = str(dataset)
    elif "dataset_root" not in request and "synthetic" not in request:
        raise _fatal("no dataset root given and --synthetic not set")

    if steps is not None:
        settings["max_steps"] = steps
    if epochs is not None:
        settings["total_epochs"] = epochs
    if batch is not None:
        settings["batch_size"] = batch
    if seed is not None:
        settings["seed"] = seed
        model_spec["seed"] = seed
    if tiny:
        model_spec["tiny"] = True
        settings.setdefault("crop", 64)
        settings.setdefault("batch_size", 8)
    if variant is not None:
        model_spec["variant"] = variant

    with _client(ctx) as client:
        try:
            effective = client.defaults()["train"] | settings
            click.echo(json.dumps({"settings": effective, "model": model_spec}, indent=2, sort_keys=True))
            result = client.train(request)
        except ServiceError as exc:
            raise _fatal(exc.detail) from exc
    click.echo(
        f"trained {result['steps']} step(s); final loss {result['final_loss']:.6g} "
        f"(smoothed {result['initial_smoothed_loss']:.6g} -> {result['final_smoothed_loss']:.6g})"
    )
    click.echo(f"checkpoint: {result['checkpoint']}")
    click.echo(f"history:    {result['history_csv']}")


@main.command("eval")
@click.option("--pred", required=True, type=click.Path(path_type=Path), help="Predicted trajectory directory.")
@click.option("--gt", required=True, type=click.Path(path_type=Path), help="Ground-truth trajectory directory.")
@click.option("--report", required=True, type=click.Path(path_type=Path), help="Output JSON report path.")
@click.option("--curves", type=click.Path(path_type=Path), default=None, help="Optional CSV curve output.")
@click.pass_context
def eval_cmd(ctx, pred, gt, report, curves):
    """One-pass-evaluation metrics for trajectory files (x,y,w,h per line).

    Sequences present in only one directory are listed, excluded, and flagged
    with exit code 1.
    """
    with _client(ctx) as client:
        try:
            result = client.evaluate(str(pred), str(gt), str(report), str(curves) if curves else None)
        except ServiceError as exc:
            raise _fatal(exc.detail) from exc
    aggregate = result["report"]["aggregate"]
    click.echo(
        f"sequences {aggregate['sequences']}: precision@20 {aggregate['precision_at_20']:.4f}, "
        f"AUC {aggregate['auc']:.4f}"
    )
    click.echo(f"report: {result['report_path']}")
    if not result["clean"]:
        orphans = result["report"]["orphans"]
        for side, names in orphans.items():
            if names:
                click.echo(f"warning: {side}: {', '.join(names)}", err=True)
        raise SystemExit(1)


@main.command()
@click.argument("name")
@click.pass_context
def ablation(ctx, name):
    """Print the architecture config of a named ablation variant."""
    with _client(ctx) as client:
        try:
            result = client.ablation(name)
        except ServiceError as exc:
            raise _fatal(exc.detail) from exc
    click.echo(json.dumps(result["config"], indent=2, sort_keys=True))


@main.command()
@click.option("--count", default=8, show_default=True, help="Number of pairs.")
@click.option("--size", default=64, show_default=True, help="Image side length.")
@click.option("--seed", envvar="SCT_SEED", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(path_type=Path), help="Dataset root to create.")
@click.pass_context
def synth(ctx, count, size, seed, out):
    """Generate a synthetic paired low/normal dataset on disk."""
    with _client(ctx) as client:
        try:
            result = client.synth(count, size, seed, str(out))
        except ServiceError as exc:
            raise _fatal(exc.detail) from exc
    click.echo(f"wrote {result['count']} pair(s) under {result['root']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the enhancement service."""
    import uvicorn

    from .service import create_app

    _apply_thread_env()
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
