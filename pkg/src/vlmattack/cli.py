"""Command-line entry point.

Exit codes: 0 ok, 2 config error, 3 optimizer divergence, 4 external
service failure, 5 pending verdicts.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import engine, harness, objectives, report, targets
from .config import load_run_config
from .errors import (
    ConfigError,
    DivergenceError,
    PendingVerdictError,
    TargetError,
    VlmAttackError,
)
from .image import Image, save_png

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_SERVICE = 4
EXIT_PENDING = 5


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DivergenceError as exc:
            click.echo(f"divergence: {exc}", err=True)
            sys.exit(EXIT_DIVERGENCE)
        except TargetError as exc:
            click.echo(f"target failure: {exc}", err=True)
            sys.exit(EXIT_SERVICE)
        except PendingVerdictError as exc:
            click.echo(f"pending verdicts: {exc}", err=True)
            sys.exit(EXIT_PENDING)
        except VlmAttackError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


@click.group()
def main():
    """Transferable adversarial attacks on vision-language systems."""


@main.command("attack")
@click.option("--config", "-c", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override data.seed")
@click.option("--rng-seed", type=int, default=None, help="override attack.optimizer.rng_seed")
@click.option("--iterations", type=int, default=None, help="override attack.budget.iterations")
@click.option("--n", type=int, default=None, help="override data.n")
@click.option("--output", type=click.Path(), default=None, help="override output.directory")
@handles_errors
def cmd_attack(config_path, seed, rng_seed, iterations, n, output):
    """Craft adversarial images per the config; write PNGs plus sidecars."""
    cfg = load_run_config(
        config_path,
        overrides={
            "seed": seed,
            "rng_seed": rng_seed,
            "iterations": iterations,
            "n": n,
            "output": output,
        },
        require=("attack", "data", "output", "registry"),
    )
    spec = cfg.objective_spec
    ensemble = cfg.registry.load_ensemble(spec["surrogates"])
    images = harness.load_dataset(
        cfg.resolve(cfg.data["dataset"]), cfg.data["n"], cfg.data["seed"]
    )

    nat_dir = cfg.output_dir / "natural"
    adv_dir = cfg.output_dir / "adversarial"
    shared_target = None
    if spec["kind"] == "targeted_caption" and spec.get("target_text"):
        shared_target = objectives.TargetSentence.build(
            spec["target_text"],
            spec.get("target_prompt", harness.DEFAULT_PROMPT),
            ensemble,
        )

    for image in images:
        objective = _build_objective(spec, ensemble, image, shared_target)
        result = engine.run_attack(image, objective, cfg.budget, cfg.optimizer)
        result = engine.quantize_and_verify(result)
        save_png(image, nat_dir / f"{image.id}.png")
        png_path, sidecar_path = engine.export_result(result, adv_dir)
        click.echo(
            f"{image.id}: final={result.loss_trace[-1]:.6g} "
            f"quantized_ok={result.quantized_ok} -> {png_path}"
        )
    click.echo(f"wrote {len(images)} adversarial image(s) to {adv_dir}")


def _build_objective(spec, ensemble, image, shared_target):
    kind = spec["kind"]
    weights = spec.get("weights")
    if kind == "targeted_caption":
        per_image = (spec.get("target_texts") or {}).get(image.id)
        target = shared_target
        if per_image:
            target = objectives.TargetSentence.build(
                per_image, spec.get("target_prompt", harness.DEFAULT_PROMPT), ensemble
            )
        if target is None:
            raise ConfigError(
                f"attack.objective: no target sentence for image {image.id!r}"
            )
        return objectives.make_objective(kind, ensemble, target=target, weights=weights)
    return objectives.make_objective(kind, ensemble, anchor=image, weights=weights)


@main.command("evaluate")
@click.option("--config", "-c", "config_path", required=True, type=click.Path())
@click.option("--store", type=click.Path(), default=None, help="override evaluation.store")
@handles_errors
def cmd_evaluate(config_path, store):
    """Query configured targets over image sets; append evaluation records."""
    cfg = load_run_config(config_path, overrides={"store": store}, require=("evaluation",))
    ev = cfg.evaluation
    store_path = cfg.resolve(ev.get("store", "records.jsonl"))
    prompts = ev.get("prompts") or [harness.DEFAULT_PROMPT]
    clients = [targets.build_target(t) for t in ev.get("targets", [])]
    if not clients:
        raise ConfigError("evaluation.targets: at least one target is required")
    runs = ev.get("runs") or []
    if not runs:
        raise ConfigError("evaluation.runs: at least one image run is required")
    phrase_lists = ev.get("rejection_phrases") or {}
    limiter = targets.RateLimiter(ev.get("rate_limit_interval", 0.0))

    records = []
    for run in runs:
        images_dir = cfg.resolve(run["images"])
        files = sorted(Path(images_dir).rglob("*.png"))
        if not files:
            raise ConfigError(f"evaluation.runs: no PNG images under {images_dir}")
        for client in clients:
            for path in files:
                image_id = path.relative_to(images_dir).with_suffix("").as_posix()
                for prompt in prompts:
                    limiter.wait()
                    text, retries = targets.query_target(
                        client,
                        path,
                        prompt,
                        max_retries=int(ev.get("max_retries", 3)),
                        backoff_base=float(ev.get("backoff_base", 0.5)),
                    )
                    records.append(
                        harness.new_record(
                            image_id=image_id,
                            variant=run["variant"],
                            condition=run["condition"],
                            target_id=client.target_id,
                            prompt=prompt,
                            response_text=text,
                            auto_rejected=harness.detect_rejection(
                                text, client.target_id, phrase_lists
                            ),
                            retries=retries,
                            provenance={"config_hash": cfg.config_hash()},
                        )
                    )
    harness.append_records(store_path, records)
    click.echo(f"appended {len(records)} record(s) to {store_path}")


@main.command("report")
@click.argument("store", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="directory for table/CSV/JSON and figures")
@click.option("--sidecars", type=click.Path(), default=None,
              help="attack output dir; adds loss-trace figures")
@handles_errors
def cmd_report(store, out, sidecars):
    """Render success/rejection tables from a record store."""
    records = harness.read_records(store)
    metrics = harness.compute_metrics(records)
    click.echo(report.render_text_table(metrics), nl=False)
    if out:
        sidecar_paths = sorted(Path(sidecars).glob("*.json")) if sidecars else None
        paths = report.write_report_files(metrics, out, sidecar_paths)
        click.echo(f"report files in {out}: {', '.join(sorted(paths))}")


@main.command("review-export")
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--natural", "natural_dir", required=True, type=click.Path(exists=True))
@click.option("--adversarial", "adversarial_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--variant", default=harness.ADVERSARIAL,
              type=click.Choice([harness.ADVERSARIAL, harness.NATURAL]))
@handles_errors
def cmd_review_export(store, natural_dir, adversarial_dir, out, variant):
    """Export the adjudication manifest for the review UI."""
    records = [r for r in harness.read_records(store) if r.variant == variant]
    harness.export_review_manifest(records, natural_dir, adversarial_dir, out)
    click.echo(f"exported {len(records)} record(s) to {out}")


@main.command("review-import")
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--override", is_flag=True, default=False,
              help="allow changing terminal verdicts")
@handles_errors
def cmd_review_import(store, manifest, override):
    """Apply adjudicated verdicts from a review manifest to the store."""
    records = harness.read_records(store)
    updated = harness.import_verdicts(manifest, records, override=override)
    changed = sum(1 for a, b in zip(records, updated) if a != b)
    harness.write_records(store, updated)
    click.echo(f"updated {changed} record(s) in {store}")


@main.command("make-toy-data")
@click.argument("out_dir", type=click.Path())
@click.option("--n", default=4, help="number of images")
@click.option("--size", default=16, help="square image size in pixels")
@click.option("--seed", default=0, help="sampling seed")
@handles_errors
def cmd_make_toy_data(out_dir, n, size, seed):
    """Write seeded toy PNG images for offline demo runs."""
    import numpy as np

    out = Path(out_dir)
    for i in range(n):
        rng = np.random.default_rng(seed * 10_000 + i)
        pixels = np.round(rng.random((size, size, 3)) * 255) / 255
        save_png(Image(pixels, id=f"toy{i:03d}"), out / f"toy{i:03d}.png")
    click.echo(f"wrote {n} toy image(s) to {out}")


@main.command("schema")
def cmd_schema():
    """Print the JSON schema of the run configuration file."""
    from .config import _schema

    click.echo(json.dumps(_schema(), indent=2))


if __name__ == "__main__":
    main()
