"""Command line interface.

Subcommands: synth, segment, extract, cluster, evaluate, map, run.
Any flag of a subcommand may also come from a flat key=value config file
(--config); explicit command-line flags win.

Exit codes: 0 success, 1 usage error, 2 input error, 3 internal
invariant violation.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource
from PIL import Image

from fieldclust import pipeline
from fieldclust.evaluation import dscore, labeled_from_assignment
from fieldclust.features import FeatureSetSpec, build_feature_matrix, extract_hcf
from fieldclust.fieldmap import FieldMap, MapEntry, PALETTE_CYCLE, render_map
from fieldclust.io import (
    InputError,
    read_assignment_file,
    read_label_file,
    read_pose_file,
    write_assignment_file,
    write_feature_file,
    write_label_file,
    write_pose_file,
    write_region_file,
    write_report,
)
from fieldclust.pipeline import ALGORITHMS, RunConfig
from fieldclust.segmentation import (
    PixelModel,
    region_from_mask,
    segment,
    train_pixel_model,
)
from fieldclust.synthesis import (
    ClassSpec,
    SynthSpec,
    generate,
    generate_field_images,
    table_field_spec,
    three_blob_spec,
)
from fieldclust import plots


@click.group()
def cli():
    """Unsupervised plant clustering toolkit."""


def _merge_config_file(ctx: click.Context, values: dict) -> dict:
    """Fill parameters from a key=value file unless set on the command
    line."""
    cfg = values.pop("config", None)
    if not cfg:
        return values
    try:
        text = Path(cfg).read_text()
    except OSError as exc:
        raise InputError(f"{cfg}: {exc.strerror}") from None
    params = {p.name: p for p in ctx.command.params}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{cfg}:{line_no}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        name = key.replace("-", "_")
        if name not in params or name == "config":
            raise InputError(f"{cfg}:{line_no}: unknown option {key!r}")
        if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE:
            continue
        param = params[name]
        if param.multiple:
            values[name] = tuple(
                param.type.convert(v.strip(), param, ctx)
                for v in raw.split(";") if v.strip())
        else:
            values[name] = param.type.convert(raw, param, ctx)
    return values


def _load_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_mask(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) > 0
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from None


def _save_gray(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(arr.astype(np.uint8)).save(path)


def _parse_views(text: str) -> int | tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return (int(lo), int(hi))
        return int(text)
    except ValueError:
        raise click.BadParameter(f"bad views spec {text!r}, want N or LO:HI")


def _parse_class_spec(text: str) -> ClassSpec:
    try:
        mean, stddev, n_plants = text.split(":")
        return ClassSpec(tuple(float(v) for v in mean.split(",")),
                         float(stddev), int(n_plants))
    except ValueError:
        raise click.BadParameter(
            f"bad class spec {text!r}, want m1,m2,..:stddev:n_plants")


@cli.command()
@click.option("--preset", type=click.Choice(["blobs3", "field4"]),
              help="Built-in dataset shape.")
@click.option("--class-spec", "class_specs", multiple=True,
              help="Class as m1,m2,..:stddev:n_plants (repeatable).")
@click.option("--views", default=None, help="Views per plant: N or LO:HI.")
@click.option("--jitter", type=float, default=None,
              help="Per-view feature jitter stddev.")
@click.option("--seed", type=int, default=0)
@click.option("--images", type=int, default=0,
              help="Also render this many field images with masks.")
@click.option("--image-size", default="320x240")
@click.option("--noise-sigma", type=float, default=8.0)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", type=click.Path(), default=None,
              help="key=value file supplying any of the above.")
@click.pass_context
def synth(ctx, **values):
    """Generate a seeded synthetic dataset (features/poses/labels and
    optionally field images)."""
    v = _merge_config_file(ctx, values)
    if v["preset"] == "blobs3":
        spec = three_blob_spec(v["seed"])
    elif v["preset"] == "field4":
        spec = table_field_spec(v["seed"])
    elif v["class_specs"]:
        spec = SynthSpec(classes=[_parse_class_spec(c) for c in v["class_specs"]],
                         seed=v["seed"])
    else:
        raise click.UsageError("need --preset or at least one --class-spec")
    if v["views"] is not None:
        spec.views_per_plant = _parse_views(v["views"])
    if v["jitter"] is not None:
        spec.view_jitter = v["jitter"]
    spec.noise_sigma = v["noise_sigma"]
    try:
        w, h = (int(x) for x in v["image_size"].split("x"))
        spec.image_size = (w, h)
    except ValueError:
        raise click.BadParameter(f"bad image size {v['image_size']!r}")

    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    samples, labels = generate(spec)
    write_feature_file(out / "features.csv", samples)
    write_pose_file(out / "poses.csv", samples)
    write_label_file(out / "labels.csv", labels, [s.id for s in samples])
    n_img = v["images"]
    if n_img > 0:
        spec.n_images = n_img
        images, masks = generate_field_images(spec)
        for i, (img, msk) in enumerate(zip(images, masks)):
            Image.fromarray(img).save(out / f"field_{i:02d}.png")
            _save_gray(out / f"mask_{i:02d}.png", msk)
    click.echo(f"wrote {len(samples)} samples "
               f"({sum(c.n_plants for c in spec.classes)} plants) to {out}")


@cli.command(name="segment")
@click.option("--train-image", "train_images", multiple=True, type=click.Path())
@click.option("--train-mask", "train_masks", multiple=True, type=click.Path())
@click.option("--model", "model_path", type=click.Path(),
              help="Load a trained pixel model (JSON).")
@click.option("--model-out", type=click.Path(),
              help="Where to save the trained model.")
@click.option("--image", "images", multiple=True, type=click.Path(),
              help="Images to segment.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False))
@click.option("--n-erode", type=int, default=2, show_default=True)
@click.option("--n-dilate", type=int, default=2, show_default=True)
@click.option("--min-area", type=int, default=400, show_default=True)
@click.option("--merge-dist", type=float, default=20.0, show_default=True)
@click.option("--threshold-grid", type=int, default=200, show_default=True)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def segment_cmd(ctx, **values):
    """Train the colour-space pixel model and/or segment images into
    plant regions."""
    v = _merge_config_file(ctx, values)
    if v["train_images"]:
        if len(v["train_images"]) != len(v["train_masks"]):
            raise click.UsageError("--train-image and --train-mask must pair up")
        imgs = [_load_image(p) for p in v["train_images"]]
        msks = [_load_mask(p) for p in v["train_masks"]]
        try:
            model = train_pixel_model(imgs, msks, threshold_grid=v["threshold_grid"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if v["model_out"]:
            Path(v["model_out"]).write_text(json.dumps({
                "mean": model.mean.tolist(),
                "covariance": model.covariance.tolist(),
                "log_threshold": model.log_threshold,
            }, sort_keys=True, indent=1) + "\n")
            click.echo(f"model saved to {v['model_out']}")
    elif v["model_path"]:
        try:
            raw = json.loads(Path(v["model_path"]).read_text())
            model = PixelModel(mean=np.array(raw["mean"]),
                               covariance=np.array(raw["covariance"]),
                               log_threshold=float(raw["log_threshold"]))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"{v['model_path']}: {exc}") from None
    else:
        raise click.UsageError("need --train-image/--train-mask pairs or --model")

    if not v["images"]:
        return
    if not v["out_dir"]:
        raise click.UsageError("--out is required when segmenting images")
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for path in v["images"]:
        image_id = Path(path).stem
        regions = segment(_load_image(path), model,
                          morph=(v["n_erode"], v["n_dilate"]),
                          min_area=v["min_area"], merge_dist=v["merge_dist"])
        for rid, region in enumerate(regions):
            records.append((image_id, rid, *region.bbox, region.area_px))
            _save_gray(out / f"{image_id}_region{rid:02d}.png",
                       region.mask.astype(np.uint8) * 255)
        click.echo(f"{path}: {len(regions)} region(s)")
    write_region_file(out / "regions.csv", records)


@cli.command()
@click.option("--manifest", required=True, type=click.Path(),
              help="CSV: sample_id,plant_id[,label],image,mask.")
@click.option("--set", "feature_set",
              type=click.Choice(["hcf", "hcf-scale-robust"]), default="hcf",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def extract(ctx, **values):
    """Extract hand-crafted features for masked plant regions listed in
    a manifest."""
    v = _merge_config_file(ctx, values)
    manifest = Path(v["manifest"])
    try:
        with open(manifest, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{manifest}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{manifest}:1: empty file")
    header = rows[0]
    if header[:2] != ["sample_id", "plant_id"] or header[-2:] != ["image", "mask"]:
        raise InputError(
            f"{manifest}:1: expected sample_id,plant_id[,label],image,mask")
    has_label = "label" in header
    base = manifest.parent
    ids, plant, labels, raw = [], {}, {}, {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            sid = int(row[0])
            plant[sid] = int(row[1])
            if has_label:
                labels[sid] = int(row[2])
            image = _load_image(base / row[-2])
            mask = _load_mask(base / row[-1])
        except ValueError as exc:
            raise InputError(f"{manifest}:{line_no}: {exc}") from None
        try:
            region = region_from_mask(mask)
            raw[sid] = extract_hcf(region, image).as_array()
        except ValueError as exc:
            raise InputError(f"{manifest}:{line_no}: {exc}") from None
        ids.append(sid)
    spec = FeatureSetSpec(kind=v["feature_set"], vectors=raw)
    matrix = build_feature_matrix(ids, spec)
    from fieldclust.clustering import Sample
    samples = [Sample(id=sid, plant_group=plant[sid], features=matrix[sid],
                      label=labels.get(sid)) for sid in ids]
    write_feature_file(v["out_path"], samples, with_labels=has_label)
    click.echo(f"wrote {len(ids)} x {len(next(iter(matrix.values())))} "
               f"feature matrix to {v['out_path']}")


def _algo_options(fn):
    opts = [
        click.option("--features", "feature_files", multiple=True, required=True,
                     type=click.Path(), help="Feature file(s); several concatenate."),
        click.option("--algorithm", type=click.Choice(ALGORITHMS), required=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--lambda", "lam", type=float, default=1.0, show_default=True,
                     help="BIC penalty weight."),
        click.option("--init-mode",
                     type=click.Choice(["per-image", "per-plant-group", "fixed-count"]),
                     default=None, help="Override the algorithm's initialization."),
        click.option("--init-count", type=int, default=None,
                     help="Cluster count for fixed-count init."),
        click.option("--max-inner-iters", type=int, default=100, show_default=True),
        click.option("--alpha", type=float, default=1.0, show_default=True,
                     help="DPGMM aggregation parameter."),
        click.option("--sweeps", type=int, default=100, show_default=True),
        click.option("--init-clusters", type=int, default=300, show_default=True,
                     help="DPGMM initial cluster count."),
        click.option("--damping", type=float, default=0.5, show_default=True),
        click.option("--ap-max-iters", type=int, default=200, show_default=True),
        click.option("--convergence-window", type=int, default=15, show_default=True),
        click.option("--preference", default="median", show_default=True,
                     help="AP preference: number or 'median'."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _run_config(v: dict, out_dir, labels_file=None, poses_file=None) -> RunConfig:
    pref = v["preference"]
    if pref != "median":
        try:
            pref = float(pref)
        except ValueError:
            raise click.BadParameter(f"bad preference {pref!r}")
    try:
        return RunConfig(
            algorithm=v["algorithm"],
            feature_files=[Path(p) for p in v["feature_files"]],
            out_dir=Path(out_dir),
            labels_file=Path(labels_file) if labels_file else None,
            poses_file=Path(poses_file) if poses_file else None,
            seed=v["seed"], lam=v["lam"],
            max_inner_iters=v["max_inner_iters"],
            init_mode=v["init_mode"], init_count=v["init_count"],
            alpha=v["alpha"], sweeps=v["sweeps"],
            init_clusters=v["init_clusters"], damping=v["damping"],
            ap_max_iters=v["ap_max_iters"],
            convergence_window=v["convergence_window"], preference=pref,
            map_scale=v.get("map_scale", 40.0))
    except ValueError as exc:
        raise click.UsageError(str(exc))


@cli.command()
@_algo_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def cluster(ctx, **values):
    """Cluster a feature file and write the assignment (no evaluation)."""
    v = _merge_config_file(ctx, values)
    config = _run_config(v, v["out_dir"])
    samples = pipeline.load_samples(config)
    try:
        partition = pipeline.run_algorithm(samples, config)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    partition.validate()
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_assignment_file(out / "assignment.csv", partition.assignment)
    write_report(out / "report.txt",
                 pipeline.build_report_data(config, partition, None, None))
    plots.save_cluster_sizes(partition, out / "fig_cluster_sizes.png")
    click.echo(f"{len(partition.clusters)} clusters -> {out / 'assignment.csv'}")


@cli.command()
@click.option("--assignment", "assignment_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def evaluate(ctx, **values):
    """Score an assignment file against ground-truth labels."""
    v = _merge_config_file(ctx, values)
    assignment = read_assignment_file(v["assignment_path"])
    labels = read_label_file(v["labels_path"])
    missing = sorted(set(assignment) - set(labels))
    if missing:
        raise InputError(f"labels missing for samples: {missing[:10]}")
    report = dscore(labeled_from_assignment(assignment, labels))
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    data = {
        "evaluation": {
            "dscore": report.dscore,
            "n_clusters": report.n_clusters,
            "per_class": {str(c): report.per_class_scores[c]
                          for c in sorted(report.per_class_scores)},
            "pairwise": {
                "precision": report.pairwise.precision,
                "recall": report.pairwise.recall,
                "accuracy": report.pairwise.accuracy,
                "f1": report.pairwise.f1,
            },
        }
    }
    write_report(out / "report.txt", data)
    plots.save_class_scores(report, out / "fig_class_scores.png")
    click.echo(f"DScore {report.dscore:.4f} over {report.n_clusters} clusters")


@cli.command(name="map")
@click.option("--assignment", "assignment_path", required=True, type=click.Path())
@click.option("--poses", "poses_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--scale", type=float, default=40.0, show_default=True,
              help="Pixels per metre.")
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def map_cmd(ctx, **values):
    """Render an assignment over world poses as an SVG field map."""
    v = _merge_config_file(ctx, values)
    assignment = read_assignment_file(v["assignment_path"])
    poses = read_pose_file(v["poses_path"])
    entries = [MapEntry(sid, poses[sid], cid)
               for sid, cid in sorted(assignment.items()) if sid in poses]
    if not entries:
        raise InputError("no posed samples to draw")
    cids = sorted(set(assignment.values()))
    palette = {cid: PALETTE_CYCLE[i % len(PALETTE_CYCLE)]
               for i, cid in enumerate(cids)}
    sizes = {cid: sum(1 for c in assignment.values() if c == cid) for cid in cids}
    fmap = FieldMap(entries=entries, palette=palette, scale=v["scale"],
                    cluster_sizes=sizes)
    Path(v["out_path"]).write_text(render_map(fmap))
    click.echo(f"map with {len(entries)} markers -> {v['out_path']}")


@cli.command()
@_algo_options
@click.option("--labels", "labels_path", type=click.Path(), default=None)
@click.option("--poses", "poses_path", type=click.Path(), default=None)
@click.option("--map-scale", type=float, default=40.0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def run(ctx, **values):
    """Full pipeline: cluster, evaluate (with labels), map (with poses)."""
    v = _merge_config_file(ctx, values)
    config = _run_config(v, v["out_dir"], labels_file=v["labels_path"],
                         poses_file=v["poses_path"])
    try:
        result = pipeline.run(config)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    msg = f"{len(result.partition.clusters)} clusters"
    if result.report is not None:
        msg += f", DScore {result.report.dscore:.4f}"
    click.echo(msg + f" -> {config.out_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except InputError as exc:
        click.echo(f"input error: {exc}", err=True)
        return 2
    except AssertionError as exc:
        click.echo(f"internal invariant violation: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
