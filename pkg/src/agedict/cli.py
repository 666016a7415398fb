"""Command-line entry point: ``agedict {train,synthesize,eval,gen-synthetic}``.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .adlm import load_model, save_model
from .bilevel import TraceRow, bilevel_train, solve_batch
from .coupled import coupled_train, group_columns
from .errors import AgeDictError, InputError
from .manifest import EmptyManifestError, load_batches, load_manifest
from .metrics import model_recovery, transfer_error
from .model import HyperParams, ModelBundle
from .pca import build_projection
from .ppm import ImageShape, load_image, save_image, shape_for
from .synthesis import synthesize_next, synthesize_sequence
from .synthetic import PlantedTruth, SyntheticSpec, generate_synthetic, held_out_pairs

log = logging.getLogger("agedict")

TRACE_HEADER = ["epoch", "group", "objective", "grad_norm"]
REPORT_HEADER = ["group", "metric", "value"]
HELD_OUT_SEED_OFFSET = 1000
HELD_OUT_PAIRS = 100


class UsageError(Exception):
    pass


def _read_spec(path) -> SyntheticSpec:
    with open(path, encoding="utf-8") as fh:
        return SyntheticSpec.from_json(fh.read())


def train_model(batches, params: HyperParams, seed: int, skip_bilevel: bool = False,
                coupled_iters: int = 5000, workers: int = 1, provenance: Optional[dict] = None):
    """PCA per group, coupled initialization, then bi-level refinement.

    Returns (model, trace rows).  Coupled iterations are reported with
    group 0 and a NaN gradient norm.
    """
    projections = [build_projection(group_columns(batches, g, params.G), params.m, g)
                   for g in range(1, params.G + 1)]
    state = coupled_train(batches, projections, params, seed=seed, max_iter=coupled_iters)
    rows = [TraceRow(i, 0, J, float("nan")) for i, J in enumerate(state.objective_trace)]
    meta = dict(provenance or {})
    meta["coupled_iterations"] = len(state.objective_trace) - 1
    if skip_bilevel:
        meta.update(seed=seed, stage="coupled")
        model = ModelBundle(params, projections, state.dictionaries, json.dumps(meta, sort_keys=True))
        return model, rows
    model = bilevel_train(batches, projections, params, seed, state, workers=workers,
                          on_epoch=rows.append, provenance=meta)
    return model, rows


def write_trace(path, rows: List[TraceRow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow([r.epoch, r.group, repr(float(r.objective)), repr(float(r.grad_norm))])


def cmd_train(args) -> int:
    if args.manifest is None and args.synthetic is None:
        raise UsageError("one of --manifest or --synthetic is required")
    if args.manifest and args.synthetic:
        raise UsageError("--manifest and --synthetic are mutually exclusive")
    meta = {"version": __version__}
    if args.synthetic:
        spec = _read_spec(args.synthetic)
        batches, _ = generate_synthetic(spec)
        G = args.groups or spec.G
        if G != spec.G:
            raise UsageError(f"--groups {G} disagrees with the synthetic spec (G={spec.G})")
        meta["synthetic"] = json.loads(spec.to_json())
    else:
        manifest = load_manifest(args.manifest, args.groups)
        G = args.groups or manifest.G
        batches, shape = load_batches(manifest, args.pixel_offset)
        meta["image_shape"] = list(shape)
        meta["pixel_offset"] = args.pixel_offset
    f = batches[0].f
    m = args.pca_dim or min(f, min(b.n for b in batches))
    params = HyperParams(
        lambda1=args.lambda1, lambda2=args.lambda2, gamma=args.gamma, k=args.atoms, m=m, G=G,
        eta0=args.eta0, eta_reset=args.eta_reset, max_epochs=args.max_epochs,
    )
    model, rows = train_model(batches, params, args.seed, skip_bilevel=args.skip_bilevel,
                              coupled_iters=args.coupled_iters, workers=args.threads, provenance=meta)
    save_model(model, args.out)
    if args.trace:
        write_trace(args.trace, rows)
    log.info("wrote %s", args.out)
    return 0


def _image_meta(model: ModelBundle):
    try:
        meta = json.loads(model.provenance) if model.provenance else {}
    except json.JSONDecodeError:
        meta = {}
    return meta if isinstance(meta, dict) else {}


def cmd_synthesize(args) -> int:
    if args.to_group <= args.from_group:
        raise UsageError("--to-group must be greater than --from-group")
    model = load_model(args.model)
    if not (1 <= args.from_group and args.to_group <= model.G):
        raise UsageError(f"groups must lie in 1..{model.G}")
    x, shape = load_image(args.input)
    offset = args.pixel_offset
    if offset is None:
        offset = float(_image_meta(model).get("pixel_offset", 0.0))
    if shape.size != model.f:
        raise InputError(f"image has {shape.size} values, model expects {model.f}")
    outs = synthesize_sequence(x - offset, model, args.from_group, args.to_group)
    os.makedirs(args.out_dir, exist_ok=True)
    for g, y in zip(range(args.from_group + 1, args.to_group + 1), outs):
        save_image(y + offset, shape, os.path.join(args.out_dir, f"step_{g}.ppm"))
    return 0


def _transfer_stats(model: ModelBundle, batches):
    rows = []
    for b in batches:
        errs = [transfer_error(synthesize_next(b.younger[:, i], model, b.group), b.older[:, i])
                for i in range(b.n)]
        rows.append((b.group, "transfer_median", float(np.median(errs))))
        rows.append((b.group, "transfer_p90", float(np.percentile(errs, 90))))
    return rows


def cmd_eval(args) -> int:
    if (args.truth is None) == (args.manifest is None):
        raise UsageError("exactly one of --truth or --manifest is required")
    model = load_model(args.model)
    rows = []
    if args.truth:
        truth = load_model(args.truth)
        for g, score in enumerate(model_recovery(model, truth), start=1):
            rows.append((g, "atom_recovery", score))
        if args.synthetic:
            spec = _read_spec(args.synthetic)
            planted = PlantedTruth(truth, [], [])
            held = held_out_pairs(planted, spec, args.held_out, spec.seed + HELD_OUT_SEED_OFFSET)
            rows.extend(_transfer_stats(model, held))
    else:
        try:
            manifest = load_manifest(args.manifest, model.G)
        except EmptyManifestError as exc:
            raise UsageError(str(exc)) from None
        if not any(manifest.pairs().values()):
            raise UsageError("manifest has no usable pairs")
        batches, _ = load_batches(manifest, args.pixel_offset)
        if batches[0].f != model.f:
            raise InputError(f"manifest images have {batches[0].f} values, model expects {model.f}")
        rows.extend(_transfer_stats(model, batches))
    out = open(args.report, "w", newline="", encoding="utf-8") if args.report else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for g, metric, value in rows:
            w.writerow([g, metric, repr(float(value))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_gen_synthetic(args) -> int:
    spec = _read_spec(args.spec)
    batches, truth = generate_synthetic(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    img_dir = os.path.join(args.out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    shape = shape_for(spec.f)
    rows = []
    for b in batches:
        for i, person in enumerate(b.person_ids):
            for g, col in ((b.group, b.younger[:, i]), (b.group + 1, b.older[:, i])):
                name = f"{person}_g{g}.ppm"
                save_image(col + spec.pixel_offset, shape, os.path.join(img_dir, name))
                rows.append((person, g, f"images/{name}"))
    with open(os.path.join(args.out_dir, "manifest.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "group", "path"])
        w.writerows(rows)
    save_model(truth.model, os.path.join(args.out_dir, "TRUTH.adlm"))
    with open(os.path.join(args.out_dir, "spec.json"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_json() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agedict", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="learn aging dictionaries")
    t.add_argument("--manifest")
    t.add_argument("--synthetic", metavar="SPEC.json")
    t.add_argument("--groups", type=int)
    t.add_argument("--atoms", type=int, default=80)
    t.add_argument("--pca-dim", type=int)
    t.add_argument("--lambda1", type=float, default=0.01)
    t.add_argument("--lambda2", type=float, default=0.001)
    t.add_argument("--gamma", type=float, default=0.1)
    t.add_argument("--eta0", type=float, default=HyperParams.eta0)
    t.add_argument("--eta-reset", choices=["global", "per-group"], default=HyperParams.eta_reset)
    t.add_argument("--max-epochs", type=int, default=HyperParams.max_epochs)
    t.add_argument("--coupled-iters", type=int, default=5000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, metavar="MODEL.adlm")
    t.add_argument("--trace", metavar="TRACE.csv")
    t.add_argument("--skip-bilevel", action="store_true")
    t.add_argument("--pixel-offset", type=float, default=0.0)
    t.add_argument("--threads", type=int, default=1)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("synthesize", help="render an aging sequence")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True, metavar="FACE.ppm")
    s.add_argument("--from-group", type=int, required=True)
    s.add_argument("--to-group", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pixel-offset", type=float)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_synthesize)

    e = sub.add_parser("eval", help="transfer error and atom recovery report")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", metavar="TRUTH.adlm")
    e.add_argument("--manifest")
    e.add_argument("--synthetic", metavar="SPEC.json",
                   help="with --truth: also score held-out pairs drawn from the planted model")
    e.add_argument("--held-out", type=int, default=HELD_OUT_PAIRS)
    e.add_argument("--report", metavar="OUT.csv")
    e.add_argument("--pixel-offset", type=float, default=0.0)
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-synthetic", help="write a planted dataset as images + manifest")
    g.add_argument("--spec", required=True, metavar="SPEC.json")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--threads", type=int, default=1)
    g.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (AgeDictError, OSError) as exc:
        print(f"agedict: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
