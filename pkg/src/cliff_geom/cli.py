"""Command line: ``cliff-geom <command> [options]``.

Exit codes: 0 success, 1 file-system failure, 2 usage error, 3 invalid
input data. Every command writes into ``--out`` and leaves a
``manifest.json`` there; with ``--json`` stdout carries only a JSON summary.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .body_model import BodyParams, forward
from .camera import BehindCameraError
from .estimator.annotate import (
    ANNOTATE_CONFIG, FitPrior, PerturbedGroundTruth, annotate_dataset, with_pseudo_gt,
)
from .estimator.experiments import (
    FOCAL_FACTORS, LIFTER_CONFIGS, METRICS, ablate_fitter, ablate_lifter, focal_sweep,
    held_out_set, yaw_error,
)
from .estimator.fitting import FitConfig, fit_sample
from .estimator.lifter import train_lifter
from .io import (
    MANIFEST, DatasetError, RunManifest, emit_plot, load_dataset, read_json, read_manifest,
    save_dataset, save_scene, write_csv, write_json, parallel_map,
)
from .losses import LossWeights
from .metrics import mpjpe, pa_mpjpe, pve
from .smoothing import OneEuroConfig, smooth_sequence
from .synthetic import (
    SceneConfig, add_noise, gen_ambiguity_pair, gen_dataset, gen_sequence, perturb_params, scene_seed,
)

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_INVALID = 0, 1, 2, 3
NOT_CONFIG = ("out", "json", "func", "verbose")

log = logging.getLogger("cliff_geom")


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _prepare_out(out: Path) -> None:
    """Create ``out``; clear what an earlier run recorded there, refuse anything else."""
    out.mkdir(parents=True, exist_ok=True)
    if (out / MANIFEST).is_file():
        for rel in read_manifest(out).artifacts:
            (out / rel).unlink(missing_ok=True)
            # drop subdirectories the artifacts leave empty
            parent = (out / rel).parent
            while parent != out and parent.is_dir() and not any(parent.iterdir()):
                parent.rmdir()
                parent = parent.parent
        (out / MANIFEST).unlink()
    leftovers = [p.name for p in out.iterdir()]
    if leftovers:
        raise FileExistsError(f"{out} is not empty and holds no manifest: {sorted(leftovers)[:3]}")


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in NOT_CONFIG}
    return json.loads(json.dumps(cfg, default=str))


def _finish(args, summary: dict) -> int:
    RunManifest(args.command, _config(args), getattr(args, "seed", None)).write(args.out)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return EXIT_OK


def _scene_config(args) -> SceneConfig:
    return SceneConfig(n_persons=args.n_persons, width=args.width, height=args.height,
                       focal=args.focal)


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    scenes = gen_dataset(args.seed, args.n, _scene_config(args))
    save_dataset(scenes, args.out)
    return _finish(args, {"scenes": len(scenes)})


def cmd_gen_ambiguity(args) -> int:
    rng = np.random.default_rng(args.seed)
    gammas = rng.uniform(args.gamma_min, args.gamma_max, size=args.n)
    out = Path(args.out)
    for i, g in enumerate(gammas):
        pair = gen_ambiguity_pair(scene_seed(args.seed, i), math.radians(g))
        save_scene(pair.scene_center, out / f"pair_{i:05d}_a_center.json")
        save_scene(pair.scene_offset, out / f"pair_{i:05d}_b_offset.json")
    write_csv(out / "gammas.csv", ["pair", "gamma_x_deg"], enumerate(gammas.tolist()))
    return _finish(args, {"pairs": args.n, "mean_gamma_deg": float(gammas.mean())})


def _fit_config(args) -> FitConfig:
    return FitConfig(loss_frame=args.frame, prior_weight=args.prior_weight,
                     prior_root=not args.free_root, max_iters=args.max_iters,
                     init="prior" if args.prior != "none" else "zero-pose")


def _fit_job(job):
    scene, index, person, cfg, prior_kind, angle, seed, with_3d = job
    prior = None
    if prior_kind == "perturbed":
        rng = np.random.default_rng([seed, index, person])
        prior = perturb_params(scene.persons[person].params, angle, rng)
    report = fit_sample(scene.observation(person, with_3d=with_3d), cfg, prior=prior)
    return {"scene": index, "person": person, **report.to_dict()}


def cmd_fit(args) -> int:
    if args.prior == "perturbed" and args.seed is None:
        raise ValueError("--prior perturbed needs --seed")
    scenes = load_dataset(args.dataset)
    cfg = _fit_config(args)
    jobs = [(s, i, p, cfg, args.prior, args.prior_angle, args.seed, args.with_3d)
            for i, s in enumerate(scenes) for p in range(len(s.persons))]
    fits = parallel_map(_fit_job, jobs)
    write_json(Path(args.out) / "fits.json", {"fits": fits})
    return _finish(args, {"fits": len(fits),
                          "converged": sum(f["converged"] for f in fits),
                          "mean_loss": float(np.mean([f["loss_trace"][-1] for f in fits]))})


def cmd_train_lifter(args) -> int:
    scenes = load_dataset(args.dataset)
    obs = [o for s in scenes for o in s.observations()]
    cfg = FitConfig(loss_frame=args.frame, use_bbox_input=args.bbox_input,
                    weights=LossWeights(kp2d=args.kp2d_weight))
    report = train_lifter(obs, cfg, epochs=args.epochs, seed=args.seed, lr=args.lr,
                          batch_size=args.batch_size)
    out = Path(args.out)
    write_json(out / "model.json", report.model.to_dict())
    emit_plot({"train": list(enumerate(report.epoch_loss, start=1))}, out / "training_loss",
              "epoch", "loss", "lifter training loss")
    return _finish(args, {"epochs": args.epochs, "first_loss": report.epoch_loss[0],
                          "final_loss": report.epoch_loss[-1]})


def cmd_annotate(args) -> int:
    scenes = load_dataset(args.dataset)
    if args.sigma > 0 or args.drop > 0:
        scenes = [add_noise(s, args.sigma, args.drop, [args.seed, i]) for i, s in enumerate(scenes)]
    if args.prior == "perturbed":
        provider = PerturbedGroundTruth(args.prior_angle, args.seed)
    else:
        provider = FitPrior(FitConfig(loss_frame=args.frame, prior_weight=0.0))
    cfg = replace(ANNOTATE_CONFIG, loss_frame=args.frame, prior_weight=args.prior_weight)
    result = annotate_dataset(scenes, provider, cfg)
    out = Path(args.out)
    by_scene = {}
    for a in result.annotations:
        by_scene.setdefault(a.index, []).append(a)
    annotated = [with_pseudo_gt(s, by_scene.get(i, []), provider.name) for i, s in enumerate(scenes)]
    save_dataset(annotated, out / "scenes")
    failures = [{"scene": a.index, "person": a.person, "error": a.error} for a in result.failures]
    write_json(out / "annotations.json", {"provenance": result.provenance, "failures": failures})
    return _finish(args, {"annotated": len(result.annotations) - len(failures),
                          "failed": len(failures), "prior": provider.name})


def _load_params(path: Path, source: str) -> list:
    """``BodyParams`` per person, in file order."""
    if source == "fits":
        return [BodyParams(f["pose"], f["shape"]) for f in read_json(path)["fits"]]
    out = []
    for scene in load_dataset(path):
        if source == "persons":
            out.extend(p.params for p in scene.persons)
            continue
        entries = scene.pseudo_gt or [None] * len(scene.persons)
        if any(e is None for e in entries):
            raise DatasetError("scene has a person without pseudo_gt")
        out.extend(BodyParams(e["pose"], e["shape"]) for e in entries)
    return out


def cmd_eval(args) -> int:
    pred = _load_params(Path(args.pred), args.pred_source)
    gt = _load_params(Path(args.gt), "persons")
    if len(pred) != len(gt):
        raise DatasetError(f"{len(pred)} predictions for {len(gt)} ground-truth people")
    rows = []
    for i, (p, g) in enumerate(zip(pred, gt)):
        pj, pv = forward(p)
        gj, gv = forward(g)
        rows.append([i, mpjpe(pj, gj), pa_mpjpe(pj, gj), pve(pv, gv), yaw_error(p, g)])
    header = ["index", "mpjpe_mm", "pa_mpjpe_mm", "pve_mm", "yaw_deg"]
    means = np.mean(np.asarray([r[1:] for r in rows]), axis=0).tolist()
    write_csv(Path(args.out) / "metrics.csv", header, rows + [["mean"] + means])
    return _finish(args, dict(zip(header[1:], means)))


def cmd_ablate(args) -> int:
    scenes = load_dataset(args.dataset)
    eval_scenes = load_dataset(args.eval_dataset) if args.eval_dataset else held_out_set(args.n_eval)
    res = ablate_lifter(scenes, eval_scenes, args.seeds, epochs=args.epochs)
    out = Path(args.out)
    header = ["config"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    rows = [[name] + [v for m in METRICS for v in res["table"][name][m]] for name in LIFTER_CONFIGS]
    write_csv(out / "ablation.csv", header, rows)
    seed_rows = [[name, seed] + [r[m] for m in METRICS]
                 for name, rs in res["per_seed"].items() for seed, r in zip(args.seeds, rs)]
    write_csv(out / "ablation_per_seed.csv", ["config", "seed", *METRICS], seed_rows)
    summary = {name: res["table"][name]["mpjpe"][0] for name in LIFTER_CONFIGS}
    if args.fitter_pairs > 0:
        fit = ablate_fitter(args.fitter_pairs, args.seeds)
        rows = [[mode] + [v for m in METRICS for v in fit["table"][mode][m]] for mode in ("crop", "full")]
        write_csv(out / "fitter.csv", ["mode"] + header[1:], rows)
        summary.update({f"fitter_{m}_yaw": fit["table"][m]["yaw"][0] for m in ("crop", "full")})
    return _finish(args, summary)


def cmd_focal_sweep(args) -> int:
    scenes = load_dataset(args.dataset)
    res = focal_sweep(scenes, args.factors, sigma=args.sigma, prior_noise_deg=args.prior_angle,
                      seed=args.seed)
    emit_plot({"mpjpe": list(zip(res["factors"], res["mpjpe"]))}, Path(args.out) / "focal_sweep",
              "factor", "mpjpe_mm", "MPJPE against focal length factor")
    return _finish(args, {f"{f:g}": m for f, m in zip(res["factors"], res["mpjpe"])})


def cmd_smooth(args) -> int:
    cfg = OneEuroConfig(args.min_cutoff, args.beta, args.d_cutoff, args.fps)
    out = Path(args.out)
    if args.input:
        data = read_json(args.input)
        frames = [np.asarray(f, dtype=float) for f in data["frames"]]
        gt = [np.asarray(f, dtype=float) for f in data["gt"]] if "gt" in data else None
    else:
        if args.seed is None:
            raise ValueError("synthetic sequences need --seed")
        seq = gen_sequence(args.seed, args.frames, args.fps)
        rng = np.random.default_rng([args.seed, 1])
        gt = seq.params
        frames = [perturb_params(p, args.noise_deg, rng) for p in seq.params]
    res = smooth_sequence(frames, cfg, gt)
    write_json(out / "smoothed.json", {"frames": res.smoothed.tolist()})
    summary = {k: v for k, v in res.to_dict().items() if k != "smoothed"}
    if res.accel_before is not None:
        write_csv(out / "smoothing.csv", ["stage", "accel_mm_s2", "mpjpe_mm"],
                  [["raw", res.accel_before, res.mpjpe_before],
                   ["oneeuro", res.accel_after, res.mpjpe_after]])
    return _finish(args, summary)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cliff-geom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, seed_required=False):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--json", action="store_true", help="print a JSON summary only")
        sp.add_argument("--verbose", action="store_true")
        sp.add_argument("--seed", type=int, required=seed_required, default=None)
        return sp

    sp = command("gen", cmd_gen, "generate synthetic scenes", seed_required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--n-persons", type=int, default=1)
    sp.add_argument("--width", type=int, default=1920)
    sp.add_argument("--height", type=int, default=1080)
    sp.add_argument("--focal", type=float, default=None)

    sp = command("gen-ambiguity", cmd_gen_ambiguity, "generate crop-ambiguity pairs",
                 seed_required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--gamma-min", type=float, default=5.0, help="degrees")
    sp.add_argument("--gamma-max", type=float, default=30.0, help="degrees")

    sp = command("fit", cmd_fit, "fit every person of a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--frame", choices=("crop", "full"), default="full")
    sp.add_argument("--prior", choices=("none", "perturbed"), default="none")
    sp.add_argument("--prior-angle", type=float, default=10.0, help="degrees")
    sp.add_argument("--prior-weight", type=float, default=0.1)
    sp.add_argument("--free-root", action="store_true", help="keep the prior off the root")
    sp.add_argument("--with-3d", action="store_true", help="also fit the 3D ground truth")
    sp.add_argument("--max-iters", type=int, default=200)

    sp = command("train-lifter", cmd_train_lifter, "train the keypoint lifter", seed_required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--frame", choices=("crop", "full"), default="full")
    sp.add_argument("--bbox-input", action="store_true")
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch-size", type=int, default=25)
    sp.add_argument("--kp2d-weight", type=float, default=1e-3)

    sp = command("annotate", cmd_annotate, "pseudo ground truth from 2D keypoints",
                 seed_required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--prior", choices=("perturbed", "fit"), default="perturbed")
    sp.add_argument("--prior-angle", type=float, default=10.0, help="degrees")
    sp.add_argument("--prior-weight", type=float, default=ANNOTATE_CONFIG.prior_weight)
    sp.add_argument("--frame", choices=("crop", "full"), default="full")
    sp.add_argument("--sigma", type=float, default=0.0, help="keypoint noise, pixels")
    sp.add_argument("--drop", type=float, default=0.0, help="keypoint drop probability")

    sp = command("eval", cmd_eval, "compare predicted with ground-truth bodies")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--pred-source", choices=("persons", "pseudo_gt", "fits"), default="persons")

    sp = command("ablate", cmd_ablate, "lifter (and optionally fitter) ablation")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--seeds", type=_ints, required=True)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--eval-dataset", default=None)
    sp.add_argument("--n-eval", type=int, default=100)
    sp.add_argument("--fitter-pairs", type=int, default=0)

    sp = command("focal-sweep", cmd_focal_sweep, "fit error against focal length error",
                 seed_required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--factors", type=_floats, default=list(FOCAL_FACTORS))
    sp.add_argument("--sigma", type=float, default=2.0)
    sp.add_argument("--prior-angle", type=float, default=10.0)

    sp = command("smooth", cmd_smooth, "OneEuro smoothing of a joint sequence")
    sp.add_argument("--input", default=None, help="JSON with 'frames' (and optional 'gt')")
    sp.add_argument("--frames", type=int, default=120)
    sp.add_argument("--noise-deg", type=float, default=3.0)
    sp.add_argument("--min-cutoff", type=float, default=OneEuroConfig.min_cutoff)
    sp.add_argument("--beta", type=float, default=OneEuroConfig.beta)
    sp.add_argument("--d-cutoff", type=float, default=OneEuroConfig.d_cutoff)
    sp.add_argument("--fps", type=float, default=OneEuroConfig.fps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _prepare_out(Path(args.out))
        return args.func(args)
    except OSError as e:
        print(f"cliff-geom: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError, FloatingPointError, BehindCameraError,
            np.linalg.LinAlgError) as e:
        print(f"cliff-geom: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
