"""Command-line interface: ``pitchml <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import evaluate, nmi
from .f0 import PitchTrack
from .features import FEATURE_NAMES, FeatureSet
from .ml.cluster import VarianceCollapseError
from .ml.mlp import TrainingDivergedError
from .pipeline import (
    Config, CorpusManifest, ModelVersionError, evaluate_directories, extract, load_model, reference_track,
    save_model, track, train_pipeline,
)
from .signal import FrameGrid, WaveformError, load_waveform
from .synth import CorpusSpec, synth_corpus

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
FUSER_ALIASES = {"median": "median", "linreg": "linreg", "knn": "knn_reg", "knn_reg": "knn_reg",
                 "mlp-idx": "mlp_idx", "mlp_idx": "mlp_idx"}

log = logging.getLogger("pitchml")


class UsageError(Exception):
    pass


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    return cfg.replace(seed=args.seed, f0_min=args.f0_min, f0_max=args.f0_max)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def cmd_features(args):
    cfg = _config(args)
    feats = extract(load_waveform(args.wav), cfg)
    feats.to_csv(args.output)
    log.info("%d frames, mean F0 %.1f Hz", len(feats), feats.meta["mean_f0"])


def cmd_train(args):
    cfg = _config(args).replace(voicing_kind=args.voicing, fuser_kind=FUSER_ALIASES[args.fuser])
    manifest = CorpusManifest.read(args.manifest)
    doc = train_pipeline(manifest, cfg, n_jobs=args.jobs)
    save_model(doc, args.output)
    log.info("trained %s voicing + %s fuser on %d files", cfg.voicing_kind, cfg.fuser_kind, len(manifest))


def cmd_track(args):
    doc = load_model(args.model)
    cfg = _config(args) if (args.config or args.f0_min or args.f0_max) else None
    result = track(load_waveform(args.wav), doc, cfg)
    result.to_csv(args.output)
    log.info("%d frames, %d voiced", len(result), int(result.voiced.sum()))


def cmd_gt(args):
    cfg = _config(args)
    egg = load_waveform(args.egg)
    n = len(egg.samples)
    if args.grid_from:
        speech = load_waveform(args.grid_from)
        if speech.sample_rate != egg.sample_rate:
            raise UsageError(f"{args.grid_from} and {args.egg} have different sample rates")
        n = len(speech.samples)
    grid = FrameGrid.for_length(n, egg.sample_rate)
    reference_track(egg, grid, cfg).to_csv(args.output)


def cmd_eval(args):
    if args.manifest:
        report, per = evaluate_directories(CorpusManifest.read(args.manifest), args.pred, args.ref)
        out = {**report.to_dict(), "per_speaker": {k: v.to_dict() for k, v in per.items()}}
    else:
        report = evaluate(PitchTrack.from_csv(args.pred), PitchTrack.from_csv(args.ref))
        out = report.to_dict()
    _write_json(out, args.output)
    if args.output not in (None, "-"):
        print(report.table())


def cmd_nmi(args):
    cfg = _config(args)
    feats = FeatureSet.from_csv(args.features)
    ref = PitchTrack.from_csv(args.ref)
    if len(ref) != len(feats):
        raise UsageError(f"{len(feats)} feature frames but {len(ref)} reference frames")
    scores = {name: nmi(feats.column(name), ref.voiced, cfg.nmi_bins) for name in FEATURE_NAMES}
    for name, v in sorted(scores.items(), key=lambda kv: -kv[1]):
        print(f"{name:<14}{v:.4f}")
    if args.output:
        _write_json(scores, args.output)


def cmd_synth(args):
    spec = CorpusSpec()
    if args.spec:
        with open(args.spec) as fh:
            spec = CorpusSpec.from_dict(json.load(fh))
    seed = 0 if args.seed is None else args.seed
    manifest = synth_corpus(spec, seed, args.output)
    print(manifest)


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not reset values given before the subcommand
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", help="JSON file overriding configuration defaults", **kw)
    g.add_argument("--seed", type=int, help="random seed", **kw)
    g.add_argument("--f0-min", type=float, dest="f0_min", help="lowest F0 searched (Hz)", **kw)
    g.add_argument("--f0-max", type=float, dest="f0_max", help="highest F0 searched (Hz)", **kw)
    g.add_argument("-v", "--verbose", action="store_true", **kw)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="pitchml", parents=[_global_flags(suppress=False)],
                                description="Pitch detection with engineered features and classic learners.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("features", parents=[common], help="write the per-frame feature/candidate CSV")
    s.add_argument("wav")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common], help="train voicing model and fuser from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--voicing", choices=["kmeans", "gmm", "logreg", "knn", "mlp"], default="mlp")
    s.add_argument("--fuser", choices=["median", "linreg", "knn", "mlp-idx"], default="median")
    s.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", parents=[common], help="voicing + F0 contour for one file")
    s.add_argument("wav")
    s.add_argument("--model", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("gt", parents=[common], help="reference contour from an EGG recording")
    s.add_argument("egg")
    s.add_argument("--grid-from", dest="grid_from", help="speech file whose length sets the frame grid")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_gt)

    s = sub.add_parser("eval", parents=[common], help="VDE/GPE/FPE/FFE of a predicted contour")
    s.add_argument("--pred", required=True, help="track CSV, or a directory of them with --manifest")
    s.add_argument("--ref", help="reference CSV, or a directory of them with --manifest")
    s.add_argument("--manifest", help="average per speaker over the files of this manifest")
    s.add_argument("-o", "--output", help="report JSON (stdout when omitted)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("nmi", parents=[common], help="feature/voicing normalized mutual information")
    s.add_argument("--features", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_nmi)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic speech + EGG corpus")
    s.add_argument("--spec", help="corpus spec JSON (defaults when omitted)")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "eval" and not args.manifest and not args.ref:
        print("error: eval needs --ref unless --manifest is given", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.func(args)
    except (UsageError, WaveformError, ModelVersionError, FileNotFoundError, json.JSONDecodeError,
            VarianceCollapseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDivergedError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
