"""End-to-end orchestration: configuration, corpus manifests, training and tracking."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .evaluation import EvalReport, evaluate_speakers
from .f0 import DEFAULT_SUBSET, FUSER_KINDS, F0Fuser, PitchTrack, fit_fuser, predict_track
from .features import CANDIDATE_NAMES, FeatureSet, F0SearchRange, extract_all
from .groundtruth import degg_peaks, gci_to_reference
from .signal import FrameGrid, Waveform, frame_samples, load_waveform
from .synth import truth_path
from .voicing import SUPERVISED, UNSUPERVISED, VoicingModel, fit_voicing_supervised, \
    fit_voicing_unsupervised, predict_voicing

log = logging.getLogger(__name__)

MODEL_FORMAT = "pitchml-model"
MODEL_VERSION = 1
VOICING_KINDS = UNSUPERVISED + SUPERVISED
# settings that change the features a model was trained on
FEATURE_KEYS = ("f0_min", "f0_max", "n_harmonics", "mean_f0_threshold")


class ModelVersionError(ValueError):
    pass


@dataclass
class Config:
    """Every tunable of the pipeline; defaults match the library defaults."""
    f0_min: float = 60.0
    f0_max: float = 400.0
    n_harmonics: int = 5
    mean_f0_threshold: float = 0.6
    voicing_kind: str = "mlp"
    voicing_radius: int = 1
    voicing_threshold: float = 0.5
    fuser_kind: str = "median"
    fuser_radius: int = 2
    candidate_subset: tuple = DEFAULT_SUBSET
    knn_k: int = 5
    l2_lambda: float = 1e-3
    mlp_lr: float = 1e-2
    mlp_batch: int = 64
    mlp_epochs: int = 100
    mlp_momentum: float = 0.9
    mlp_val_fraction: float = 0.1
    mlp_patience: int = 10
    min_separation: float = 2.0
    balance_speakers: bool = True
    nmi_bins: int = 32
    gt_peak_ratio: float = 0.2
    gt_window_s: float = 0.2
    gt_continuity: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.candidate_subset = tuple(self.candidate_subset)
        self.validate()

    def validate(self) -> None:
        F0SearchRange(self.f0_min, self.f0_max)
        problems = []
        if self.voicing_kind not in VOICING_KINDS:
            problems.append(f"voicing_kind must be one of {VOICING_KINDS}")
        if self.fuser_kind not in FUSER_KINDS:
            problems.append(f"fuser_kind must be one of {FUSER_KINDS}")
        if not self.candidate_subset or any(c not in CANDIDATE_NAMES for c in self.candidate_subset):
            problems.append(f"candidate_subset must be a nonempty subset of {CANDIDATE_NAMES}")
        for name in ("voicing_radius", "fuser_radius"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                problems.append(f"{name} must be a non-negative integer")
        for name in ("n_harmonics", "knn_k", "mlp_batch", "mlp_epochs", "mlp_patience", "nmi_bins"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        for name in ("mlp_lr", "gt_peak_ratio", "gt_window_s", "gt_continuity"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if self.l2_lambda < 0:
            problems.append("l2_lambda must be >= 0")
        for name in ("mean_f0_threshold", "voicing_threshold", "mlp_momentum"):
            if not 0 <= getattr(self, name) < 1:
                problems.append(f"{name} must lie in [0, 1)")
        if not 0 <= self.mlp_val_fraction < 0.5:
            problems.append("mlp_val_fraction must lie in [0, 0.5)")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    @property
    def search_range(self) -> F0SearchRange:
        return F0SearchRange(self.f0_min, self.f0_max)

    @property
    def mlp_options(self) -> dict:
        return {"lr": self.mlp_lr, "batch": self.mlp_batch, "epochs": self.mlp_epochs,
                "momentum": self.mlp_momentum, "val_fraction": self.mlp_val_fraction,
                "patience": self.mlp_patience}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["candidate_subset"] = list(self.candidate_subset)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "Config":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "Config":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "Config":
        return Config.from_dict({**self.to_dict(), **{k: v for k, v in changes.items() if v is not None}})


@dataclass
class ManifestEntry:
    speaker: str
    speech: Path
    egg: Path | None = None


@dataclass
class CorpusManifest:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def speakers(self) -> list[str]:
        return list(dict.fromkeys(e.speaker for e in self.entries))

    def subset(self, keep) -> "CorpusManifest":
        return CorpusManifest([e for e in self.entries if keep(e)])

    @classmethod
    def read(cls, path) -> "CorpusManifest":
        """Parse ``speaker<TAB>speech[<TAB>egg]`` lines; relative paths resolve against the manifest."""
        path = Path(path)
        base = path.parent
        entries, missing = [], []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3) or not cols[0].strip() or not cols[1].strip():
                raise ValueError(f"{path}:{lineno}: expected speaker<TAB>speech_path[<TAB>egg_path]")
            speech = base / cols[1].strip()
            egg = base / cols[2].strip() if len(cols) == 3 and cols[2].strip() else None
            for p in (speech, egg):
                if p is not None and not p.exists():
                    missing.append(f"{path}:{lineno}: {p}")
            entries.append(ManifestEntry(cols[0].strip(), speech, egg))
        if missing:
            raise FileNotFoundError("manifest paths do not exist:\n  " + "\n  ".join(missing))
        return cls(entries)


@dataclass
class PreparedUtterance:
    entry: ManifestEntry
    features: FeatureSet
    reference: PitchTrack | None


def reference_track(egg: Waveform, grid: FrameGrid, config: Config) -> PitchTrack:
    gcis = degg_peaks(egg, config.search_range, config.gt_peak_ratio, config.gt_window_s)
    return gci_to_reference(gcis, grid, config.search_range, config.gt_continuity).track


def _truncate_track(t: PitchTrack, n: int) -> PitchTrack:
    return PitchTrack(t.times[:n], t.voiced[:n], t.f0[:n])


def _truncate_features(fs: FeatureSet, n: int) -> FeatureSet:
    return FeatureSet(fs.times[:n], fs.features[:n], fs.candidates[:n], fs.meta)


def extract(w: Waveform, config: Config) -> FeatureSet:
    return extract_all(w, config.search_range, config.n_harmonics, config.mean_f0_threshold)


def prepare_entry(entry: ManifestEntry, config: Config) -> PreparedUtterance:
    """Features plus (when an EGG is listed) the EGG reference on the same grid.

    Speech and EGG may differ by up to one hop; both are cut to the shorter grid.
    """
    speech = load_waveform(entry.speech)
    feats = extract(speech, config)
    ref = None
    if entry.egg is not None:
        egg = load_waveform(entry.egg)
        if egg.sample_rate != speech.sample_rate:
            raise ValueError(f"{entry.egg}: sample rate {egg.sample_rate} differs from speech ({speech.sample_rate})")
        grid = FrameGrid.for_length(len(speech.samples), speech.sample_rate)
        if abs(len(egg.samples) - len(speech.samples)) > grid.hop:
            raise ValueError(f"{entry.egg}: length differs from {entry.speech} by more than one hop")
        ref_grid = FrameGrid.for_length(len(egg.samples), egg.sample_rate)
        ref = reference_track(egg, ref_grid, config)
        n = min(len(ref), len(feats))
        ref, feats = _truncate_track(ref, n), _truncate_features(feats, n)
    return PreparedUtterance(entry, feats, ref)


def _prepare_star(args):
    return prepare_entry(*args)


def prepare_corpus(manifest: CorpusManifest, config: Config, n_jobs: int = 1) -> list[PreparedUtterance]:
    """Prepare every entry; files run in parallel, results keep manifest order."""
    jobs = [(e, config) for e in manifest.entries]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_prepare_star, jobs))
    return [prepare_entry(*j) for j in jobs]


def balance_by_speaker(items: list[PreparedUtterance]) -> list[PreparedUtterance]:
    """Cap every speaker to the frame count of the smallest speaker.

    Utterances are taken in manifest order; the last one kept is truncated.
    """
    totals: dict = {}
    for it in items:
        totals[it.entry.speaker] = totals.get(it.entry.speaker, 0) + len(it.features)
    cap = min(totals.values())
    used: dict = {}
    out = []
    for it in items:
        room = cap - used.get(it.entry.speaker, 0)
        if room <= 0:
            continue
        n = min(room, len(it.features))
        used[it.entry.speaker] = used.get(it.entry.speaker, 0) + n
        ref = None if it.reference is None else _truncate_track(it.reference, n)
        out.append(PreparedUtterance(it.entry, _truncate_features(it.features, n), ref))
    return out


def fit_models(items: list[PreparedUtterance], config: Config) -> tuple[VoicingModel, F0Fuser]:
    """Fit the voicing model and the fuser on prepared utterances."""
    if not items:
        raise ValueError("no utterances to train on")
    needs_ref = config.voicing_kind in SUPERVISED or config.fuser_kind != "median"
    if needs_ref:
        missing = [str(it.entry.speech) for it in items if it.reference is None]
        if missing:
            raise ValueError(f"voicing={config.voicing_kind}, fuser={config.fuser_kind} need EGG references; "
                             "missing for: " + ", ".join(missing))
    if config.balance_speakers:
        items = balance_by_speaker(items)
    feats = [it.features.features for it in items]
    if config.voicing_kind in UNSUPERVISED:
        voicing = fit_voicing_unsupervised(feats, config.voicing_kind, config.voicing_radius, config.seed,
                                           config.min_separation)
    else:
        voicing = fit_voicing_supervised(feats, [it.reference.voiced for it in items], config.voicing_kind,
                                         config.voicing_radius, config.seed, config.voicing_threshold,
                                         config.l2_lambda, config.knn_k, config.mlp_options)
    if config.fuser_kind == "median":
        fuser = F0Fuser("median", config.candidate_subset, config.fuser_radius)
    else:
        fuser = fit_fuser([it.features.candidates for it in items], [it.reference.f0 for it in items],
                          config.fuser_kind, config.fuser_radius, config.seed, config.candidate_subset,
                          config.knn_k, config.mlp_options)
    return voicing, fuser


def model_document(voicing: VoicingModel, fuser: F0Fuser, config: Config, speakers=()) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "config": config.to_dict(),
            "voicing": voicing.to_dict(), "fuser": fuser.to_dict(),
            "training_speakers": list(speakers)}


def train_pipeline(manifest: CorpusManifest, config: Config | None = None, n_jobs: int = 1,
                   prepared: list[PreparedUtterance] | None = None) -> dict:
    """Train on a manifest and return the JSON-ready model document.

    ``prepared`` may supply already extracted utterances (in manifest order)
    to skip feature extraction.
    """
    config = config or Config()
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    if config.voicing_kind in SUPERVISED or config.fuser_kind != "median":
        missing = [str(e.speech) for e in manifest.entries if e.egg is None]
        if missing:
            raise ValueError(f"voicing={config.voicing_kind}, fuser={config.fuser_kind} need an EGG path for "
                             "every entry; missing for: " + ", ".join(missing))
    items = prepared if prepared is not None else prepare_corpus(manifest, config, n_jobs)
    voicing, fuser = fit_models(items, config)
    return model_document(voicing, fuser, config, manifest.speakers)


def check_model(doc: dict) -> None:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelVersionError("not a pitchml model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelVersionError(f"model version {doc.get('version')} is not supported (expected {MODEL_VERSION})")


def save_model(doc: dict, path) -> None:
    check_model(doc)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    check_model(doc)
    return doc


def _unpack(doc: dict, config: Config | None):
    check_model(doc)
    trained = Config.from_dict(doc["config"])
    if config is not None:
        clash = [k for k in FEATURE_KEYS if getattr(config, k) != getattr(trained, k)]
        if clash:
            raise ModelVersionError(f"config differs from the model's training config on {clash}")
    return trained, VoicingModel.from_dict(doc["voicing"]), F0Fuser.from_dict(doc["fuser"])


def track_features(feats: FeatureSet, doc: dict, config: Config | None = None, silent=None) -> PitchTrack:
    cfg, voicing, fuser = _unpack(doc, config)
    voiced = predict_voicing(voicing, feats.features)
    if silent is not None:
        voiced &= ~silent
    return predict_track(voiced, feats.candidates, fuser, cfg.search_range, feats.times)


def track(waveform: Waveform, doc: dict, config: Config | None = None) -> PitchTrack:
    """Extract features, decide voicing and fuse F0 on the waveform's 5 ms grid.

    Frames containing only digital zeros are always unvoiced.
    """
    cfg, _, _ = _unpack(doc, config)
    feats = extract(waveform, cfg)
    grid = FrameGrid.for_length(len(waveform.samples), waveform.sample_rate)
    silent = ~np.any(frame_samples(waveform.samples, grid) != 0, axis=1)
    return track_features(feats, doc, config, silent)


def stored_reference(entry: ManifestEntry) -> PitchTrack:
    return PitchTrack.from_csv(truth_path(entry.speech))


def leave_one_speaker_out(manifest: CorpusManifest, config: Config | None = None, n_jobs: int = 1,
                          prepared: list[PreparedUtterance] | None = None):
    """Train on all speakers but one, test on the held-out one, for every speaker.

    References are the EGG-derived tracks. Returns the equal-weight average
    report and the per-speaker reports.
    """
    config = config or Config()
    speakers = manifest.speakers
    if len(speakers) < 2:
        raise ValueError("leave-one-speaker-out needs at least two speakers")
    items = prepared if prepared is not None else prepare_corpus(manifest, config, n_jobs)
    results = []
    for held in speakers:
        train = [it for it in items if it.entry.speaker != held]
        test = [it for it in items if it.entry.speaker == held]
        doc = train_pipeline(manifest.subset(lambda e: e.speaker != held), config, prepared=train)
        if held in doc["training_speakers"] or any(it.entry.speaker == held for it in train):
            raise AssertionError(f"speaker {held} leaked into its own training set")
        for it in test:
            if it.reference is None:
                raise ValueError(f"{it.entry.speech}: no EGG reference to evaluate against")
            results.append((held, track_features(it.features, doc), it.reference))
    return evaluate_speakers(results)


def evaluate_directories(manifest: CorpusManifest, pred_dir, ref_dir=None) -> tuple[EvalReport, dict]:
    """Speaker-averaged evaluation of ``<pred_dir>/<stem>.csv`` against stored references.

    References are ``<ref_dir>/<stem>_f0.csv`` (falling back to
    ``<stem>.csv``); without ``ref_dir`` the contour stored beside each
    speech file is used.
    """
    items = []
    for e in manifest.entries:
        stem = e.speech.stem
        pred = PitchTrack.from_csv(Path(pred_dir) / f"{stem}.csv")
        if ref_dir is None:
            ref_path = truth_path(e.speech)
        else:
            ref_path = Path(ref_dir) / f"{stem}_f0.csv"
            if not ref_path.exists():
                ref_path = Path(ref_dir) / f"{stem}.csv"
        items.append((e.speaker, pred, PitchTrack.from_csv(ref_path)))
    return evaluate_speakers(items)
