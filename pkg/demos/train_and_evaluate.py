"""
Training on a synthetic corpus and scoring held-out files
=========================================================

A small two-speaker corpus with pseudo-EGG recordings is written to a
temporary directory. The EGG gives the reference voicing and F0; an MLP
and an unsupervised K-means voicing model are trained on four files per
speaker and scored on the fifth.
"""

import tempfile

from pitchml.evaluation import evaluate_speakers
from pitchml.pipeline import (
    Config, CorpusManifest, prepare_corpus, stored_reference, track_features, train_pipeline,
)
from pitchml.synth import CorpusSpec, synth_corpus

out = tempfile.mkdtemp(prefix="pitchml-demo-")
manifest = CorpusManifest.read(synth_corpus(CorpusSpec(utterances=5, duration_s=8.0), seed=1, out_dir=out))
print(f"corpus in {out}: {len(manifest)} files, speakers {manifest.speakers}")

held_out = lambda e: e.speech.stem.endswith("_004")
train_manifest = manifest.subset(lambda e: not held_out(e))
prepared = prepare_corpus(manifest, Config())
train = [p for p in prepared if not held_out(p.entry)]
test = [p for p in prepared if held_out(p.entry)]

for kind in ("mlp", "kmeans"):
    doc = train_pipeline(train_manifest, Config(voicing_kind=kind), prepared=train)
    items = [(p.entry.speaker, track_features(p.features, doc), stored_reference(p.entry)) for p in test]
    report, per_speaker = evaluate_speakers(items)
    print(f"\nvoicing = {kind}")
    print(report.table())
