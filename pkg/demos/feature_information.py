"""
How much does each feature say about voicing?
=============================================

Normalized mutual information between every feature and the reference
voicing of a synthetic corpus, using 32 equal-frequency bins.
"""

import numpy as np

from pitchml.evaluation import nmi
from pitchml.features import FEATURE_NAMES, extract_all
from pitchml.synth import CorpusSpec, generate

utterances = generate(CorpusSpec(utterances=2, duration_s=10.0), seed=2)
feats = np.concatenate([extract_all(u.speech).features for u in utterances])
voiced = np.concatenate([u.reference.track.voiced for u in utterances])
print(f"{len(voiced)} frames, {100 * voiced.mean():.1f}% voiced\n")

scores = {name: nmi(feats[:, i], voiced) for i, name in enumerate(FEATURE_NAMES)}
for name, value in sorted(scores.items(), key=lambda kv: -kv[1]):
    print(f"{name:<14}{value:6.3f}  " + "#" * int(round(40 * value)))
