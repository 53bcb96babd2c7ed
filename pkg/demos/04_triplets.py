#!/usr/bin/env python3
"""The triplet loss and the three mining strategies.

Anchor and positive share a label, the negative does not; the loss is
max(d(a,p) - d(a,n) + margin, 0). Weighted-random sampling balances
anchor classes, batch-all enumerates every valid combination, and
batch-hard picks the most informative triplet per anchor.
"""

import numpy as np

from ercml import (
    TripletLossConfig,
    batch_all_triplets,
    batch_hard_triplets,
    sample_triplets,
    triplet_loss,
)
from ercml.triplets import UttRef

cfg = TripletLossConfig(margin=1.0, distance="euclidean")

# A satisfied triplet (negative far beyond the margin) costs nothing;
# a violating one is charged linearly.
a = np.array([0.0, 0.0])
p = np.array([0.3, 0.0])
n_far = np.array([5.0, 0.0])
n_near = np.array([0.4, 0.0])
print(f"satisfied triplet loss: {triplet_loss(a, p, n_far, cfg):.3f}")
print(f"violating triplet loss: {triplet_loss(a, p, n_near, cfg):.3f}")

# A small labeled pool: one majority class, two rare ones.
labels = [1] * 6 + [4] * 3 + [5] * 3
pool = [(UttRef("demo", i), lab) for i, lab in enumerate(labels)]
counts = {lab: labels.count(lab) for lab in set(labels)}
weights = {lab: (1 / c) / sum(1 / v for v in counts.values()) for lab, c in counts.items()}
print(f"\npool counts {counts} -> inverse-frequency weights "
      f"{ {k: round(v, 3) for k, v in weights.items()} }")

triplets = sample_triplets(pool, 3000, weights, np.random.default_rng(0))
anchor_share = {
    lab: sum(dict(pool)[t.anchor] == lab for t in triplets) / len(triplets)
    for lab in counts
}
print(f"anchor class shares over 3000 weighted draws: "
      f"{ {k: round(v, 3) for k, v in anchor_share.items()} } (roughly uniform)")

batch = [pool[0], pool[1], pool[6], pool[7], pool[9]]
print(f"\nbatch labels {[lab for _, lab in batch]}")
print(f"batch-all emits {len(batch_all_triplets(batch))} triplets "
      f"(every valid anchor/positive/negative combination)")

# Batch-hard works on current representation vectors.
rng = np.random.default_rng(1)
points = [(ref, lab, rng.standard_normal(2)) for ref, lab in batch]
hard = batch_hard_triplets(points, cfg)
print(f"batch-hard emits {len(hard)} (one per eligible anchor):")
for t in hard:
    print(f"  anchor {t.anchor.index} <- farthest positive {t.positive.index}, "
          f"nearest negative {t.negative.index}")
