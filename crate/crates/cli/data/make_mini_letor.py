"""Regenerates mini.letor: 5 queries x 60 documents in the MQ2008 column layout.

Each document has a latent quality q; grades are 2 (q > 1), 1 (q > 0.2) or 0.
Eight of the 21 feature columns are noisy copies of q, the rest are noise.
Twenty of the 25 rank-list columns mix q with a per-document bias shared by
all lists; five are noise. Every column is min-max scaled within its query.
"""
import numpy as np

SEED, DOCS, SHARED, OWN, FEATURE_NOISE, INFORMATIVE = 2008, 60, 1.2, 0.5, 0.5, 8

rng = np.random.default_rng(SEED)
r_cols = list(range(11, 16)) + list(range(21, 41))
x_cols = [c for c in range(1, 47) if c not in r_cols]
lines = []
for q in range(5):
    qid = 7001 + q * 13
    quality = rng.standard_normal(DOCS)
    rel = np.where(quality > 1.0, 2, np.where(quality > 0.2, 1, 0))
    bias = rng.standard_normal(DOCS)
    feats = np.zeros((DOCS, 47))
    for j, c in enumerate(x_cols):
        if j < INFORMATIVE:
            v = rng.uniform(0.5, 1.0) * quality + rng.standard_normal(DOCS) * FEATURE_NOISE
        else:
            v = rng.standard_normal(DOCS)
        feats[:, c] = v
    for k, c in enumerate(r_cols):
        if k < 20:
            v = rng.uniform(0.6, 1.0) * quality + SHARED * bias + OWN * rng.standard_normal(DOCS)
        else:
            v = rng.standard_normal(DOCS)
        feats[:, c] = v
    for c in range(1, 47):
        v = feats[:, c]
        feats[:, c] = (v - v.min()) / (v.max() - v.min())
    for i in range(DOCS):
        body = " ".join(f"{c}:{feats[i, c]:.6f}" for c in range(1, 47))
        lines.append(f"{rel[i]} qid:{qid} {body} #docid = mini-{qid}-{i:02d}")

with open("mini.letor", "w") as f:
    f.write("\n".join(lines) + "\n")
