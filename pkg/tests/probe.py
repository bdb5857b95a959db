"""Independent oracle for the synthetic generator: a closed-form ridge probe on simple input statistics.

The statistics are computed from raw sample arrays only, never from model code:
the face vector, the time-averaged gait pose normalised for position and
scale, the mean colour of each cell of a 7x7 image grid, and the depth map
averaged over 8x8 blocks.
"""

import numpy as np

from ctxemo.metrics import mean_ap, per_class_ap


def planted_statistics(dataset, contexts=(1, 2, 3)) -> np.ndarray:
    rows = []
    for s in dataset.samples:
        feats = []
        if 1 in contexts:
            pose = s.gait.astype(np.float64).mean(axis=0)
            pose = pose - pose.mean(axis=0)
            pose = pose / np.sqrt((pose**2).mean())
            feats += [s.face.astype(np.float64), pose.ravel()]
        if 2 in contexts:
            img = s.masked_image.astype(np.float64)[:217, :217]
            feats.append(img.reshape(7, 31, 7, 31, 3).mean(axis=(1, 3)).ravel())
        if 3 in contexts:
            feats.append(np.minimum(s.depth.astype(np.float64), 20.0).reshape(8, 28, 8, 28).mean(axis=(1, 3)).ravel())
        rows.append(np.concatenate(feats))
    return np.array(rows)


def _ridge(Xtr, Ytr, alpha):
    mu, sd = Xtr.mean(axis=0), Xtr.std(axis=0) + 1e-8
    Z = (Xtr - mu) / sd
    W = np.linalg.solve(Z.T @ Z + alpha * len(Z) * np.eye(Z.shape[1]), Z.T @ (Ytr - Ytr.mean(axis=0)))
    return lambda X: ((X - mu) / sd) @ W


def probe_scores(train, test, contexts=(1, 2, 3), alpha=1.0) -> np.ndarray:
    """Ridge scores per context, then one least-squares fit on the stacked per-context scores."""
    Ytr = train.labels()
    tr_parts, te_parts = [], []
    for c in contexts:
        f = _ridge(planted_statistics(train, (c,)), Ytr, alpha)
        tr_parts.append(f(planted_statistics(train, (c,))))
        te_parts.append(f(planted_statistics(test, (c,))))
    ones_tr, ones_te = np.ones((len(train), 1)), np.ones((len(test), 1))
    S_tr, S_te = np.hstack(tr_parts + [ones_tr]), np.hstack(te_parts + [ones_te])
    W, *_ = np.linalg.lstsq(S_tr, Ytr, rcond=None)
    return S_te @ W


def ridge_probe_map(train, test, contexts=(1, 2, 3), alpha=1.0) -> float:
    return mean_ap(per_class_ap(probe_scores(train, test, contexts, alpha), test.labels()))
