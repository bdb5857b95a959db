from __future__ import annotations

import numpy as np

from .schema import Dataset


class SplitError(ValueError):
    pass


def split(dataset: Dataset, fractions=(0.85, 0.15), seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded train/test split. Video datasets are split by agent, never by frame.

    Both parts keep the original sample order.
    """
    f_train, f_test = (float(f) for f in fractions)
    if f_train <= 0 or f_test <= 0 or abs(f_train + f_test - 1.0) > 1e-9:
        raise SplitError(f"fractions must be positive and sum to 1, got {fractions}")
    groups = list(dataset.groups().values())
    n_train = int(round(f_train * len(groups)))
    if n_train == 0 or n_train == len(groups):
        raise SplitError(f"split of {len(groups)} units with fractions {fractions} leaves a part empty")
    perm = np.random.default_rng(seed).permutation(len(groups))
    train_units = set(perm[:n_train].tolist())
    train_idx, test_idx = [], []
    for u, idx in enumerate(groups):
        (train_idx if u in train_units else test_idx).extend(idx)
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))
