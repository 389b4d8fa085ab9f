"""Class-balanced mini-batch construction.

Every batch holds batch_size / n_classes samples from each class. The
largest class is covered exactly once per epoch; smaller classes are
topped up by resampling with replacement after one full shuffled pass.
"""

from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = ["balanced_batches"]


def balanced_batches(labels: Sequence[Hashable], batch_size: int, seed: int) -> list[list[int]]:
    """Return ordered batches of sample indices, balanced per class.

    labels maps position -> class label. batch_size must be divisible by
    the number of distinct classes. Identical seeds give identical batch
    orderings.
    """
    if len(labels) == 0:
        raise ValidationError("balanced_batches: no samples")
    classes = sorted(set(labels), key=str)
    if len(classes) < 2:
        raise ValidationError("balanced_batches: need at least two classes")
    if batch_size < len(classes) or batch_size % len(classes) != 0:
        raise ValidationError(
            f"balanced_batches: batch size {batch_size} not divisible by {len(classes)} classes"
        )
    per_class = batch_size // len(classes)
    members = {cls: [i for i, lab in enumerate(labels) if lab == cls] for cls in classes}
    largest = max(len(m) for m in members.values())
    n_batches = -(-largest // per_class)  # ceil
    need = n_batches * per_class

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    streams: dict[Hashable, list[int]] = {}
    for cls in classes:
        ids = members[cls]
        stream = [ids[j] for j in rng.permutation(len(ids))]
        if len(stream) < need:
            stream.extend(int(i) for i in rng.choice(ids, size=need - len(stream), replace=True))
        streams[cls] = stream[:need]

    batches = []
    for b in range(n_batches):
        batch: list[int] = []
        for cls in classes:
            batch.extend(streams[cls][b * per_class : (b + 1) * per_class])
        batches.append(batch)
    return batches
