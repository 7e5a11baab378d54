"""Overlap filtering of the unlabeled pool.

Unlabeled samples that the supervised model confidently assigns to a known
identity probably belong to one, so they are dropped before the rejection
loss is applied to the rest.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import forward, head_logits
from .numerics import softmax
from .parallel import map_chunks

DEFAULT_THRESHOLD = 0.9


@dataclass
class FilterReport:
    kept: int
    discarded: int
    discard_threshold: float
    histogram_edges: list = field(default_factory=list)
    histogram_counts: list = field(default_factory=list)
    skipped_degenerate: int = 0

    def to_dict(self):
        return asdict(self)


def max_activations(model, inputs, s=64.0, workers=1):
    """Largest single-softmax probability of the margin-free logits per row.

    Rows whose embedding collapses to zero get activation ``1 / n_known``
    (their cosines are all zero).
    """
    return _scores(model, inputs, s, workers)[:, 0]


def _scores(model, inputs, s, workers):
    def score(block):
        trace = forward(model, block)
        act = softmax(head_logits(trace, s), axis=1).max(axis=1)
        return np.column_stack([act, ~trace.valid])

    return map_chunks(score, np.asarray(inputs, dtype=np.float64), workers=workers)


def filter_overlap(model, unlabeled, threshold=DEFAULT_THRESHOLD, s=64.0, workers=1,
                   bins=10):
    """Keep samples whose max activation is ``<= threshold``, in order."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    if len(unlabeled) == 0:
        return unlabeled, FilterReport(0, 0, threshold, edges.tolist(), [0] * bins)
    scores = _scores(model, unlabeled.inputs, s, workers)
    acts = scores[:, 0]
    keep = acts <= threshold
    counts, _ = np.histogram(acts, bins=edges)
    n_deg = int(scores[:, 1].sum())
    report = FilterReport(
        kept=int(keep.sum()),
        discarded=int((~keep).sum()),
        discard_threshold=float(threshold),
        histogram_edges=edges.tolist(),
        histogram_counts=counts.tolist(),
        skipped_degenerate=n_deg,
    )
    return unlabeled.subset(np.flatnonzero(keep)), report
