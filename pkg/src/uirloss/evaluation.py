"""Verification and open-set measurements.

* TAR at fixed FAR over genuine/impostor cosine scores, with the N/F
  feature post-processing variants (normalize, sum with alternate view).
* Average pairwise cosine distance between head rows.
* Cumulative distribution and mean of max softmax activations.
"""

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .data import alternate_view
from .filtering import max_activations
from .model import forward
from .numerics import DimensionError, as_mat, cosine_distance, l2_normalize_rows
from .parallel import map_chunks

DEFAULT_FARS = (1e-4, 1e-3, 1e-2, 1e-1)
DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))
POSTPROCESS_TAGS = ("N0F0", "N0F1", "N1F0", "N1F1")


@dataclass
class VerificationProtocol:
    genuine: np.ndarray  # (G, 2) row indices
    impostor: np.ndarray  # (I, 2)

    def check(self, identities):
        """Raise if a genuine pair crosses identities or an impostor pair shares one."""
        ids = np.asarray(identities)
        g, im = self.genuine, self.impostor
        if g.size and np.any(ids[g[:, 0]] != ids[g[:, 1]]):
            raise ValueError("genuine pair with different identities")
        if im.size and np.any(ids[im[:, 0]] == ids[im[:, 1]]):
            raise ValueError("impostor pair with the same identity")


def build_protocol(identities, impostor_multiple=10, seed=0):
    """All within-identity pairs as genuine; impostors sampled at random.

    Impostor pairs are distinct unordered pairs drawn uniformly from the
    cross-identity pairs, ``impostor_multiple`` times the genuine count
    (capped at the number available).
    """
    ids = np.asarray(identities)
    n = ids.size
    genuine = []
    for ident in np.unique(ids):
        members = np.flatnonzero(ids == ident)
        genuine.extend(combinations(members.tolist(), 2))
    genuine = np.array(genuine, dtype=np.int64).reshape(-1, 2)

    n_cross = n * (n - 1) // 2 - len(genuine)
    want = min(impostor_multiple * len(genuine), n_cross)
    rng = np.random.default_rng([seed, 30])
    chosen = set()
    pairs = []
    while len(pairs) < want:
        a = rng.integers(0, n, size=2 * (want - len(pairs)) + 16)
        b = rng.integers(0, n, size=a.size)
        for i, j in zip(a.tolist(), b.tolist()):
            if i == j or ids[i] == ids[j]:
                continue
            key = (min(i, j), max(i, j))
            if key in chosen:
                continue
            chosen.add(key)
            pairs.append(key)
            if len(pairs) == want:
                break
    impostor = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return VerificationProtocol(genuine, impostor)


def postprocess_features(raw, alt_view=None, normalize=False, flip=False):
    """Optional alternate-view summation, then optional row normalization."""
    raw = as_mat(raw)
    if flip:
        if alt_view is None:
            raise ValueError("flip requested without an alternate view")
        alt_view = as_mat(alt_view)
        if alt_view.shape != raw.shape:
            raise DimensionError("alternate view shape differs from raw features")
        out = raw + alt_view
    else:
        out = raw.copy()
    if normalize:
        out = l2_normalize_rows(out)
    return out


def parse_postprocess(tag):
    """``"N1F0"`` -> ``(normalize=True, flip=False)``."""
    tag = tag.upper()
    if tag not in POSTPROCESS_TAGS:
        raise ValueError(f"postprocess tag must be one of {POSTPROCESS_TAGS}, got {tag!r}")
    return tag[1] == "1", tag[3] == "1"


def score_pairs(features, protocol):
    """Cosine similarity for every genuine and impostor pair."""
    feats = as_mat(features)
    unit = l2_normalize_rows(feats)
    n = feats.shape[0]

    def scores(pairs):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise IndexError("pair index out of range")
        return np.einsum("ij,ij->i", unit[pairs[:, 0]], unit[pairs[:, 1]])

    return scores(protocol.genuine), scores(protocol.impostor)


def tar_at_far(genuine, impostor, far):
    """True accept rate at the strictest threshold meeting a false accept rate.

    Candidate thresholds are all observed scores (genuine and impostor)
    plus ``+inf``; a pair is accepted when its score is ``>= t``. The
    smallest candidate whose impostor acceptance fraction is ``<= far`` is
    used. Any real threshold accepts the same pairs as some candidate, so
    this is the best TAR over all thresholds. Returns ``(tar, threshold)``.
    """
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise ValueError("score lists must be non-empty")
    if not 0 < far < 1:
        raise ValueError(f"far must lie in (0, 1), got {far}")
    cand = np.unique(np.concatenate([imp, gen]))
    accepted = imp.size - np.searchsorted(imp, cand, side="left")
    ok = np.flatnonzero(accepted / imp.size <= far)
    t = float(cand[ok[0]]) if ok.size else np.inf
    gen_sorted = np.sort(gen)
    tar = (gen.size - np.searchsorted(gen_sorted, t, side="left")) / gen.size
    return float(tar), t


def center_sparsity(head):
    """Mean cosine distance over all unordered pairs of head rows."""
    head = as_mat(head)
    if head.shape[0] < 2:
        raise ValueError("need at least two centers")
    sim = l2_normalize_rows(head) @ l2_normalize_rows(head).T
    iu = np.triu_indices(head.shape[0], k=1)
    return float(np.mean(np.clip(1.0 - sim[iu], 0.0, 2.0)))


def center_sparsity_pairwise(head):
    """Loop over pairs with :func:`numerics.cosine_distance`; slow reference."""
    head = as_mat(head)
    if head.shape[0] < 2:
        raise ValueError("need at least two centers")
    d = [cosine_distance(head[i], head[j]) for i, j in combinations(range(head.shape[0]), 2)]
    return float(np.mean(d))


def activation_stats(model, inputs, thresholds=DEFAULT_THRESHOLDS, s=64.0, workers=1):
    """CDF (strict ``< t``) and mean of per-sample max softmax activation."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("activation statistics need a non-empty sample set")
    t = np.asarray(thresholds, dtype=np.float64)
    if t.size == 0 or np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] >= 1:
        raise ValueError("thresholds must be strictly increasing inside (0, 1)")
    maxima = max_activations(model, x, s=s, workers=workers)
    return cdf_of(maxima, t), float(np.mean(maxima))


def cdf_of(maxima, thresholds):
    maxima = np.asarray(maxima, dtype=np.float64)
    return {float(th): float(np.mean(maxima < th)) for th in thresholds}


def embed(model, inputs, workers=1):
    """Raw (unnormalized) embeddings for a batch of inputs."""
    return map_chunks(lambda b: forward(model, b).embedding, np.asarray(inputs, dtype=np.float64),
                      workers=workers)


@dataclass
class MetricsReport:
    postprocess: str
    tar_at_far: dict = field(default_factory=dict)
    thresholds_at_far: dict = field(default_factory=dict)
    avg_center_distance: float = None
    activation_cdf: dict = field(default_factory=dict)
    mean_activation: float = None
    n_genuine: int = 0
    n_impostor: int = 0

    def to_dict(self):
        return {
            "postprocess": self.postprocess,
            "tar_at_far": {_key(k): v for k, v in self.tar_at_far.items()},
            "thresholds_at_far": {_key(k): v for k, v in self.thresholds_at_far.items()},
            "avg_center_distance": self.avg_center_distance,
            "activation_cdf": {_key(k): v for k, v in self.activation_cdf.items()},
            "mean_activation": self.mean_activation,
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _key(x):
    return repr(float(x))


def evaluate(model, samples, fars=DEFAULT_FARS, postprocess="N1F1", thresholds=DEFAULT_THRESHOLDS,
             s=64.0, impostor_multiple=10, seed=0, workers=1, protocol=None):
    """Full report for a labeled evaluation set (labels are identity ids)."""
    normalize, flip = parse_postprocess(postprocess)
    raw = embed(model, samples.inputs, workers)
    alt = embed(model, alternate_view(samples.inputs), workers) if flip else None
    feats = postprocess_features(raw, alt, normalize, flip)
    if protocol is None:
        protocol = build_protocol(samples.labels, impostor_multiple, seed)
    protocol.check(samples.labels)
    gen, imp = score_pairs(feats, protocol)
    report = MetricsReport(postprocess.upper(), n_genuine=len(gen), n_impostor=len(imp))
    for far in fars:
        tar, t = tar_at_far(gen, imp, far)
        report.tar_at_far[far] = tar
        report.thresholds_at_far[far] = t
    report.avg_center_distance = center_sparsity(model.head)
    report.activation_cdf, report.mean_activation = activation_stats(
        model, samples.inputs, thresholds, s, workers
    )
    return report
