"""Synthetic identity data.

Identities are unit directions in input space. Known identities occupy
global ids ``0 .. n_known-1`` and unknown identities ``n_known ..
n_known+n_unknown-1``, so the two sets are disjoint by construction.
Samples are a center plus isotropic Gaussian noise.

Dataset text format::

    uirset v1 <dim> <count>
    <label> <x_1> ... <x_dim>
    ...

where ``label`` is an integer identity id or ``-1`` for unlabeled rows.
Floats are written with ``repr`` so the round trip is exact.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError

UNLABELED = -1
FORMAT_TAG = "uirset"
FORMAT_VERSION = "v1"


class DatasetFormatError(ValueError):
    pass


@dataclass
class IdentityUniverse:
    known_centers: np.ndarray
    unknown_centers: np.ndarray
    seed: int

    @property
    def n_known(self):
        return self.known_centers.shape[0]

    @property
    def n_unknown(self):
        return self.unknown_centers.shape[0]

    @property
    def d_input(self):
        return self.known_centers.shape[1]

    def center(self, identity):
        """Center for a global identity id."""
        if identity < self.n_known:
            return self.known_centers[identity]
        return self.unknown_centers[identity - self.n_known]


@dataclass
class SampleSet:
    """Input rows with labels.

    ``labels`` holds identity ids, or :data:`UNLABELED` for unlabeled rows.
    ``identities`` is the true generating identity of every row; it is
    kept for analysis only and never read by training.
    """

    inputs: np.ndarray
    labels: np.ndarray
    provenance: str = "known"
    identities: np.ndarray = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionError("inputs and labels disagree in length")
        if self.identities is None:
            self.identities = self.labels.copy()
        if self.provenance not in ("known", "unknown", "mixed"):
            raise ValueError(f"bad provenance {self.provenance!r}")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def is_unlabeled(self):
        return bool(np.all(self.labels == UNLABELED))

    def subset(self, index):
        index = np.asarray(index)
        return SampleSet(
            self.inputs[index], self.labels[index], self.provenance, self.identities[index]
        )


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def gen_universe(n_known, n_unknown, d_input, seed):
    """Draw known and unknown centers uniformly on the unit sphere."""
    if n_known < 1 or n_unknown < 1:
        raise ValueError("identity counts must be at least 1")
    if d_input < 2:
        raise ValueError("input dimension must be at least 2")
    rng = np.random.default_rng([seed, 0])
    known = _unit_rows(rng, n_known, d_input)
    unknown = _unit_rows(rng, n_unknown, d_input)
    return IdentityUniverse(known, unknown, seed)


def _noisy(rng, centers, sigma):
    if sigma == 0:
        return centers.copy()
    return centers + sigma * rng.standard_normal(centers.shape)


def sample_labeled(universe, per_identity, noise_sigma, seed):
    """``per_identity`` noisy samples of every known identity, labeled."""
    if per_identity < 1:
        raise ValueError("per_identity must be at least 1")
    rng = np.random.default_rng([seed, 1])
    ids = np.repeat(np.arange(universe.n_known), per_identity)
    x = _noisy(rng, universe.known_centers[ids], noise_sigma)
    return SampleSet(x, ids, "known", ids.copy())


def zipf_counts(n_identities, total, exponent, rng):
    """Split ``total`` samples over identities with Zipf-like frequencies.

    Identity ``k`` (1-based rank, randomly permuted) gets probability
    proportional to ``k ** -exponent``.
    """
    ranks = np.arange(1, n_identities + 1, dtype=np.float64)
    probs = ranks ** -exponent
    probs /= probs.sum()
    probs = probs[rng.permutation(n_identities)]
    return rng.multinomial(total, probs)


def sample_unlabeled(universe, total, zipf_exponent=1.5, noise_sigma=0.1, seed=0,
                     identities=None):
    """Long-tailed unlabeled samples of unknown identities.

    ``identities`` restricts sampling to a subset of unknown identity
    indices (0-based within the unknown set); the default uses all of
    them. Labels are all :data:`UNLABELED`; true global ids are kept in
    ``SampleSet.identities``.
    """
    if total < 1:
        raise ValueError("total must be at least 1")
    rng = np.random.default_rng([seed, 2])
    pool = np.arange(universe.n_unknown) if identities is None else np.asarray(identities)
    counts = zipf_counts(pool.size, total, zipf_exponent, rng)
    local = np.repeat(pool, counts)
    x = _noisy(rng, universe.unknown_centers[local], noise_sigma)
    return SampleSet(
        x, np.full(total, UNLABELED), "unknown", local + universe.n_known
    )


def sample_heldout(universe, identities, per_identity, noise_sigma, seed):
    """Labeled samples of unknown identities for evaluation.

    Labels are global identity ids (all ``>= n_known``).
    """
    rng = np.random.default_rng([seed, 3])
    local = np.repeat(np.asarray(identities), per_identity)
    x = _noisy(rng, universe.unknown_centers[local], noise_sigma)
    ids = local + universe.n_known
    return SampleSet(x, ids, "unknown", ids.copy())


def plant_known(unlabeled, universe, count, noise_sigma, seed):
    """Append ``count`` unlabeled samples drawn from known centers.

    Simulates identity overlap between the labeled and unlabeled pools.
    """
    rng = np.random.default_rng([seed, 4])
    ids = rng.integers(0, universe.n_known, size=count)
    x = _noisy(rng, universe.known_centers[ids], noise_sigma)
    return SampleSet(
        np.vstack([unlabeled.inputs, x]),
        np.concatenate([unlabeled.labels, np.full(count, UNLABELED)]),
        "mixed",
        np.concatenate([unlabeled.identities, ids]),
    )


def alternate_view(inputs):
    """Deterministic second view of each input: first coordinate negated."""
    x = np.array(inputs, dtype=np.float64, copy=True)
    x[..., 0] = -x[..., 0]
    return x


def labeled_count(batch_size, labeled_fraction):
    """Round-half-up share of labeled rows in a mixed batch."""
    return int(np.floor(labeled_fraction * batch_size + 0.5))


@dataclass
class Batch:
    labeled_inputs: np.ndarray
    labels: np.ndarray
    unlabeled_inputs: np.ndarray

    @property
    def size(self):
        return self.labeled_inputs.shape[0] + self.unlabeled_inputs.shape[0]


class _Stream:
    """Shuffled index stream; reshuffles whenever it runs dry."""

    def __init__(self, n, rng):
        self.n = n
        self.rng = rng
        self.order = np.empty(0, dtype=np.intp)
        self.pos = 0

    def start_epoch(self):
        self.order = self.rng.permutation(self.n)
        self.pos = 0

    def remaining(self):
        return self.order.size - self.pos

    def take(self, k):
        out = self.order[self.pos:self.pos + k]
        self.pos += out.size
        return out

    def take_cycling(self, k):
        parts = []
        while k > 0:
            if self.remaining() == 0:
                self.start_epoch()
            part = self.take(k)
            parts.append(part)
            k -= part.size
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.intp)


class BatchComposer:
    """Mixed labeled/unlabeled batches.

    An epoch ends when the labeled pool is exhausted: :meth:`next_batch`
    then returns ``None`` and the next call starts a fresh shuffle. The
    final batch of an epoch may carry fewer labeled rows. Unlabeled rows
    are drawn without replacement and reshuffled whenever that pool runs
    out. Labeled and unlabeled orders come from independent streams.
    """

    def __init__(self, labeled, unlabeled, batch_size, labeled_fraction, rng):
        if batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0 < labeled_fraction < 1:
            raise ValueError("labeled_fraction must lie strictly between 0 and 1")
        self.labeled = labeled
        self.unlabeled = unlabeled
        self.batch_size = batch_size
        self.n_labeled = labeled_count(batch_size, labeled_fraction)
        self.n_unlabeled = batch_size - self.n_labeled
        seeds = rng.integers(0, 2**63 - 1, size=2)
        self._lab = _Stream(len(labeled), np.random.default_rng(seeds[0]))
        self._unl = _Stream(len(unlabeled) if unlabeled is not None else 0,
                            np.random.default_rng(seeds[1]))
        self._in_epoch = False

    def next_batch(self):
        if not self._in_epoch:
            self._lab.start_epoch()
            self._in_epoch = True
        if self._lab.remaining() == 0:
            self._in_epoch = False
            return None
        li = self._lab.take(self.n_labeled)
        if self._unl.n:
            ui = self._unl.take_cycling(self.n_unlabeled)
            u = self.unlabeled.inputs[ui]
        else:
            u = np.empty((0, self.labeled.dim))
        return Batch(self.labeled.inputs[li], self.labeled.labels[li], u)

    def epoch(self):
        """Iterate over the batches of one epoch."""
        while (batch := self.next_batch()) is not None:
            yield batch


def compose_batch(labeled, unlabeled, batch_size, labeled_fraction, rng):
    """One mixed batch drawn without replacement; see :class:`BatchComposer`."""
    return BatchComposer(labeled, unlabeled, batch_size, labeled_fraction, rng).next_batch()


def write_dataset(samples, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_dataset(samples))


def format_dataset(samples):
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION} {samples.dim} {len(samples)}"]
    for label, row in zip(samples.labels, samples.inputs):
        lines.append(" ".join([str(int(label))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def read_dataset(path):
    """Parse a dataset file into a :class:`SampleSet`."""
    with open(path, encoding="ascii") as fh:
        text = fh.read()
    return parse_dataset(text)


def parse_dataset(text):
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != FORMAT_TAG:
        raise DatasetFormatError(f"bad header line: {lines[0]!r}")
    if head[1] != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {head[1]!r}")
    try:
        dim, count = int(head[2]), int(head[3])
    except ValueError as exc:
        raise DatasetFormatError(f"bad header line: {lines[0]!r}") from exc
    body = [l for l in lines[1:] if l.strip()]
    if len(body) != count:
        raise DatasetFormatError(f"header declares {count} rows, found {len(body)}")
    labels = np.empty(count, dtype=np.int64)
    x = np.empty((count, dim))
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != dim + 1:
            raise DatasetFormatError(f"row {i + 1}: expected {dim + 1} fields, got {len(parts)}")
        try:
            labels[i] = int(parts[0])
            x[i] = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DatasetFormatError(f"row {i + 1}: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise DatasetFormatError("dataset contains non-finite values")
    unl = labels == UNLABELED
    provenance = "unknown" if unl.all() and count else "known"
    if unl.any() and not unl.all():
        provenance = "mixed"
    return SampleSet(x, labels, provenance)
