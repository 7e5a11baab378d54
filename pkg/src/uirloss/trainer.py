"""Two-phase training with SGD + momentum.

Phase one minimizes the ArcFace cross-entropy on labeled data until the
epoch-mean loss plateaus. Phase two keeps the batch size, fills a quarter
of each batch with unlabeled samples and minimizes
``mean CE(labeled) + w * mean UIR(unlabeled)``.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import losses
from .data import UNLABELED, BatchComposer
from .filtering import filter_overlap
from .model import backward, forward, init_model

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    labeled_fraction: float = 0.75
    uir_weight: float = 0.1
    margin: float = 0.5
    scale: float = 64.0
    stabilized: bool = True
    supervised_epochs: int = 50
    plateau_tol: float = 1e-4
    plateau_patience: int = 3
    semisup_epochs: int = 10
    reset_velocity: bool = True
    # re-run the overlap filter on the pool with the current model each epoch
    refilter_each_epoch: bool = False
    filter_threshold: float = 0.9
    weight_decay: float = 0.0
    hidden: tuple = (64, 64)
    d_embed: int = 64
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.lr < 0 or self.momentum < 0:
            raise ValueError("lr and momentum must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0 < self.labeled_fraction <= 1:
            raise ValueError("labeled_fraction must lie in (0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.uir_weight < 0:
            raise ValueError("uir_weight must be non-negative")
        if not 0 <= self.margin < np.pi / 2:
            raise ValueError("margin must lie in [0, pi/2)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0 < self.filter_threshold <= 1:
            raise ValueError("filter_threshold must lie in (0, 1]")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    sup_loss: float
    uir_loss: float
    combined_loss: float
    train_accuracy: float
    steps: int
    skipped_degenerate: int
    wall_time: float
    warning: str = ""


@dataclass
class TrainLog:
    batch_size: int
    records: list = field(default_factory=list)
    # per-step (sup, uir, combined); filled only when step recording is on
    steps: list = field(default_factory=list)
    velocity: list = field(default=None, repr=False)

    def to_dict(self):
        return {"batch_size": self.batch_size, "records": [asdict(r) for r in self.records]}


def sgd_step(params, grads, lr, momentum, velocity):
    """In-place momentum update: ``v <- mu v - lr g``; ``p <- p + v``."""
    if len(params) != len(grads) or len(params) != len(velocity):
        raise ValueError("params, grads and velocity must have equal length")
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: {p.shape}, {g.shape}, {v.shape}")
        v *= momentum
        v -= lr * g
        p += v
    return params


def _decayed(grads, model, wd):
    """Add ``wd * p`` to the gradients of weight matrices (not biases)."""
    if not wd or grads is None:
        return grads
    return [g + wd * p if p.ndim == 2 else g for g, p in zip(grads, model.parameters())]


def _check_labels(labeled, n_known):
    if len(labeled) == 0:
        raise ValueError("no labeled data")
    if np.any(labeled.labels < 0) or np.any(labeled.labels >= n_known):
        raise ValueError("labeled set contains labels outside the known identities")


def supervised_grads(model, inputs, labels, cfg):
    """Mean ArcFace CE over valid rows, its parameter gradients and accuracy count."""
    trace = forward(model, inputs)
    valid = trace.valid
    nv = int(valid.sum())
    if nv == 0:
        return 0.0, None, 0, trace.n_skipped
    cos = trace.cosines
    logits = losses.batch_arcface_logits(cos, labels, cfg.scale, cfg.margin)
    values, g_logits = losses.batch_cross_entropy(logits, labels)
    g_logits = np.where(valid[:, None], g_logits, 0.0) / nv
    g_cos = losses.batch_arcface_backward(cos, labels, g_logits, cfg.scale, cfg.margin)
    grads = backward(model, trace, g_cos)
    correct = int(np.sum((np.argmax(cos, axis=1) == labels) & valid))
    return float(values[valid].mean()), grads, correct, trace.n_skipped


def uir_grads(model, inputs, cfg):
    """Mean rejection loss over valid rows of an unlabeled block and its gradients."""
    trace = forward(model, inputs)
    valid = trace.valid
    nv = int(valid.sum())
    if nv == 0:
        return 0.0, None, trace.n_skipped
    values, g_logits = losses.batch_uir_loss(cfg.scale * trace.cosines, cfg.stabilized)
    g_logits = np.where(valid[:, None], g_logits, 0.0) / nv
    grads = backward(model, trace, g_logits, s=cfg.scale)
    return float(values[valid].mean()), grads, trace.n_skipped


def _plateaued(history, tol, patience):
    if len(history) <= patience:
        return False
    recent = history[-(patience + 1):]
    return all(prev - cur < tol for prev, cur in zip(recent, recent[1:]))


def _zero_like(model):
    return [np.zeros_like(p) for p in model.parameters()]


def train_supervised(config, labeled, model=None, n_known=None, velocity=None):
    """Phase one. Returns ``(model, log)``.

    A fresh model is initialized from ``config.seed`` unless one is given.
    Stops after ``supervised_epochs`` or once the epoch-mean loss has
    improved by less than ``plateau_tol`` for ``plateau_patience``
    consecutive epochs.
    """
    cfg = config
    if model is None:
        n_known = n_known if n_known is not None else int(labeled.labels.max()) + 1
        model = init_model(labeled.dim, n_known, cfg.hidden, cfg.d_embed, seed=cfg.seed)
    _check_labels(labeled, model.n_known)
    rng = np.random.default_rng([cfg.seed, 10])
    params = model.parameters()
    velocity = _zero_like(model) if velocity is None else velocity
    tlog = TrainLog(cfg.batch_size)
    history = []
    n = len(labeled)
    for epoch in range(cfg.supervised_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        tot, correct, steps, skipped = 0.0, 0, 0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, ok, sk = supervised_grads(model, labeled.inputs[idx], labeled.labels[idx], cfg)
            skipped += sk
            if grads is not None:
                sgd_step(params, _decayed(grads, model, cfg.weight_decay), cfg.lr, cfg.momentum,
                         velocity)
            tot += loss
            correct += ok
            steps += 1
        mean = tot / steps
        history.append(mean)
        tlog.records.append(EpochRecord(
            "supervised", epoch, mean, 0.0, mean, correct / n, steps, skipped,
            time.perf_counter() - t0,
        ))
        log.debug("supervised epoch %d loss %.5f acc %.4f", epoch, mean, correct / n)
        if _plateaued(history, cfg.plateau_tol, cfg.plateau_patience):
            break
    tlog.velocity = velocity
    return model, tlog


def train_semisupervised(config, model, labeled, unlabeled, record_steps=False, velocity=None):
    """Phase two on a supervised model and an already-filtered unlabeled pool.

    ``velocity`` carries optimizer state over from phase one when
    ``config.reset_velocity`` is false. An empty unlabeled pool degrades to
    supervised steps and the epoch records carry a warning.
    """
    cfg = config
    _check_labels(labeled, model.n_known)
    if unlabeled is not None and len(unlabeled) and np.any(unlabeled.labels != UNLABELED):
        raise ValueError("unlabeled pool contains labeled rows")
    params = model.parameters()
    if cfg.reset_velocity or velocity is None:
        velocity = _zero_like(model)
    have_unl = unlabeled is not None and len(unlabeled) > 0
    warning = "" if have_unl else "empty unlabeled pool; supervised steps only"
    if not have_unl:
        log.warning(warning)
    frac = cfg.labeled_fraction if have_unl and cfg.labeled_fraction < 1 else None
    rng = np.random.default_rng([cfg.seed, 20])
    if frac is not None:
        composer = BatchComposer(labeled, unlabeled, cfg.batch_size, frac, rng)
    tlog = TrainLog(cfg.batch_size)
    weights = losses.LossWeights(cfg.uir_weight)
    n = len(labeled)
    for epoch in range(cfg.semisup_epochs):
        t0 = time.perf_counter()
        if frac is not None and cfg.refilter_each_epoch and epoch > 0:
            pool, _ = filter_overlap(model, unlabeled, cfg.filter_threshold, s=cfg.scale)
            if len(pool) == 0:
                frac, warning = None, "unlabeled pool emptied by re-filtering; supervised steps only"
                log.warning(warning)
            else:
                composer = BatchComposer(labeled, pool, cfg.batch_size, frac, rng)
        sup_tot, uir_tot, comb_tot, correct, steps, skipped = 0.0, 0.0, 0.0, 0, 0, 0
        if frac is not None:
            batches = ((b.labeled_inputs, b.labels, b.unlabeled_inputs) for b in composer.epoch())
        else:
            order = rng.permutation(n)
            batches = (
                (labeled.inputs[order[i:i + cfg.batch_size]],
                 labeled.labels[order[i:i + cfg.batch_size]], None)
                for i in range(0, n, cfg.batch_size)
            )
        for x_lab, y_lab, x_unl in batches:
            l_sup, g_sup, ok, sk = supervised_grads(model, x_lab, y_lab, cfg)
            skipped += sk
            l_uir, g_uir = 0.0, None
            if x_unl is not None and x_unl.shape[0]:
                l_uir, g_uir, sk = uir_grads(model, x_unl, cfg)
                skipped += sk
            grads = _decayed(_combine(g_sup, g_uir, weights.w), model, cfg.weight_decay)
            if grads is not None:
                sgd_step(params, grads, cfg.lr, cfg.momentum, velocity)
            l_comb = losses.combined_loss(l_sup, l_uir, weights)
            if record_steps:
                tlog.steps.append((l_sup, l_uir, l_comb))
            sup_tot += l_sup
            uir_tot += l_uir
            comb_tot += l_comb
            correct += ok
            steps += 1
        tlog.records.append(EpochRecord(
            "semisupervised", epoch, sup_tot / steps, uir_tot / steps, comb_tot / steps,
            correct / n, steps, skipped, time.perf_counter() - t0, warning,
        ))
        log.debug("semisup epoch %d sup %.5f uir %.5f", epoch, sup_tot / steps, uir_tot / steps)
    tlog.velocity = velocity
    return model, tlog


def _combine(g_sup, g_uir, w):
    if g_sup is None and g_uir is None:
        return None
    if g_uir is None or (w == 0 and g_sup is not None):
        return g_sup
    scaled = [w * g for g in g_uir]
    if g_sup is None:
        return scaled
    return [a + b for a, b in zip(g_sup, scaled)]


def evaluate_supervised_loss(model, labeled, cfg):
    """Mean ArcFace CE over the whole labeled set (no update)."""
    trace = forward(model, labeled.inputs)
    logits = losses.batch_arcface_logits(trace.cosines, labeled.labels, cfg.scale, cfg.margin)
    values, _ = losses.batch_cross_entropy(logits, labeled.labels)
    return float(values[trace.valid].mean())
