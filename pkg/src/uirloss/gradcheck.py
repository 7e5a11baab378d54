"""Central finite-difference checks for every analytic gradient.

Each check draws random instances, compares the analytic gradient with
``(f(x + h e_k) - f(x - h e_k)) / 2h`` and reports the worst relative error
``|a - b| / max(|a|, |b|, 1e-8)`` measured in the 2-norm over the whole
gradient vector.
"""

import numpy as np

from . import losses
from .model import backward, flatten, forward, init_model, unflatten_into

H = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f, x, h=H):
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g


def relative_error(a, b):
    a = np.ravel(a)
    b = np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))


def _cosines(rng, n):
    return rng.uniform(-0.95, 0.95, size=n)


def check_cross_entropy(rng, instances=100):
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 12))
        z = rng.normal(scale=3.0, size=n)
        y = int(rng.integers(n))
        analytic = losses.cross_entropy(z, y).grad_logits
        numeric = numeric_grad(lambda v: losses.cross_entropy(v, y).value, z)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def check_uir(rng, stabilized, instances=100):
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 12))
        z = rng.normal(scale=3.0, size=n)
        analytic = losses.uir_loss(z, stabilized).grad_logits
        numeric = numeric_grad(lambda v: losses.uir_loss(v, stabilized).value, z)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def check_arcface(rng, instances=100):
    """Cross-entropy of ArcFace logits, differentiated w.r.t. the cosines."""
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 12))
        c = _cosines(rng, n)
        y = int(rng.integers(n))
        s = float(rng.uniform(1.0, 64.0))
        m = float(rng.uniform(0.0, 0.8))

        def f(v):
            return losses.cross_entropy(losses.arcface_logits(v, y, s, m), y).value

        g_logits = losses.cross_entropy(losses.arcface_logits(c, y, s, m), y).grad_logits
        analytic = losses.arcface_backward(c, y, g_logits, s, m)
        worst = max(worst, relative_error(analytic, numeric_grad(f, c)))
    return worst


def composite_loss(model, x_lab, y_lab, x_unl, s, m, w, stabilized=True):
    """``mean CE(arcface) + w * mean UIR`` and its parameter gradients."""
    tr = forward(model, x_lab)
    logits = losses.batch_arcface_logits(tr.cosines, y_lab, s, m)
    ce, g = losses.batch_cross_entropy(logits, y_lab)
    g_cos = losses.batch_arcface_backward(tr.cosines, y_lab, g / len(y_lab), s, m)
    grads = backward(model, tr, g_cos)

    tu = forward(model, x_unl)
    uir, gu = losses.batch_uir_loss(s * tu.cosines, stabilized)
    grads_u = backward(model, tu, gu / len(x_unl), s=s)
    value = losses.combined_loss(ce.mean(), uir.mean(), losses.LossWeights(w))
    return value, [a + w * b for a, b in zip(grads, grads_u)]


def check_model(rng, instances=100, d_input=6, hidden=(10,), d_embed=8, n_known=5,
                s=16.0, m=0.5, w=0.1):
    """Full backward pass of a two-layer network under the composite loss."""
    worst = 0.0
    for _ in range(instances):
        model = init_model(d_input, n_known, hidden, d_embed, seed=int(rng.integers(2**31)))
        for p in model.parameters():
            p += 0.1 * rng.standard_normal(p.shape)
        x_lab = rng.standard_normal((3, d_input))
        y_lab = rng.integers(n_known, size=3)
        x_unl = rng.standard_normal((2, d_input))
        _, grads = composite_loss(model, x_lab, y_lab, x_unl, s, m, w)
        theta = flatten(model.parameters())
        probe = model.copy()

        def f(v):
            unflatten_into(probe, v)
            return composite_loss(probe, x_lab, y_lab, x_unl, s, m, w)[0]

        worst = max(worst, relative_error(flatten(grads), numeric_grad(f, theta)))
    return worst


def run_all(seed=0, instances=100):
    """Run every check; returns ``{name: max relative error}``."""
    rng = np.random.default_rng(seed)
    return {
        "cross_entropy": check_cross_entropy(rng, instances),
        "uir_plain": check_uir(rng, False, instances),
        "uir_stabilized": check_uir(rng, True, instances),
        "arcface": check_arcface(rng, instances),
        "model_backward": check_model(rng, instances),
    }
