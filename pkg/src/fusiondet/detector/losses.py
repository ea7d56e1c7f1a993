"""Joint detection loss: negative log likelihood for the class head plus a
smooth-L1 box term that fires only for target ROIs (L = L_cls + l*[u=1]*L_box)."""

import numpy as np

PROB_FLOOR = 1e-12


def classification_loss(p, u):
    """-log p_u for one probability row; probabilities clamped at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    return float(-np.log(max(p[int(u)], PROB_FLOOR)))


def smooth_l1(d):
    d = np.asarray(d, dtype=np.float64)
    a = np.abs(d)
    return np.where(a < 1.0, 0.5 * d * d, a - 0.5)


def smooth_l1_grad(d):
    d = np.asarray(d, dtype=np.float64)
    return np.where(np.abs(d) < 1.0, d, np.sign(d))


def bbox_loss(t, v):
    """Sum of smooth-L1 over the four delta coordinates."""
    t = t.as_array() if hasattr(t, "as_array") else np.asarray(t, dtype=np.float64)
    v = v.as_array() if hasattr(v, "as_array") else np.asarray(v, dtype=np.float64)
    return float(smooth_l1(t - v).sum())


def joint_loss(p, u, t, v, lam=1.0):
    """Classification plus gated regression; the box term (and its gradient)
    is exactly zero for background ROIs."""
    loss = classification_loss(p, u)
    if int(u) == 1:
        loss += lam * bbox_loss(t, v)
    return loss


def batch_loss_and_grads(logits, deltas, labels, targets, lam=1.0):
    """Mean joint loss over a ROI minibatch plus gradients for both heads.

    logits: (R, K) raw class scores; deltas: (R, 4K) box outputs; labels:
    (R,) int in [0, K); targets: (R, 4) encoded fg deltas (rows for u=0 are
    ignored).  Returns (l_cls, l_box, grad_logits, grad_deltas); gradients
    are divided by R so the step size is batch-size independent.  lam scales
    the box gradient; l_box is reported unscaled (total = l_cls + lam*l_box).
    """
    r, k = logits.shape
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(r)
    l_cls = float(-np.log(np.maximum(probs[rows, labels], PROB_FLOOR)).mean())
    grad_logits = probs.copy()
    grad_logits[rows, labels] -= 1.0
    grad_logits /= r

    grad_deltas = np.zeros_like(deltas)
    l_box = 0.0
    fg = np.flatnonzero(labels == 1)
    if fg.size and lam != 0.0:
        cols = 4 * 1 + np.arange(4)  # the target-class quadruple
        diff = deltas[np.ix_(fg, cols)] - targets[fg]
        l_box = float(smooth_l1(diff).sum() / r)
        grad_deltas[np.ix_(fg, cols)] = smooth_l1_grad(diff) * (lam / r)
    return l_cls, l_box, grad_logits, grad_deltas
