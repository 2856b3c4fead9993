import numpy as np

EPS = 1e-7


def bce_loss(pred, target, eps: float = EPS):
    """Mean binary cross-entropy and its gradient w.r.t. ``pred``.

    ``pred`` is clamped to ``[eps, 1 - eps]``; the gradient is evaluated at the
    clamped value so saturated outputs still receive a signal.  Works on
    scalars or arrays (mean over all elements).
    """
    p = np.clip(np.asarray(pred, dtype=np.float64), eps, 1.0 - eps)
    t = np.asarray(target, dtype=np.float64)
    loss = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    grad = (-(t / p) + (1.0 - t) / (1.0 - p)) / loss.size
    return float(loss.mean()), grad
