"""Central finite differences for checking hand-written gradients."""

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Estimate ``d f / d x`` element by element; ``x`` is perturbed in place and restored."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest component-wise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_network(net, x, seed: int = 0, h: float = 1e-4):
    """Compare backprop against finite differences for ``L = sum(w * net(x))``.

    ``net`` should be float64.  Returns the max relative error over all
    parameters and the input.
    """
    rng = np.random.default_rng(seed)
    out, caches = net.forward(x)
    w = rng.normal(size=out.shape)
    dx, grads = net.backward(caches, w)

    def loss():
        return float(np.sum(w * net.forward(x)[0]))

    worst = rel_error(dx, numeric_grad(loss, x, h))
    for p, g in zip(net.params(), grads):
        worst = max(worst, rel_error(g, numeric_grad(loss, p, h)))
    return worst
