import numpy as np


def central_diff(f, arrays, step=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. each array in ``arrays`` (perturbed in place)."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + step
            fp = f()
            a[i] = old - step
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * step)
        out[name] = g
    return out


def max_rel_err(a, b, atol=1e-6):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), atol), initial=0.0))
