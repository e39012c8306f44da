"""Dense float64 math shared by the cell, the model and the gradient checks.

Vectors and matrices are plain ``numpy`` float64 arrays. Randomness comes from
``numpy.random.Generator`` (PCG64), which is reproducible for a fixed seed.
"""

import numpy as np

DTYPE = np.float64


def make_rng(seed):
    """Return a PCG64-backed generator; equal seeds give equal streams."""
    return np.random.default_rng(np.uint64(seed))


def as_vector(v):
    v = np.asarray(v, dtype=DTYPE)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    return v


def _float(x):
    # float64 at least; wider float inputs (longdouble) keep their precision
    x = np.asarray(x)
    return x.astype(np.result_type(x.dtype, DTYPE), copy=False)


def matvec(m, v):
    m = np.asarray(m, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"cannot multiply {m.shape} matrix by {v.shape} vector")
    return m @ v


def sigmoid(x):
    """Logistic function, evaluated branch-wise so exp never overflows."""
    x = _float(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_elem(x):
    return np.tanh(_float(x))


def softmax(z):
    z = _float(z)
    e = np.exp(z - z.max())
    return e / e.sum()


def log_softmax(z):
    z = _float(z)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def uniform_init(rng, rows, cols, scale):
    """Draw a ``rows x cols`` matrix i.i.d. from U[-scale, scale].

    ``scale == 0`` is allowed and yields zeros (the draw still advances ``rng``
    so that layouts stay aligned across scales).
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    return rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale


def finite_diff_gradient(loss_fn, theta, h=1e-5):
    """Central-difference gradient of ``loss_fn`` at the flat vector ``theta``.

    ``theta`` is perturbed in place one coordinate at a time and restored
    afterwards, so it may be a view that ``loss_fn`` reads through (for
    example the flat buffer behind a model's weights). ``loss_fn`` is called
    as ``loss_fn(theta)`` and must return a scalar.

    In float64 the difference quotient carries a rounding floor of roughly
    ``eps * |L| / h`` (about 1e-10 for L ~ 10, h = 1e-5). Pass a ``theta`` of
    dtype ``np.longdouble`` to push that floor down by three orders of
    magnitude when checking very small gradient entries.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta)
    if theta.ndim != 1:
        raise ValueError("theta must be a flat vector")
    grad = np.zeros(theta.shape, dtype=DTYPE)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        up = loss_fn(theta)
        theta[i] = old - h
        down = loss_fn(theta)
        theta[i] = old
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss while perturbing coordinate {i}")
        # difference in the loss's own precision before narrowing to float64
        grad[i] = (up - down) / (2 * h)
    return grad


def relative_error(a, b, floor=1e-8):
    """Elementwise |a - b| / max(floor, |a| + |b|)."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    return np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))
