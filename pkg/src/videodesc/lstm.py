"""Single-timestep LSTM and vanilla RNN cells with hand-written backward passes.

The four gate blocks are stored stacked, in the order input, forget, output,
candidate::

    W_x = [W_xi; W_xf; W_xo; W_xc]    (4H x I)
    W_h = [W_hi; W_hf; W_ho; W_hc]    (4H x H)
    b   = [b_i;  b_f;  b_o;  b_c]     (4H,)  or None

so one matrix-vector product per input evaluates all gates. The per-gate
matrices are exposed as row-block views (``p.W_xi`` etc.).
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DTYPE, sigmoid, tanh_elem, uniform_init

GATES = ("i", "f", "o", "c")


@dataclass
class LstmLayerParams:
    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        four_h, in_dim = self.W_x.shape
        if four_h % 4 or self.W_h.shape != (four_h, four_h // 4):
            raise ValueError(f"inconsistent LSTM shapes {self.W_x.shape}, {self.W_h.shape}")
        if self.b is not None and self.b.shape != (four_h,):
            raise ValueError(f"bias must have length {four_h}, got {self.b.shape}")

    @property
    def input_dim(self):
        return self.W_x.shape[1]

    @property
    def hidden_dim(self):
        return self.W_h.shape[1]

    @property
    def has_bias(self):
        return self.b is not None

    def block(self, name):
        """Row block of a stacked parameter, e.g. ``block("W_xf")`` or ``block("b_o")``."""
        stem, gate = name.rsplit("_", 1)
        if stem in ("W", "b") and len(gate) == 2:
            # "W_xf" -> stacked "W_x", gate "f"
            stem, gate = f"W_{gate[0]}", gate[1]
        k = GATES.index(gate)
        arr = getattr(self, stem)
        if arr is None:
            return None
        H = self.hidden_dim
        return arr[k * H:(k + 1) * H]

    def named_blocks(self):
        """Yield ``(name, array)`` for every per-gate matrix and bias vector."""
        for src in ("x", "h"):
            for g in GATES:
                yield f"W_{src}{g}", self.block(f"W_{src}{g}")
        if self.b is not None:
            for g in GATES:
                yield f"b_{g}", self.block(f"b_{g}")

    def zeros_like(self):
        return LstmLayerParams(
            np.zeros_like(self.W_x),
            np.zeros_like(self.W_h),
            None if self.b is None else np.zeros_like(self.b),
        )


def _gate_property(name):
    return property(lambda self: self.block(name))


for _src in ("x", "h"):
    for _g in GATES:
        setattr(LstmLayerParams, f"W_{_src}{_g}", _gate_property(f"W_{_src}{_g}"))
for _g in GATES:
    setattr(LstmLayerParams, f"b_{_g}", _gate_property(f"b_{_g}"))


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim):
        return cls(np.zeros(hidden_dim, dtype=DTYPE), np.zeros(hidden_dim, dtype=DTYPE))


@dataclass
class StepCache:
    """Everything the backward pass of one step needs."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def init_layer(rng, input_dim, hidden_dim, scale=0.08, biases=True):
    """Uniform weights in [-scale, scale]; biases (if enabled) start at zero."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("layer dimensions must be positive")
    H = hidden_dim
    W_x = uniform_init(rng, 4 * H, input_dim, scale)
    W_h = uniform_init(rng, 4 * H, H, scale)
    b = np.zeros(4 * H, dtype=DTYPE) if biases else None
    return LstmLayerParams(W_x, W_h, b)


def lstm_step_forward(p, x, prev):
    """Advance one LSTM layer by one timestep.

    Inputs:
    - p: LstmLayerParams
    - x: input vector of length p.input_dim
    - prev: LstmState holding h_{t-1} and c_{t-1}

    Returns ``(LstmState, StepCache)`` for time t.
    """
    H = p.hidden_dim
    if x.shape != (p.input_dim,):
        raise ValueError(f"input has shape {x.shape}, layer expects ({p.input_dim},)")
    if prev.h.shape != (H,) or prev.c.shape != (H,):
        raise ValueError(f"state does not match hidden size {H}")

    a = p.W_x @ x + p.W_h @ prev.h
    if p.b is not None:
        a += p.b
    i = sigmoid(a[:H])
    f = sigmoid(a[H:2 * H])
    o = sigmoid(a[2 * H:3 * H])
    g = tanh_elem(a[3 * H:])
    c = f * prev.c + i * g
    tanh_c = tanh_elem(c)
    h = o * tanh_c
    cache = StepCache(x, prev.h, prev.c, i, f, o, g, c, tanh_c, h)
    return LstmState(h, c), cache


def lstm_step_backward(p, cache, dh, dc, grads=None):
    """Backpropagate through one step.

    ``dh`` and ``dc`` are the loss gradients arriving at h_t and c_t. Parameter
    gradients are accumulated into ``grads`` (an LstmLayerParams of zeros is
    allocated when it is None).

    Returns ``(grads, dx, dh_prev, dc_prev)``.
    """
    H = p.hidden_dim
    if dh.shape != (H,) or dc.shape != (H,):
        raise ValueError(f"upstream gradients must have length {H}")
    if grads is None:
        grads = p.zeros_like()

    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c ** 2)
    da = np.empty(4 * H, dtype=DTYPE)
    da[:H] = dc_total * cache.g * cache.i * (1.0 - cache.i)
    da[H:2 * H] = dc_total * cache.c_prev * cache.f * (1.0 - cache.f)
    da[2 * H:3 * H] = dh * cache.tanh_c * cache.o * (1.0 - cache.o)
    da[3 * H:] = dc_total * cache.i * (1.0 - cache.g ** 2)

    grads.W_x += np.outer(da, cache.x)
    grads.W_h += np.outer(da, cache.h_prev)
    if grads.b is not None:
        grads.b += da
    dx = p.W_x.T @ da
    dh_prev = p.W_h.T @ da
    dc_prev = dc_total * cache.f
    return grads, dx, dh_prev, dc_prev


@dataclass
class RnnLayerParams:
    W_xh: np.ndarray
    W_hh: np.ndarray
    nonlinearity: str = "tanh"

    def __post_init__(self):
        H = self.W_hh.shape[0]
        if self.W_hh.shape != (H, H) or self.W_xh.shape[0] != H:
            raise ValueError(f"inconsistent RNN shapes {self.W_xh.shape}, {self.W_hh.shape}")
        if self.nonlinearity not in ("tanh", "sigmoid"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")


def rnn_step_forward(p, x, h_prev):
    """h_t = f(W_xh x_t + W_hh h_{t-1}) with f = tanh or sigmoid."""
    if x.shape != (p.W_xh.shape[1],) or h_prev.shape != (p.W_hh.shape[0],):
        raise ValueError("input or state does not match RNN layer shapes")
    a = p.W_xh @ x + p.W_hh @ h_prev
    return tanh_elem(a) if p.nonlinearity == "tanh" else sigmoid(a)
