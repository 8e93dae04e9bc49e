"""Differentiable building blocks: LSTM layer, dense layer, activations,
losses, Adam, and a finite-difference gradient checker.

Tensors are plain numpy arrays, C-contiguous float32 for model math; the
gradient checker runs the same kernels in float64. Every backward returns
exact analytic gradients (L1 uses subgradient 0 at ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .kernels import lstm_bwd_recurrence, lstm_fwd_recurrence
from .rng import Rng

SIGMOID_EPS = 1e-7
BCE_EPS = 1e-7

# ---------------------------------------------------------------------------
# LSTM layer


@dataclass
class LstmParams:
    """One LSTM layer. Gate blocks along the 4H axis are ordered
    (input, forget, cell, output); checkpoints serialize this order as-is."""

    W: np.ndarray  # [4H, I] input weights
    U: np.ndarray  # [4H, H] recurrent weights
    b: np.ndarray  # [4H]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    def validate(self) -> None:
        fourh, h = self.U.shape
        if fourh != 4 * h:
            raise ShapeError(f"U rows: expected 4*hidden={4 * h}, got {fourh}")
        if self.W.shape[0] != fourh:
            raise ShapeError(f"W rows: expected 4*hidden={fourh}, got {self.W.shape[0]}")
        if self.b.shape != (fourh,):
            raise ShapeError(f"b length: expected 4*hidden={fourh}, got {self.b.shape}")


def init_lstm(rng: Rng, input_size: int, hidden_size: int, dtype=np.float32) -> LstmParams:
    """Uniform +-1/sqrt(fan-in) weights, zero biases except forget gate at 1."""
    h = hidden_size
    wb = 1.0 / np.sqrt(input_size)
    ub = 1.0 / np.sqrt(h)
    W = rng.uniform(-wb, wb, (4 * h, input_size)).astype(dtype)
    U = rng.uniform(-ub, ub, (4 * h, h)).astype(dtype)
    b = np.zeros(4 * h, dtype)
    b[h : 2 * h] = 1.0
    return LstmParams(W=W, U=U, b=b)


@dataclass
class LstmCache:
    params: LstmParams
    x: np.ndarray  # [T, B, I]
    gates: tuple  # (gi, gf, gg, go) post-activation, each [T, B, H]
    cells: np.ndarray  # [T, B, H]
    tanhc: np.ndarray  # [T, B, H]
    hidden: np.ndarray  # [T, B, H]
    h0: np.ndarray  # [B, H]
    c0: np.ndarray  # [B, H]
    squeeze: bool  # True when the caller passed a single [T, I] sequence


def lstm_forward_batch(params: LstmParams, x: np.ndarray, h0=None, c0=None):
    """LSTM over a batch of sequences x [T, B, input_size].

    Returns (hidden_seq [T, B, hidden], cache). h0/c0 default to zeros.
    """
    params.validate()
    if x.ndim != 3:
        raise ShapeError(f"inputs rank: expected 3 ([T, B, input]), got {x.ndim}")
    T, B, inp = x.shape
    if T < 1:
        raise ShapeError(f"inputs time axis: expected T >= 1, got {T}")
    if inp != params.input_size:
        raise ShapeError(f"inputs dim 2: expected input_size={params.input_size}, got {inp}")
    H = params.hidden_size
    if h0 is None:
        h0 = np.zeros((B, H), x.dtype)
    if c0 is None:
        c0 = np.zeros((B, H), x.dtype)
    if h0.shape != (B, H):
        raise ShapeError(f"h0 shape: expected {(B, H)}, got {h0.shape}")
    if c0.shape != (B, H):
        raise ShapeError(f"c0 shape: expected {(B, H)}, got {c0.shape}")
    x = np.ascontiguousarray(x)
    # input-side work as one large matmul; the kernel handles the recurrence
    pre = x.reshape(T * B, inp) @ params.W.T
    pre += params.b
    pre = pre.reshape(T, B, 4 * H)
    Ut = np.ascontiguousarray(params.U.T)
    gi, gf, gg, go, cells, tanhc, hidden = lstm_fwd_recurrence(
        pre, Ut, np.ascontiguousarray(h0), np.ascontiguousarray(c0)
    )
    cache = LstmCache(params, x, (gi, gf, gg, go), cells, tanhc, hidden, h0, c0, squeeze=False)
    return hidden, cache


def lstm_forward(params: LstmParams, inputs: np.ndarray, h0=None, c0=None):
    """LSTM over one sequence inputs [T, input_size].

    Returns (hidden_seq [T, hidden], cache); hidden_seq[t] is the state after
    consuming inputs[0..t].
    """
    if inputs.ndim != 2:
        raise ShapeError(f"inputs rank: expected 2 ([T, input]), got {inputs.ndim}")
    x = inputs[:, None, :]
    h0b = None if h0 is None else np.asarray(h0).reshape(1, -1)
    c0b = None if c0 is None else np.asarray(c0).reshape(1, -1)
    hidden, cache = lstm_forward_batch(params, x, h0b, c0b)
    cache.squeeze = True
    return hidden[:, 0, :], cache


def _backward(cache: LstmCache, grad_hidden_seq: np.ndarray, with_params: bool):
    dh = grad_hidden_seq[:, None, :] if cache.squeeze else grad_hidden_seq
    if dh.shape != cache.hidden.shape:
        raise ShapeError(
            f"grad_hidden_seq shape: expected {cache.hidden.shape}, got {grad_hidden_seq.shape}"
        )
    p = cache.params
    gi, gf, gg, go = cache.gates
    da, dh0, dc0 = lstm_bwd_recurrence(
        np.ascontiguousarray(p.U),
        gi,
        gf,
        gg,
        go,
        cache.cells,
        cache.tanhc,
        cache.hidden,
        np.ascontiguousarray(cache.h0),
        np.ascontiguousarray(cache.c0),
        np.ascontiguousarray(dh),
    )
    T, B, four_h = da.shape
    da2 = da.reshape(T * B, four_h)
    dx = (da2 @ p.W).reshape(cache.x.shape)
    if not with_params:
        return None, da, dx, dh0, dc0
    dW = da2.T @ cache.x.reshape(T * B, -1)
    db = da2.sum(axis=0)
    dU = da[0].T @ cache.h0
    if T > 1:
        dU = dU + da[1:].reshape(-1, four_h).T @ cache.hidden[:-1].reshape(-1, p.hidden_size)
    return (dW, dU, db), da, dx, dh0, dc0


def lstm_backward(cache: LstmCache, grad_hidden_seq: np.ndarray):
    """Backpropagate through time.

    grad_hidden_seq matches the forward's hidden_seq shape. Returns
    ((dW, dU, db), grad_inputs, grad_h0, grad_c0) in the caller's layout.
    """
    grads, _, dx, dh0, dc0 = _backward(cache, grad_hidden_seq, with_params=True)
    if cache.squeeze:
        return grads, dx[:, 0, :], dh0[0], dc0[0]
    return grads, dx, dh0, dc0


def lstm_backward_input(cache: LstmCache, grad_hidden_seq: np.ndarray) -> np.ndarray:
    """Input gradients only; the fast path when the layer is frozen."""
    _, _, dx, _, _ = _backward(cache, grad_hidden_seq, with_params=False)
    return dx[:, 0, :] if cache.squeeze else dx


# ---------------------------------------------------------------------------
# Dense layer


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Affine map y = Wx + b; x is [in] or batched [..., in]."""
    out, inp = W.shape
    if x.shape[-1] != inp:
        raise ShapeError(f"x last dim: expected in={inp}, got {x.shape[-1]}")
    if b.shape != (out,):
        raise ShapeError(f"b length: expected out={out}, got {b.shape}")
    return x @ W.T + b


def dense_backward(W: np.ndarray, x: np.ndarray, grad_y: np.ndarray):
    """Gradients for dense_forward. Returns (dW, db, dx)."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_y.reshape(-1, grad_y.shape[-1])
    dW = g2.T @ x2
    db = g2.sum(axis=0)
    dx = grad_y @ W
    return dW, db, dx


# ---------------------------------------------------------------------------
# Activations


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic, clamped into the open interval (0, 1)."""
    with np.errstate(over="ignore"):  # exp overflow saturates, then clamps
        y = 1 / (1 + np.exp(-x))
    return np.clip(y, SIGMOID_EPS, 1 - SIGMOID_EPS).astype(x.dtype, copy=False)

def sigmoid_grad(y: np.ndarray) -> np.ndarray:
    """Derivative w.r.t. the pre-activation, from the forward output y."""
    return y * (1 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_grad(y: np.ndarray) -> np.ndarray:
    """Derivative w.r.t. the pre-activation, from the forward output y."""
    return 1 - y * y


# ---------------------------------------------------------------------------
# Losses


def bce_loss(predictions: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy with log clamp at 1e-7.

    Returns (loss, grad w.r.t. predictions); grad is zero where the clamp
    is active. Targets must be exactly 0 or 1.
    """
    t = np.asarray(targets, np.float64)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("bce_loss targets must contain only 0 or 1")
    p = np.asarray(predictions, np.float64)
    pc = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    n = p.size
    loss = float(-(t * np.log(pc) + (1 - t) * np.log(1 - pc)).sum() / n)
    grad = (pc - t) / (pc * (1 - pc)) / n
    grad[(p < BCE_EPS) | (p > 1 - BCE_EPS)] = 0.0
    return loss, grad.astype(np.asarray(predictions).dtype, copy=False)


def l1_loss(a: np.ndarray, b: np.ndarray):
    """Sum of absolute differences and its subgradient w.r.t. a (0 at ties)."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_loss shapes differ: {a.shape} vs {b.shape}")
    d = a.astype(np.float64, copy=False) - b.astype(np.float64, copy=False)
    return float(np.abs(d).sum()), np.sign(d).astype(a.dtype, copy=False)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected Adam state for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(param: np.ndarray, alpha=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8) -> AdamState:
    zeros = np.zeros_like(param, dtype=np.float32)
    return AdamState(m=zeros.copy(), v=zeros.copy(), alpha=alpha, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(state: AdamState, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update, applied to param in place."""
    if grad.shape != param.shape:
        raise ShapeError(f"grad shape: expected {param.shape}, got {grad.shape}")
    state.step_count += 1
    t = state.step_count
    g = grad.astype(np.float32, copy=False)
    state.m += (1 - state.beta1) * (g - state.m)
    state.v += (1 - state.beta2) * (g * g - state.v)
    mhat = state.m / (1 - state.beta1**t)
    vhat = state.v / (1 - state.beta2**t)
    param -= state.alpha * mhat / (np.sqrt(vhat) + state.epsilon)
    return param


class Adam:
    """Adam over a named parameter dict; one AdamState per tensor."""

    def __init__(self, params: dict[str, np.ndarray], alpha=2e-4, beta1=0.5, beta2=0.999):
        self.params = params
        self.states = {k: adam_init(p, alpha, beta1, beta2) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            adam_step(self.states[name], self.params[name], grad)


# ---------------------------------------------------------------------------
# Sampling

def sample_gaussian(rng: Rng, mean: float, stddev: float, dims) -> np.ndarray:
    return rng.normal(mean, stddev, tuple(dims))


def sample_uniform(rng: Rng, lo: float, hi: float, dims) -> np.ndarray:
    return rng.uniform(lo, hi, tuple(dims))


# ---------------------------------------------------------------------------
# Gradient checking


def finite_difference(f, param: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central differences of scalar f() w.r.t. param, accumulated in float64."""
    num = np.zeros(param.shape, np.float64)
    for i in range(param.size):
        orig = param.flat[i]
        param.flat[i] = orig + eps
        fp = float(f())
        param.flat[i] = orig - eps
        fm = float(f())
        param.flat[i] = orig
        num.flat[i] = (fp - fm) / (2 * eps)
    return num


def grad_check(f, params: dict[str, np.ndarray], eps: float = 1e-3, floor: float = 1e-5):
    """Compare analytic gradients against float64 central differences.

    f() must return (loss, grads) where grads maps the same names as params.
    Returns a per-parameter max relative error report plus the overall max;
    the relative error denominator is floored so near-zero gradients compare
    absolutely.
    """
    _, grads = f()
    report: dict[str, float] = {}
    for name, param in params.items():
        ana = np.asarray(grads[name], np.float64)
        num = finite_difference(lambda: f()[0], param, eps)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        report[name] = float((np.abs(ana - num) / denom).max())
    report["max"] = max(v for k, v in report.items() if k != "max") if report else 0.0
    return report
