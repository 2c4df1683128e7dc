"""Dense differentiable primitives with explicit backward passes, Adam,
and a finite-difference gradient checker.

Everything is float64. Forward functions return the value (plus whatever
the matching backward needs); backwards return exact analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import IntegrityError, ShapeError
from .backend import kernels


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


# --- affine ------------------------------------------------------------------

def affine_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w.T + b with x (n, f_in), w (f_out, f_in), b (f_out,)."""
    if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ShapeError(f"affine shapes incompatible: {x.shape}, {w.shape}, {b.shape}")
    return x @ w.T + b


def affine_bwd(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Returns (dx, dw, db) for y = x @ w.T + b."""
    if dy.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"dy shape {dy.shape} incompatible with affine")
    return dy @ w, dy.T @ x, dy.sum(axis=0)


# --- elementwise activations ---------------------------------------------------

def leaky_relu_fwd(x, slope: float = 0.2):
    return np.where(x >= 0, x, slope * x)

def leaky_relu_bwd(x, dy, slope: float = 0.2):
    return np.where(x >= 0, 1.0, slope) * dy


def elu_fwd(x, alpha: float = 1.0):
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))

def elu_bwd(x, y, dy, alpha: float = 1.0):
    # for x <= 0 the derivative is y + alpha
    return np.where(x > 0, 1.0, y + alpha) * dy


def sigmoid_fwd(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out

def sigmoid_bwd(y, dy):
    return y * (1.0 - y) * dy


def identity_fwd(x):
    return x

_ACTIVATIONS = {
    "elu": (elu_fwd, lambda x, y, dy: elu_bwd(x, y, dy)),
    "sigmoid": (sigmoid_fwd, lambda x, y, dy: sigmoid_bwd(y, dy)),
    "identity": (identity_fwd, lambda x, y, dy: dy),
}

def activation(name: str):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ShapeError(f"unknown activation {name!r}") from None


# --- segment softmax -----------------------------------------------------------

def check_seg_ptr(seg_ptr: np.ndarray, n_elems: int) -> np.ndarray:
    seg_ptr = np.ascontiguousarray(seg_ptr, dtype=np.int64)
    if seg_ptr[0] != 0 or seg_ptr[-1] != n_elems:
        raise IntegrityError("seg_ptr does not cover the input exactly")
    d = np.diff(seg_ptr)
    if (d < 0).any():
        raise IntegrityError("seg_ptr offsets must be nondecreasing")
    if (d == 0).any():
        raise IntegrityError("empty segment in seg_ptr")
    return seg_ptr


def segment_softmax_fwd(logits: np.ndarray, seg_ptr: np.ndarray) -> np.ndarray:
    """Softmax restricted to each contiguous segment (each sums to one)."""
    logits = _f64(logits)
    seg_ptr = check_seg_ptr(seg_ptr, len(logits))
    return kernels.seg_softmax_fwd(logits, seg_ptr)


def segment_softmax_bwd(y: np.ndarray, dy: np.ndarray, seg_ptr: np.ndarray) -> np.ndarray:
    seg_ptr = check_seg_ptr(seg_ptr, len(y))
    return kernels.seg_softmax_bwd(_f64(y), _f64(dy), seg_ptr)


# --- dropout -------------------------------------------------------------------

def dropout_fwd(x: np.ndarray, p: float, training: bool,
                rng: Optional[np.random.Generator] = None):
    """Inverted dropout: returns (y, keep) where keep is the scaled mask
    (None outside training, meaning identity)."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ShapeError("training-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * keep, keep


def dropout_bwd(dy: np.ndarray, keep) -> np.ndarray:
    return dy if keep is None else dy * keep


# --- MSE loss ------------------------------------------------------------------

def mse_fwd(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(d * d))


def mse_bwd(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


# --- Adam ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam over a flat list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    lr_decay: float = 1.0
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-3,
                   lr_decay: float = 1.0, **kw) -> "AdamState":
        st = cls(lr=lr, lr_decay=lr_decay, **kw)
        st.first_moment = [np.zeros_like(p) for p in params]
        st.second_moment = [np.zeros_like(p) for p in params]
        return st

    def decay_lr(self) -> None:
        """Called once per epoch boundary by the training loop."""
        self.lr *= self.lr_decay


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update over aligned parameter/gradient lists."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state length mismatch")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)


# --- finite-difference gradient checker -----------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: int
    worst_index: tuple
    n_checked: int

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def grad_check(loss_and_grads: Callable[[], tuple[float, list[np.ndarray]]],
               params: list[np.ndarray], h: float = 1e-5,
               max_entries_per_param: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """Central finite differences against the closure's analytic gradients.

    The closure must be deterministic (dropout off) and read ``params`` in
    place. Relative error uses |fd - an| / max(|fd| + |an|, 1e-8).
    """
    _, analytic = loss_and_grads()
    worst = (0.0, -1, ())
    n_checked = 0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        idxs = range(flat.size)
        if max_entries_per_param is not None and flat.size > max_entries_per_param:
            gen = rng or np.random.default_rng(0)
            idxs = gen.choice(flat.size, size=max_entries_per_param, replace=False)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + h
            f_plus, _ = loss_and_grads()
            flat[k] = orig - h
            f_minus, _ = loss_and_grads()
            flat[k] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            an = analytic[pi].reshape(-1)[k]
            rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-8)
            n_checked += 1
            if rel > worst[0]:
                worst = (rel, pi, np.unravel_index(k, p.shape))
    return GradCheckReport(max_rel_err=worst[0], worst_param=worst[1],
                           worst_index=worst[2], n_checked=n_checked)
