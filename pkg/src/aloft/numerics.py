"""Dense tensors and a define-by-run reverse-mode autodiff tape.

Values are plain numpy arrays: ``float32`` is the working precision and
``float64`` is used by the gradient-check suites.  Complex tensors carry the
gradient ``dL/dRe + 1j * dL/dIm`` of a real loss ``L``, so the adjoint of a
complex product ``a * b`` is ``g * conj(b)``.
"""

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import DimensionError, NumericError, ValidationError

_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """An array that records how it was computed.

    A tensor produced by an op whose inputs require gradients keeps its
    parents and a closure mapping the output adjoint to one adjoint per
    parent.  ``backward()`` walks that graph in reverse topological order.
    """

    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValidationError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = topological_order(self)
        adjoints = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoints[key] = pg if key not in adjoints else adjoints[key] + pg


class Parameter(Tensor):
    """A named trainable leaf.  ``grad`` always matches ``value`` in shape."""

    __slots__ = ()

    def __init__(self, value, name):
        super().__init__(value, requires_grad=True, name=name)
        self.zero_grad()

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"

    @property
    def value(self):
        return self.data

    @value.setter
    def value(self, v):
        self.data = np.asarray(v)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def topological_order(root):
    """Nodes reachable from ``root``; every node appears after its inputs."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def sum_rows(g):
    """Sum over every axis but the last.

    A matrix-vector product with ones is an order of magnitude faster than
    ``ndarray.sum`` over short strided axes.
    """
    flat = g.reshape(-1, g.shape[-1])
    return np.ones(flat.shape[0], dtype=g.dtype) @ flat


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    if len(shape) == 1 and g.ndim > 1 and g.shape[-1] == shape[0]:
        return sum_rows(g)
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _match_kind(g, like):
    # a real leaf receives only the real part of a complex adjoint
    if np.iscomplexobj(g) and not np.iscomplexobj(like):
        return g.real
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (_match_kind(unbroadcast(g, a.shape), a.data),
                _match_kind(unbroadcast(g, b.shape), b.data))

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (_match_kind(unbroadcast(g, a.shape), a.data),
                _match_kind(-unbroadcast(g, b.shape), b.data))

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _match_kind(unbroadcast(g * np.conj(b.data), a.shape), a.data)
        if b.requires_grad:
            gb = _match_kind(unbroadcast(g * np.conj(a.data), b.shape), b.data)
        return ga, gb

    return _node(a.data * b.data, (a, b), backward)


def frozen_affine(x, value, slope):
    """Forward ``value`` while backpropagating ``slope * g`` to ``x``.

    Used for sampled augmentations whose noise and statistics are constants
    of the backward pass: the output is ``slope * x + c`` with ``c`` frozen.
    A complex ``slope`` acts componentwise: its real part scales ``Re(x)``
    and its imaginary part scales ``Im(x)``.
    """
    x = as_tensor(x)
    slope = np.asarray(slope)

    def backward(g):
        if slope.ndim == 0 and slope == 1:
            return (g,)
        if np.iscomplexobj(slope):
            g = (g.real * slope.real + 1j * (g.imag * slope.imag)).astype(g.dtype)
        else:
            g = g * slope
        return (unbroadcast(g, x.shape),)

    return _node(np.asarray(value, dtype=x.dtype), (x,), backward)


# ---------------------------------------------------------------------------
# shape and reduction


def reshape(x, shape):
    x = as_tensor(x)
    src = x.shape

    def backward(g):
        return (g.reshape(src),)

    return _node(x.data.reshape(shape), (x,), backward)


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _node(x.data.transpose(axes), (x,), backward)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _node(out, (x,), backward)


# ---------------------------------------------------------------------------
# layers


def matmul(x, w):
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"matmul: input {x.shape} incompatible with weight {w.shape}")

    def backward(g):
        gx = (g.reshape(-1, w.shape[1]) @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = x.data.reshape(-1, w.shape[0]).T @ g.reshape(-1, w.shape[1])
        return gx, gw

    return _node(x.data @ w.data, (x, w), backward)


def linear(x, w, b=None):
    """``x @ w + b`` over the last axis of ``x``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and as_tensor(b).shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {as_tensor(b).shape} does not match weight {w.shape}")
    if b is None:
        return matmul(x, w)
    b = as_tensor(b)
    out = (x.data.reshape(-1, w.shape[0]) @ w.data).reshape(x.shape[:-1] + (w.shape[1],))
    out += b.data

    def backward(g):
        gx = (g.reshape(-1, w.shape[1]) @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = gb = None
        if w.requires_grad:
            gw = x.data.reshape(-1, w.shape[0]).T @ g.reshape(-1, w.shape[1])
        if b.requires_grad:
            gb = sum_rows(g)
        return gx, gw, gb

    return _node(out, (x, w, b), backward)


# GELU's gate 0.5 * (1 + tanh(u)) is the logistic s(2u).  Both passes build it
# from e = exp(-2|u|), which stays accurate in both tails where 1 + tanh(u)
# would cancel; u has the sign of x.


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _gelu_exponent(x, k, c, out):
    # typed constants keep float32 arithmetic from widening to float64
    m, one = x.dtype.type(-2) * k, x.dtype.type(1)
    for i in range(x.size):
        d = x[i]
        out[i] = m * abs(d) * (one + c * d * d)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _gelu_out(x, e, out):
    one = x.dtype.type(1)
    for i in range(x.size):
        d = x[i]
        out[i] = d * (one if d >= 0 else e[i]) / (one + e[i])


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _gelu_grad(x, e, g, k, c, out):
    one, two, three = x.dtype.type(1), x.dtype.type(2), x.dtype.type(3)
    for i in range(x.size):
        d, q = x[i], one / (one + e[i])
        s = q if d >= 0 else e[i] * q
        out[i] = g[i] * (s + two * k * d * (one + three * c * d * d) * e[i] * q * q)


def gelu(x):
    """GELU, tanh approximation."""
    x = as_tensor(x)
    d = np.ascontiguousarray(x.data)
    if d.dtype.kind != "f":
        d = d.astype(np.float64)
    k = d.dtype.type(math.sqrt(2.0 / math.pi))
    c = d.dtype.type(0.044715)
    flat = d.reshape(-1)
    e = np.empty_like(flat)
    _gelu_exponent(flat, k, c, e)
    np.exp(e, out=e)
    out = np.empty_like(flat)
    _gelu_out(flat, e, out)

    def backward(g):
        g = np.ascontiguousarray(g, dtype=d.dtype).reshape(-1)
        gx = np.empty_like(g)
        _gelu_grad(flat, e, g, k, c, gx)
        return (gx.reshape(d.shape),)

    return _node(out.reshape(d.shape), (x,), backward)


# reassociation lets the short per-row sums vectorize
@nb.njit(cache=True, nogil=True, error_model="numpy", fastmath={"reassoc"})
def _layer_norm_rows(x, gamma, beta, eps):
    rows, c = x.shape
    out = np.empty_like(x)
    xhat = np.empty_like(x)
    inv = np.empty(rows, dtype=x.dtype)
    for i in range(rows):
        mu = x.dtype.type(0.0)
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = x.dtype.type(0.0)
        for j in range(c):
            dev = x[i, j] - mu
            var += dev * dev
        s = x.dtype.type(1.0) / np.sqrt(var / c + eps)
        inv[i] = s
        for j in range(c):
            h = (x[i, j] - mu) * s
            xhat[i, j] = h
            out[i, j] = h * gamma[j] + beta[j]
    return out, xhat, inv


@nb.njit(cache=True, nogil=True, error_model="numpy", fastmath={"reassoc"})
def _layer_norm_grad(g, xhat, inv, gamma):
    rows, c = g.shape
    gx = np.empty_like(g)
    ggamma = np.zeros(c, dtype=g.dtype)
    gbeta = np.zeros(c, dtype=g.dtype)
    for i in range(rows):
        m1 = g.dtype.type(0.0)
        m2 = g.dtype.type(0.0)
        for j in range(c):
            dx = g[i, j] * gamma[j]
            m1 += dx
            m2 += dx * xhat[i, j]
            ggamma[j] += g[i, j] * xhat[i, j]
            gbeta[j] += g[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            gx[i, j] = inv[i] * (g[i, j] * gamma[j] - m1 - xhat[i, j] * m2)
    return gx, ggamma, gbeta


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last (channel) axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if eps <= 0:
        raise ValidationError(f"layer_norm: eps must be positive, got {eps}")
    c = x.shape[-1] if x.ndim else 0
    if c == 0:
        raise DimensionError(f"layer_norm: empty channel axis in {x.shape}")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"layer_norm: input {x.shape} vs gamma {gamma.shape} / beta {beta.shape}")
    dtype = x.dtype
    flat = np.ascontiguousarray(x.data).reshape(-1, c)
    out, xhat, inv = _layer_norm_rows(flat, gamma.data.astype(dtype, copy=False),
                                      beta.data.astype(dtype, copy=False), dtype.type(eps))

    def backward(g):
        g = np.ascontiguousarray(g, dtype=dtype).reshape(-1, c)
        gx, ggamma, gbeta = _layer_norm_grad(g, xhat, inv, gamma.data.astype(dtype, copy=False))
        return gx.reshape(x.shape), ggamma, gbeta

    return _node(out.reshape(x.shape), (x, gamma, beta), backward)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"cross_entropy: labels must lie in [0, {k}), got {labels.tolist()}")
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tol: float
    per_param: dict = field(default_factory=dict)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_err={self.max_rel_error:.3e} (tol {self.tol:.0e})"


def _wide(dtype):
    return np.complex128 if np.iscomplexobj(np.empty(0, dtype)) else np.float64


def grad_check(f, params, delta=1e-3, tol=None, floor=1e-4):
    """Compare tape adjoints of ``f()`` with fourth-order central differences.

    ``f`` takes no arguments and returns a scalar tensor built from
    ``params``.  The relative error of one element is
    ``|a - n| / max(|a|, |n|, floor * max(1, max|a|))``: the floor is scaled
    to the parameter's largest adjoint, so entries whose true gradient is
    zero are judged against the working precision of that gradient rather
    than against an absolute threshold.  Complex parameters
    are checked component by component.

    Adjoints are taken at the parameters' own precision.  The differences
    are always evaluated in float64: single-precision round-off divided by
    ``delta`` would otherwise dominate a 1e-3 relative comparison.
    """
    if not params:
        raise ValidationError("grad_check: no parameters given")
    single = params[0].data.dtype in (np.float32, np.complex64)
    tol = (1e-3 if single else 1e-6) if tol is None else tol
    if delta <= 0:
        raise ValidationError(f"grad_check: delta must be positive, got {delta}")

    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: objective is not finite")
    loss.backward()
    analytic = [np.asarray(p.grad).astype(_wide(p.data.dtype)) for p in params]

    def evaluate():
        with no_grad():
            v = float(np.real(f().data))
        if not math.isfinite(v):
            raise NumericError("grad_check: objective is not finite under perturbation")
        return v

    saved = [p.data for p in params]
    worst = 0.0
    per_param = {}
    try:
        for p in params:
            p.data = p.data.astype(_wide(p.data.dtype))
        for p, grad in zip(params, analytic):
            values = p.data.view(np.float64).reshape(-1)
            numeric = np.empty(values.size, dtype=np.float64)
            for i in range(values.size):
                orig = values[i]
                at = []
                for step in (2, 1, -1, -2):
                    values[i] = orig + step * delta
                    at.append(evaluate())
                values[i] = orig
                numeric[i] = (-at[0] + 8 * at[1] - 8 * at[2] + at[3]) / (12 * delta)
            a = grad.view(np.float64).reshape(-1)
            scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor * scale)
            err = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
            per_param[p.name or f"param{len(per_param)}"] = err
            worst = max(worst, err)
    finally:
        for p, data in zip(params, saved):
            p.data = data
    return GradCheckReport(worst, worst < tol, tol, per_param)
