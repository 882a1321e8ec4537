"""Forward-mode automatic differentiation over a fixed-size parameter vector.

:class:`DualVector` carries a value (a scalar or an ndarray) together with the
partial derivatives of that value with respect to ``n_params`` inputs.  The
partials live in ``grad`` with shape ``(n_params,) + value.shape``.

Arithmetic goes through numpy's ufunc protocol, so model code written against
plain ndarrays (``np.exp``, ``np.cos``, ``*``, ``@``, ``np.pad`` ...) runs
unchanged on duals.  Unsupported ufuncs raise ``TypeError`` instead of silently
dropping derivatives.

Conventions:

* ``minimum``/``maximum`` take the derivative of the selected branch; ties pick
  the first argument.
* Division by a dual whose value is zero raises ``ZeroDivisionError``.
* Comparisons act on the value part and return plain boolean arrays.
"""
from __future__ import annotations

import numbers

import numpy as np
from numpy.lib.mixins import NDArrayOperatorsMixin

N_PARAMS = 6


class DualVector(NDArrayOperatorsMixin):
    __slots__ = ("value", "grad")

    def __init__(self, value, grad):
        value = np.asarray(value, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape[1:] != value.shape:
            grad = np.broadcast_to(grad, grad.shape[:1] + value.shape)
        self.value = value
        self.grad = grad

    # -- construction -------------------------------------------------------

    @property
    def n_params(self) -> int:
        return self.grad.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"DualVector(value={self.value!r}, grad={self.grad!r})"

    def __float__(self) -> float:
        return float(self.value)

    def __len__(self) -> int:
        return len(self.value)

    def __getitem__(self, key) -> DualVector:
        if not isinstance(key, tuple):
            key = (key,)
        return DualVector(self.value[key], self.grad[(slice(None),) + key])

    def copy(self) -> DualVector:
        return DualVector(self.value.copy(), self.grad.copy())

    # -- numpy protocols ----------------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        rule = _UFUNC_RULES.get(ufunc)
        if rule is None:
            if ufunc in _COMPARISONS:
                return ufunc(*(_value(x) for x in inputs), **kwargs)
            raise TypeError(f"DualVector does not support ufunc {ufunc.__name__}")
        n_params = _n_params(inputs)
        return rule(n_params, *inputs)

    def __array_function__(self, func, types, args, kwargs):
        handler = _FUNCTION_RULES.get(func)
        if handler is None:
            raise TypeError(f"DualVector does not support {func.__name__}")
        return handler(*args, **kwargs)


def lift_constant(x, n_params: int = N_PARAMS) -> DualVector:
    """Embed ``x`` as a dual with zero partials."""
    value = np.asarray(x, dtype=np.float64)
    return DualVector(value, np.zeros((n_params,) + value.shape))


def lift_parameter(i: int, x, n_params: int = N_PARAMS) -> DualVector:
    """Embed ``x`` as the ``i``-th independent variable (partials ``e_i``)."""
    if not 0 <= i < n_params:
        raise IndexError(f"parameter index {i} out of range for {n_params} parameters")
    value = np.asarray(x, dtype=np.float64)
    grad = np.zeros((n_params,) + value.shape)
    grad[i] = 1.0
    return DualVector(value, grad)


def value_of(x):
    """Strip derivative information, returning a float or ndarray."""
    return x.value if isinstance(x, DualVector) else x


def is_dual(x) -> bool:
    return isinstance(x, DualVector)


# -- rule helpers -------------------------------------------------------------


def _value(x):
    return x.value if isinstance(x, DualVector) else np.asarray(x, dtype=np.float64)


def _n_params(inputs) -> int:
    for x in inputs:
        if isinstance(x, DualVector):
            return x.n_params
    raise TypeError("no DualVector operand")


def _tangent(x, out_ndim: int):
    """Partials of ``x`` reshaped to broadcast against an output of ``out_ndim`` dims.

    Returns None for non-dual operands (zero tangent).
    """
    if not isinstance(x, DualVector):
        return None
    g = x.grad
    missing = out_ndim - x.value.ndim
    if missing > 0:
        g = g.reshape(g.shape[:1] + (1,) * missing + g.shape[1:])
    return g


def _accumulate(n_params, out_value, terms):
    grad = np.zeros((n_params,) + np.shape(out_value))
    for tangent, partial in terms:
        if tangent is not None:
            grad = grad + tangent * partial
    return DualVector(out_value, grad)


def _unary(fn, dfn):
    def rule(n_params, x):
        v = _value(x)
        out = fn(v)
        return DualVector(out, x.grad * dfn(v, out))
    return rule


def _add(n_params, a, b):
    out = _value(a) + _value(b)
    return _accumulate(n_params, out, [(_tangent(a, out.ndim), 1.0), (_tangent(b, out.ndim), 1.0)])


def _subtract(n_params, a, b):
    out = _value(a) - _value(b)
    return _accumulate(n_params, out, [(_tangent(a, out.ndim), 1.0), (_tangent(b, out.ndim), -1.0)])


def _multiply(n_params, a, b):
    va, vb = _value(a), _value(b)
    out = va * vb
    return _accumulate(n_params, out, [(_tangent(a, out.ndim), vb), (_tangent(b, out.ndim), va)])


def _divide(n_params, a, b):
    va, vb = _value(a), _value(b)
    if isinstance(b, DualVector) and np.any(vb == 0.0):
        raise ZeroDivisionError("division by a DualVector with zero value")
    out = va / vb
    return _accumulate(n_params, out, [(_tangent(a, out.ndim), 1.0 / vb), (_tangent(b, out.ndim), -out / vb)])


def _power(n_params, a, b):
    if isinstance(b, DualVector):
        raise TypeError("DualVector exponents are not supported")
    va, vb = _value(a), _value(b)
    out = va ** vb
    return _accumulate(n_params, out, [(_tangent(a, out.ndim), vb * va ** (vb - 1.0))])


def _select(pick_first):
    def rule(n_params, a, b):
        va, vb = _value(a), _value(b)
        first = pick_first(va, vb)
        out = np.where(first, va, vb)
        return _accumulate(n_params, out, [(_tangent(a, out.ndim), first), (_tangent(b, out.ndim), ~first)])
    return rule


def _matmul(n_params, a, b):
    va, vb = _value(a), _value(b)
    out = va @ vb
    grad = np.zeros((n_params,) + out.shape)
    if isinstance(a, DualVector):
        grad = grad + a.grad @ vb
    if isinstance(b, DualVector):
        grad = grad + va @ b.grad
    return DualVector(out, grad)


def _log(v, out):
    return 1.0 / v


_UFUNC_RULES = {
    np.add: _add,
    np.subtract: _subtract,
    np.multiply: _multiply,
    np.true_divide: _divide,
    np.power: _power,
    np.matmul: _matmul,
    np.minimum: _select(lambda a, b: a <= b),
    np.maximum: _select(lambda a, b: a >= b),
    np.negative: lambda n, x: DualVector(-x.value, -x.grad),
    np.positive: lambda n, x: DualVector(x.value.copy(), x.grad.copy()),
    np.exp: _unary(np.exp, lambda v, out: out),
    np.expm1: _unary(np.expm1, lambda v, out: out + 1.0),
    np.log: _unary(np.log, _log),
    np.log1p: _unary(np.log1p, lambda v, out: 1.0 / (1.0 + v)),
    np.sqrt: _unary(np.sqrt, lambda v, out: 0.5 / out),
    np.square: _unary(np.square, lambda v, out: 2.0 * v),
    np.cos: _unary(np.cos, lambda v, out: -np.sin(v)),
    np.sin: _unary(np.sin, lambda v, out: np.cos(v)),
    np.tanh: _unary(np.tanh, lambda v, out: 1.0 - out * out),
    np.arctan: _unary(np.arctan, lambda v, out: 1.0 / (1.0 + v * v)),
}

_COMPARISONS = {np.greater, np.greater_equal, np.less, np.less_equal, np.equal, np.not_equal, np.isfinite}


# -- array functions ----------------------------------------------------------


def _grad_axis(axis, ndim):
    if axis is None:
        return tuple(range(1, ndim + 1))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(a + 1 if a >= 0 else a for a in axes)


def _sum(a, axis=None, **kwargs):
    if not isinstance(a, DualVector):
        return np.sum(a, axis=axis, **kwargs)
    return DualVector(np.sum(a.value, axis=axis), np.sum(a.grad, axis=_grad_axis(axis, a.ndim)))


def _mean(a, axis=None, **kwargs):
    if not isinstance(a, DualVector):
        return np.mean(a, axis=axis, **kwargs)
    return DualVector(np.mean(a.value, axis=axis), np.mean(a.grad, axis=_grad_axis(axis, a.ndim)))


def _pad(a, pad_width, mode="constant", **kwargs):
    if mode != "constant" or kwargs.get("constant_values", 0) != 0:
        raise TypeError("DualVector supports zero-constant padding only")
    pads = [tuple(p) for p in np.broadcast_to(np.asarray(pad_width), (a.ndim, 2))]
    return DualVector(np.pad(a.value, pads), np.pad(a.grad, [(0, 0)] + pads))


def _stack(arrays, axis=0):
    arrays = list(arrays)
    if axis < 0:
        raise TypeError("DualVector stack requires a nonnegative axis")
    n_params = _n_params(arrays)
    duals = [x if isinstance(x, DualVector) else lift_constant(x, n_params) for x in arrays]
    return DualVector(np.stack([d.value for d in duals], axis=axis),
                      np.stack([d.grad for d in duals], axis=axis + 1))


def _zeros_like(a, *args, **kwargs):
    return lift_constant(np.zeros_like(a.value), a.n_params)


_FUNCTION_RULES = {
    np.sum: _sum,
    np.mean: _mean,
    np.pad: _pad,
    np.stack: _stack,
    np.zeros_like: _zeros_like,
    np.shape: lambda a: a.shape,
    np.ndim: lambda a: a.ndim,
}


def as_real(x) -> float:
    """Coerce a plain number or 0-d dual to float (value part only)."""
    if isinstance(x, numbers.Real):
        return float(x)
    return float(value_of(x))
