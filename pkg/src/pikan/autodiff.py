"""Reverse-mode tape over fp64 arrays, plus second-order input jets.

Every node on a :class:`Tape` holds a numpy array (0-d for scalars). Primitive
operations are elementwise or small tensor contractions; each records its kind,
operand indices and static attributes so the whole tape can be replayed from
its leaves. :func:`backward` runs reverse accumulation from a scalar node and
returns gradients for the registered parameter leaves only.

:class:`Jet2` carries a value together with its first and second partials
with respect to two input coordinates. Each jet component is itself a tape
node, so PDE residuals assembled from jets stay differentiable with respect
to the parameters (forward-over-reverse).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from pikan import bspline


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient contains NaN or Inf."""


# ---------------------------------------------------------------------------
# primitive registry
#
# forward(*operand_values, **attrs) -> value
# vjp(g, out, *operand_values, **attrs) -> tuple of operand adjoints (None = no flow)

_PRIMS: dict[str, tuple[Callable, Callable]] = {}


def primitive(name: str, forward: Callable, vjp: Callable) -> None:
    _PRIMS[name] = (forward, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _bin(fwd, da, db):
    def vjp(g, out, a, b):
        return (_unbroadcast(da(g, out, a, b), np.shape(a)),
                _unbroadcast(db(g, out, a, b), np.shape(b)))
    return fwd, vjp


primitive("add", *_bin(np.add, lambda g, o, a, b: g, lambda g, o, a, b: g))
primitive("sub", *_bin(np.subtract, lambda g, o, a, b: g, lambda g, o, a, b: -g))
primitive("mul", *_bin(np.multiply, lambda g, o, a, b: g * b, lambda g, o, a, b: g * a))
primitive("div", *_bin(np.divide, lambda g, o, a, b: g / b, lambda g, o, a, b: -g * o / b))

primitive("neg", np.negative, lambda g, o, a: (-g,))
primitive("square", np.square, lambda g, o, a: (2.0 * a * g,))
primitive("tanh", np.tanh, lambda g, o, a: (g * (1.0 - o * o),))
primitive("sin", np.sin, lambda g, o, a: (g * np.cos(a),))
primitive("cos", np.cos, lambda g, o, a: (-g * np.sin(a),))
primitive("exp", np.exp, lambda g, o, a: (g * o,))
primitive("log", np.log, lambda g, o, a: (g / a,))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


primitive("sigmoid", _sigmoid, lambda g, o, a: (g * o * (1.0 - o),))


def _silu_vjp(g, o, a):
    s = _sigmoid(a)
    return (g * s * (1.0 + a * (1.0 - s)),)


primitive("silu", lambda a: a * _sigmoid(a), _silu_vjp)
primitive("pow", lambda a, n: a ** n,
          lambda g, o, a, n: (g * n * a ** (n - 1) if n != 0 else np.zeros_like(a),))
primitive("affine", lambda a, scale, shift: scale * a + shift,
          lambda g, o, a, scale, shift: (g * scale,))
primitive("min_const", lambda a, c: np.minimum(a, c),
          lambda g, o, a, c: (np.where(a < c, g, 0.0),))


def _sum_vjp(g, o, a, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, np.shape(a)).copy(),)


primitive("sum", lambda a, axis, keepdims: np.sum(a, axis=axis, keepdims=keepdims), _sum_vjp)
primitive("reshape", lambda a, shape: np.reshape(a, shape),
          lambda g, o, a, shape: (np.reshape(g, np.shape(a)),))
primitive("transpose", lambda a, axes: np.transpose(a, axes),
          lambda g, o, a, axes: (np.transpose(g, np.argsort(axes) if axes else None),))


def _getitem_vjp(g, o, a, index):
    ga = np.zeros(np.shape(a))
    idx = index if isinstance(index, tuple) else (index,)
    if all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in idx):
        ga[index] += g
    else:
        np.add.at(ga, index, g)
    return (ga,)


primitive("getitem", lambda a, index: a[index], _getitem_vjp)
primitive("matmul", np.matmul, lambda g, o, a, b: (g @ np.swapaxes(b, -1, -2),
                                                 np.swapaxes(a, -1, -2) @ g))


def _einsum_vjp(g, o, a, b, spec):
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    return (np.einsum(f"{out},{sb}->{sa}", g, b), np.einsum(f"{sa},{out}->{sb}", a, g))


primitive("einsum", lambda a, b, spec: np.einsum(spec, a, b), _einsum_vjp)


def _stack_fwd(*arrs, axis):
    return np.stack(arrs, axis=axis)


def _stack_vjp(g, o, *arrs, axis):
    return tuple(np.take(g, i, axis=axis) for i in range(len(arrs)))


primitive("stack", _stack_fwd, _stack_vjp)


def _bspline_fwd(x, kv, nder):
    return bspline.basis_table(kv, x, nder + 1)


def _bspline_vjp(g, o, x, kv, nder):
    # slice m of the output is the m-th derivative; its x-derivative is slice m + 1,
    # which the forward pass already carries
    return (np.einsum("m...b,m...b->...", g[:nder + 1], o[1:]),)


primitive("bspline", _bspline_fwd, _bspline_vjp)


# ---------------------------------------------------------------------------
# tape


class Tape:
    """Append-only record of primitive applications."""

    def __init__(self):
        self.ops: list[str] = []
        self.args: list[tuple[int, ...]] = []
        self.attrs: list[dict] = []
        self.values: list[np.ndarray] = []
        self.params: list[int] = []

    def __len__(self) -> int:
        return len(self.values)

    def _append(self, op, args, attrs, value) -> "Var":
        self.ops.append(op)
        self.args.append(args)
        self.attrs.append(attrs)
        self.values.append(value)
        return Var(self, len(self.values) - 1)

    def const(self, value) -> "Var":
        return self._append("const", (), {}, np.asarray(value, dtype=np.float64))

    def param(self, value) -> "Var":
        """Register a parameter leaf; its gradient is returned by :func:`backward`."""
        v = self._append("param", (), {}, np.array(value, dtype=np.float64))
        self.params.append(v.index)
        return v

    def record(self, op: str, operands: Sequence["Var"], **attrs) -> "Var":
        for o in operands:
            if o.tape is not self:
                raise ValueError("operand belongs to a different tape")
        fwd, _ = _PRIMS[op]
        with np.errstate(all="ignore"):
            value = np.asarray(fwd(*(self.values[o.index] for o in operands), **attrs),
                               dtype=np.float64)
        return self._append(op, tuple(o.index for o in operands), attrs, value)

    def replay(self) -> list[np.ndarray]:
        """Recompute every node from the stored leaves."""
        vals: list[np.ndarray] = []
        with np.errstate(all="ignore"):
            for op, args, attrs, stored in zip(self.ops, self.args, self.attrs, self.values):
                if op in ("const", "param"):
                    vals.append(stored.copy())
                else:
                    fwd, _ = _PRIMS[op]
                    vals.append(np.asarray(fwd(*(vals[i] for i in args), **attrs),
                                           dtype=np.float64))
        return vals

    def check_finite(self, node: "Var") -> None:
        if not np.all(np.isfinite(self.values[node.index])):
            raise NonFiniteError(f"non-finite value at node {node.index} ({self.ops[node.index]})")


class Var:
    """Handle to a tape node with numpy-style operator overloading."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(#{self.index}, {self.tape.ops[self.index]}, shape={self.shape})"

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return self.tape.const(other)

    def __add__(self, o):
        return self.tape.record("add", (self, self._lift(o)))

    def __radd__(self, o):
        return self.tape.record("add", (self._lift(o), self))

    def __sub__(self, o):
        return self.tape.record("sub", (self, self._lift(o)))

    def __rsub__(self, o):
        return self.tape.record("sub", (self._lift(o), self))

    def __mul__(self, o):
        return self.tape.record("mul", (self, self._lift(o)))

    def __rmul__(self, o):
        return self.tape.record("mul", (self._lift(o), self))

    def __truediv__(self, o):
        return self.tape.record("div", (self, self._lift(o)))

    def __rtruediv__(self, o):
        return self.tape.record("div", (self._lift(o), self))

    def __neg__(self):
        return self.tape.record("neg", (self,))

    def __pow__(self, n):
        if int(n) != n:
            raise TypeError("only integer powers are supported")
        if n == 2:
            return self.tape.record("square", (self,))
        return self.tape.record("pow", (self,), n=int(n))

    def __matmul__(self, o):
        return self.tape.record("matmul", (self, self._lift(o)))

    def __getitem__(self, index):
        return self.tape.record("getitem", (self,), index=index)

    def sum(self, axis=None, keepdims=False):
        return self.tape.record("sum", (self,), axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.record("reshape", (self,), shape=tuple(shape))

    @property
    def T(self):
        return self.transpose()

    def transpose(self, *axes):
        axes = tuple(axes[0]) if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes
        return self.tape.record("transpose", (self,), axes=axes or None)


def _un(op):
    def f(x: Var, **attrs) -> Var:
        return x.tape.record(op, (x,), **attrs)
    f.__name__ = op
    return f


tanh = _un("tanh")
sin = _un("sin")
cos = _un("cos")
exp = _un("exp")
log = _un("log")
square = _un("square")
sigmoid = _un("sigmoid")
silu = _un("silu")


def affine(x: Var, scale: float, shift: float = 0.0) -> Var:
    return x.tape.record("affine", (x,), scale=float(scale), shift=float(shift))


def minimum(x: Var, c: float) -> Var:
    """min(x, c) for a constant c; the constant side carries no gradient."""
    return x.tape.record("min_const", (x,), c=float(c))


def einsum(spec: str, a: Var, b: Var) -> Var:
    return a.tape.record("einsum", (a, a._lift(b)), spec=spec)


def stack(xs: Sequence[Var], axis: int = 0) -> Var:
    return xs[0].tape.record("stack", tuple(xs), axis=axis)


def bspline_basis(x: Var, kv: bspline.KnotVector, m: int = 0) -> Var:
    """m-th derivative of every basis function at x; appends a basis axis."""
    return bspline_jet(x, kv, m)[m]


def bspline_jet(x: Var, kv: bspline.KnotVector, nder: int) -> list[Var]:
    """Basis derivatives of orders 0..nder from a single table evaluation."""
    table = x.tape.record("bspline", (x,), kv=kv, nder=int(nder))
    return [table[m] for m in range(nder + 1)]


def backward(tape: Tape, loss: Var, check: bool = True) -> list[np.ndarray]:
    """Gradients of a scalar node for every parameter leaf, in registration order."""
    if loss.value.size != 1:
        raise ValueError("backward expects a scalar loss node")
    adj: list[np.ndarray | None] = [None] * len(tape)
    adj[loss.index] = np.ones_like(loss.value)
    with np.errstate(all="ignore"):
        for i in range(loss.index, -1, -1):
            g = adj[i]
            op = tape.ops[i]
            if g is None or op in ("const", "param"):
                continue
            args = tape.args[i]
            _, vjp = _PRIMS[op]
            grads = vjp(g, tape.values[i], *(tape.values[j] for j in args), **tape.attrs[i])
            for j, gj in zip(args, grads):
                if gj is None or tape.ops[j] == "const":
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
    out = []
    for p in tape.params:
        g = adj[p]
        out.append(np.zeros_like(tape.values[p]) if g is None else np.asarray(g))
    if check:
        for p, g in zip(tape.params, out):
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter node {p}")
    return out


# ---------------------------------------------------------------------------
# jets


class Jet2:
    """Value with first and second partials in two input coordinates.

    ``d1 = (u_0, u_1)`` and ``d2 = (u_00, u_01, u_11)``; the Hessian is stored
    by its three independent entries so it is symmetric by construction.
    Coordinate 0 is x, coordinate 1 is t (or y for steady problems).
    """

    __slots__ = ("v", "d1", "d2")

    def __init__(self, v: Var, d1: tuple[Var, Var], d2: tuple[Var, Var, Var]):
        self.v = v
        self.d1 = tuple(d1)
        self.d2 = tuple(d2)

    # named accessors
    dx = property(lambda s: s.d1[0])
    dt = property(lambda s: s.d1[1])
    dxx = property(lambda s: s.d2[0])
    dxt = property(lambda s: s.d2[1])
    dtt = property(lambda s: s.d2[2])
    dy, dxy, dyy = dt, dxt, dtt

    @property
    def tape(self) -> Tape:
        return self.v.tape

    @classmethod
    def seed(cls, tape: Tape, coord: np.ndarray, axis: int, scale: float = 1.0) -> "Jet2":
        """Input coordinate ``axis``: d1 = scale * e_axis, d2 = 0."""
        coord = np.asarray(coord, dtype=np.float64)
        zero = tape.const(np.zeros_like(coord))
        d = tape.const(np.full_like(coord, scale))
        d1 = (d, zero) if axis == 0 else (zero, d)
        return cls(tape.const(coord), d1, (zero, zero, zero))

    @classmethod
    def constant(cls, tape: Tape, value) -> "Jet2":
        v = value if isinstance(value, Var) else tape.const(value)
        zero = tape.const(np.zeros_like(v.value))
        return cls(v, (zero, zero), (zero, zero, zero))

    def components(self) -> tuple[Var, ...]:
        return (self.v,) + self.d1 + self.d2

    def _lift(self, o) -> "Jet2":
        return o if isinstance(o, Jet2) else Jet2.constant(self.tape, o)

    def __add__(self, o):
        if not isinstance(o, Jet2):
            return Jet2(self.v + o, self.d1, self.d2)
        return Jet2(self.v + o.v, tuple(a + b for a, b in zip(self.d1, o.d1)),
                    tuple(a + b for a, b in zip(self.d2, o.d2)))

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.v, tuple(-a for a in self.d1), tuple(-a for a in self.d2))

    def __sub__(self, o):
        if isinstance(o, (Jet2, Var)):
            return self + (-o)
        return self + (-np.asarray(o, dtype=np.float64))

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Jet2):
            return Jet2(self.v * o, tuple(a * o for a in self.d1), tuple(a * o for a in self.d2))
        u, w = self, o
        (u0, u1), (w0, w1) = u.d1, w.d1
        (u00, u01, u11), (w00, w01, w11) = u.d2, w.d2
        v = u.v * w.v
        d1 = (u0 * w.v + u.v * w0, u1 * w.v + u.v * w1)
        d2 = (u00 * w.v + 2.0 * (u0 * w0) + u.v * w00,
              u01 * w.v + u0 * w1 + u1 * w0 + u.v * w01,
              u11 * w.v + 2.0 * (u1 * w1) + u.v * w11)
        return Jet2(v, d1, d2)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Jet2):
            return self * reciprocal(o)
        if isinstance(o, Var):
            return self * (1.0 / o)
        return self * (1.0 / np.asarray(o, dtype=np.float64))

    def __rtruediv__(self, o):
        return reciprocal(self) * o

    def __pow__(self, n):
        n = int(n)
        if n == 0:
            return Jet2.constant(self.tape, np.ones_like(self.v.value))
        if n == 1:
            return self
        if n == 2:
            return apply(self, self.v ** 2, 2.0 * self.v, self.tape.const(np.full_like(self.v.value, 2.0)))
        return apply(self, self.v ** n, n * self.v ** (n - 1), (n * (n - 1)) * self.v ** (n - 2))


def apply(u: Jet2, f0: Var, f1: Var, f2: Var) -> Jet2:
    """Chain rule for a scalar function f given f, f', f'' evaluated at u.v."""
    (u0, u1), (u00, u01, u11) = u.d1, u.d2
    d1 = (f1 * u0, f1 * u1)
    d2 = (f2 * (u0 * u0) + f1 * u00, f2 * (u0 * u1) + f1 * u01, f2 * (u1 * u1) + f1 * u11)
    return Jet2(f0, d1, d2)


def jet_tanh(u: Jet2) -> Jet2:
    t = tanh(u.v)
    f1 = 1.0 - t * t
    return apply(u, t, f1, -2.0 * (t * f1))


def jet_sin(u: Jet2) -> Jet2:
    s, c = sin(u.v), cos(u.v)
    return apply(u, s, c, -s)


def jet_cos(u: Jet2) -> Jet2:
    s, c = sin(u.v), cos(u.v)
    return apply(u, c, -s, -c)


def jet_exp(u: Jet2) -> Jet2:
    e = exp(u.v)
    return apply(u, e, e, e)


def jet_log(u: Jet2) -> Jet2:
    r = 1.0 / u.v
    return apply(u, log(u.v), r, -(r * r))


def reciprocal(u: Jet2) -> Jet2:
    r = 1.0 / u.v
    r2 = r * r
    return apply(u, r, -r2, 2.0 * (r2 * r))


def silu_derivs(x: Var) -> tuple[Var, Var, Var]:
    """SiLU(x) and its first two derivatives as tape nodes."""
    s = sigmoid(x)
    ds = s * (1.0 - s)
    return silu(x), s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s))


def jet_silu(u: Jet2) -> Jet2:
    return apply(u, *silu_derivs(u.v))


def jet_eval(f: Callable[[Jet2, Jet2], Jet2], x, tape: Tape | None = None) -> Jet2:
    """Evaluate ``f(x0, x1)`` on seeded input jets at point(s) ``x``."""
    tape = tape if tape is not None else Tape()
    x = np.asarray(x, dtype=np.float64)
    return f(Jet2.seed(tape, x[..., 0], 0), Jet2.seed(tape, x[..., 1], 1))
