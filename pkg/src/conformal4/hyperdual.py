"""Second-order forward-mode differentiation.

A :class:`Jet` carries a value together with its gradient and Hessian with
respect to ``n`` independent variables, so evaluating a metric formula on
jets returns exact first and second derivatives (no truncation error).
Values may be arrays; the derivative axes are trailing.
"""

import numpy as np


class Jet:
    """Truncated second-order Taylor number ``(v, d, h)``.

    ``v`` has shape ``batch``, ``d`` has shape ``batch + (n,)`` and ``h``
    has shape ``batch + (n, n)``.
    """

    __slots__ = ("v", "d", "h")
    __array_priority__ = 100

    def __init__(self, v, d, h):
        self.v = np.asarray(v, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.h = np.asarray(h, dtype=float)

    @classmethod
    def variables(cls, x):
        """Seed jets for the columns of ``x`` (shape ``batch + (n,)``)."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        batch = x.shape[:-1]
        out = []
        for k in range(n):
            d = np.zeros(batch + (n,))
            d[..., k] = 1.0
            out.append(cls(x[..., k], d, np.zeros(batch + (n, n))))
        return out

    @property
    def nvars(self):
        return self.d.shape[-1]

    def __repr__(self):
        return f"Jet(v={self.v!r}, d={self.d!r})"

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        c = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(c.shape, self.v.shape)
        n = self.nvars
        return Jet(np.broadcast_to(c, shape), np.zeros(shape + (n,)), np.zeros(shape + (n, n)))

    def chain(self, f0, f1, f2):
        """Compose with a scalar function given its value and two derivatives at ``v``."""
        f1e = np.asarray(f1)[..., None]
        outer = self.d[..., :, None] * self.d[..., None, :]
        return Jet(f0, f1e * self.d, f1e[..., None] * self.h + np.asarray(f2)[..., None, None] * outer)

    def __neg__(self):
        return Jet(-self.v, -self.d, -self.h)

    def __pos__(self):
        return self

    def __add__(self, other):
        if not isinstance(other, Jet):
            if np.ndim(other) == 0:
                return Jet(self.v + other, self.d, self.h)
            other = self._lift(other)
        return Jet(self.v + other.v, self.d + other.d, self.h + other.h)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Jet):
            if np.ndim(other) == 0:
                return Jet(self.v - other, self.d, self.h)
            other = self._lift(other)
        return Jet(self.v - other.v, self.d - other.d, self.h - other.h)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.v * c, self.d * c[..., None], self.h * c[..., None, None])
        a, b = self, other
        av, bv = a.v[..., None], b.v[..., None]
        cross = a.d[..., :, None] * b.d[..., None, :]
        return Jet(
            a.v * b.v,
            av * b.d + bv * a.d,
            av[..., None] * b.h + bv[..., None] * a.h + cross + np.swapaxes(cross, -1, -2),
        )

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.v
        return self.chain(inv, -inv * inv, 2.0 * inv**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p == 0.0:
            return self._lift(1.0)
        if p == 1.0:
            return self
        if p == 2.0:
            return self * self
        x = self.v
        return self.chain(x**p, p * x ** (p - 1.0), p * (p - 1.0) * x ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    def sin(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self.chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self.chain(c, -s, -c)

    def tan(self):
        t = np.tan(self.v)
        sec2 = 1.0 + t * t
        return self.chain(t, sec2, 2.0 * t * sec2)

    def exp(self):
        e = np.exp(self.v)
        return self.chain(e, e, e)

    def log(self):
        inv = 1.0 / self.v
        return self.chain(np.log(self.v), inv, -inv * inv)

    def sqrt(self):
        r = np.sqrt(self.v)
        return self.chain(r, 0.5 / r, -0.25 / (r * self.v))

    def sinh(self):
        s, c = np.sinh(self.v), np.cosh(self.v)
        return self.chain(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.v), np.cosh(self.v)
        return self.chain(c, s, c)

    def tanh(self):
        t = np.tanh(self.v)
        sech2 = 1.0 - t * t
        return self.chain(t, sech2, -2.0 * t * sech2)


def _dispatch(name, npfunc):
    def f(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        return npfunc(x)

    f.__name__ = name
    f.__doc__ = f"``{name}`` for floats, arrays and :class:`Jet` values."
    return f


sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
tan = _dispatch("tan", np.tan)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sqrt = _dispatch("sqrt", np.sqrt)
sinh = _dispatch("sinh", np.sinh)
cosh = _dispatch("cosh", np.cosh)
tanh = _dispatch("tanh", np.tanh)


def value(x):
    return x.v if isinstance(x, Jet) else np.asarray(x, dtype=float)


def where(cond, a, b):
    """Elementwise select between two jets (or constants) by a boolean mask on values."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(cond, a, b)
    ref = a if isinstance(a, Jet) else b
    a, b = ref._lift(a), ref._lift(b)
    c = np.asarray(cond)
    return Jet(
        np.where(c, a.v, b.v),
        np.where(c[..., None], a.d, b.d),
        np.where(c[..., None, None], a.h, b.h),
    )
