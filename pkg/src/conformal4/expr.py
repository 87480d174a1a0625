"""Arithmetic expressions for custom metric coefficients.

Expressions use Python syntax restricted to ``+ - * / **``, the calls
``pow sin cos tan exp log sqrt``, numeric literals, the constants ``pi``
and ``e``, parameters supplied by the caller and the coordinates
``x0 .. x3``.  They compile to callables that accept floats, arrays or
:class:`~conformal4.hyperdual.Jet` values.
"""

import ast
import math

from . import hyperdual as hd
from .errors import ParseError

FUNCTIONS = {
    "sin": hd.sin,
    "cos": hd.cos,
    "tan": hd.tan,
    "exp": hd.exp,
    "log": hd.log,
    "sqrt": hd.sqrt,
    "pow": lambda a, b: a**b,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
COORDS = ("x0", "x1", "x2", "x3")

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


class Expression:
    """A parsed coefficient expression."""

    def __init__(self, source, params=None):
        self.source = source
        self.params = dict(params or {})
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"syntax error: {exc.msg}", position=exc.offset, source=source) from None
        self._tree = tree.body
        self.names = set()
        self._check(self._tree)

    def _fail(self, node, msg):
        raise ParseError(msg, position=getattr(node, "col_offset", 0) + 1, source=self.source)

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                self._fail(node, f"unsupported operator {type(node.op).__name__}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                self._fail(node, "unsupported unary operator")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                self._fail(node, "unknown function")
            if node.keywords:
                self._fail(node, "keyword arguments are not allowed")
            nargs = 2 if node.func.id == "pow" else 1
            if len(node.args) != nargs:
                self._fail(node, f"{node.func.id} takes {nargs} argument(s)")
            for a in node.args:
                self._check(a)
        elif isinstance(node, ast.Name):
            if node.id not in COORDS and node.id not in CONSTANTS and node.id not in self.params:
                self._fail(node, f"unknown name {node.id!r}")
            self.names.add(node.id)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                self._fail(node, "only numeric literals are allowed")
        else:
            self._fail(node, f"unsupported syntax {type(node).__name__}")

    @property
    def coordinates(self):
        """Indices of the coordinates this expression depends on."""
        return {int(n[1]) for n in self.names if n in COORDS}

    def __call__(self, x):
        return self._eval(self._tree, x)

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](*(self._eval(a, x) for a in node.args))
        if isinstance(node, ast.Name):
            if node.id in COORDS:
                return x[int(node.id[1])]
            if node.id in self.params:
                return float(self.params[node.id])
            return CONSTANTS[node.id]
        return float(node.value)

    def __repr__(self):
        return f"Expression({self.source!r})"
