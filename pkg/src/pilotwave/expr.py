"""Minimal closed-form expression grammar in one variable ``x``.

Accepted: numeric literals, ``x``, ``+ - * /``, ``^`` (power), parentheses
and the functions ``exp``, ``tanh``, ``sin``, ``cos``.  Expressions are
parsed with sympy so that exact derivatives are available; evaluation is
vectorised through numpy and preserves the input dtype (including
``np.longdouble``).
"""

from __future__ import annotations

import re
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

_FUNCTIONS = ("exp", "tanh", "sin", "cos")
_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _check_tokens(text: str) -> None:
    pos = 0
    text = text.rstrip()
    if not text:
        raise ConfigurationError("empty expression")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ConfigurationError(f"unexpected character {text[pos]!r} in expression {text!r}")
        name = m.group("name")
        if name is not None and name != "x" and name not in _FUNCTIONS:
            raise ConfigurationError(f"unknown identifier {name!r} in expression {text!r}")
        pos = m.end()


class Expression:
    """A parsed expression ``f(x)`` with symbolic derivatives.

    >>> f = Expression("1+0.1*tanh(x)")
    >>> float(f(0.0))
    1.0
    """

    def __init__(self, text: str):
        import sympy
        from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

        text = str(text)
        _check_tokens(text)
        self.text = text
        self._x = sympy.Symbol("x", real=True)
        local = {"x": self._x, "exp": sympy.exp, "tanh": sympy.tanh, "sin": sympy.sin, "cos": sympy.cos}
        try:
            expr = parse_expr(
                text,
                local_dict=local,
                global_dict={"Integer": sympy.Integer, "Float": sympy.Float, "Rational": sympy.Rational},
                transformations=standard_transformations + (convert_xor,),
            )
        except Exception as exc:  # sympy raises a zoo of types on bad syntax
            raise ConfigurationError(f"cannot parse expression {text!r}: {exc}") from exc
        if expr.free_symbols - {self._x}:
            raise ConfigurationError(f"expression {text!r} may only depend on x")
        self._sym = expr
        self._fn = sympy.lambdify(self._x, expr, modules="numpy")

    @classmethod
    def _from_sympy(cls, sym, x, text):
        import sympy

        obj = cls.__new__(cls)
        obj.text = text
        obj._x = x
        obj._sym = sym
        obj._fn = sympy.lambdify(x, sym, modules="numpy")
        return obj

    def __call__(self, x):
        x = np.asarray(x)
        out = self._fn(x)
        # constant expressions return a scalar; broadcast to the argument shape
        return np.broadcast_to(np.asarray(out, dtype=np.result_type(x, float)), x.shape).copy()

    @cached_property
    def derivative(self) -> "Expression":
        d = self._sym.diff(self._x)
        return Expression._from_sympy(d, self._x, f"d/dx({self.text})")

    @property
    def is_constant(self) -> bool:
        return self._x not in self._sym.free_symbols

    def __repr__(self):
        return f"Expression({self.text!r})"
