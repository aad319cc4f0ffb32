"""Expression grammar and fast vectorized evaluation.

Potentials, test functions, and twist entries are given as strings in a
small grammar (polynomials combined with sin, cos, exp, tanh) so that
exact derivatives are always available through sympy.  Lambdified entries
are wrapped so that constant sub-expressions broadcast over point arrays.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import ExpressionError

ALLOWED_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "tanh": sp.tanh,
}
ALLOWED_CONSTANTS = {"pi": sp.pi, "E": sp.E}


def coord_symbols(names):
    return tuple(sp.Symbol(n, real=True) for n in names)


def parse_expression(text, coords, params=()):
    """Parse ``text`` into a sympy expression over the given coordinate
    (and optional parameter) symbols, rejecting anything outside the
    grammar."""
    if isinstance(text, sp.Expr):
        expr = text
    else:
        local = {s.name: s for s in coords}
        local.update({s.name: s for s in params})
        local.update(ALLOWED_FUNCTIONS)
        local.update(ALLOWED_CONSTANTS)
        try:
            expr = sp.parse_expr(str(text), local_dict=local, evaluate=True)
        except Exception as exc:  # sympy raises a zoo of types here
            raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from exc
    allowed_syms = set(coords) | set(params)
    extra = expr.free_symbols - allowed_syms
    if extra:
        names = ", ".join(sorted(s.name for s in extra))
        raise ExpressionError(f"expression {text!r} uses unknown symbols: {names}")
    bad = {
        type(f).__name__
        for f in expr.atoms(sp.Function)
        if type(f) not in (sp.sin, sp.cos, sp.exp, sp.tanh)
    }
    if bad:
        raise ExpressionError(
            f"expression {text!r} uses functions outside the grammar: {sorted(bad)}"
        )
    return expr


class FieldFunction:
    """Vectorized evaluator for a scalar/vector/matrix sympy expression.

    Calling convention: ``fn(points, *params)`` where ``points`` has shape
    (N, d) (or (d,) for a single point); returns shape (N,), (N, r) or
    (N, r, c) matching the expression shape.  Constant entries are
    broadcast, which plain ``sympy.lambdify`` does not do for matrices.
    """

    def __init__(self, args, exprs):
        self.args = tuple(args)
        if isinstance(exprs, sp.MatrixBase):
            self.shape = exprs.shape
            entries = list(exprs)
        elif isinstance(exprs, (list, tuple)):
            arr = np.array(exprs, dtype=object)
            self.shape = arr.shape
            entries = list(arr.ravel())
        else:
            self.shape = ()
            entries = [exprs]
        self._fns = [
            sp.lambdify(self.args, sp.sympify(e), modules="numpy") for e in entries
        ]

    def __call__(self, points, *params):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[0]
        cols = [pts[:, j] for j in range(pts.shape[1])]
        extra = list(params)
        if len(cols) + len(extra) != len(self.args):
            raise ValueError(
                f"expected {len(self.args)} arguments "
                f"({len(cols)} coordinates given, {len(extra)} parameters)"
            )
        vals = []
        for fn in self._fns:
            v = fn(*cols, *extra)
            v = np.asarray(v, dtype=float)
            if v.shape != (n,):
                v = np.broadcast_to(v, (n,)).copy()
            vals.append(v)
        out = np.stack(vals, axis=-1).reshape((n,) + self.shape)
        return out
