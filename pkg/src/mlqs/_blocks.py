"""Block-level kernels shared by the level-1 and level-2 sweeps.

Generator entries are either small dense ndarrays (level 1) or
``QsBlock`` grids of QsMatrix values (level 2). The sweep algorithms are
written once against these helpers; the level-2 overloads are registered
by :mod:`mlqs.multilevel`.
"""
from functools import singledispatch

import numpy as np
import scipy.linalg

from .counting import record
from .errors import SingularPivot


def mm(x, y):
    """Block product ``x @ y`` with flop accounting for dense operands."""
    if isinstance(x, np.ndarray) and isinstance(y, np.ndarray):
        m, k = x.shape[0], x.shape[-1]
        ncol = y.shape[1] if y.ndim == 2 else 1
        record(2 * m * k * ncol)
    return x @ y


@singledispatch
def zeros(like, rows, cols):
    raise TypeError(f"unsupported block type {type(like).__name__}")


@zeros.register
def _(like: np.ndarray, rows, cols):
    return np.zeros((rows, cols), dtype=like.dtype)


@singledispatch
def eye(like, n):
    raise TypeError(f"unsupported block type {type(like).__name__}")


@eye.register
def _(like: np.ndarray, n):
    return np.eye(n, dtype=like.dtype)


@singledispatch
def bmat(like, grid):
    """Assemble a 2-D grid of blocks into one block of the same kind."""
    raise TypeError(f"unsupported block type {type(like).__name__}")


@bmat.register
def _(like: np.ndarray, grid):
    rows = [np.hstack(row) if len(row) > 1 else row[0] for row in grid]
    return np.vstack(rows) if len(rows) > 1 else rows[0]


@singledispatch
def to_dense(x):
    raise TypeError(f"unsupported block type {type(x).__name__}")


@to_dense.register
def _(x: np.ndarray):
    return x


@singledispatch
def block_norm(x):
    raise TypeError(f"unsupported block type {type(x).__name__}")


@block_norm.register
def _(x: np.ndarray):
    return float(np.linalg.norm(x)) if x.size else 0.0


class DensePivot:
    """LU with partial pivoting of one small diagonal block."""

    __slots__ = ("n", "_scalar", "_fac")

    def __init__(self, block, k, scale, rtol):
        self.n = block.shape[0]
        if self.n == 1:
            val = block[0, 0]
            rcond = abs(val) / scale if scale > 0 else 0.0
            if not np.isfinite(val) or rcond <= rtol:
                raise SingularPivot(k, rcond)
            self._scalar = val
            self._fac = None
            return
        s = np.linalg.svd(block, compute_uv=False)
        rcond = s[-1] / max(scale, s[0]) if s[0] > 0 else 0.0
        if not np.all(np.isfinite(s)) or rcond <= rtol:
            raise SingularPivot(k, rcond)
        record(2 * self.n**3)
        self._scalar = None
        self._fac = scipy.linalg.lu_factor(block, check_finite=False)

    def solve(self, y, trans=False):
        """Return ``D^{-1} y`` (``D^{-T} y`` with *trans*)."""
        if self._fac is None:
            return y / self._scalar
        record(2 * self.n**2 * (y.shape[1] if y.ndim == 2 else 1))
        return scipy.linalg.lu_solve(self._fac, y, trans=1 if trans else 0, check_finite=False)

    def rsolve(self, x):
        """Return ``x D^{-1}``."""
        if self._fac is None:
            return x / self._scalar
        return self.solve(x.T, trans=True).T

    def inv(self):
        if self._fac is None:
            return np.array([[1.0 / self._scalar]])
        return self.solve(np.eye(self.n))


@singledispatch
def factor_pivot(block, k, scale, rtol):
    raise TypeError(f"unsupported block type {type(block).__name__}")


@factor_pivot.register
def _(block: np.ndarray, k, scale, rtol):
    return DensePivot(block, k, scale, rtol)
