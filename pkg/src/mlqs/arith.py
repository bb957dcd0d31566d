"""Linear-complexity arithmetic on quasiseparable matrices.

Everything here works at the generator level and never forms a dense
matrix. Results of :func:`add` and :func:`mul` are *not* compressed; their
widths are the sums of the operand widths. Use
:func:`mlqs.compress.compress` to bring them back to minimal order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _blocks as B
from .core import QsGenerators, QsMatrix, check_same_partition
from .errors import StructureError

mm = B.mm


def _zeros(like, rows, cols):
    return B.zeros(like, rows, cols)


def _block_diag(x, y):
    return B.bmat(x, [[x, _zeros(x, x.shape[0], y.shape[1])], [_zeros(x, y.shape[0], x.shape[1]), y]])


def add(A, B_):
    """``A + B`` by concatenating generators (widths add, no compression)."""
    check_same_partition(A, B_)
    ga, gb = A.gen, B_.gen
    gen = QsGenerators(
        tuple(x + y for x, y in zip(ga.d, gb.d)),
        tuple(B.bmat(x, [[x], [y]]) for x, y in zip(ga.q, gb.q)),
        tuple(_block_diag(x, y) for x, y in zip(ga.a, gb.a)),
        tuple(B.bmat(x, [[x, y]]) for x, y in zip(ga.p, gb.p)),
        tuple(B.bmat(x, [[x, y]]) for x, y in zip(ga.g, gb.g)),
        tuple(_block_diag(x, y) for x, y in zip(ga.b, gb.b)),
        tuple(B.bmat(x, [[x], [y]]) for x, y in zip(ga.h, gb.h)),
    )
    return A._with_gen(gen)


def scale(A, alpha):
    """``alpha * A``; scales ``d``, ``q`` and ``h`` only."""
    gen = A.gen
    new = QsGenerators(
        tuple(x * alpha for x in gen.d),
        tuple(x * alpha for x in gen.q),
        gen.a, gen.p, gen.g, gen.b,
        tuple(x * alpha for x in gen.h),
    )
    return A._with_gen(new)


def sub(A, B_):
    return add(A, scale(B_, -1.0))


def _mul_lower(ga, gb):
    """Lower generators of the product of generator sets *ga* and *gb*.

    Two cross-Gram states carry the coupling between the triangles:
    ``f_k = Q^A_k G^B_k`` (ascending) and ``e_k = H^A_{k+1} P^B_{k+1}``
    (descending).
    """
    n = len(ga.d)
    like = ga.d[0]
    f = [None] * n
    prev = _zeros(like, 0, 0)
    for k in range(n):
        prev = mm(mm(ga.a[k], prev), gb.b[k]) + mm(ga.q[k], gb.g[k])
        f[k] = prev
    e = [None] * n
    nxt = _zeros(like, 0, 0)
    e[n - 1] = nxt
    for k in range(n - 2, -1, -1):
        nxt = mm(ga.h[k + 1], gb.p[k + 1]) + mm(mm(ga.b[k + 1], nxt), gb.a[k + 1])
        e[k] = nxt

    q, a, p = [], [], []
    f_prev = _zeros(like, 0, 0)
    for k in range(n):
        qa = mm(mm(ga.a[k], f_prev), gb.h[k]) + mm(ga.q[k], gb.d[k])
        q.append(B.bmat(like, [[qa], [gb.q[k]]]))
        cross = mm(ga.q[k], gb.p[k])
        a.append(B.bmat(like, [
            [ga.a[k], cross],
            [_zeros(like, gb.a[k].shape[0], ga.a[k].shape[1]), gb.a[k]],
        ]))
        pb = mm(ga.d[k], gb.p[k]) + mm(mm(ga.g[k], e[k]), gb.a[k])
        p.append(B.bmat(like, [[ga.p[k], pb]]))
        f_prev = f[k]
    return q, a, p, f, e


def mul(A, B_):
    """``A @ B`` in generator form.

    Result widths are ``r_k(A) + r_k(B)`` in each triangle. The cost is
    ``O(N r^3)`` for two ascending and two descending sweeps.
    """
    check_same_partition(A, B_)
    ga, gb = A.gen, B_.gen
    q, a, p, f, e = _mul_lower(ga, gb)
    # upper part: lower part of B^T A^T, transposed back
    gt, bt, ht, _, _ = _mul_lower(gb.transposed(), ga.transposed())
    like = ga.d[0]
    n = len(ga.d)
    d = []
    for k in range(n):
        fk = f[k - 1] if k > 0 else _zeros(like, 0, 0)
        dk = mm(ga.d[k], gb.d[k]) + mm(mm(ga.p[k], fk), gb.h[k]) + mm(mm(ga.g[k], e[k]), gb.q[k])
        d.append(dk)
    gen = QsGenerators(
        tuple(d), tuple(q), tuple(a), tuple(p),
        tuple(x.T for x in gt), tuple(x.T for x in bt), tuple(x.T for x in ht),
    )
    return A._with_gen(gen)


@dataclass(frozen=True)
class QsLuFactors:
    """Block LU factors ``A = L U`` in generator form.

    ``L`` has identity diagonal blocks and lower generators
    ``(q~, a, p)``; ``U`` has the pivot blocks ``d~`` on its diagonal and
    upper generators ``(g~, b, h)``. ``f`` holds the auxiliary states
    ``f_k = Q~_k G~_k`` and ``pivots`` the factorized ``d~_k``.
    """

    L: QsMatrix
    U: QsMatrix
    f: tuple
    pivots: tuple

    @property
    def D(self):
        """Pivot blocks ``d~_k`` (the block diagonal of an LDU split)."""
        return self.U.gen.d

    def solve(self, y, trans=False):
        return lu_solve(self, y, trans=trans)


def default_pivot_rtol(N):
    # condition threshold 1 / (N * 1e-10)
    return N * 1e-10


def lu(A, pivot_rtol=None, on_step=None):
    """Pivot-free block LU of a strongly regular quasiseparable matrix.

    Implements the generator recurrences::

        d~_k = d_k - p_k f_{k-1} h_k
        q~_k = (q_k - a_k f_{k-1} h_k) d~_k^{-1}
        g~_k = g_k - p_k f_{k-1} b_k
        f_k  = a_k f_{k-1} b_k + q~_k g~_k

    with ``f_0 = 0``. The widths of ``L`` and ``U`` equal those of *A*.

    Raises
    ------
    SingularPivot
        If some ``d~_k`` has reciprocal condition below *pivot_rtol*
        (default ``N * 1e-10``), i.e. *A* is not strongly regular to
        working precision.

    *on_step*, if given, is called as ``on_step(k, d~_k, q~_k, g~_k)``
    after each block step.
    """
    gen = A.gen
    n = A.nblocks
    rtol = default_pivot_rtol(A.N) if pivot_rtol is None else pivot_rtol
    like = gen.d[0]
    f = _zeros(like, 0, 0)
    dt, qt, gt, fs, pivots = [], [], [], [], []
    for k in range(n):
        pf = mm(gen.p[k], f)
        corr = mm(pf, gen.h[k])
        dk = gen.d[k] - corr
        piv = B.factor_pivot(dk, k, B.block_norm(gen.d[k]) + B.block_norm(corr), rtol)
        af = mm(gen.a[k], f)
        qk = piv.rsolve(gen.q[k] - mm(af, gen.h[k]))
        gk = gen.g[k] - mm(pf, gen.b[k])
        f = mm(af, gen.b[k]) + mm(qk, gk)
        dt.append(dk)
        qt.append(qk)
        gt.append(gk)
        fs.append(f)
        pivots.append(piv)
        if on_step is not None:
            on_step(k, dk, qk, gk)

    def empty(rows_of, cols_of):
        return tuple(_zeros(like, rows_of(k), cols_of(k)) for k in range(n))

    sizes = [x.shape[0] for x in gen.d]
    ident = tuple(B.eye(x, x.shape[0]) for x in gen.d)
    L = A._with_gen(QsGenerators(
        ident, tuple(qt), gen.a, gen.p,
        empty(lambda k: sizes[k], lambda k: 0),
        empty(lambda k: 0, lambda k: 0),
        empty(lambda k: 0, lambda k: sizes[k]),
    ))
    U = A._with_gen(QsGenerators(
        tuple(dt),
        empty(lambda k: 0, lambda k: sizes[k]),
        empty(lambda k: 0, lambda k: 0),
        empty(lambda k: sizes[k], lambda k: 0),
        tuple(gt), gen.b, gen.h,
    ))
    return QsLuFactors(L, U, tuple(fs), tuple(pivots))


def _forward(q, a, p, diag_solve, y, off):
    n = len(q)
    x = np.empty(y.shape, dtype=np.result_type(y.dtype, np.float64))
    s = np.zeros((0,) + y.shape[1:], dtype=x.dtype)
    for k in range(n):
        rhs = y[off[k]:off[k + 1]] - mm(p[k], s)
        xk = diag_solve(k, rhs)
        x[off[k]:off[k + 1]] = xk
        s = mm(a[k], s) + mm(q[k], xk)
    return x


def _backward(g, b, h, diag_solve, y, off):
    n = len(g)
    x = np.empty(y.shape, dtype=np.result_type(y.dtype, np.float64))
    t = np.zeros((0,) + y.shape[1:], dtype=x.dtype)
    for k in range(n - 1, -1, -1):
        rhs = y[off[k]:off[k + 1]] - mm(g[k], t)
        xk = diag_solve(k, rhs)
        x[off[k]:off[k + 1]] = xk
        t = mm(b[k], t) + mm(h[k], xk)
    return x


def _unit(k, v):
    return v


def _check_rhs(A, y):
    y = np.asarray(y)
    if y.shape[0] != A.N:
        raise ValueError(f"dimension mismatch: matrix is {A.N}, right-hand side is {y.shape[0]}")
    return y


def _pivots_for(T, pivots):
    if pivots is not None:
        return pivots
    rtol = default_pivot_rtol(T.N)
    return [B.factor_pivot(dk, k, B.block_norm(dk), rtol) for k, dk in enumerate(T.gen.d)]


def solve_lower(L, y, unit=True, pivots=None):
    """Forward substitution with a lower quasiseparable ``L`` (one sweep).

    With ``unit=False`` the diagonal blocks are factored (or taken from
    *pivots*) and applied at each step.
    """
    y = _check_rhs(L, y)
    if any(w for w in L.upper_orders):
        raise StructureError("solve_lower needs a matrix with zero upper order")
    gen = L.gen
    if unit:
        diag = _unit
    else:
        piv = _pivots_for(L, pivots)
        diag = lambda k, v: piv[k].solve(v)  # noqa: E731
    return _forward(gen.q, gen.a, gen.p, diag, y, L.offsets)


def solve_upper(U, y, pivots=None):
    """Backward substitution with an upper quasiseparable ``U`` (one sweep)."""
    y = _check_rhs(U, y)
    if any(w for w in U.lower_orders):
        raise StructureError("solve_upper needs a matrix with zero lower order")
    piv = _pivots_for(U, pivots)
    return _backward(U.gen.g, U.gen.b, U.gen.h, lambda k, v: piv[k].solve(v), y, U.offsets)


def lu_solve(F, y, trans=False):
    """Solve ``A x = y`` (``A^T x = y`` with *trans*) from LU factors."""
    L, U, piv = F.L, F.U, F.pivots
    y = _check_rhs(L, y)
    if not trans:
        z = _forward(L.gen.q, L.gen.a, L.gen.p, _unit, y, L.offsets)
        return _backward(U.gen.g, U.gen.b, U.gen.h, lambda k, v: piv[k].solve(v), z, U.offsets)
    # A^T = U^T L^T: U^T is lower with generators (g^T, b^T, h^T)
    ug, lg = U.gen, L.gen
    z = _forward(
        tuple(x.T for x in ug.g), tuple(x.T for x in ug.b), tuple(x.T for x in ug.h),
        lambda k, v: piv[k].solve(v, trans=True), y, U.offsets,
    )
    return _backward(
        tuple(x.T for x in lg.q), tuple(x.T for x in lg.a), tuple(x.T for x in lg.p),
        _unit, z, L.offsets,
    )


def solve(A, y):
    return lu_solve(lu(A), y)


def triangular_inverses(F):
    """Generators of ``L^{-1}`` and ``U^{-1}`` from LU factors.

    For a lower sweep with diagonal ``d`` the inverse keeps the width:
    ``d' = d^{-1}``, ``q' = q d^{-1}``, ``a' = a - q d^{-1} p``,
    ``p' = -d^{-1} p``; dually for the upper factor.
    """
    L, U = F.L, F.U
    lg, ug = L.gen, U.gen
    n = L.nblocks
    dinv = tuple(F.pivots[k].inv() for k in range(n))
    Linv = L._with_gen(QsGenerators(
        lg.d, lg.q,
        tuple(lg.a[k] - mm(lg.q[k], lg.p[k]) for k in range(n)),
        tuple(-lg.p[k] for k in range(n)),
        lg.g, lg.b, lg.h,
    ))
    hd = tuple(mm(ug.h[k], dinv[k]) for k in range(n))
    Uinv = U._with_gen(QsGenerators(
        dinv, ug.q, ug.a, ug.p,
        tuple(-mm(dinv[k], ug.g[k]) for k in range(n)),
        tuple(ug.b[k] - mm(hd[k], ug.g[k]) for k in range(n)),
        hd,
    ))
    return Linv, Uinv


def inverse(A, pivot_rtol=None):
    """``A^{-1}`` as ``U^{-1} L^{-1}``; widths equal those of *A*."""
    Linv, Uinv = triangular_inverses(lu(A, pivot_rtol=pivot_rtol))
    return mul(Uinv, Linv)
