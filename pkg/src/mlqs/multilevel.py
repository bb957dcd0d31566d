"""Two-level quasiseparable matrices.

An :class:`L2QsMatrix` has the same outer generator layout as a
:class:`~mlqs.core.QsMatrix`, but every generator entry is a small grid
(:class:`QsBlock`) of level-1 QsMatrix values on one shared inner
partition. The level-1 sweeps in :mod:`mlqs.core` and :mod:`mlqs.arith`
run unchanged on it: block products and sums dispatch to QsMatrix
arithmetic, and the attached :class:`~mlqs.compress.CompressionPolicy`
is applied to every entry after each product or sum.
"""
from __future__ import annotations

import contextvars
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _blocks as B
from . import arith
from .compress import CompressionPolicy, compress
from .core import BlockPartition, QsGenerators, QsMatrix, frobenius_norm, transpose
from .errors import PartitionMismatch, SingularPivot, StructureError

_error_log = contextvars.ContextVar("mlqs_compress_log", default=None)


class OrderGrowthWarning(RuntimeWarning):
    """Inner quasiseparable order exceeded the configured ceiling."""


def _is_trivial(x):
    """True if *x* has no off-diagonal generators."""
    return not any(x.lower_orders) and not any(x.upper_orders)


def _is_identity(x):
    return _is_trivial(x) and all(
        np.array_equal(dk, np.eye(dk.shape[0])) for dk in x.gen.d
    )


def _squeeze(x, policy):
    if _is_trivial(x):
        return x
    log = _error_log.get()
    if log is None:
        return compress(x, policy)
    out, info = compress(x, policy, return_info=True, check_orth=False)
    log.append(info.error_bound)
    return out


def _entry_mul(x, y, policy):
    if x is None or y is None:
        return None
    if _is_identity(x):
        return y
    if _is_identity(y):
        return x
    prod = arith.mul(x, y)
    if _is_trivial(x) or _is_trivial(y):
        return prod
    return _squeeze(prod, policy)


def _entry_add(x, y, policy, sign=1.0):
    if y is None:
        return x
    if x is None:
        return y if sign == 1.0 else arith.scale(y, sign)
    total = arith.add(x, y) if sign == 1.0 else arith.sub(x, y)
    if _is_trivial(x) or _is_trivial(y):
        return total
    return _squeeze(total, policy)


class QsBlock:
    """An ``r x c`` grid of QsMatrix entries sharing one inner partition.

    ``None`` entries are structural zeros. Products and sums compress
    every resulting entry with *policy*.
    """

    __slots__ = ("entries", "shape", "inner", "policy")

    def __init__(self, entries, inner, policy, shape=None):
        entries = tuple(tuple(row) for row in entries)
        if shape is None:
            shape = (len(entries), len(entries[0]) if entries else 0)
        self.entries = entries
        self.shape = tuple(shape)
        self.inner = inner
        self.policy = policy

    @classmethod
    def zeros(cls, rows, cols, inner, policy):
        return cls([[None] * cols for _ in range(rows)], inner, policy, (rows, cols))

    @classmethod
    def identity(cls, n, inner, policy):
        eye = QsMatrix.identity(inner)
        return cls([[eye if i == j else None for j in range(n)] for i in range(n)], inner, policy, (n, n))

    @classmethod
    def from_array(cls, X, entry, policy):
        """Scale *entry* by each scalar of the 2-D array *X* (zeros become ``None``)."""
        X = np.asarray(X)
        rows = [[arith.scale(entry, float(v)) if v != 0 else None for v in row] for row in X]
        return cls(rows, entry.partition, policy, X.shape)

    def with_policy(self, policy):
        return QsBlock(self.entries, self.inner, policy, self.shape)

    def _like(self, entries, shape=None):
        return QsBlock(entries, self.inner, self.policy, shape)

    def __iter__(self):
        return iter(self.entries)

    @property
    def T(self):
        r, c = self.shape
        ent = [[None if self.entries[i][j] is None else transpose(self.entries[i][j]) for i in range(r)]
               for j in range(c)]
        return self._like(ent, (c, r))

    def __neg__(self):
        return self * -1.0

    def __mul__(self, alpha):
        if not np.isscalar(alpha):
            return NotImplemented
        if alpha == 0:
            return QsBlock.zeros(*self.shape, self.inner, self.policy)
        ent = [[None if x is None else arith.scale(x, alpha) for x in row] for row in self.entries]
        return self._like(ent, self.shape)

    __rmul__ = __mul__

    def _combine(self, other, sign):
        if self.shape != other.shape:
            raise StructureError(f"block shapes differ: {self.shape} vs {other.shape}")
        ent = [[_entry_add(x, y, self.policy, sign) for x, y in zip(r1, r2)]
               for r1, r2 in zip(self.entries, other.entries)]
        return self._like(ent, self.shape)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __matmul__(self, other):
        if isinstance(other, QsBlock):
            return self._matmul_block(other)
        return self._apply(np.asarray(other))

    def _matmul_block(self, other):
        r, c = self.shape
        c2, m = other.shape
        if c != c2:
            raise StructureError(f"cannot multiply blocks of shapes {self.shape} and {other.shape}")
        pol = self.policy
        ent = []
        for i in range(r):
            row = []
            for j in range(m):
                acc = None
                for l in range(c):
                    acc = _entry_add(acc, _entry_mul(self.entries[i][l], other.entries[l][j], pol), pol)
                row.append(acc)
            ent.append(row)
        return self._like(ent, (r, m))

    def _apply(self, x):
        r, c = self.shape
        n = self.inner.N
        if x.shape[0] != c * n:
            raise ValueError(f"vector length {x.shape[0]} does not match block width {c} x {n}")
        out = np.zeros((r * n,) + x.shape[1:], dtype=np.result_type(x.dtype, np.float64))
        for i in range(r):
            for j in range(c):
                e = self.entries[i][j]
                if e is not None:
                    out[i * n:(i + 1) * n] += e @ x[j * n:(j + 1) * n]
        return out

    def to_dense(self):
        r, c = self.shape
        n = self.inner.N
        out = np.zeros((r * n, c * n))
        for i in range(r):
            for j in range(c):
                e = self.entries[i][j]
                if e is not None:
                    out[i * n:(i + 1) * n, j * n:(j + 1) * n] = e.to_dense()
        return out

    def memory_elements(self):
        return sum(e.memory_elements() for row in self.entries for e in row if e is not None)

    def max_inner_order(self):
        return max((max(e.order) for row in self.entries for e in row if e is not None), default=0)

    def map(self, fn):
        ent = [[None if e is None else fn(e) for e in row] for row in self.entries]
        return self._like(ent, self.shape)


@B.zeros.register
def _(like: QsBlock, rows, cols):
    return QsBlock.zeros(rows, cols, like.inner, like.policy)


@B.eye.register
def _(like: QsBlock, n):
    return QsBlock.identity(n, like.inner, like.policy)


@B.bmat.register
def _(like: QsBlock, grid):
    entries = []
    for brow in grid:
        nrows = brow[0].shape[0]
        for i in range(nrows):
            entries.append([e for blk in brow for e in blk.entries[i]])
    ncols = sum(blk.shape[1] for blk in grid[0])
    return QsBlock(entries, like.inner, like.policy, (len(entries), ncols))


@B.to_dense.register
def _(x: QsBlock):
    return x.to_dense()


@B.block_norm.register
def _(x: QsBlock):
    return float(np.sqrt(sum(frobenius_norm(e) ** 2 for row in x.entries for e in row if e is not None)))


class QsPivot:
    """A 1x1 outer pivot block, factored by the level-1 LU of its entry."""

    __slots__ = ("k", "entry", "fac", "policy", "_inv")

    def __init__(self, block, k):
        if block.shape != (1, 1):
            raise NotImplementedError("outer pivot blocks must hold exactly one inner matrix")
        entry = block.entries[0][0]
        if entry is None:
            raise SingularPivot(k, 0.0, level=2)
        try:
            self.fac = arith.lu(entry)
        except SingularPivot as exc:
            raise SingularPivot(k, exc.rcond, level=2) from exc
        self.k = k
        self.entry = entry
        self.policy = block.policy
        self._inv = None

    def inv(self):
        if self._inv is None:
            Linv, Uinv = arith.triangular_inverses(self.fac)
            inv = _squeeze(arith.mul(Uinv, Linv), self.policy)
            self._inv = QsBlock([[inv]], self.entry.partition, self.policy)
        return self._inv

    def rsolve(self, X):
        return X @ self.inv()

    def solve(self, y, trans=False):
        return arith.lu_solve(self.fac, y, trans=trans)


@B.factor_pivot.register
def _(block: QsBlock, k, scale, rtol):
    return QsPivot(block, k)


@dataclass(frozen=True)
class L2QsMatrix(QsMatrix):
    """Two-level quasiseparable matrix.

    ``partition`` counts outer blocks in units of inner matrices (one per
    grid column for PDE matrices); ``inner`` is the partition shared by
    every entry and ``policy`` the compression applied by arithmetic.
    """

    inner: BlockPartition = field(default=None)
    policy: CompressionPolicy = field(default_factory=CompressionPolicy.exact)

    level = 2

    def __post_init__(self):
        super().__post_init__()
        for name in ("d", "q", "a", "p", "g", "b", "h"):
            for k, blk in enumerate(getattr(self.gen, name)):
                if not isinstance(blk, QsBlock):
                    raise StructureError(f"{name} entry is {type(blk).__name__}, expected QsBlock", k)
                for row in blk.entries:
                    for e in row:
                        if e is not None and e.partition != self.inner:
                            raise StructureError(f"{name} entry has inner partition differing from {self.inner.sizes}", k)

    def _with_gen(self, gen):
        return L2QsMatrix._trusted(self.partition, gen, inner=self.inner, policy=self.policy)

    @property
    def dims(self):
        return tuple(s * self.inner.N for s in self.partition.sizes)

    @property
    def offsets(self):
        return tuple(np.concatenate([[0], np.cumsum(self.dims)]).tolist())

    @property
    def N(self):
        return self.partition.N * self.inner.N

    def with_policy(self, policy):
        gen = QsGenerators(*(tuple(x.with_policy(policy) for x in getattr(self.gen, f))
                             for f in ("d", "q", "a", "p", "g", "b", "h")))
        return L2QsMatrix._trusted(self.partition, gen, inner=self.inner, policy=policy)

    def max_inner_order(self):
        return max(x.max_inner_order() for f in ("d", "q", "a", "p", "g", "b", "h")
                   for x in getattr(self.gen, f))

    def map_entries(self, fn):
        gen = QsGenerators(*(tuple(x.map(fn) for x in getattr(self.gen, f))
                             for f in ("d", "q", "a", "p", "g", "b", "h")))
        return self._with_gen(gen)


def _empty_blocks(inner, policy, shapes):
    return tuple(QsBlock.zeros(r, c, inner, policy) for r, c in shapes)


def block_tridiagonal(diag, lower, upper, policy=None):
    """Level-2 form of a block tridiagonal matrix.

    ``diag[i]`` sits at ``(i, i)``, ``lower[i]`` at ``(i+1, i)`` and
    ``upper[i]`` at ``(i, i+1)``. Off-diagonal entries that are ``None``
    or identically zero give outer width 0 at that split, otherwise 1.
    """
    policy = policy or CompressionPolicy.exact()
    m = len(diag)
    if len(lower) != m - 1 or len(upper) != m - 1:
        raise StructureError(f"need {m - 1} sub/super-diagonal blocks, got {len(lower)} and {len(upper)}")
    inner = diag[0].partition
    for blk in list(diag) + [x for x in list(lower) + list(upper) if x is not None]:
        if blk.partition != inner:
            raise StructureError(f"inner partitions differ: {blk.partition.sizes} vs {inner.sizes}")
    eye = QsMatrix.identity(inner)

    def live(x):
        return x is not None and frobenius_norm(x) > 0

    wl = [1 if live(x) else 0 for x in lower] + [0]
    wu = [1 if live(x) else 0 for x in upper] + [0]
    blk = lambda ent, shape: QsBlock(ent, inner, policy, shape)  # noqa: E731
    d, q, a, p, g, b, h = [], [], [], [], [], [], []
    for k in range(m):
        pl = wl[k - 1] if k else 0
        pu = wu[k - 1] if k else 0
        d.append(blk([[diag[k]]], (1, 1)))
        q.append(blk([[eye]] if wl[k] else [], (wl[k], 1)))
        a.append(QsBlock.zeros(wl[k], pl, inner, policy))
        p.append(blk([[lower[k - 1]]] if pl else [[]], (1, pl)))
        g.append(blk([[upper[k]]] if wu[k] else [[]], (1, wu[k])))
        b.append(QsBlock.zeros(pu, wu[k], inner, policy))
        h.append(blk([[eye]] if pu else [], (pu, 1)))
    gen = QsGenerators(*(tuple(x) for x in (d, q, a, p, g, b, h)))
    return L2QsMatrix(BlockPartition((1,) * m), gen, inner=inner, policy=policy)


def tensor(A, Bm, policy=None):
    """``A (x) B`` as a two-level matrix.

    Outer generators are those of *A* with each scalar ``alpha`` replaced
    by ``alpha * B`` in ``d, p, g`` and by ``alpha * I`` in ``q, a, b, h``,
    so every product ``p a...a q`` carries exactly one factor ``B``.
    Outer widths are *A*'s, inner widths *B*'s.
    """
    if A.level != 1 or Bm.level != 1:
        raise StructureError("tensor expects two level-1 matrices")
    policy = policy or CompressionPolicy.exact()
    eye = QsMatrix.identity(Bm.partition)
    gen = QsGenerators(*(tuple(QsBlock.from_array(x, Bm if f in "dpg" else eye, policy) for x in getattr(A.gen, f))
                         for f in ("d", "q", "a", "p", "g", "b", "h")))
    return L2QsMatrix(A.partition, gen, inner=Bm.partition, policy=policy)


def l2_compress(A, policy=None):
    """Compress every inner entry; outer widths are left as they are."""
    policy = policy or A.policy
    return A.map_entries(lambda e: compress(e, policy)).with_policy(A.policy)


def _require_l2(*mats):
    for M in mats:
        if not isinstance(M, L2QsMatrix):
            raise StructureError(f"expected an L2QsMatrix, got {type(M).__name__}")


def l2_matvec(A, x):
    _require_l2(A)
    from .core import matvec
    return matvec(A, x)


def l2_add(A, Bm):
    _require_l2(A, Bm)
    return arith.add(A, Bm)


def l2_sub(A, Bm):
    _require_l2(A, Bm)
    return arith.sub(A, Bm)


def l2_mul(A, Bm):
    _require_l2(A, Bm)
    if A.inner != Bm.inner:
        raise PartitionMismatch("inner partitions differ")
    return arith.mul(A, Bm)


def l2_scale(A, alpha):
    _require_l2(A)
    return arith.scale(A, alpha)


def l2_inverse(A, policy=None):
    _require_l2(A)
    A2 = A.with_policy(policy) if policy is not None else A
    return arith.inverse(A2).with_policy(A.policy)


@dataclass(frozen=True)
class L2LduReport:
    """Per-outer-step diagnostics of :func:`l2_ldu`."""

    max_inner_order: tuple
    compression_error: tuple


@dataclass(frozen=True)
class L2LduFactors(arith.QsLuFactors):
    report: L2LduReport = None


def l2_ldu(A, policy=None, order_ceiling=None):
    """Block LU of a two-level matrix with per-operation compression.

    The level-1 LU recurrences run on the outer generators with every
    entry-level product and sum compressed by *policy* (default: the
    matrix's own). For block tridiagonal input this is the Schur sweep
    ``S_{k+1} = A_{k+1} - C_k S_k^{-1} B_k``.

    A :class:`OrderGrowthWarning` is emitted when some entry's inner
    order exceeds *order_ceiling*.
    """
    _require_l2(A)
    policy = policy or A.policy
    A2 = A.with_policy(policy)
    orders, errors = [], []
    log = []
    token = _error_log.set(log)
    try:
        def on_step(k, dk, qk, gk):
            orders.append(max(dk.max_inner_order(), qk.max_inner_order(), gk.max_inner_order()))
            errors.append(float(np.sqrt(sum(e * e for e in log))))
            log.clear()
            if order_ceiling is not None and orders[-1] > order_ceiling:
                warnings.warn(
                    f"inner order {orders[-1]} exceeds ceiling {order_ceiling} at outer step {k}",
                    OrderGrowthWarning, stacklevel=3,
                )

        F = arith.lu(A2, on_step=on_step)
    finally:
        _error_log.reset(token)
    return L2LduFactors(F.L, F.U, F.f, F.pivots, L2LduReport(tuple(orders), tuple(errors)))


def l2_solve(F, rhs, trans=False):
    """Outer forward/backward substitution using the inner pivot LUs."""
    return arith.lu_solve(F, rhs, trans=trans)
