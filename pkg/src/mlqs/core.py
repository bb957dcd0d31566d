"""Block quasiseparable matrices in generator form.

A matrix with block sizes ``n_0, ..., n_{n-1}`` is stored through seven
generator families::

    A[i, j] = p_i a_{i-1} ... a_{j+1} q_j     (i > j)
    A[i, i] = d_i
    A[i, j] = g_i b_{i+1} ... b_{j-1} h_j     (i < j)

All families are stored with one entry per block. Entries that the
formula never touches (``q`` and ``g`` of the last block, ``p`` and ``h``
of the first, ``a`` and ``b`` of both ends) are kept as width-0 arrays so
that every sweep is uniform: with lower widths ``rl[k]`` (``rl[-1] =
rl[n-1] = 0``) the shapes are

    q[k]: rl[k] x n_k      a[k]: rl[k] x rl[k-1]      p[k]: n_k x rl[k-1]
    g[k]: n_k x ru[k]      b[k]: ru[k-1] x ru[k]      h[k]: ru[k-1] x n_k

The sweeps in this module are written against the helpers of
:mod:`mlqs._blocks`, so they also run on level-2 matrices whose entries
are grids of QsMatrix values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from . import _blocks as B
from .errors import PartitionMismatch, StructureError

FAMILIES = ("d", "q", "a", "p", "g", "b", "h")


@dataclass(frozen=True)
class BlockPartition:
    """Sizes ``n_k`` of the diagonal blocks."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise StructureError("partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise StructureError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    offsets: tuple = field(init=False, repr=False, compare=False)

    @property
    def n(self):
        return len(self.sizes)

    @property
    def N(self):
        return self.offsets[-1]

    def block(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])

    @classmethod
    def scalar(cls, N):
        return cls((1,) * int(N))

    @classmethod
    def uniform(cls, N, block):
        """Blocks of size *block*, the last one absorbing the remainder."""
        N, block = int(N), int(block)
        full, rem = divmod(N, block)
        sizes = [block] * full
        if rem:
            sizes.append(rem)
        return cls(tuple(sizes))

    def is_coarsening_of(self, other):
        return set(self.offsets) <= set(other.offsets) and self.N == other.N


@dataclass(frozen=True)
class QsGenerators:
    """The seven generator families, one entry per block (see module docs)."""

    d: tuple
    q: tuple
    a: tuple
    p: tuple
    g: tuple
    b: tuple
    h: tuple

    def transposed(self):
        t = lambda xs: tuple(x.T for x in xs)  # noqa: E731
        return QsGenerators(t(self.d), t(self.g), t(self.b), t(self.h), t(self.q), t(self.a), t(self.p))


def _validate(gen, sizes):
    n = len(sizes)
    for name in FAMILIES:
        if len(getattr(gen, name)) != n:
            raise StructureError(f"family {name!r} has {len(getattr(gen, name))} entries, expected {n}")
    rl_prev = ru_prev = 0
    for k in range(n):
        nk = sizes[k]
        if gen.d[k].shape != (nk, nk):
            raise StructureError(f"d has shape {gen.d[k].shape}, expected {(nk, nk)}", k)
        rl, ru = gen.q[k].shape[0], gen.g[k].shape[1]
        if k == n - 1 and (rl or ru):
            raise StructureError("last block must have width-0 q and g", k)
        expect = {
            "q": (rl, nk), "a": (rl, rl_prev), "p": (nk, rl_prev),
            "g": (nk, ru), "b": (ru_prev, ru), "h": (ru_prev, nk),
        }
        for name, shape in expect.items():
            got = getattr(gen, name)[k].shape
            if tuple(got) != shape:
                raise StructureError(f"{name} has shape {tuple(got)}, expected {shape}", k)
        rl_prev, ru_prev = rl, ru


@dataclass(frozen=True)
class QsMatrix:
    """A block quasiseparable matrix with dense (ndarray) generator entries.

    Instances are immutable; every operation returns a new matrix.
    """

    partition: BlockPartition
    gen: QsGenerators

    level = 1

    def __post_init__(self):
        _validate(self.gen, self.partition.sizes)

    @classmethod
    def _trusted(cls, partition, gen, **extra):
        obj = object.__new__(cls)
        object.__setattr__(obj, "partition", partition)
        object.__setattr__(obj, "gen", gen)
        for key, val in extra.items():
            object.__setattr__(obj, key, val)
        return obj

    def _with_gen(self, gen):
        return type(self)._trusted(self.partition, gen)

    @classmethod
    def from_generators(cls, d, q=None, a=None, p=None, g=None, b=None, h=None):
        """Build from generator sequences.

        Families may be given either padded to one entry per block or in
        the short form indexed as in the generator formula: ``q, g`` for
        blocks ``0..n-2``, ``p, h`` for ``1..n-1`` and ``a, b`` for
        ``1..n-2``. Missing families default to width 0.
        """
        d = [np.atleast_2d(np.asarray(x, dtype=float)) for x in d]
        n = len(d)
        sizes = tuple(x.shape[0] for x in d)

        def pad(xs, lead, trail):
            if xs is None:
                return None
            xs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in xs]
            if len(xs) == n:
                return xs
            if len(xs) != n - lead - trail:
                raise StructureError(f"expected {n} or {n - lead - trail} entries, got {len(xs)}")
            return [None] * lead + xs + [None] * trail

        q, g = pad(q, 0, 1), pad(g, 0, 1)
        p, h = pad(p, 1, 0), pad(h, 1, 0)
        a, b = pad(a, 1, 1), pad(b, 1, 1)
        rl = [0] * n
        ru = [0] * n
        for k in range(n - 1):
            rl[k] = q[k].shape[0] if q is not None and q[k] is not None and q[k].size else 0
            ru[k] = g[k].shape[1] if g is not None and g[k] is not None and g[k].size else 0

        def fill(xs, shape_of):
            out = []
            for k in range(n):
                x = xs[k] if xs is not None else None
                out.append(np.zeros(shape_of(k)) if x is None or x.size == 0 else x)
            return tuple(out)

        prev = lambda r, k: r[k - 1] if k > 0 else 0  # noqa: E731
        gen = QsGenerators(
            tuple(d),
            fill(q, lambda k: (rl[k], sizes[k])),
            fill(a, lambda k: (rl[k], prev(rl, k))),
            fill(p, lambda k: (sizes[k], prev(rl, k))),
            fill(g, lambda k: (sizes[k], ru[k])),
            fill(b, lambda k: (prev(ru, k), ru[k])),
            fill(h, lambda k: (prev(ru, k), sizes[k])),
        )
        return cls(BlockPartition(sizes), gen)

    @classmethod
    def block_diagonal(cls, blocks):
        blocks = [np.atleast_2d(np.asarray(x, dtype=float)) for x in blocks]
        return cls.from_generators(blocks)

    @classmethod
    def identity(cls, partition):
        if not isinstance(partition, BlockPartition):
            partition = BlockPartition.scalar(partition)
        return cls.block_diagonal([np.eye(s) for s in partition.sizes])

    @classmethod
    def zeros(cls, partition):
        if not isinstance(partition, BlockPartition):
            partition = BlockPartition.scalar(partition)
        return cls.block_diagonal([np.zeros((s, s)) for s in partition.sizes])

    # generator access
    d = property(lambda self: self.gen.d)
    q = property(lambda self: self.gen.q)
    a = property(lambda self: self.gen.a)
    p = property(lambda self: self.gen.p)
    g = property(lambda self: self.gen.g)
    b = property(lambda self: self.gen.b)
    h = property(lambda self: self.gen.h)

    @property
    def nblocks(self):
        return self.partition.n

    @property
    def dims(self):
        """Scalar size of each diagonal block."""
        return self.partition.sizes

    @property
    def offsets(self):
        return self.partition.offsets

    @property
    def N(self):
        return self.offsets[-1]

    @property
    def shape(self):
        return (self.N, self.N)

    @property
    def lower_orders(self):
        """Widths ``r^l_k`` for the splits ``k = 0..n-2``."""
        return tuple(self.gen.q[k].shape[0] for k in range(self.nblocks - 1))

    @property
    def upper_orders(self):
        return tuple(self.gen.g[k].shape[1] for k in range(self.nblocks - 1))

    @property
    def order(self):
        """``(r^l, r^u)``: maxima of the generator widths."""
        return (max(self.lower_orders, default=0), max(self.upper_orders, default=0))

    @property
    def T(self):
        return transpose(self)

    def to_dense(self):
        return reconstruct_dense(self)

    def memory_elements(self):
        """Number of stored scalars over all generators."""
        return sum(_nelems(x) for name in FAMILIES for x in getattr(self.gen, name))

    # operators delegate to the arithmetic module
    def __matmul__(self, other):
        if isinstance(other, QsMatrix):
            from .arith import mul
            return mul(self, other)
        return matvec(self, other)

    def __add__(self, other):
        from .arith import add
        return add(self, other)

    def __sub__(self, other):
        from .arith import sub
        return sub(self, other)

    def __neg__(self):
        from .arith import scale
        return scale(self, -1.0)

    def __mul__(self, alpha):
        if not np.isscalar(alpha):
            return NotImplemented
        from .arith import scale
        return scale(self, alpha)

    __rmul__ = __mul__


def _nelems(x):
    if isinstance(x, np.ndarray):
        return x.size
    return x.memory_elements()


def check_same_partition(A, B):
    if A.partition != B.partition or getattr(A, "inner", None) != getattr(B, "inner", None):
        raise PartitionMismatch(f"partitions differ: {A.partition.sizes} vs {B.partition.sizes}")


def transpose(A):
    """Exact transpose: lower and upper families swap roles."""
    return A._with_gen(A.gen.transposed())


def matvec(A, x):
    """Compute ``A @ x`` with one ascending and one descending sweep.

    *x* may be a vector or a 2-D array of stacked columns. The dense
    matrix is never formed; the cost is ``O(N (r^l + r^u))`` per column.
    """
    x = np.asarray(x)
    if x.shape[0] != A.N:
        raise ValueError(f"dimension mismatch: matrix is {A.N}, vector is {x.shape[0]}")
    gen, off, n = A.gen, A.offsets, A.nblocks
    dtype = np.result_type(x.dtype, np.float64)
    tail = x.shape[1:]
    y = np.empty(x.shape, dtype=dtype)
    s = np.zeros((0,) + tail, dtype=dtype)
    for k in range(n):
        xk = x[off[k]:off[k + 1]]
        y[off[k]:off[k + 1]] = B.mm(gen.d[k], xk) + B.mm(gen.p[k], s)
        s = B.mm(gen.a[k], s) + B.mm(gen.q[k], xk)
    t = np.zeros((0,) + tail, dtype=dtype)
    for k in range(n - 1, -1, -1):
        xk = x[off[k]:off[k + 1]]
        y[off[k]:off[k + 1]] += B.mm(gen.g[k], t)
        t = B.mm(gen.b[k], t) + B.mm(gen.h[k], xk)
    return y


def reconstruct_dense(A):
    """Assemble the full ``N x N`` matrix. Costs ``O(N^2)``; for testing."""
    gen = QsGenerators(*(tuple(B.to_dense(x) for x in getattr(A.gen, f)) for f in FAMILIES))
    off, n = A.offsets, A.nblocks
    out = np.zeros((A.N, A.N))
    blk = lambda k: slice(off[k], off[k + 1])  # noqa: E731
    for j in range(n):
        out[blk(j), blk(j)] = gen.d[j]
        state = gen.q[j]
        for i in range(j + 1, n):
            out[blk(i), blk(j)] = gen.p[i] @ state
            state = gen.a[i] @ state
        state = gen.h[j]
        for i in range(j - 1, -1, -1):
            out[blk(i), blk(j)] = gen.g[i] @ state
            state = gen.b[i] @ state
    return out


def _lower_gram_sq(q, a, p):
    w = np.zeros((0, 0))
    total = 0.0
    for k in range(len(q) - 1, -1, -1):
        total += float(np.sum(q[k] * B.mm(w, q[k])))
        w = B.mm(p[k].T, p[k]) + B.mm(a[k].T, B.mm(w, a[k]))
    return max(total, 0.0)


def frobenius_norm(A):
    """``||A||_F`` from generator Gram recurrences in ``O(N r^2)``."""
    gen = A.gen
    diag = sum(float(np.sum(dk * dk)) for dk in gen.d)
    lower = _lower_gram_sq(gen.q, gen.a, gen.p)
    upper = _lower_gram_sq(tuple(x.T for x in gen.g), tuple(x.T for x in gen.b), tuple(x.T for x in gen.h))
    return float(np.sqrt(diag + lower + upper))


def _as_partition(partition, N):
    if partition is None:
        return BlockPartition.scalar(N)
    if isinstance(partition, BlockPartition):
        part = partition
    else:
        part = BlockPartition(tuple(partition))
    if part.N != N:
        raise StructureError(f"partition covers {part.N} rows, matrix has {N}")
    return part


def _band_lower(A, bw, part):
    n, off = part.n, part.offsets
    windows = []
    for k in range(n):
        end = off[k + 1]
        windows.append((max(0, end - bw), end) if k < n - 1 else (end, end))
    q, a, p = [], [], []
    prev = (0, 0)
    for k in range(n):
        start, end = windows[k]
        w, wp = end - start, prev[1] - prev[0]
        qk = np.zeros((w, part.sizes[k]))
        ak = np.zeros((w, wp))
        for t, c in enumerate(range(start, end)):
            if c >= off[k]:
                qk[t, c - off[k]] = 1.0
            else:
                ak[t, c - prev[0]] = 1.0
        q.append(qk)
        a.append(ak)
        p.append(np.array(A[off[k]:off[k + 1], prev[0]:prev[1]], dtype=float))
        prev = (start, end)
    return q, a, p


def from_band(A, lower_bandwidth, upper_bandwidth, partition=None):
    """Exact generators of a banded matrix.

    The lower state at each split holds the last ``lower_bandwidth``
    entries of the input, so widths never exceed the bandwidths.
    Raises :class:`StructureError` if *A* has nonzeros outside the band.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructureError(f"expected a square matrix, got shape {A.shape}")
    bl, bu = int(lower_bandwidth), int(upper_bandwidth)
    if bl < 0 or bu < 0:
        raise StructureError("bandwidths must be non-negative")
    N = A.shape[0]
    if np.any(np.tril(A, -bl - 1)) or np.any(np.triu(A, bu + 1)):
        raise StructureError(f"matrix has nonzeros outside the declared band ({bl}, {bu})")
    part = _as_partition(partition, N)
    q, a, p = _band_lower(A, bl, part)
    gt, bt, ht = _band_lower(A.T, bu, part)
    d = tuple(A[part.block(k), part.block(k)].copy() for k in range(part.n))
    gen = QsGenerators(
        d, tuple(q), tuple(a), tuple(p),
        tuple(x.T for x in gt), tuple(x.T for x in bt), tuple(x.T for x in ht),
    )
    return QsMatrix(part, gen)


def _keep_count(s, tol, N):
    if s.size == 0 or s[0] <= 1e-300:
        return 0
    rel = tol if tol > 0 else N * np.finfo(float).eps
    return int(np.count_nonzero(s > max(rel * s[0], 1e-300)))


def _lower_from_dense(A, part, tol):
    n, off = part.n, part.offsets
    q, a, p = [], [], []
    basis = np.zeros((0, 0))
    for k in range(n):
        k0, k1 = off[k], off[k + 1]
        p.append(A[k0:k1, :k0] @ basis.T)
        if k == n - 1:
            q.append(np.zeros((0, k1 - k0)))
            a.append(np.zeros((0, basis.shape[0])))
            break
        _, s, vt = np.linalg.svd(A[k1:, :k1], full_matrices=False)
        vt = vt[:_keep_count(s, tol, A.shape[0])]
        ak = vt[:, :k0] @ basis.T
        qk = vt[:, k0:k1]
        a.append(ak)
        q.append(qk)
        basis = np.hstack([ak @ basis, qk])
    return q, a, p


def from_dense(A, partition=None, tol=0.0, return_info=False):
    """Compress a dense matrix into generators of (numerically) minimal width.

    Every split's off-diagonal block is factored by SVD. With ``tol = 0``
    singular values above ``N * eps * sigma_max`` are kept, giving the
    exact off-diagonal ranks; with ``tol > 0`` the relative threshold
    ``tol * sigma_max`` is used instead.

    With *return_info*, also returns a dict with the measured
    reconstruction error and the constant ``c`` in
    ``||recon - A||_F <= c * tol * ||A||_F``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructureError(f"expected a square matrix, got shape {A.shape}")
    part = _as_partition(partition, A.shape[0])
    q, a, p = _lower_from_dense(A, part, tol)
    gt, bt, ht = _lower_from_dense(A.T, part, tol)
    d = tuple(A[part.block(k), part.block(k)].copy() for k in range(part.n))
    gen = QsGenerators(
        d, tuple(q), tuple(a), tuple(p),
        tuple(x.T for x in gt), tuple(x.T for x in bt), tuple(x.T for x in ht),
    )
    out = QsMatrix(part, gen)
    if not return_info:
        return out
    err = float(np.linalg.norm(reconstruct_dense(out) - A))
    nrm = float(np.linalg.norm(A))
    c = err / (tol * nrm) if tol > 0 and nrm > 0 else 0.0
    return out, {"error": err, "c": c}


def _principal_dense(A, i, j):
    """Dense principal sub-block covering blocks ``i..j`` inclusive."""
    gen = A.gen
    sizes = A.dims[i:j + 1]
    off = np.concatenate([[0], np.cumsum(sizes)])
    out = np.zeros((off[-1], off[-1]))
    m = j - i + 1
    for c in range(m):
        out[off[c]:off[c + 1], off[c]:off[c + 1]] = gen.d[i + c]
        state = gen.q[i + c]
        for r in range(c + 1, m):
            out[off[r]:off[r + 1], off[c]:off[c + 1]] = gen.p[i + r] @ state
            state = gen.a[i + r] @ state
        state = gen.h[i + c]
        for r in range(c - 1, -1, -1):
            out[off[r]:off[r + 1], off[c]:off[c + 1]] = gen.g[i + r] @ state
            state = gen.b[i + r] @ state
    return out


def _aggregate_lower(q, a, p, groups):
    nq, na, np_ = [], [], []
    for i, j in groups:
        ak = a[i]
        qs = [q[i]]
        ps = [p[i]]
        for m in range(i + 1, j + 1):
            ps.append(p[m] @ ak)
            qs = [a[m] @ x for x in qs] + [q[m]]
            ak = a[m] @ ak
        nq.append(np.hstack(qs))
        na.append(ak)
        np_.append(np.vstack(ps))
    return nq, na, np_


def aggregate(A, partition):
    """Re-express *A* on a coarser partition by merging consecutive blocks."""
    part = partition if isinstance(partition, BlockPartition) else BlockPartition(tuple(partition))
    if not part.is_coarsening_of(A.partition):
        raise PartitionMismatch(f"{part.sizes} is not a coarsening of {A.partition.sizes}")
    old = A.offsets
    groups = [(old.index(part.offsets[k]), old.index(part.offsets[k + 1]) - 1) for k in range(part.n)]
    gen = A.gen
    q, a, p = _aggregate_lower(gen.q, gen.a, gen.p, groups)
    gt, bt, ht = _aggregate_lower(
        tuple(x.T for x in gen.g), tuple(x.T for x in gen.b), tuple(x.T for x in gen.h), groups
    )
    d = tuple(_principal_dense(A, i, j) for i, j in groups)
    new = QsGenerators(
        d, tuple(q), tuple(a), tuple(p),
        tuple(x.T for x in gt), tuple(x.T for x in bt), tuple(x.T for x in ht),
    )
    return QsMatrix(part, new)


def offdiag_rank_profile(A, eps, partition=None, relative=False):
    """ε-ranks of the off-diagonal blocks at every block split.

    Returns a list of ``(K, lower_rank, upper_rank)`` where ``K`` is the
    number of leading rows/columns and a rank counts the singular values
    strictly greater than *eps* (times ``sigma_max`` of that block when
    *relative*).
    """
    if isinstance(A, QsMatrix):
        part = A.partition if A.level == 1 else BlockPartition(A.dims)
        dense = reconstruct_dense(A)
    else:
        dense = np.asarray(A, dtype=float)
        part = _as_partition(partition, dense.shape[0])

    def erank(block):
        if block.size == 0:
            return 0
        s = np.linalg.svd(block, compute_uv=False)
        thr = eps * s[0] if relative else eps
        return int(np.count_nonzero(s > thr))

    out = []
    for K in part.offsets[1:-1]:
        out.append((K, erank(dense[K:, :K]), erank(dense[:K, K:])))
    return out
