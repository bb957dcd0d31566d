"""Quasiseparable order reduction.

:func:`reduce_lower` runs the two-sweep reduction on the lower generators
``(q, a, p)``: an ascending sweep makes the column generators
row-orthonormal, then a descending sweep factors the stacked
``[p'_k ; S_k a'_k]`` with orthonormal columns. Because the row basis is
orthonormal at that point, the singular values of the stacked matrix are
those of the off-diagonal block at split ``k-1``, so all truncation
happens in the descending sweep. The upper triangle is handled by the
same routine applied to the transposed generators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .core import QsGenerators, frobenius_norm
from .counting import record

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class CompressionPolicy:
    """How aggressively generators are truncated.

    ``max_order=None, tol=0`` is exact mode (numerical rank only);
    ``max_order=r`` caps every width at ``r``; ``tol > 0`` drops singular
    values below ``tol * sigma_1`` of each local factorization. Both
    limits may be combined.
    """

    max_order: int | None = None
    tol: float = 0.0
    kernel: str = "svd"

    def __post_init__(self):
        if self.max_order is not None and self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.kernel not in ("svd", "qr"):
            raise ValueError(f"unknown kernel {self.kernel!r}; use 'svd' or 'qr'")

    @classmethod
    def exact(cls, kernel="svd"):
        return cls(None, 0.0, kernel)

    @classmethod
    def fixed(cls, max_order, tol=0.0, kernel="svd"):
        return cls(int(max_order), tol, kernel)

    @classmethod
    def relative(cls, tol, kernel="svd"):
        return cls(None, float(tol), kernel)

    @property
    def mode(self):
        if self.max_order is not None:
            return "fixed-max-order"
        return "relative-tolerance" if self.tol > 0 else "exact"


class Reduction(NamedTuple):
    q: tuple
    a: tuple
    p: tuple
    error: float
    """Root of the summed squares of all discarded singular values."""
    orth_error: float
    """Largest deviation from orthonormality of the factors of either sweep."""


def _row_orth(X, kernel):
    """``X = L V`` with ``V`` row-orthonormal; drops numerically null rows of ``V``."""
    m, ncol = X.shape
    if m == 0 or ncol == 0:
        return np.zeros((m, 0)), np.zeros((0, ncol))
    record(4 * m * ncol * min(m, ncol))
    if m == 1 or ncol == 1:
        nrm = np.sqrt(np.sum(X * X))
        if not nrm > 1e-300:
            return np.zeros((m, 0)), np.zeros((0, ncol))
        if m == 1:
            return np.array([[nrm]]), X / nrm
        return X.copy(), np.ones((1, 1))
    if kernel == "qr":
        Qf, R, perm = scipy.linalg.qr(X.T, mode="economic", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(R))
        r = int(np.count_nonzero(diag > max(max(m, ncol) * EPS * diag[0], 1e-300)))
        Rp = np.empty_like(R[:r])
        Rp[:, perm] = R[:r]
        return Rp.T, Qf[:, :r].T
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    r = int(np.count_nonzero(s > max(max(m, ncol) * EPS * s[0], 1e-300)))
    return U[:, :r] * s[:r], Vt[:r]


def _keep(values, policy, atol, nmin):
    if values.size == 0 or values[0] <= 1e-300:
        return 0
    rel = max(policy.tol, nmin * EPS)
    r = int(np.count_nonzero(values > max(rel * values[0], atol, 1e-300)))
    if policy.max_order is not None:
        r = min(r, policy.max_order)
    return r


def _col_orth(Y, policy, atol, nmin):
    """Truncated ``Y ~ U S`` with ``U`` column-orthonormal; returns ``(U, S, discarded^2)``."""
    m, ncol = Y.shape
    if m == 0 or ncol == 0:
        return np.zeros((m, 0)), np.zeros((0, ncol)), 0.0
    record(4 * m * ncol * min(m, ncol))
    if m == 1 or ncol == 1:
        nrm = np.sqrt(np.sum(Y * Y))
        if _keep(np.array([nrm]), policy, atol, nmin) == 0:
            return np.zeros((m, 0)), np.zeros((0, ncol)), float(nrm * nrm)
        if ncol == 1:
            return Y / nrm, np.array([[nrm]]), 0.0
        return np.ones((1, 1)), Y.copy(), 0.0
    if policy.kernel == "qr":
        Qf, R, perm = scipy.linalg.qr(Y, mode="economic", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(R))
        r = _keep(diag, policy, atol, nmin)
        Rp = np.empty_like(R)
        Rp[:, perm] = R
        return Qf[:, :r], Rp[:r], float(np.sum(Rp[r:] ** 2))
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    r = _keep(s, policy, atol, nmin)
    return U[:, :r], s[:r, None] * Vt[:r], float(np.sum(s[r:] ** 2))


def _orth_defect(M, rows):
    if M.size == 0:
        return 0.0
    G = M @ M.T if rows else M.T @ M
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def reduce_lower(q, a, p, policy=None, atol=0.0, check=False):
    """Minimal (or truncated) equivalent of lower generators ``(q, a, p)``.

    Parameters
    ----------
    q, a, p : sequences of ndarray
        Lower generators, one entry per block (width-0 at the ends).
    policy : CompressionPolicy
        Truncation rule applied in the descending sweep.
    atol : float
        Absolute floor: singular values at or below it are always dropped.
        :func:`compress` passes ``N * eps * ||A||_F`` so that pure
        round-off (e.g. in ``A @ inv(A)``) collapses to width 0.
    check : bool
        Measure the orthonormality of every factor (``orth_error``);
        otherwise it is reported as ``nan``.
    """
    policy = policy or CompressionPolicy.exact()
    n = len(q)
    nmin = sum(x.shape[1] for x in q)
    L = np.zeros((0, 0))
    qf, af, pf = [], [], []
    orth = 0.0 if check else float("nan")
    for k in range(n):
        pf.append(p[k] @ L)
        X = np.hstack([a[k] @ L, q[k]])
        L, V = _row_orth(X, policy.kernel)
        if check:
            orth = max(orth, _orth_defect(V, rows=True))
        r_prev = af[-1].shape[0] if af else 0
        af.append(V[:, :r_prev])
        qf.append(V[:, r_prev:])

    S = np.zeros((0, 0))
    qn, an, pn = [None] * n, [None] * n, [None] * n
    discarded = 0.0
    for k in range(n - 1, -1, -1):
        nk = pf[k].shape[0]
        Y = np.vstack([pf[k], S @ af[k]])
        qn[k] = S @ qf[k]
        U, S, lost = _col_orth(Y, policy, atol, nmin)
        discarded += lost
        if check:
            orth = max(orth, _orth_defect(U, rows=False))
        pn[k] = U[:nk]
        an[k] = U[nk:]
    return Reduction(tuple(qn), tuple(an), tuple(pn), float(np.sqrt(discarded)), orth)


class CompressInfo(NamedTuple):
    error_bound: float
    lower: Reduction
    upper: Reduction


def compress(A, policy=None, return_info=False, scale=None, check_orth=None):
    """Reduce both triangles of a level-1 QsMatrix; ``d`` is untouched.

    With *return_info*, also returns :class:`CompressInfo` whose
    ``error_bound`` is ``sqrt(lower.error^2 + upper.error^2)``, the
    accumulated Frobenius mass of everything discarded. Orthonormality
    defects are measured when *check_orth* is true (default: with
    *return_info*).
    """
    check = return_info if check_orth is None else check_orth
    policy = policy or CompressionPolicy.exact()
    gen = A.gen
    if scale is None:
        scale = frobenius_norm(A)
    atol = A.N * EPS * scale
    lo = reduce_lower(gen.q, gen.a, gen.p, policy, atol, check=check)
    up = reduce_lower(
        tuple(x.T for x in gen.g), tuple(x.T for x in gen.b), tuple(x.T for x in gen.h), policy, atol,
        check=check,
    )
    new = QsGenerators(
        gen.d, lo.q, lo.a, lo.p,
        tuple(x.T for x in up.q), tuple(x.T for x in up.a), tuple(x.T for x in up.p),
    )
    out = A._with_gen(new)
    if not return_info:
        return out
    return out, CompressInfo(float(np.hypot(lo.error, up.error)), lo, up)
