"""Saddle-point solvers for the Q1 model problems.

The control problem's optimality system::

    [ 2 beta M   0    -M ] [f]     [0]
    [ 0          M    K^T] [u]  =  [b]
    [ -M         K     0 ] [l]     [d]

is reduced by eliminating ``f = l / (2 beta)`` and
``u = M^{-1} (b - K^T l)`` to the SPD system ``S l = y`` with
``S = M / (2 beta) + K M^{-1} K^T`` and ``y = K M^{-1} b - d``.
``S`` is formed in two-level arithmetic, factored approximately by
:func:`~mlqs.multilevel.l2_ldu`, and the factors precondition CG on the
exact operator, applied matrix-free.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .arith import inverse
from .compress import CompressionPolicy, compress
from .core import from_band
from .errors import PcgBreakdown
from .fem import GridSpec, assemble_stiffness, dirichlet_data_laplace, mass_factor, stiffness_blocks
from .core import transpose
from .multilevel import l2_add, l2_ldu, l2_mul, l2_scale, l2_solve, tensor

EXACT = CompressionPolicy.exact()


@dataclass
class PcgReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    precond_time: float = 0.0

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else float("nan")


def pcg(apply_A, apply_Minv, rhs, tol=1e-8, maxit=500, x0=None, true_residual_every=10):
    """Preconditioned conjugate gradients.

    Stops when ``||rhs - A x|| / ||rhs|| <= tol`` for the true residual,
    which is also recomputed every *true_residual_every* iterations.
    ``residuals[i]`` is the relative residual after ``i`` iterations.

    Raises
    ------
    PcgBreakdown
        If a search direction has ``p^T A p <= 0``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    rhs = np.asarray(rhs, dtype=float)
    nb = np.linalg.norm(rhs)
    report = PcgReport()
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    if nb == 0:
        report.residuals.append(0.0)
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return np.zeros_like(rhs), report
    r = rhs - apply_A(x) if x0 is not None else rhs.copy()
    report.residuals.append(np.linalg.norm(r) / nb)
    if report.residuals[-1] <= tol:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report
    z = apply_Minv(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = apply_A(p)
        curv = p @ Ap
        if not curv > 0:
            raise PcgBreakdown(it, float(curv))
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / nb
        if it % true_residual_every == 0 or res <= tol:
            r = rhs - apply_A(x)
            res = np.linalg.norm(r) / nb
        report.residuals.append(res)
        report.iterations = it
        if res <= tol:
            report.converged = True
            break
        z = apply_Minv(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.wall_time = time.perf_counter() - t0
    return x, report


class GridOperators:
    """Exact matrix-free stiffness and mass operators on an ``n x n`` grid."""

    def __init__(self, grid):
        n = grid.n
        A, Bd = stiffness_blocks(n)
        off = scipy.sparse.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1])
        self.K = (scipy.sparse.kron(scipy.sparse.eye(n), A) + scipy.sparse.kron(off, Bd)).tocsr()
        self.T = mass_factor(n)
        self._Tchol = scipy.linalg.cho_factor(self.T)
        self.n = n

    def mass(self, x):
        X = x.reshape(self.n, self.n)
        return (self.T @ X @ self.T).ravel()

    def mass_solve(self, x):
        X = x.reshape(self.n, self.n)
        Y = scipy.linalg.cho_solve(self._Tchol, X)
        return scipy.linalg.cho_solve(self._Tchol, Y.T).T.ravel()

    def stiffness(self, x):
        return self.K @ x

    def stiffness_t(self, x):
        return self.K.T @ x


@dataclass
class NormalEquation:
    S: object
    y: np.ndarray
    beta: float
    Minv: object
    build_time: float = 0.0


def mass_inverse(data_or_grid, policy=None):
    """``M^{-1} = T^{-1} (x) T^{-1}`` with ``T^{-1}`` compressed exactly (order 1)."""
    grid = getattr(data_or_grid, "grid", data_or_grid)
    T = from_band(mass_factor(grid.n), 1, 1)
    Ti = compress(inverse(T))
    Tin = compress(inverse(from_band(mass_factor(grid.n), 1, 1, grid.inner)))
    return tensor(Ti, Tin, policy=policy)


def build_normal_equation(data, policy=None):
    """Form ``S = M/(2 beta) + K M^{-1} K^T`` in two-level arithmetic and ``y``.

    Every entry-level product and sum is compressed with *policy*
    (exact by default).
    """
    policy = policy or EXACT
    t0 = time.perf_counter()
    K = data.K.with_policy(policy)
    M = data.M.with_policy(policy)
    Minv = mass_inverse(data, policy)
    KMi = l2_mul(K, Minv)
    S = l2_add(l2_scale(M, 1.0 / (2.0 * data.beta)), l2_mul(KMi, transpose(K)))
    ops = GridOperators(data.grid)
    y = ops.stiffness(ops.mass_solve(data.b)) - data.d
    return NormalEquation(S, y, data.beta, Minv, time.perf_counter() - t0)


@dataclass
class Preconditioner:
    """Approximate inverse from LDU factors, symmetrised for CG.

    ``apply(r) = sign * (F^{-1} r + F^{-T} r) / 2``; the symmetrisation
    costs one extra substitution and makes the operator symmetric even
    when truncation breaks the symmetry of the factors.
    """

    factors: object
    sign: float = 1.0
    symmetric: bool = True
    build_time: float = 0.0

    def apply(self, r):
        z = l2_solve(self.factors, r)
        if self.symmetric:
            z = 0.5 * (z + l2_solve(self.factors, r, trans=True))
        return self.sign * z

    __call__ = apply


def ldu_precondition(S, r=None, policy=None, sign=1.0, symmetric=True):
    """Approximate LDU of *S* truncated to inner order *r* as a preconditioner.

    ``r=None`` keeps exact compression. *sign* multiplies the result, so a
    negative definite *S* yields a preconditioner for ``-S``.
    """
    if policy is None:
        policy = CompressionPolicy.fixed(r) if r is not None else EXACT
    t0 = time.perf_counter()
    F = l2_ldu(S, policy)
    return Preconditioner(F, sign, symmetric, time.perf_counter() - t0)


def recover_controls(lam, data, ops=None):
    """``f = lam / (2 beta)``, ``u = M^{-1} (b - K^T lam)``; also the third-row residual."""
    ops = ops or GridOperators(data.grid)
    f = lam / (2.0 * data.beta)
    u = ops.mass_solve(data.b - ops.stiffness_t(lam))
    resid = -ops.mass(f) + ops.stiffness(u) - data.d
    return f, u, float(np.linalg.norm(resid))


def kkt_residual(f, u, lam, data, ops=None):
    """Relative 2-norm residual of the full optimality system."""
    ops = ops or GridOperators(data.grid)
    r1 = 2 * data.beta * ops.mass(f) - ops.mass(lam)
    r2 = ops.mass(u) + ops.stiffness_t(lam) - data.b
    r3 = -ops.mass(f) + ops.stiffness(u) - data.d
    num = np.sqrt(r1 @ r1 + r2 @ r2 + r3 @ r3)
    return float(num / np.sqrt(data.b @ data.b + data.d @ data.d))


def kkt_dense(data):
    """Dense optimality matrix and right-hand side (reference for small grids)."""
    K = data.K.to_dense()
    M = data.M.to_dense()
    Z = np.zeros_like(M)
    A = np.block([[2 * data.beta * M, Z, -M], [Z, M, K.T], [-M, K, Z]])
    rhs = np.concatenate([np.zeros(len(data.b)), data.b, data.d])
    return A, rhs


@dataclass
class ControlResult:
    f: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    report: PcgReport
    s_time: float
    ldu_time: float
    kkt_residual: float


def control_setup(data, r=1, build_policy=None):
    """Build the normal equation and its preconditioner once; reusable across tolerances."""
    policy = build_policy or (CompressionPolicy.fixed(r) if r is not None else EXACT)
    ne = build_normal_equation(data, policy)
    P = ldu_precondition(ne.S, policy=policy)
    return ne, P, GridOperators(data.grid)


def solve_control(data, r=1, tol=1e-8, maxit=200, build_policy=None, setup=None):
    """Normal equation + LDU-preconditioned CG + recovery of ``f, u``.

    ``S`` is built and factored with inner orders capped at *r*; CG runs
    on the exact operator. Pass *setup* from :func:`control_setup` to skip
    the build.
    """
    ne, P, ops = setup or control_setup(data, r, build_policy)
    c2 = 1.0 / (2.0 * data.beta)

    def apply_S(x):
        return c2 * ops.mass(x) + ops.stiffness(ops.mass_solve(ops.stiffness_t(x)))

    lam, rep = pcg(apply_S, P, ne.y, tol=tol, maxit=maxit)
    rep.precond_time = P.build_time
    f, u, _ = recover_controls(lam, data, ops)
    return ControlResult(f, u, lam, rep, ne.build_time, P.build_time, kkt_residual(f, u, lam, data, ops))


@dataclass
class DirectReport:
    factor_time: float
    solve_time: float
    rel_residual: float
    memory_elements: int
    max_inner_order: int


def relative_residual(ops, u, rhs):
    return float(np.linalg.norm(ops.stiffness(u) - rhs) / np.linalg.norm(rhs))


def solve_laplace_direct(grid, r=None):
    """Boundary-value problem by one truncated two-level LDU and substitution."""
    policy = CompressionPolicy.fixed(r) if r is not None else EXACT
    K = assemble_stiffness(grid, policy)
    d = dirichlet_data_laplace(grid)
    t0 = time.perf_counter()
    F = l2_ldu(K, policy)
    t1 = time.perf_counter()
    u = l2_solve(F, d)
    t2 = time.perf_counter()
    mem = F.L.memory_elements() + F.U.memory_elements()
    ops = GridOperators(grid)
    rep = DirectReport(t1 - t0, t2 - t1, relative_residual(ops, u, d), mem, max(F.report.max_inner_order))
    return u, rep


def definiteness_sign(ops):
    """``-1`` if the stiffness operator is negative definite, else ``+1``."""
    return -1.0 if ops.K.diagonal().max() < 0 else 1.0


def solve_laplace_pcg(grid, r=1, tol=1e-8, maxit=500):
    """CG on the boundary-value problem with an order-*r* LDU preconditioner.

    The stiffness matrix is negative definite in its stored convention,
    so CG runs on ``-K u = -d``.
    """
    policy = CompressionPolicy.fixed(r)
    ops = GridOperators(grid)
    sgn = definiteness_sign(ops)
    K = assemble_stiffness(grid, policy)
    P = ldu_precondition(K, policy=policy, sign=sgn)
    d = dirichlet_data_laplace(grid)
    u, rep = pcg(lambda x: sgn * ops.stiffness(x), P, sgn * d, tol=tol, maxit=maxit)
    rep.precond_time = P.build_time
    return u, rep


def laplace_reference(n):
    """Sparse direct solution on an ``n x n`` grid (reference for convergence checks)."""
    import scipy.sparse.linalg

    grid = GridSpec(n)
    ops = GridOperators(grid)
    return scipy.sparse.linalg.spsolve(ops.K.tocsc(), dirichlet_data_laplace(grid))
