"""Q1 finite elements on the uniform unit-square grid.

Unknowns are the ``n x n`` interior nodes ``(i h, j h)``, ``h = 1/(n+1)``,
numbered column by column: index ``(i-1) n + (j-1)`` for grid column
``i`` (the x index) and row ``j``. Grid columns are the outer blocks of
the two-level matrices.

Sign and scale conventions
--------------------------
``assemble_stiffness`` returns the five-diagonal-block matrix with
diagonal blocks ``(1/3) tridiag(1, -8, 1)`` and off-diagonal blocks
``(1/3) tridiag(1, 1, 1)``, which is the negative of the usual Q1
stiffness matrix. ``assemble_mass`` returns ``T (x) T`` with
``T = (1/6) tridiag(1, 4, 1)``, i.e. the true mass matrix divided by
``h^2``. Load vectors are built to match: the boundary lift satisfies
``K u = d`` for the discrete harmonic extension, and the tracking vector
``b`` is divided by ``h^2`` like the mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compress import CompressionPolicy
from .core import BlockPartition, from_band
from .multilevel import L2QsMatrix, block_tridiagonal, tensor

# 2-point Gauss rule on [0, 1]
_GAUSS_X = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
_GAUSS_W = np.array([0.5, 0.5])


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``n`` interior points per side.

    ``inner_block`` is the block size of the inner partition of the
    two-level matrices: 1 gives scalar generators, larger values group
    consecutive nodes of a grid column into dense diagonal blocks, which
    cuts interpreter overhead at the same asymptotic cost.
    """

    n: int
    inner_block: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs at least 2 interior points per side, got n={self.n}")
        if int(self.inner_block) != self.inner_block or self.inner_block < 1:
            raise ValueError(f"inner_block must be a positive integer, got {self.inner_block}")

    @classmethod
    def from_unknowns(cls, N, inner_block=1):
        n = int(round(np.sqrt(N)))
        if n * n != N:
            raise ValueError(f"{N} unknowns is not a square grid")
        return cls(n, inner_block)

    @property
    def inner(self):
        return BlockPartition.uniform(self.n, min(self.inner_block, self.n))

    @property
    def h(self):
        return 1.0 / (self.n + 1)

    @property
    def N(self):
        return self.n * self.n

    def coords(self):
        """Interior node coordinates ``(x, y)`` in unknown order."""
        t = self.h * np.arange(1, self.n + 1)
        X, Y = np.meshgrid(t, t, indexing="ij")
        return X.ravel(), Y.ravel()


def _tridiag(n, lo, mid, hi):
    return np.diag(np.full(n, mid)) + np.diag(np.full(n - 1, lo), -1) + np.diag(np.full(n - 1, hi), 1)


def stiffness_blocks(n):
    """Dense diagonal and off-diagonal blocks ``(A, B)`` of the stiffness matrix."""
    return _tridiag(n, 1.0, -8.0, 1.0) / 3.0, _tridiag(n, 1.0, 1.0, 1.0) / 3.0


def mass_factor(n):
    """``T = (1/6) tridiag(1, 4, 1)``."""
    return _tridiag(n, 1.0, 4.0, 1.0) / 6.0


def assemble_stiffness(grid, policy=None):
    n = grid.n
    A, Bd = stiffness_blocks(n)
    Aq, Bq = from_band(A, 1, 1, grid.inner), from_band(Bd, 1, 1, grid.inner)
    return block_tridiagonal([Aq] * n, [Bq] * (n - 1), [Bq] * (n - 1), policy=policy)


def assemble_mass(grid, policy=None):
    T = from_band(mass_factor(grid.n), 1, 1)
    return tensor(T, from_band(mass_factor(grid.n), 1, 1, grid.inner), policy=policy)


def stiffness_dense(n):
    A, Bd = stiffness_blocks(n)
    return np.kron(np.eye(n), A) + np.kron(_tridiag(n, 1.0, 0.0, 1.0), Bd)


def boundary_lift(grid, g):
    """Right-hand side from Dirichlet values ``g(x, y)`` on the boundary.

    Every interior node next to the boundary receives
    ``-(coupling) * g(boundary node)`` for each boundary neighbour, where
    the coupling is the off-diagonal stencil weight ``1/3``.
    """
    n, h = grid.n, grid.h
    d = np.zeros((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if 1 < i < n and 1 < j < n:
                continue
            acc = 0.0
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    bi, bj = i + di, j + dj
                    if (di or dj) and (bi in (0, n + 1) or bj in (0, n + 1)):
                        acc += g(bi * h, bj * h)
            d[i - 1, j - 1] = -acc / 3.0
    return d.ravel()


def laplace_boundary(x, y):
    if x == 0.0:
        return np.sin(2 * np.pi * y)
    if x == 1.0:
        return -np.sin(2 * np.pi * y)
    return 0.0


def dirichlet_data_laplace(grid):
    return boundary_lift(grid, laplace_boundary)


def desired_state(x, y):
    """Target state: ``(2x-1)^2 (2y-1)^2`` on ``[0, 1/2]^2``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x >= 0) & (x <= 0.5) & (y >= 0) & (y <= 0.5)
    return np.where(inside, (2 * x - 1) ** 2 * (2 * y - 1) ** 2, 0.0)


def _quadrature(grid, fn):
    """Gauss points and weights of the 2x2 rule on every element.

    Returns ``(ex, ey, wx, wy, vals)`` where ``ex, ey`` are element
    lower-left indices and the other arrays have a trailing ``(2, 2)``.
    """
    m, h = grid.n + 1, grid.h
    e = np.arange(m)
    EX, EY = np.meshgrid(e, e, indexing="ij")
    gx = (EX[..., None, None] + _GAUSS_X[:, None]) * h
    gy = (EY[..., None, None] + _GAUSS_X[None, :]) * h
    return EX, EY, gx, gy, fn(gx, gy)


def load_vector(grid, fn):
    """``b_j = int phi_j fn`` with 2x2 Gauss quadrature per element (true scale)."""
    n, h = grid.n, grid.h
    EX, EY, _, _, vals = _quadrature(grid, fn)
    w = np.outer(_GAUSS_W, _GAUSS_W) * h * h
    full = np.zeros((n + 2, n + 2))
    for cx in (0, 1):
        for cy in (0, 1):
            shx = _GAUSS_X if cx else 1 - _GAUSS_X
            shy = _GAUSS_X if cy else 1 - _GAUSS_X
            phi = np.outer(shx, shy)
            contrib = np.sum(vals * phi * w, axis=(-2, -1))
            full[EX + cx, EY + cy] += contrib
    return full[1:-1, 1:-1].ravel()


def integral(grid, fn):
    """``int fn`` over the unit square, 2x2 Gauss per element."""
    h = grid.h
    *_, vals = _quadrature(grid, fn)
    return float(np.sum(vals * np.outer(_GAUSS_W, _GAUSS_W)) * h * h)


@dataclass(frozen=True)
class ControlProblemData:
    """Discrete distributed control problem.

    ``b`` is ``int phi_j u_hat`` divided by ``h^2`` (the normalisation of
    ``M``); ``c = (1/2) int u_hat^2``; ``d`` is the lift of the boundary
    values of ``u_hat``.
    """

    grid: GridSpec
    K: L2QsMatrix
    M: L2QsMatrix
    b: np.ndarray
    c: float
    d: np.ndarray
    beta: float


def control_problem_data(grid, beta, policy=None):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    h = grid.h
    b = load_vector(grid, desired_state) / (h * h)
    c = 0.5 * integral(grid, lambda x, y: desired_state(x, y) ** 2)
    d = boundary_lift(grid, lambda x, y: float(desired_state(x, y)))
    return ControlProblemData(
        grid, assemble_stiffness(grid, policy), assemble_mass(grid, policy), b, c, d, float(beta)
    )


def q1_element_assembly(n):
    """Dense Q1 stiffness and mass on all ``(n+2)^2`` nodes, from element matrices.

    Independent reference used to check the stencil matrices.
    """
    h = 1.0 / (n + 1)
    ke = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]) / 6.0
    me = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) * h * h / 36.0
    m = n + 2
    K = np.zeros((m * m, m * m))
    Mm = np.zeros((m * m, m * m))
    for ex in range(n + 1):
        for ey in range(n + 1):
            # counter-clockwise corners
            nodes = [ex * m + ey, (ex + 1) * m + ey, (ex + 1) * m + ey + 1, ex * m + ey + 1]
            K[np.ix_(nodes, nodes)] += ke
            Mm[np.ix_(nodes, nodes)] += me
    return K, Mm


def interior_indices(n):
    m = n + 2
    return np.array([i * m + j for i in range(1, n + 1) for j in range(1, n + 1)])


def default_policy(r):
    return CompressionPolicy.fixed(r) if r is not None else CompressionPolicy.exact()
