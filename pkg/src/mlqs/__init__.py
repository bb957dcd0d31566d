"""Multilevel quasiseparable matrices and saddle-point solvers for PDE control."""
from .arith import QsLuFactors, add, inverse, lu, lu_solve, mul, scale, solve, sub, triangular_inverses
from .compress import CompressionPolicy, compress, reduce_lower
from .core import (
    BlockPartition,
    QsGenerators,
    QsMatrix,
    aggregate,
    frobenius_norm,
    from_band,
    from_dense,
    matvec,
    offdiag_rank_profile,
    reconstruct_dense,
    transpose,
)
from .counting import OpCount, count_ops
from .errors import PartitionMismatch, PcgBreakdown, SingularPivot, StructureError
from .multilevel import (
    L2QsMatrix,
    OrderGrowthWarning,
    QsBlock,
    block_tridiagonal,
    l2_add,
    l2_compress,
    l2_inverse,
    l2_ldu,
    l2_matvec,
    l2_mul,
    l2_scale,
    l2_solve,
    l2_sub,
    tensor,
)
