"""
Prime-field arithmetic and exact linear algebra
===============================================
Thin layer over ``galois`` prime fields. Every other module goes through
these helpers so that field checks and error reporting live in one place.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

import galois
import numpy as np

logger = logging.getLogger(__name__)

# Largest modulus whose products stay exact in int64 field arithmetic
MAX_MODULUS = 2 ** 31 - 1


class FieldError(Exception):
    """Invalid field parameters or values outside the field"""
    pass


class FieldDivisionError(FieldError, ZeroDivisionError):
    """Division by the zero element"""
    pass


class RankDeficiencyError(FieldError):
    """A linear system that must be square and full rank is not"""

    def __init__(self, rank, size):
        self.rank = rank
        self.size = size
        super().__init__(f"matrix is singular: rank {rank} of {size}")


class ArithOp(str, Enum):
    ADD = 'add'
    SUB = 'sub'
    MUL = 'mul'
    DIV = 'div'


@lru_cache(maxsize=None)
def _field_class(modulus):
    return galois.GF(modulus)


@dataclass(frozen=True)
class FieldSpec:
    """A prime field GF(p)"""
    modulus: int

    def __post_init__(self):
        if self.modulus < 2 or not galois.is_prime(self.modulus):
            raise FieldError(f"field modulus must be prime, got {self.modulus}")
        if self.modulus > MAX_MODULUS:
            raise FieldError(f"field modulus must not exceed {MAX_MODULUS}, got {self.modulus}")

    @property
    def GF(self):
        return _field_class(self.modulus)

    def element(self, value):
        if not 0 <= value < self.modulus:
            raise FieldError(f"{value} is not an element of GF({self.modulus})")
        return self.GF(value)

    def array(self, values):
        """Lift integers (reduced mod p) into a field array"""
        return self.GF(np.mod(np.asarray(values, dtype=np.int64), self.modulus))

    def zeros(self, shape):
        return self.GF.Zeros(shape)

    def identity(self, size):
        return self.GF.Identity(size)

    def random(self, shape, rng):
        """Uniform field array; ``rng`` is a numpy Generator"""
        return self.GF.Random(shape, seed=rng)

    def to_dict(self):
        return {'modulus': str(self.modulus)}


def field_arith(field: FieldSpec, a: int, b: int, op) -> int:
    """Apply one field operation to two elements and return the reduced value"""
    op = ArithOp(op)
    x = field.element(a)
    y = field.element(b)
    if op is ArithOp.ADD:
        result = x + y
    elif op is ArithOp.SUB:
        result = x - y
    elif op is ArithOp.MUL:
        result = x * y
    else:
        if int(y) == 0:
            raise FieldDivisionError(f"division by zero in GF({field.modulus})")
        result = x / y
    return int(result)


def mat_rank(field: FieldSpec, matrix) -> int:
    """Row rank by exact elimination"""
    A = _as_matrix(field, matrix)
    if A.size == 0:
        return 0
    return int(np.linalg.matrix_rank(A))


def mat_solve(field: FieldSpec, matrix, rhs):
    """Solve A x = b exactly; A must be square and full rank"""
    A = _as_matrix(field, matrix)
    b = rhs if isinstance(rhs, field.GF) else field.array(rhs)
    rows, cols = A.shape
    if rows != cols:
        raise FieldError(f"mat_solve needs a square matrix, got {rows}x{cols}")
    if b.shape[0] != rows:
        raise FieldError(f"right-hand side has {b.shape[0]} entries, expected {rows}")
    rank = mat_rank(field, A)
    if rank < rows:
        raise RankDeficiencyError(rank, rows)
    return np.linalg.solve(A, b)


def mat_inverse(field: FieldSpec, matrix):
    A = _as_matrix(field, matrix)
    rows, cols = A.shape
    if rows != cols:
        raise FieldError(f"mat_inverse needs a square matrix, got {rows}x{cols}")
    try:
        return np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(mat_rank(field, A), rows)


def mat_mul(field: FieldSpec, left, right):
    return _as_matrix(field, left) @ (right if isinstance(right, field.GF) else field.array(right))


def stack_rows(field: FieldSpec, rows: Sequence) -> "galois.FieldArray":
    """Stack equal-length vectors into a matrix"""
    if not rows:
        raise FieldError("cannot stack an empty row list")
    return field.GF(np.vstack([np.asarray(row) for row in rows]))


def concat(field: FieldSpec, blocks: Iterable) -> "galois.FieldArray":
    return field.GF(np.concatenate([np.asarray(block) for block in blocks]))


def to_ints(values) -> list:
    """Plain Python integers, for serialization and comparisons"""
    return np.asarray(values).astype(np.int64).tolist()


def _as_matrix(field, matrix):
    A = matrix if isinstance(matrix, field.GF) else field.array(matrix)
    if A.ndim != 2:
        raise FieldError(f"expected a matrix, got an array with {A.ndim} dimensions")
    return A
