"""
Systematic MDS codes from Cauchy matrices
=========================================
A generator is the n x k matrix [I_k ; C] with C an (n-k) x k Cauchy
matrix, so any k coordinates of a codeword determine the information word.
Generators are deterministic in (n, k, field): two requests for the same
shape return the same object, which is what lets the s-sum downloads of
different messages add up to coordinates of one codeword.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from gf import FieldSpec, RankDeficiencyError, mat_solve

logger = logging.getLogger(__name__)


class MdsConstructionError(Exception):
    """The requested code shape cannot be built over the given field"""
    pass


class InsufficientDataError(Exception):
    """Fewer than k coordinates are known"""
    pass


class CodewordIntegrityError(Exception):
    """Known coordinates do not agree with any single codeword"""
    pass


@dataclass(frozen=True, eq=False)
class MdsGenerator:
    n: int
    k: int
    field: FieldSpec
    G: object

    @property
    def parity_count(self):
        return self.n - self.k

    def __repr__(self):
        return f"<MdsGenerator {self.n}x{self.k} over GF({self.field.modulus})>"


def build_mds(n: int, k: int, field: FieldSpec) -> MdsGenerator:
    if k < 1 or k > n:
        raise MdsConstructionError(f"need 1 <= k <= n, got n={n}, k={k}")
    # Cauchy points 0..n-k-1 and n..n+k-1 must stay distinct mod p
    if field.modulus < n + k:
        raise MdsConstructionError(
            f"GF({field.modulus}) too small for a {n}x{k} code: need modulus >= {n + k}"
        )
    return _cached_generator(n, k, field)


@lru_cache(maxsize=256)
def _cached_generator(n, k, field):
    GF = field.GF
    if n == k:
        G = GF.Identity(k)
    else:
        # Row points x_j = j-1, column points y_i = n+i-1
        x = GF(np.arange(n - k))
        y = GF(np.arange(n, n + k))
        cauchy = np.reciprocal(x[:, np.newaxis] - y[np.newaxis, :])
        G = GF(np.vstack([np.asarray(GF.Identity(k)), np.asarray(cauchy)]))
    logger.debug(f"Built systematic MDS generator {n}x{k} over GF({field.modulus})")
    return MdsGenerator(n=n, k=k, field=field, G=G)


def encode(gen: MdsGenerator, info):
    info = info if isinstance(info, gen.field.GF) else gen.field.array(info)
    if info.shape != (gen.k,):
        raise MdsConstructionError(f"information word must have length {gen.k}, got {info.shape}")
    return gen.G @ info


def complete_codeword(gen: MdsGenerator, known: Mapping[int, int]):
    """
    Return the unique codeword agreeing with ``known`` (position -> value).
    Solves from the first k positions, then checks every surplus coordinate.
    """
    if len(known) < gen.k:
        raise InsufficientDataError(f"need {gen.k} known coordinates, got {len(known)}")
    positions = sorted(known)
    if positions[0] < 0 or positions[-1] >= gen.n:
        raise InsufficientDataError(f"known positions must lie in [0, {gen.n})")

    basis = positions[:gen.k]
    values = gen.field.array([int(known[position]) for position in basis])
    try:
        info = mat_solve(gen.field, gen.G[basis, :], values)
    except RankDeficiencyError as e:
        # Cannot happen for a true MDS generator
        raise CodewordIntegrityError(f"selected rows are not independent: {e}")

    codeword = gen.G @ info
    mismatched = [
        position for position in positions[gen.k:]
        if int(codeword[position]) != int(known[position]) % gen.field.modulus
    ]
    if mismatched:
        raise CodewordIntegrityError(
            f"{len(mismatched)} known coordinates disagree with the completed codeword, first at {mismatched[0]}"
        )
    return codeword

