"""Database reconstruction attacks against noisy subset-sum oracles."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .db import BinaryDatabase, NoisyOracle, SubsetQuery, hamming_distance
from .errors import (
    DimensionError,
    MechanismViolationError,
    ParameterError,
    PreconditionError,
    ScaleError,
)

BRUTE_FORCE_MAX_N = 16
_ROW_CHUNK = 256


@dataclass
class ReconstructionResult:
    candidate: BinaryDatabase
    queries_used: int
    elapsed: float
    attack_name: str
    distance: Optional[int] = None
    converged: bool = True
    info: dict = field(default_factory=dict)

    def score(self, truth: BinaryDatabase) -> "ReconstructionResult":
        """Fill ``distance`` against the ground truth held by the caller."""
        self.distance = hamming_distance(self.candidate, truth)
        return self

    def to_record(self, *, n=None, f=None, mechanism=None, seed=None) -> dict:
        return {
            "attack": self.attack_name,
            "n": len(self.candidate) if n is None else n,
            "f": f,
            "mechanism": mechanism,
            "distance": self.distance,
            "queries_used": self.queries_used,
            "elapsed_ms": self.elapsed * 1000.0,
            "seed": seed,
        }


def _subset_matrix(width: int) -> np.ndarray:
    """Row ``mask`` holds the indicator of the subset encoded by ``mask`` (bit j -> column j)."""
    masks = np.arange(1 << width, dtype=np.int64)
    return ((masks[:, None] >> np.arange(width)) & 1).astype(np.int8)


def _candidate_matrix(width: int) -> np.ndarray:
    """All {0,1}^width vectors in lexicographic order (column 0 most significant)."""
    ks = np.arange(1 << width, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((ks[:, None] >> shifts) & 1).astype(np.int8)


def collect_subset_answers(oracle: NoisyOracle, positions: Sequence[int]) -> np.ndarray:
    """Ask every subset of ``positions`` once, in increasing bitmask order."""
    return np.array(
        [oracle.answer(SubsetQuery.from_mask(mask, positions)) for mask in range(1 << len(positions))],
        dtype=float,
    )


def consistent_candidates(answers: np.ndarray, width: int, f: float) -> np.ndarray:
    """Indices (lexicographic order) of every candidate within ``f`` of all cached answers.

    ``answers[mask]`` must be the reply to the subset encoded by ``mask``.
    Rows are checked smallest-subset first so inconsistent candidates drop
    out before the expensive large-subset rows.
    """
    answers = np.asarray(answers, dtype=float)
    if answers.shape != (1 << width,):
        raise DimensionError(f"expected {1 << width} answers, got {answers.shape}")
    rows = _subset_matrix(width)
    order = np.argsort(rows.sum(axis=1), kind="stable")
    cands = _candidate_matrix(width)
    alive = np.arange(len(cands))
    for start in range(0, len(order), _ROW_CHUNK):
        sel = order[start:start + _ROW_CHUNK]
        sums = rows[sel].astype(np.int32) @ cands[alive].T.astype(np.int32)
        ok = np.all(np.abs(sums - answers[sel, None]) < f, axis=0)
        alive = alive[ok]
        if alive.size == 0:
            break
    return alive


def _bits_of(k: int, width: int) -> tuple:
    return tuple((k >> (width - 1 - j)) & 1 for j in range(width))


def _brute_force_positions(oracle, positions, f, max_n, name):
    width = len(positions)
    if width > max_n:
        raise ScaleError(f"brute force over {width} entries exceeds cap {max_n}")
    if f <= 0:
        raise ParameterError("perturbation bound f must be positive")
    t0 = time.perf_counter()
    before = oracle.query_count
    answers = collect_subset_answers(oracle, positions)
    survivors = consistent_candidates(answers, width, f)
    if survivors.size == 0:
        raise MechanismViolationError(
            f"no candidate is within f={f} of every answer; oracle is not within-f"
        )
    return ReconstructionResult(
        candidate=BinaryDatabase(_bits_of(int(survivors[0]), width)),
        queries_used=oracle.query_count - before,
        elapsed=time.perf_counter() - t0,
        attack_name=name,
        info={
            "query_bound": 4 ** width,
            "candidates_checked": 1 << width,
            "consistent_count": int(survivors.size),
        },
    )


def brute_force_reconstruct(
    oracle: NoisyOracle, n: int, f: float, *, max_n: int = BRUTE_FORCE_MAX_N
) -> ReconstructionResult:
    """Query all 2^n subsets once and return the first consistent candidate.

    Any candidate within ``f`` of every answer is within Hamming distance
    ``4f`` of the true database, so the lexicographically first one is as
    good as any.
    """
    if n != oracle.n:
        raise DimensionError(f"n={n} does not match oracle database length {oracle.n}")
    return _brute_force_positions(oracle, list(range(n)), f, max_n, "brute-force")


def uniform_subset_sampler(rng: np.random.Generator, n: int) -> SubsetQuery:
    return SubsetQuery(tuple(np.flatnonzero(rng.random(n) < 0.5)))


def relax_and_round_reconstruct(
    oracle: NoisyOracle,
    n: int,
    num_queries: int,
    query_sampler: Optional[Callable[[np.random.Generator, int], SubsetQuery]] = None,
    max_iters: int = 10_000,
    tol: float = 1e-10,
    *,
    seed: int = 0,
) -> ReconstructionResult:
    """Least-squares relaxation over [0,1]^n solved by projected gradient, then rounded at 0.5."""
    if n != oracle.n:
        raise DimensionError(f"n={n} does not match oracle database length {oracle.n}")
    if num_queries < 1:
        raise ParameterError("num_queries must be >= 1")
    sampler = query_sampler or uniform_subset_sampler
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    before = oracle.query_count

    A = np.zeros((num_queries, n))
    b = np.empty(num_queries)
    for row in range(num_queries):
        q = sampler(rng, n)
        b[row] = oracle.answer(q)
        A[row, list(q.indices)] = 1.0

    lipschitz = 2.0 * np.linalg.norm(A, 2) ** 2
    step = 1.0 / lipschitz if lipschitz > 0 else 0.0
    x = np.full(n, 0.5)
    resid = A @ x - b
    obj = float(resid @ resid)
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        x_new = np.clip(x - step * 2.0 * (A.T @ resid), 0.0, 1.0)
        resid_new = A @ x_new - b
        obj_new = float(resid_new @ resid_new)
        improvement = obj - obj_new
        if obj_new <= obj:
            x, resid, obj = x_new, resid_new, obj_new
        if improvement <= tol * max(1.0, obj):
            converged = True
            break

    candidate = BinaryDatabase(tuple((x >= 0.5).astype(int)))
    return ReconstructionResult(
        candidate=candidate,
        queries_used=oracle.query_count - before,
        elapsed=time.perf_counter() - t0,
        attack_name="relax-round",
        converged=converged,
        info={"iterations": iters, "objective": obj},
    )


def adaptive_split_reconstruct(oracle: NoisyOracle, n: int) -> ReconstructionResult:
    """Exact recovery by recursive bisection of intervals whose count is mixed.

    Only valid for the zero-noise oracle. Uses at most
    ``1 + 2 * k * ceil(log2 n)`` queries for ``k`` ones.
    """
    if oracle.mechanism.kind != "exact":
        raise PreconditionError("adaptive split requires an exact (zero-noise) oracle")
    if n != oracle.n:
        raise DimensionError(f"n={n} does not match oracle database length {oracle.n}")
    t0 = time.perf_counter()
    before = oracle.query_count
    bits = [0] * n

    def count(lo, hi):
        return int(round(oracle.answer(range(lo, hi))))

    stack = [(0, n, count(0, n))]
    while stack:
        lo, hi, c = stack.pop()
        if c == 0:
            continue
        if c == hi - lo:
            bits[lo:hi] = [1] * (hi - lo)
            continue
        mid = lo + (hi - lo) // 2
        left, right = count(lo, mid), count(mid, hi)
        stack.append((mid, hi, right))
        stack.append((lo, mid, left))

    return ReconstructionResult(
        candidate=BinaryDatabase(tuple(bits)),
        queries_used=oracle.query_count - before,
        elapsed=time.perf_counter() - t0,
        attack_name="adaptive-split",
    )


@dataclass
class BlockResult:
    start: int
    length: int
    result: ReconstructionResult
    error_bound: float
    meaningless: bool


@dataclass
class SplitAttackResult:
    blocks: list
    candidate: BinaryDatabase
    queries_used: int
    query_bound: int
    elapsed: float
    distance: Optional[int] = None

    @property
    def meaningless_blocks(self) -> int:
        return sum(b.meaningless for b in self.blocks)

    def score(self, truth: BinaryDatabase) -> "SplitAttackResult":
        self.distance = hamming_distance(self.candidate, truth)
        for b in self.blocks:
            piece = BinaryDatabase(truth.bits[b.start:b.start + b.length])
            b.result.score(piece)
        return self


def split_database_attack(
    oracle: NoisyOracle, n: int, block_size: int, f: float, *, max_block: int = BRUTE_FORCE_MAX_N
) -> SplitAttackResult:
    """Brute-force each contiguous block separately.

    ``queries_used`` counts the 2^len subsets actually asked per block;
    ``query_bound`` is the worst-case 2^(2 len) per block accounting.
    Blocks where 4f reaches the block length carry no information.
    """
    if n != oracle.n:
        raise DimensionError(f"n={n} does not match oracle database length {oracle.n}")
    if block_size < 1:
        raise ParameterError("block_size must be >= 1")
    if block_size > max_block:
        raise ScaleError(f"block size {block_size} exceeds brute-force cap {max_block}")
    t0 = time.perf_counter()
    blocks = []
    for start in range(0, n, block_size):
        positions = list(range(start, min(start + block_size, n)))
        res = _brute_force_positions(oracle, positions, f, max_block, "brute-force-block")
        length = len(positions)
        blocks.append(
            BlockResult(
                start=start,
                length=length,
                result=res,
                error_bound=min(4 * f, length),
                meaningless=4 * f >= length,
            )
        )
    bits = tuple(b for blk in blocks for b in blk.result.candidate.bits)
    return SplitAttackResult(
        blocks=blocks,
        candidate=BinaryDatabase(bits),
        queries_used=sum(b.result.queries_used for b in blocks),
        query_bound=sum(4 ** b.length for b in blocks),
        elapsed=time.perf_counter() - t0,
    )


def split_query_bound(n: int, block_size: int) -> int:
    """Worst-case query count for the split attack without running it."""
    full, rest = divmod(n, block_size)
    return full * 4 ** block_size + (4 ** rest if rest else 0)


def adaptive_query_bound(n: int, ones: int) -> int:
    return 1 + 2 * ones * math.ceil(math.log2(n)) if n > 1 else 1
