"""Binary infection-status databases, subset queries and noisy query oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .errors import (
    BudgetExhaustedError,
    DimensionError,
    InvalidQueryError,
    ParameterError,
)

MECHANISM_KINDS = ("exact", "bounded-uniform", "rounding", "laplace")


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive an independent 64-bit seed from ``master_seed`` and an index path.

    Uses numpy's SeedSequence spawn-key hashing, so (master, path) always maps
    to the same stream regardless of the order in which trials execute.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class BinaryDatabase:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 1:
            raise ParameterError("database must hold at least one entry")
        if any(b not in (0, 1) for b in bits):
            raise ParameterError("database entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    @property
    def n(self) -> int:
        return len(self.bits)

    def to_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int64)

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_string(cls, s: str) -> "BinaryDatabase":
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise ParameterError(f"not a 0/1 string: {s!r}")
        return cls(tuple(int(ch) for ch in s))

    def complement(self) -> "BinaryDatabase":
        return BinaryDatabase(tuple(1 - b for b in self.bits))

    def popcount(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class SubsetQuery:
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise InvalidQueryError("subset query contains duplicate indices")
        if any(i < 0 for i in idx):
            raise InvalidQueryError("subset query indices must be non-negative")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @classmethod
    def from_mask(cls, mask: int, positions) -> "SubsetQuery":
        """Subset of ``positions`` selected by the set bits of ``mask`` (bit j -> positions[j])."""
        return cls(tuple(p for j, p in enumerate(positions) if (mask >> j) & 1))

    def validate(self, n: int) -> None:
        if self.indices and self.indices[-1] >= n:
            raise InvalidQueryError(
                f"index {self.indices[-1]} out of range for database of length {n}"
            )


QueryLike = Union[SubsetQuery, Iterable[int]]


def as_query(q: QueryLike) -> SubsetQuery:
    return q if isinstance(q, SubsetQuery) else SubsetQuery(tuple(q))


def true_answer(db: BinaryDatabase, q: QueryLike) -> int:
    q = as_query(q)
    q.validate(db.n)
    bits = db.bits
    return sum(bits[i] for i in q.indices)


def hamming_distance(a: BinaryDatabase, b: BinaryDatabase) -> int:
    if len(a) != len(b):
        raise DimensionError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a.bits, b.bits))


def random_database(n: int, prevalence: float, seed: int) -> BinaryDatabase:
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not 0.0 <= prevalence <= 1.0:
        raise ParameterError(f"prevalence must lie in [0, 1], got {prevalence}")
    rng = np.random.default_rng(seed)
    return BinaryDatabase(tuple((rng.random(n) < prevalence).astype(int)))


@dataclass(frozen=True)
class NoiseMechanism:
    """Answer perturbation rule.

    ``f`` is the open-interval half-width for bounded-uniform noise, ``m`` the
    rounding granularity and ``b`` the Laplace scale.
    """

    kind: str = "exact"
    f: Optional[float] = None
    m: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        if self.kind not in MECHANISM_KINDS:
            raise ParameterError(f"unknown mechanism kind {self.kind!r}")
        need = {"bounded-uniform": "f", "rounding": "m", "laplace": "b"}.get(self.kind)
        if need is not None:
            val = getattr(self, need)
            if val is None or not math.isfinite(val) or val <= 0:
                raise ParameterError(f"{self.kind} mechanism needs a positive finite {need!r}")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def bounded_uniform(cls, f):
        return cls("bounded-uniform", f=float(f))

    @classmethod
    def rounding(cls, m):
        return cls("rounding", m=float(m))

    @classmethod
    def laplace(cls, b):
        return cls("laplace", b=float(b))

    @property
    def max_error(self) -> float:
        """Supremum of |answer - true answer| (attained only for rounding)."""
        return {
            "exact": 0.0,
            "bounded-uniform": self.f,
            "rounding": None if self.m is None else self.m / 2,
            "laplace": math.inf,
        }[self.kind]

    def is_within(self, f: float) -> bool:
        """True when every answer is guaranteed to be strictly within ``f`` of the truth."""
        if self.kind == "exact":
            return f > 0
        if self.kind == "bounded-uniform":
            return self.f <= f
        if self.kind == "rounding":
            return self.m / 2 < f
        return False

    def perturb(self, value: int, rng: np.random.Generator) -> float:
        if self.kind == "exact":
            return float(value)
        if self.kind == "bounded-uniform":
            # uniform() samples [-f, f); reject the closed endpoint
            while True:
                noise = rng.uniform(-self.f, self.f)
                if noise != -self.f:
                    return value + noise
        if self.kind == "rounding":
            return float(self.m * round(value / self.m))  # round-half-even
        return value + rng.laplace(0.0, self.b)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "f": self.f, "m": self.m, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseMechanism":
        unknown = set(d) - {"kind", "f", "m", "b", "seed"}
        if unknown:
            raise ParameterError(f"unknown mechanism fields: {sorted(unknown)}")
        return cls(
            kind=d.get("kind", "exact"),
            **{k: (None if d.get(k) is None else float(d[k])) for k in ("f", "m", "b")},
        )


@dataclass
class NoisyOracle:
    """Stateful answerer of subset queries over a fixed database.

    Single owner; the RNG stream advances with every answered query.
    """

    database: BinaryDatabase
    mechanism: NoiseMechanism = field(default_factory=NoiseMechanism.exact)
    rng_seed: int = 0
    query_budget: Optional[int] = None
    query_count: int = field(default=0, init=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.rng_seed)

    @property
    def n(self) -> int:
        return self.database.n

    def answer(self, q: QueryLike) -> float:
        q = as_query(q)
        q.validate(self.database.n)
        if self.query_budget is not None and self.query_count >= self.query_budget:
            raise BudgetExhaustedError(f"query budget of {self.query_budget} exhausted")
        value = true_answer(self.database, q)
        self.query_count += 1
        return self.mechanism.perturb(value, self._rng)

    @classmethod
    def from_config(cls, database: BinaryDatabase, config: dict, **kw) -> "NoisyOracle":
        """Build from the JSON mechanism object ``{"kind", "f", "m", "b", "seed"}``."""
        return cls(database, NoiseMechanism.from_dict(config), rng_seed=int(config.get("seed", 0)), **kw)


def oracle_answer(oracle: NoisyOracle, q: QueryLike) -> float:
    return oracle.answer(q)
