"""Closed-form privacy/accuracy lower bounds and reconstruction error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .graphrec import UtilityVector, utility_split

LOG_BASES = {"e": math.e, "2": 2.0, "10": 10.0}
DEFAULT_C_GRID = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))
COMPARISON_TOL = 1e-6


def _log_base(base) -> float:
    if isinstance(base, str):
        if base not in LOG_BASES:
            raise ParameterError(f"log base must be one of {sorted(LOG_BASES)}")
        return LOG_BASES[base]
    base = float(base)
    if not any(math.isclose(base, b) for b in LOG_BASES.values()):
        raise ParameterError(f"log base must be e, 2 or 10, got {base}")
    return base


def _base_name(base) -> str:
    b = _log_base(base)
    return next(k for k, v in LOG_BASES.items() if math.isclose(v, b))


@dataclass
class TradeoffBound:
    kind: str
    inputs: dict
    value: float
    interpretation: str
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "inputs": self.inputs, "value": self.value,
                "interpretation": self.interpretation, "flags": list(self.flags)}


def lemma1_eps_lower(t: float, c: float, delta: float, n: int, k: int) -> float:
    """(1/t) [ln((c - delta)/delta) + ln((n - k)/k)] in natural log."""
    if t < 1:
        raise DomainError("t must be >= 1")
    if not 0 < c < 1:
        raise DomainError("c must lie in (0, 1)")
    if not delta > 0:
        raise DomainError("delta must be positive")
    if delta >= c:
        raise DomainError(f"delta={delta} must be below c={c}")
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < n, got k={k}, n={n}")
    return (math.log((c - delta) / delta) + math.log((n - k) / k)) / t


def theorem4_eps_lower(n: int, beta: float, d_max: float, log_base="e") -> float:
    """(log n - log beta - log log n) / (4 d_max), all logs in ``log_base``."""
    b = _log_base(log_base)
    if n < 2:
        raise DomainError("n must be >= 2")
    if not 1 <= beta < n:
        raise DomainError(f"need 1 <= beta < n, got beta={beta}")
    if d_max < 1:
        raise DomainError("d_max must be >= 1")
    log_n = math.log(n, b)
    if log_n <= 1:
        raise DomainError(f"log log n is not positive for n={n} in base {_base_name(b)}")
    return (log_n - math.log(beta, b) - math.log(log_n, b)) / (4 * d_max)


def alpha_of(n: int, d_max: float, log_base="e") -> float:
    """Degree parameter alpha with d_max = alpha log n."""
    return d_max / math.log(n, _log_base(log_base))


def reconstruction_error_bound(f: float) -> float:
    if f < 0:
        raise DomainError("f must be non-negative")
    return 4 * f


def leaked_count(n: int, f: float) -> int:
    """Entries guaranteed correct after reconstruction: n - ceil(4f), floored at 0."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return max(0, n - math.ceil(reconstruction_error_bound(f)))


def lemma1_bound(t, c, delta, n, k) -> TradeoffBound:
    v = lemma1_eps_lower(t, c, delta, n, k)
    return TradeoffBound("lemma1", {"t": t, "c": c, "delta": delta, "n": n, "k": k}, v,
                         "lower-bound-on-eps", ["vacuous"] if v <= 0 else [])


def theorem4_bound(n, beta, d_max, log_base="e") -> TradeoffBound:
    v = theorem4_eps_lower(n, beta, d_max, log_base)
    inputs = {"n": n, "beta": beta, "d_max": d_max, "log_base": _base_name(log_base),
              "alpha": alpha_of(n, d_max, log_base)}
    return TradeoffBound("theorem4", inputs, v, "lower-bound-on-eps", ["vacuous"] if v <= 0 else [])


def reconstruction_bound(n, f) -> TradeoffBound:
    flags = ["meaningless"] if 4 * f >= n else []
    return TradeoffBound("reconstruction", {"n": n, "f": f, "leaked": leaked_count(n, f)},
                         reconstruction_error_bound(f), "upper-bound-on-error", flags)


def tightest_lemma1(t, delta, u: UtilityVector, n: Optional[int] = None,
                    c_grid: Sequence[float] = DEFAULT_C_GRID):
    """Largest Lemma-1 bound over a grid of splits c, with k taken from the utility.

    ``n`` defaults to the number of non-target nodes so that ``n - k`` is the
    size of the low-utility group. Returns ``(value, c, k)`` or ``None`` when
    no grid point satisfies the hypotheses.
    """
    n = len(u.nodes) if n is None else n
    best = None
    for c in c_grid:
        k = utility_split(u, c).k
        if not (delta < c and 1 <= k < n):
            continue
        v = lemma1_eps_lower(t, c, delta, n, k)
        if best is None or v > best[0]:
            best = (v, float(c), k)
    return best


@dataclass
class Measurement:
    """One audited instance fed to :func:`bound_vs_empirical`."""

    eps_measured: float
    delta_measured: float
    label: str = ""
    t: Optional[int] = None
    utility: Optional[UtilityVector] = None
    n: Optional[int] = None
    beta: Optional[float] = None
    d_max: Optional[float] = None
    log_base: str = "e"
    monotone: bool = True
    unbounded: bool = False


@dataclass
class ComparisonRow:
    label: str
    included: bool
    reason: str = ""
    bound: Optional[float] = None
    eps_measured: Optional[float] = None
    margin: Optional[float] = None
    c: Optional[float] = None
    k: Optional[int] = None

    @property
    def consistent(self) -> Optional[bool]:
        return None if not self.included else self.margin >= -COMPARISON_TOL


@dataclass
class ConsistencyReport:
    kind: str
    rows: list

    @property
    def included(self):
        return [r for r in self.rows if r.included]

    @property
    def consistent(self) -> bool:
        return all(r.consistent for r in self.included)

    @property
    def min_margin(self) -> Optional[float]:
        ms = [r.margin for r in self.included]
        return min(ms) if ms else None


def _exclusion(m: Measurement) -> str:
    if m.unbounded:
        return "dp_audit reported an unbounded ratio"
    if not m.monotone:
        return "recommender fails monotonicity"
    return ""


def bound_vs_empirical(kind, measurements: Iterable[Measurement],
                       c_grid: Sequence[float] = DEFAULT_C_GRID) -> ConsistencyReport:
    """Compare audited epsilons against an analytic lower bound.

    Instances that violate the bound's hypotheses are kept in the report but
    marked excluded with a reason.
    """
    kind = kind.kind if isinstance(kind, TradeoffBound) else kind
    if kind not in ("lemma1", "theorem4"):
        raise ParameterError(f"cannot compare epsilon against a {kind!r} bound")
    rows = []
    for m in measurements:
        reason = _exclusion(m)
        if reason:
            rows.append(ComparisonRow(m.label, False, reason))
            continue
        if kind == "lemma1":
            if m.utility is None or m.t is None:
                rows.append(ComparisonRow(m.label, False, "missing utility or t"))
                continue
            best = tightest_lemma1(m.t, m.delta_measured, m.utility, m.n, c_grid)
            if best is None:
                rows.append(ComparisonRow(m.label, False, "no grid split with delta < c and 1 <= k < n"))
                continue
            value, c, k = best
        else:
            try:
                value = theorem4_eps_lower(m.n, m.beta, m.d_max, m.log_base)
            except DomainError as exc:
                rows.append(ComparisonRow(m.label, False, str(exc)))
                continue
            c = k = None
        rows.append(ComparisonRow(m.label, True, "", value, m.eps_measured,
                                  m.eps_measured - value, c, k))
    return ConsistencyReport(kind, rows)
