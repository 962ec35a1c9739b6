"""Contact graphs, structural utilities, alerting recommenders and edge-DP auditing."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    IngestionError,
    ParameterError,
    ScaleError,
    UndefinedConcentrationError,
    UndefinedRatioError,
)

UTILITY_KINDS = ("direct-edge", "common-neighbors")

# Largest change of any single coordinate u_i under one edge flip.
SENSITIVITY = {"direct-edge": 1.0, "common-neighbors": 1.0}

EXCHANGEABILITY_MAX_N = 9
AUDIT_MAX_N = 12
NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class ContactGraph:
    n: int
    edges: frozenset
    target: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("graph needs at least two nodes")
        if not 0 <= self.target < self.n:
            raise ParameterError(f"target {self.target} not in [0, {self.n})")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ParameterError(f"self-loop at node {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ParameterError(f"edge ({a}, {b}) references a missing node")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj = [set() for _ in range(self.n)]
        for a, b in norm:
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "_adj", tuple(frozenset(s) for s in adj))

    @classmethod
    def from_edges(cls, n, edges, target=0):
        return cls(n, frozenset(tuple(e) for e in edges), target)

    @classmethod
    def star(cls, n, center, target=0):
        return cls.from_edges(n, [(center, i) for i in range(n) if i != center], target)

    @classmethod
    def from_mask(cls, n, mask, target=0):
        """Graph whose edge set is selected by ``mask`` over ``all_pairs(n)``."""
        return cls.from_edges(n, [p for j, p in enumerate(all_pairs(n)) if (mask >> j) & 1], target)

    def neighbors(self, i) -> frozenset:
        return self._adj[i]

    def has_edge(self, a, b) -> bool:
        return b in self._adj[a]

    def degree(self, i) -> int:
        return len(self._adj[i])

    @property
    def max_degree(self) -> int:
        return max(len(s) for s in self._adj)

    @property
    def others(self) -> tuple:
        """Non-target nodes in increasing order."""
        return tuple(i for i in range(self.n) if i != self.target)

    def toggle(self, a, b) -> "ContactGraph":
        e = (min(a, b), max(a, b))
        return ContactGraph(self.n, self.edges ^ {e}, self.target)

    def relabel(self, mapping: Sequence[int]) -> "ContactGraph":
        return ContactGraph(
            self.n,
            frozenset((mapping[a], mapping[b]) for a, b in self.edges),
            mapping[self.target],
        )

    def to_dict(self) -> dict:
        return {"n": self.n, "target": self.target, "edges": sorted(map(list, self.edges))}


def all_pairs(n: int) -> list:
    return list(itertools.combinations(range(n), 2))


def all_graphs(n: int, target: int = 0):
    for mask in range(1 << (n * (n - 1) // 2)):
        yield ContactGraph.from_mask(n, mask, target)


def _interval(window, key, default):
    if window is None:
        return default
    if isinstance(window, dict):
        val = window.get(key)
        return default if val is None else float(val)
    raise IngestionError(f"window must be an object, got {type(window).__name__}")


def build_graph(n, contact_pairs, positive_reports, window=None, target=0) -> ContactGraph:
    """Edge iff a contact in the window has a positive report near it from either endpoint.

    ``contact_pairs`` holds ``(a, b, timestamp)`` (timestamp optional, default 0),
    ``positive_reports`` holds ``(node, timestamp)`` or bare node ids.
    ``window`` may set ``start``/``end`` for contacts and ``report_radius`` for
    the allowed |report time - contact time|; absent keys are unbounded.
    """
    start = _interval(window, "start", -math.inf)
    end = _interval(window, "end", math.inf)
    radius = _interval(window, "report_radius", math.inf)

    reports = {}
    for rec in positive_reports:
        if isinstance(rec, (int, np.integer)):
            node, ts = int(rec), 0.0
        else:
            rec = list(rec)
            if len(rec) not in (1, 2):
                raise IngestionError(f"malformed positive report {rec!r}")
            node, ts = int(rec[0]), float(rec[1]) if len(rec) == 2 else 0.0
        if not 0 <= node < n:
            raise IngestionError(f"positive report for unknown node {node}")
        reports.setdefault(node, []).append(ts)

    def reported_near(node, t):
        return any(abs(r - t) <= radius for r in reports.get(node, ()))

    edges = set()
    for rec in contact_pairs:
        rec = list(rec)
        if len(rec) not in (2, 3):
            raise IngestionError(f"malformed contact record {rec!r}")
        try:
            a, b = int(rec[0]), int(rec[1])
            t = float(rec[2]) if len(rec) == 3 else 0.0
        except (TypeError, ValueError) as exc:
            raise IngestionError(f"malformed contact record {rec!r}") from exc
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise IngestionError(f"contact ({a}, {b}) references invalid nodes")
        if not start <= t <= end:
            continue
        if reported_near(a, t) or reported_near(b, t):
            edges.add((min(a, b), max(a, b)))
    try:
        return ContactGraph(n, frozenset(edges), target)
    except ParameterError as exc:
        raise IngestionError(str(exc)) from exc


def graph_from_document(doc: dict) -> ContactGraph:
    """Ingest ``{n, target, contacts, positives, window}``."""
    try:
        n = int(doc["n"])
        target = int(doc.get("target", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"graph document needs integer 'n': {exc}") from exc
    return build_graph(n, doc.get("contacts", []), doc.get("positives", []), doc.get("window"), target)


@dataclass(frozen=True)
class UtilityVector:
    nodes: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.nodes),):
            raise ParameterError("utility values must align with nodes")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("utilities must be finite")
        if np.any(vals < 0):
            raise ParameterError("utilities must be non-negative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def of(cls, values, nodes=None):
        values = list(values)
        return cls(tuple(range(len(values))) if nodes is None else tuple(nodes), np.array(values, dtype=float))

    @property
    def u_max(self) -> float:
        return float(self.values.max())

    def __getitem__(self, node):
        return float(self.values[self.nodes.index(node)])

    def as_dict(self) -> dict:
        return dict(zip(self.nodes, self.values.tolist()))


@dataclass(frozen=True)
class RecommendationDistribution:
    nodes: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.nodes),):
            raise ParameterError("probabilities must align with nodes")
        if np.any(p < 0) or abs(p.sum() - 1.0) >= NORMALIZATION_TOL:
            raise ParameterError(f"not a probability vector (sum={p.sum()!r})")
        object.__setattr__(self, "probs", p)

    def __getitem__(self, node):
        return float(self.probs[self.nodes.index(node)])

    def as_dict(self) -> dict:
        return dict(zip(self.nodes, self.probs.tolist()))


Recommender = Callable[[UtilityVector], RecommendationDistribution]


def _as_utility(u) -> UtilityVector:
    return u if isinstance(u, UtilityVector) else UtilityVector.of(u)


def _check_aligned(u, p):
    if tuple(u.nodes) != tuple(p.nodes):
        raise ParameterError("utility and distribution index different node sets")


def structural_utility(graph: ContactGraph, kind: str = "direct-edge") -> UtilityVector:
    r = graph.target
    others = graph.others
    if kind == "direct-edge":
        vals = [1.0 if graph.has_edge(r, i) else 0.0 for i in others]
    elif kind == "common-neighbors":
        nr = graph.neighbors(r)
        vals = [float(len(nr & graph.neighbors(i))) for i in others]
    else:
        raise ParameterError(f"unknown utility kind {kind!r}; expected one of {UTILITY_KINDS}")
    return UtilityVector(others, np.array(vals))


UtilitySource = Union[str, Callable[[ContactGraph], UtilityVector]]


def _utility_fn(kind: UtilitySource):
    if callable(kind):
        return kind
    if kind not in UTILITY_KINDS:
        raise ParameterError(f"unknown utility kind {kind!r}")
    return lambda g: structural_utility(g, kind)


@dataclass
class CheckResult:
    passed: bool
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.passed


def exchangeability_check(
    utility_kind: UtilitySource, graph: ContactGraph, *, max_n: int = EXCHANGEABILITY_MAX_N
) -> CheckResult:
    """Exhaustively test u_i(G) == u_{h(i)}(h(G)) over target-fixing relabelings h.

    Witness on failure is ``(mapping, i)``.
    """
    if graph.n > max_n:
        raise ScaleError(f"exchangeability check enumerates (n-1)! maps; n={graph.n} > {max_n}")
    fn = _utility_fn(utility_kind)
    base = fn(graph)
    others = graph.others
    for perm in itertools.permutations(others):
        mapping = list(range(graph.n))
        for src, dst in zip(others, perm):
            mapping[src] = dst
        moved = fn(graph.relabel(mapping))
        for i in others:
            if not math.isclose(base[i], moved[mapping[i]], rel_tol=0, abs_tol=1e-12):
                return CheckResult(False, (tuple(mapping), i))
    return CheckResult(True)


def concentration_beta(u, fraction: float) -> int:
    """Fewest top utilities whose sum reaches ``fraction`` of the total."""
    u = _as_utility(u)
    if not 0 < fraction <= 1:
        raise ParameterError("fraction must lie in (0, 1]")
    total = float(u.values.sum())
    if total <= 0:
        raise UndefinedConcentrationError("concentration is undefined for an all-zero utility")
    order = np.argsort(-u.values, kind="stable")
    prefix = np.cumsum(u.values[order])
    goal = fraction * total * (1 - 1e-12)
    return int(np.argmax(prefix >= goal)) + 1


def monotonicity_check(u, p: RecommendationDistribution) -> CheckResult:
    """u_i > u_j must imply p_i > p_j; witness is the first offending (i, j)."""
    u = _as_utility(u)
    _check_aligned(u, p)
    for a, b in itertools.permutations(range(len(u.nodes)), 2):
        if u.values[a] > u.values[b] and not p.probs[a] > p.probs[b]:
            return CheckResult(False, (u.nodes[a], u.nodes[b]))
    return CheckResult(True)


def expected_utility(u, p: RecommendationDistribution) -> float:
    u = _as_utility(u)
    _check_aligned(u, p)
    return float(u.values @ p.probs)


def exponential_mechanism(u, eps_param: float, sensitivity: float = 1.0) -> RecommendationDistribution:
    u = _as_utility(u)
    if not (eps_param > 0 and math.isfinite(eps_param)):
        raise ParameterError("eps_param must be positive and finite")
    if not (sensitivity > 0 and math.isfinite(sensitivity)):
        raise ParameterError("sensitivity must be positive and finite")
    logits = eps_param * u.values / (2.0 * sensitivity)
    w = np.exp(logits - logits.max())
    return RecommendationDistribution(u.nodes, w / w.sum())


class ExponentialRecommender:
    def __init__(self, eps_param: float, sensitivity: float = 1.0):
        self.eps_param = eps_param
        self.sensitivity = sensitivity

    def __call__(self, u):
        return exponential_mechanism(u, self.eps_param, self.sensitivity)

    def __repr__(self):
        return f"ExponentialRecommender(eps_param={self.eps_param}, sensitivity={self.sensitivity})"


def r_best(u) -> RecommendationDistribution:
    """All mass on the highest-utility node, lowest index on ties."""
    u = _as_utility(u)
    p = np.zeros(len(u.nodes))
    p[int(np.argmax(u.values))] = 1.0
    return RecommendationDistribution(u.nodes, p)


def uniform_recommender(u) -> RecommendationDistribution:
    u = _as_utility(u)
    m = len(u.nodes)
    return RecommendationDistribution(u.nodes, np.full(m, 1.0 / m))


def make_recommender(name: str, eps_param: Optional[float] = None, sensitivity: float = 1.0) -> Recommender:
    if name == "exponential":
        if eps_param is None:
            raise ParameterError("exponential recommender needs eps_param")
        return ExponentialRecommender(eps_param, sensitivity)
    if name == "best":
        return r_best
    if name == "uniform":
        return uniform_recommender
    raise ParameterError(f"unknown recommender {name!r}")


def on_graph(algorithm: Recommender, utility_kind: UtilitySource = "direct-edge"):
    """Compose a utility function with a recommender to act on graphs."""
    fn = _utility_fn(utility_kind)

    def recommend(graph: ContactGraph) -> RecommendationDistribution:
        return algorithm(fn(graph))

    return recommend


def empirical_accuracy(algorithm: Recommender, utility_family: Iterable) -> float:
    """Worst-case ratio of expected to maximum utility over a finite family."""
    worst = math.inf
    seen = False
    for u in utility_family:
        u = _as_utility(u)
        if u.u_max <= 0:
            raise UndefinedRatioError("utility family contains an all-zero vector")
        worst = min(worst, expected_utility(u, algorithm(u)) / u.u_max)
        seen = True
    if not seen:
        raise ParameterError("utility family is empty")
    return float(min(max(worst, 0.0), 1.0))


@dataclass
class AuditReport:
    max_ratio: float
    passed: bool
    unbounded: bool
    worst_edge: Optional[tuple] = None
    worst_node: Optional[int] = None
    neighbors_checked: int = 0

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio if math.isfinite(self.max_ratio) else "inf",
            "passed": self.passed,
            "unbounded": self.unbounded,
            "worst_edge": list(self.worst_edge) if self.worst_edge else None,
            "worst_node": self.worst_node,
            "neighbors_checked": self.neighbors_checked,
        }


def dp_audit(
    recommender: Callable[[ContactGraph], RecommendationDistribution],
    graph: ContactGraph,
    eps_claim: float,
    *,
    max_n: int = AUDIT_MAX_N,
) -> AuditReport:
    """Largest |ln p_i(G)/p_i(G')| over every single-edge addition or deletion G'.

    0/0 counts as ratio 1; a positive probability against a zero one is an
    unbounded violation.
    """
    if graph.n > max_n:
        raise ScaleError(f"audit of n={graph.n} exceeds cap {max_n}")
    base = recommender(graph).probs
    worst, worst_edge, worst_node = 0.0, None, None
    unbounded = False
    checked = 0
    for a, b in all_pairs(graph.n):
        other = recommender(graph.toggle(a, b)).probs
        checked += 1
        zero_base, zero_other = base == 0, other == 0
        mismatch = zero_base ^ zero_other
        if mismatch.any():
            if not unbounded:
                worst_edge, worst_node = (a, b), graph.others[int(np.argmax(mismatch))]
            unbounded = True
            worst = math.inf
            continue
        if unbounded:
            continue
        live = ~zero_base
        ratios = np.abs(np.log(base[live]) - np.log(other[live]))
        if ratios.size and ratios.max() > worst:
            j = int(np.argmax(ratios))
            worst = float(ratios[j])
            worst_edge = (a, b)
            worst_node = np.asarray(graph.others)[live][j].item()
    return AuditReport(
        max_ratio=worst,
        passed=(not unbounded) and worst <= eps_claim + 1e-9,
        unbounded=unbounded,
        worst_edge=worst_edge,
        worst_node=worst_node,
        neighbors_checked=checked,
    )


def edit_distance_t(graph: ContactGraph, low_node: int, high_node: int) -> int:
    """Edge edits that give ``low_node`` the same connections as ``high_node``."""
    for v in (low_node, high_node):
        if not 0 <= v < graph.n:
            raise ParameterError(f"node {v} not in graph")
        if v == graph.target:
            raise ParameterError("edit distance is defined for non-target nodes")
    a = graph.neighbors(low_node) - {high_node}
    b = graph.neighbors(high_node) - {low_node}
    return len(a ^ b)


def min_edit_distance(graph: ContactGraph, u: UtilityVector) -> Optional[int]:
    """Smallest t over (lowest-utility, highest-utility) node pairs; None if utilities are flat."""
    lo, hi = u.values.min(), u.values.max()
    if lo == hi:
        return None
    lows = [v for v, x in zip(u.nodes, u.values) if x == lo]
    highs = [v for v, x in zip(u.nodes, u.values) if x == hi]
    return min(edit_distance_t(graph, a, b) for a in lows for b in highs)


@dataclass
class UtilitySplit:
    c: float
    k: int
    high: tuple
    low: tuple


def utility_split(u, c: float) -> UtilitySplit:
    u = _as_utility(u)
    if not 0 < c < 1:
        raise ParameterError("c must lie in (0, 1)")
    cut = (1 - c) * u.u_max
    high = tuple(v for v, x in zip(u.nodes, u.values) if x > cut)
    low = tuple(v for v, x in zip(u.nodes, u.values) if x <= cut)
    return UtilitySplit(c, len(high), high, low)
