"""Pareto front approximation by iterative weighted-sum refinement.

The achievable set of a multi-objective query (all objectives maximizing
after normalization) is a downward-closed convex polytope.  The sandwich
scheme maintains an inner approximation P (exact value vectors of solved
strategies) and an outer approximation Q (halfspaces w.x <= v_w from
certified weighted optima), refining where the two differ most: after the
unit weight vectors, the facet of the downward hull of P with the largest
gap to the boundary of Q supplies the next weight vector.  All three query
kinds read their answers off (P, Q); membership and slice optimizations are
small linear programs over the stored points and halfspaces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .model import NEG_INF, MarkovAutomaton, MDStrategy, ModelError, Objective, SolverError
from .weighted import (NormalizedProblem, WeightedPrep, WeightedSolution,
                       normalize_query, optimize_weighted, prepare_weighted,
                       validate_assumptions)

MAX_DIMENSION = 4


@dataclass(frozen=True)
class HalfSpace:
    """The constraint normal . x <= offset with a nonnegative normal
    summing to 1.  Offsets come from certified upper bounds, so every
    achievable point satisfies every stored halfspace."""

    normal: tuple[float, ...]
    offset: float


@dataclass
class AchievedPoint:
    """An exactly evaluated strategy: its value vector (internal, maximizing
    orientation), the strategy itself, and the weights that produced it.
    `finite` is False when some coordinate diverged to -inf; such points stay
    recorded but never enter the hull."""

    point: np.ndarray
    strategy: MDStrategy
    weights: tuple[float, ...]
    finite: bool


@dataclass
class Facet:
    """One face of the downward hull of the stored points: outward normal
    (nonnegative, sum 1), support offset, indices of the stored points lying
    on it.  Degenerate facets (fewer supporting vertices than dimensions)
    close the hull at its coordinate-wise maxima."""

    normal: np.ndarray
    offset: float
    vertices: tuple[int, ...]
    degenerate: bool


@dataclass
class ApproximationState:
    """The (P, Q) pair of the sandwich loop plus the refinement history,
    with a cached facet decomposition of the downward hull of P."""

    dimension: int
    points: list[AchievedPoint] = field(default_factory=list)
    halfspaces: list[HalfSpace] = field(default_factory=list)
    history: list[tuple[tuple[float, ...], float]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    _facets: list[Facet] | None = field(default=None, repr=False)

    def add(self, sol: WeightedSolution) -> None:
        finite = bool(np.all(np.isfinite(sol.point)))
        w = tuple(float(x) for x in sol.weights)
        self.points.append(AchievedPoint(np.array(sol.point, dtype=float),
                                         dict(sol.strategy), w, finite))
        if not finite:
            self.warnings.append(
                "a strategy evaluated to -inf in some coordinate; consider dropping "
                "the diverging objective and re-running on the remaining ones")
        self.halfspaces.append(HalfSpace(w, float(sol.value)))
        self.history.append((w, float(sol.value)))
        self._facets = None

    def finite_indices(self) -> list[int]:
        return [i for i, ap in enumerate(self.points) if ap.finite]

    def facets(self) -> list[Facet]:
        if self._facets is None:
            idx = self.finite_indices()
            raw = downward_hull([self.points[i].point for i in idx], self.dimension)
            self._facets = [Facet(f.normal, f.offset,
                                  tuple(idx[v] for v in f.vertices), f.degenerate)
                            for f in raw]
        return self._facets

    def facet_gaps(self) -> list[tuple[Facet, float, float]]:
        """Per facet: the minimal slack against all halfspaces at the facet
        centroid, and the scale (offset magnitude, floored at 1) of the
        halfspace attaining it."""
        out = []
        for f in self.facets():
            x = np.mean([self.points[i].point for i in f.vertices], axis=0)
            gaps = np.array([h.offset - float(np.dot(h.normal, x)) for h in self.halfspaces])
            gi = int(np.argmin(gaps))
            out.append((f, float(gaps[gi]), max(1.0, abs(self.halfspaces[gi].offset))))
        return out


def downward_hull(points: Sequence[np.ndarray], dimension: int) -> list[Facet]:
    """Facets of the upper-right boundary of the downward convex hull.

    Dimension 1 and 2 are handled directly (maximum / monotone staircase);
    3 and 4 go through a convex hull of the points padded with their
    projections onto a box below the point set, which makes the hull full-
    dimensional and turns the downward closure's unbounded faces into box
    walls that are filtered by normal sign afterwards.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    if not pts:
        return []
    if dimension == 1:
        best = max(range(len(pts)), key=lambda i: (pts[i][0], -i))
        return [Facet(np.array([1.0]), float(pts[best][0]), (best,), False)]
    if dimension == 2:
        return _hull_2d(pts)
    if dimension in (3, 4):
        return _hull_padded(pts, dimension)
    raise ModelError(f"queries with {dimension} objectives are not supported (max {MAX_DIMENSION})")


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_2d(pts: list[np.ndarray]) -> list[Facet]:
    first_at: dict[tuple[float, float], int] = {}
    for i, p in enumerate(pts):
        first_at.setdefault((float(p[0]), float(p[1])), i)
    uniq = sorted(first_at)
    chain: list[tuple[float, float]] = []
    for t in uniq:
        while len(chain) >= 2 and _cross(chain[-2], chain[-1], t) >= 0:
            chain.pop()
        chain.append(t)
    ymax = max(t[1] for t in chain)
    start = max(i for i, t in enumerate(chain) if t[1] == ymax)
    front = chain[start:]
    facets = [Facet(np.array([0.0, 1.0]), float(front[0][1]), (first_at[front[0]],), True)]
    for a, b in zip(front, front[1:]):
        n = np.array([a[1] - b[1], b[0] - a[0]])
        n = n / n.sum()
        off = max(float(np.dot(n, a)), float(np.dot(n, b)))
        facets.append(Facet(n, off, (first_at[a], first_at[b]), False))
    facets.append(Facet(np.array([1.0, 0.0]), float(front[-1][0]), (first_at[front[-1]],), True))
    return facets


def _hull_padded(pts: list[np.ndarray], dim: int) -> list[Facet]:
    from scipy.spatial import ConvexHull

    first_at: dict[tuple[float, ...], int] = {}
    for i, p in enumerate(pts):
        first_at.setdefault(tuple(float(x) for x in p), i)
    uniq = sorted(first_at)
    arr = np.array(uniq, dtype=float)
    k = len(uniq)
    spread = float(np.max(arr.max(axis=0) - arr.min(axis=0))) if k > 1 else 0.0
    mins = arr.min(axis=0) - (1.0 + spread)
    pads = []
    for p in arr:
        for mask in range(1, 1 << dim):
            q = p.copy()
            for j in range(dim):
                if mask >> j & 1:
                    q[j] = mins[j]
            pads.append(q)
    pads = np.unique(np.array(pads), axis=0)
    hull = ConvexHull(np.vstack([arr, pads]))

    groups: dict[tuple, dict] = {}
    for si, simplex in enumerate(hull.simplices):
        eq = hull.equations[si]
        key = tuple(np.round(eq, 9))
        g = groups.setdefault(key, {"eq": eq, "verts": set()})
        g["verts"].update(int(v) for v in simplex)
    facets: list[Facet] = []
    for key in sorted(groups):
        n = groups[key]["eq"][:dim]
        if (n < -1e-9).any():
            continue
        orig = sorted(v for v in groups[key]["verts"] if v < k)
        if not orig:
            continue
        n2 = np.clip(n, 0.0, None)
        s = float(n2.sum())
        if s <= 0.0:
            continue
        n2 = n2 / s
        off = float(np.max(arr @ n2))
        verts = tuple(first_at[uniq[v]] for v in orig)
        facets.append(Facet(n2, off, verts, len(orig) < dim))
    return facets


def select_weight(state: ApproximationState, eta: float,
                  guidance: np.ndarray | None = None) -> np.ndarray | None:
    """Next weight vector, or None when converged.

    The first `dimension` calls return the unit vectors; afterwards the facet
    with the largest gap to the boundary of Q (relative to the scale of the
    tightest halfspace) is chosen, preferring facets whose normal points
    toward `guidance` when given.  Facets with gap at most eta * scale are
    considered closed.
    """
    ell = state.dimension
    if len(state.history) < ell:
        w = np.zeros(ell)
        w[len(state.history)] = 1.0
        return w
    best_key = None
    best = None
    for f, gap, scale in state.facet_gaps():
        if gap <= max(eta * scale, 1e-15):
            continue
        if guidance is not None:
            x = np.mean([state.points[i].point for i in f.vertices], axis=0)
            d = guidance - x
            nd = float(np.linalg.norm(d))
            nn = float(np.linalg.norm(f.normal))
            cos = float(np.dot(f.normal, d)) / (nd * nn) if nd > 0 else 1.0
            score = gap * (0.1 + max(0.0, cos))
        else:
            score = gap
        key = (-score, tuple(np.round(f.normal, 12)))
        if best_key is None or key < best_key:
            best_key = key
            best = f.normal
    return None if best is None else np.asarray(best, dtype=float)


def refine(state: ApproximationState, prep: WeightedPrep, w: np.ndarray,
           eps: float = 1e-6) -> WeightedSolution:
    """One sandwich iteration: solve the weighted problem, store the exact
    point with its witness strategy, intersect Q with the new halfspace."""
    sol = optimize_weighted(prep, w, eps)
    state.add(sol)
    return sol


# ---------------------------------------------------------------------------
# queries


@dataclass
class ParetoQuery:
    precision: float = 1e-4
    max_iterations: int = 200
    time_limit: float | None = None


@dataclass
class AchievabilityQuery:
    point: Sequence[float] = ()
    precision: float = 1e-4
    max_iterations: int = 200
    time_limit: float | None = None


@dataclass
class QuantitativeQuery:
    thresholds: Sequence[float] = ()
    precision: float = 1e-4
    max_iterations: int = 200
    time_limit: float | None = None


@dataclass
class QueryResult:
    """Outcome of answer_query, user orientation (minimizing objectives are
    reported with their own sign; halfspace and facet normals are flipped
    accordingly, so they may carry negative entries)."""

    kind: str
    objectives: list[Objective]
    verdict: str | None = None
    vertices: list[list[float]] | None = None
    facets: list[dict] | None = None
    halfspaces: list[dict] | None = None
    lower: float | None = None
    upper: float | None = None
    witness: dict | None = None
    precision_achieved: float | None = None
    iterations: int = 0
    exhausted: bool = False
    history: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    statistics: dict = field(default_factory=dict)
    state: ApproximationState | None = None
    problem: NormalizedProblem | None = None


def answer_query(m: MarkovAutomaton, objectives: Sequence[Objective], query,
                 eps_solver: float = 1e-6) -> QueryResult:
    """Run the refinement loop until the query is answered, the requested
    precision is met, or the iteration/time budget runs out (flagged, never
    silent).  Raises ModelError when the model violates the assumptions."""
    if not isinstance(query, (ParetoQuery, AchievabilityQuery, QuantitativeQuery)):
        raise ModelError(f"unknown query type {type(query).__name__}")
    p = normalize_query(m, objectives)
    if p.dimension > MAX_DIMENSION:
        raise ModelError(f"at most {MAX_DIMENSION} objectives are supported")
    rep = validate_assumptions(p)
    if not rep.ok:
        raise ModelError("model violates assumptions:\n" + str(rep))
    prep = prepare_weighted(p)
    state = ApproximationState(p.dimension)

    deadline = time.monotonic() + query.time_limit if query.time_limit else None
    eta = query.precision
    # halfspace offsets already carry up to eps_solver of slack; stop slightly
    # earlier so the reported precision stays within the request
    eta_eff = eta - eps_solver if eta > 2 * eps_solver else eta / 2

    def budget_left() -> bool:
        if len(state.history) >= query.max_iterations:
            return False
        return deadline is None or time.monotonic() < deadline

    if isinstance(query, ParetoQuery):
        result = _run_pareto(state, prep, p, eta_eff, eps_solver, budget_left)
    elif isinstance(query, AchievabilityQuery):
        result = _run_achievability(state, prep, p, np.asarray(query.point, dtype=float),
                                    eta_eff, eps_solver, budget_left)
    else:
        result = _run_quantitative(state, prep, p, list(query.thresholds),
                                   eta, eps_solver, budget_left)

    result.objectives = list(p.original)
    result.iterations = len(state.history)
    result.history = [{"weights": _flip_vec(np.asarray(w), p.flips), "value": v}
                      for w, v in state.history]
    result.warnings = list(state.warnings)
    result.halfspaces = [{"normal": _flip_vec(np.asarray(h.normal), p.flips),
                          "offset": h.offset} for h in state.halfspaces]
    result.statistics = _statistics(p, prep, state)
    result.state = state
    result.problem = p
    return result


def _flip_vec(v: np.ndarray, flips: np.ndarray) -> list[float]:
    return [float(x) for x in v * flips]


def _statistics(p: NormalizedProblem, prep: WeightedPrep,
                state: ApproximationState) -> dict:
    return {
        "states": p.model.n_states,
        "markovian_states": len(p.model.markovian_states()),
        "choices": p.model.n_choices,
        "zero_ecs": len(prep.zero_ecs),
        "zero_ec_states": sum(len(c.states()) for c in prep.zero_ecs),
        "iterations": len(state.history),
    }


def _run_pareto(state, prep, p, eta_eff, eps, budget_left) -> QueryResult:
    while budget_left():
        w = select_weight(state, eta_eff)
        if w is None:
            break
        refine(state, prep, w, eps)
    exhausted = select_weight(state, eta_eff) is not None

    gaps = state.facet_gaps()
    worst = max((g / s for _, g, s in gaps), default=0.0)
    vertex_ids = sorted({i for f in state.facets() for i in f.vertices},
                        key=lambda i: tuple(state.points[i].point * p.flips))
    vertex_ids = _extreme_ids(state, vertex_ids)
    pos = {state.points[i].point.tobytes(): j for j, i in enumerate(vertex_ids)}
    vertices = [_flip_vec(state.points[i].point, p.flips) for i in vertex_ids]

    def support(f):
        out = []
        for i in f.vertices:
            j = pos.get(state.points[i].point.tobytes())
            if j is not None and j not in out:
                out.append(j)
        return out

    facets = [{"normal": _flip_vec(f.normal, p.flips), "offset": f.offset,
               "vertices": support(f)}
              for f in state.facets() if not f.degenerate]
    witness = {"vertices": [_strategy_ids(state.points[i].strategy) for i in vertex_ids]}
    return QueryResult(kind="pareto", objectives=[], vertices=vertices, facets=facets,
                       witness=witness, precision_achieved=worst + eps,
                       exhausted=exhausted)


def _run_achievability(state, prep, p, point, eta_eff, eps, budget_left) -> QueryResult:
    if point.shape != (p.dimension,):
        raise ModelError("point dimension does not match the objectives")
    q = point * p.flips
    verdict = "unknown"
    witness = None
    exhausted = False
    while True:
        hit = next((h for h in state.halfspaces if float(np.dot(h.normal, q)) > h.offset), None)
        if hit is not None:
            verdict = "no"
            witness = {"separating": {"normal": _flip_vec(np.asarray(hit.normal), p.flips),
                                      "offset": hit.offset}}
            break
        mix = _inner_feasible(state, q)
        if mix is not None:
            verdict = "yes"
            witness = _mixture_witness(state, mix, p)
            break
        if not budget_left():
            exhausted = True
            break
        w = select_weight(state, eta_eff, guidance=q)
        if w is None:
            break  # front resolved to precision; the point sits in the slack
        refine(state, prep, w, eps)
    return QueryResult(kind="achievability", objectives=[], verdict=verdict,
                       witness=witness, exhausted=exhausted)


def _run_quantitative(state, prep, p, thresholds, eta, eps, budget_left) -> QueryResult:
    if len(thresholds) != p.dimension - 1:
        raise ModelError("quantitative queries need one threshold per objective "
                         "after the first")
    t_int = np.array([p.flips[j + 1] * thresholds[j] for j in range(len(thresholds))])
    lower = NEG_INF
    upper = math.inf
    mix = None
    exhausted = False
    while True:
        lower, mix = _inner_slice_max(state, t_int)
        upper, x_outer = _outer_slice_max(state, t_int, p.dimension)
        if _bracket(lower, upper) <= eta:
            break
        if not budget_left():
            exhausted = True
            break
        guidance = None
        if x_outer is not None:
            guidance = np.asarray(x_outer, dtype=float)
        w = select_weight(state, 0.0, guidance=guidance)
        if w is None:
            exhausted = _bracket(lower, upper) > eta
            break
        refine(state, prep, w, eps)
    witness = _mixture_witness(state, mix, p) if mix else None
    if p.flips[0] > 0:
        lo_u, up_u = lower, upper
    else:
        lo_u, up_u = -upper, -lower
    return QueryResult(kind="quantitative", objectives=[], lower=lo_u, upper=up_u,
                       witness=witness, precision_achieved=_bracket(lower, upper),
                       exhausted=exhausted)


def _bracket(lower: float, upper: float) -> float:
    if lower == upper:
        return 0.0
    return upper - lower


def _strategy_ids(sigma: MDStrategy) -> dict[int, int]:
    return {int(s): int(a) for s, a in sorted(sigma.items())}


def _mixture_witness(state: ApproximationState, mix, p: NormalizedProblem) -> dict:
    parts = []
    combined = np.zeros(p.dimension)
    for lam, i in mix:
        ap = state.points[i]
        combined += lam * ap.point
        parts.append({"weight": lam, "strategy": _strategy_ids(ap.strategy),
                      "point": _flip_vec(ap.point, p.flips)})
    return {"mixture": parts, "point": _flip_vec(combined, p.flips)}


# ---------------------------------------------------------------------------
# linear programs over (P, Q)


def _extreme_ids(state: ApproximationState, ids: list[int]) -> list[int]:
    """Filter facet-supporting point ids down to the extreme points of the
    downward closure.

    A supporting point of a degenerate cap facet may still be dominated by a
    mixture of the others (it lies on the cap but inside the front); such a
    point is not a vertex.  Exact duplicates are collapsed first so identical
    pairs do not eliminate each other.
    """
    distinct: list[int] = []
    seen = set()
    for i in ids:
        key = state.points[i].point.tobytes()
        if key not in seen:
            seen.add(key)
            distinct.append(i)
    if len(distinct) <= 1:
        return distinct
    keep = []
    for i in distinct:
        others = np.array([state.points[j].point for j in distinct if j != i])
        k = len(others)
        res = linprog(c=np.zeros(k), A_ub=-others.T, b_ub=-state.points[i].point,
                      A_eq=np.ones((1, k)), b_eq=[1.0],
                      bounds=[(0.0, None)] * k, method="highs")
        if res.status != 0:
            keep.append(i)
    return keep


def _inner_feasible(state: ApproximationState, q: np.ndarray):
    """Mixture of stored finite points dominating q, or None."""
    idx = state.finite_indices()
    if not idx:
        return None
    P = np.array([state.points[i].point for i in idx])
    k = len(idx)
    res = linprog(c=np.zeros(k), A_ub=-P.T, b_ub=-q,
                  A_eq=np.ones((1, k)), b_eq=[1.0],
                  bounds=[(0.0, None)] * k, method="highs")
    if res.status != 0:
        return None
    return _mixture_from(res.x, idx)


def _inner_slice_max(state: ApproximationState, t_int: np.ndarray):
    """Best first coordinate over mixtures meeting the thresholds."""
    idx = state.finite_indices()
    if not idx:
        return NEG_INF, None
    P = np.array([state.points[i].point for i in idx])
    k = len(idx)
    A_ub = -P[:, 1:].T if len(t_int) else None
    b_ub = -t_int if len(t_int) else None
    res = linprog(c=-P[:, 0], A_ub=A_ub, b_ub=b_ub,
                  A_eq=np.ones((1, k)), b_eq=[1.0],
                  bounds=[(0.0, None)] * k, method="highs")
    if res.status == 2:
        return NEG_INF, None
    if res.status != 0:
        raise SolverError(f"inner slice optimization failed (status {res.status})")
    return float(-res.fun), _mixture_from(res.x, idx)


def _outer_slice_max(state: ApproximationState, t_int: np.ndarray, dim: int):
    """Best first coordinate over the outer approximation Q meeting the
    thresholds; +inf when Q is still unbounded in that direction."""
    if not state.halfspaces:
        return math.inf, None
    A = [list(h.normal) for h in state.halfspaces]
    b = [h.offset for h in state.halfspaces]
    for j, t in enumerate(t_int, start=1):
        row = [0.0] * dim
        row[j] = -1.0
        A.append(row)
        b.append(-float(t))
    c = [0.0] * dim
    c[0] = -1.0
    res = linprog(c=c, A_ub=np.array(A), b_ub=np.array(b),
                  bounds=[(None, None)] * dim, method="highs")
    if res.status == 2:
        return NEG_INF, None
    if res.status == 3:
        return math.inf, None
    if res.status != 0:
        raise SolverError(f"outer slice optimization failed (status {res.status})")
    return float(-res.fun), res.x


def _mixture_from(lam: np.ndarray, idx: list[int]):
    mix = [(float(l), idx[i]) for i, l in enumerate(lam) if l > 1e-12]
    total = sum(l for l, _ in mix)
    return [(l / total, i) for l, i in mix]
