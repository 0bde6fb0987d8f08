"""Mini-batch optimal-transport couplings.

Costs are either squared Euclidean or angular (arccos of cosine
similarity). Plans come from log-domain Sinkhorn; hard assignments come from
a Hungarian solver whose output is the lexicographically smallest optimal
permutation.
"""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegeneratePlan,
    DimensionMismatch,
    NonFiniteCost,
    NotConverged,
    TooLarge,
    ZeroVector,
)
from .geometry import ZERO_NORM

DEFAULT_ASSIGNMENT_CAP = 256


class Metric(str, Enum):
    EUCLIDEAN_SQ = "euclidean_sq"
    ANGULAR = "angular"


@dataclass(frozen=True)
class CouplingPlan:
    weights: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    converged: bool = True
    iterations: int = 0
    violation: float = 0.0

    def transport_cost(self, cost):
        return float(np.sum(self.weights * cost))


def cost_matrix(src, tgt, metric=Metric.EUCLIDEAN_SQ):
    """Pairwise transport costs, ``out[i, j] = c(src[i], tgt[j])``."""
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    tgt = np.atleast_2d(np.asarray(tgt, dtype=np.float64))
    if src.shape[1] != tgt.shape[1]:
        raise DimensionMismatch(f"dimension {src.shape[1]} != {tgt.shape[1]}")
    metric = Metric(metric)
    if metric is Metric.EUCLIDEAN_SQ:
        sq0 = np.sum(src * src, axis=1)[:, None]
        sq1 = np.sum(tgt * tgt, axis=1)[None, :]
        return np.maximum(sq0 + sq1 - 2.0 * src @ tgt.T, 0.0)
    n0 = np.linalg.norm(src, axis=1)
    n1 = np.linalg.norm(tgt, axis=1)
    if np.any(n0 < ZERO_NORM) or np.any(n1 < ZERO_NORM):
        raise ZeroVector("angular cost is undefined for zero vectors")
    cos = (src / n0[:, None]) @ (tgt / n1[:, None]).T
    return np.arccos(np.clip(cos, -1.0, 1.0))


def _lse(z, axis):
    zmax = np.max(z, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(z - zmax), axis=axis)) + np.squeeze(zmax, axis=axis)
    return out


def _violation(cost, f, g, eps, a, b):
    p = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return max(
        float(np.abs(p.sum(axis=1) - a).sum()),
        float(np.abs(p.sum(axis=0) - b).sum()),
    )


def sinkhorn(cost, eps=0.1, max_iter=1000, tol=1e-6, check_every=10, anneal=None):
    """Entropic OT plan between uniform marginals.

    Runs the log-domain form of the Sinkhorn iterations, with dual
    potentials ``f``, ``g`` kept in cost units, so that small ``eps`` does
    not underflow. With ``anneal`` the regularization starts at the cost
    range and is halved down to ``eps``, warm-starting the potentials; this
    only changes the path to the fixed point, not the fixed point itself.
    By default annealing is used when the cost range exceeds ``100 * eps``.

    Convergence is declared once the L1 violation of both marginals is at
    most ``tol``. Hitting ``max_iter`` (counted over all stages) first emits
    a :class:`NotConverged` warning and still returns the plan.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DimensionMismatch("cost must be a matrix")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix contains NaN or Inf")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    n, m = cost.shape
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    log_a, log_b = np.log(a), np.log(b)

    schedule = [eps]
    spread = float(np.ptp(cost))
    if anneal is None:
        anneal = spread > 100.0 * eps
    if anneal:
        level = spread
        while level > 2.0 * eps:
            schedule.insert(-1, level)
            level *= 0.5
    f = np.zeros(n)
    g = np.zeros(m)
    violation = np.inf
    it = 0
    for stage, e in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_it = 0
        while it < max_iter:
            f = e * (log_a - _lse((g[None, :] - cost) / e, axis=1))
            g = e * (log_b - _lse((f[:, None] - cost) / e, axis=0))
            it += 1
            stage_it += 1
            if stage_it % check_every == 0 or it == max_iter:
                violation = _violation(cost, f, g, e, a, b)
                if violation <= (tol if last else max(tol, 1e-3)):
                    break
        if it >= max_iter:
            break
    violation = _violation(cost, f, g, eps, a, b)
    converged = violation <= tol
    if not converged:
        warnings.warn(
            f"Sinkhorn stopped after {it} iterations with marginal violation {violation:.3g}",
            NotConverged,
            stacklevel=2,
        )
    weights = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return CouplingPlan(weights, a, b, converged, it, float(violation))


def _hungarian(cost):
    # Shortest augmenting path with potentials; rows and columns 1-indexed,
    # column 0 is the virtual start. Returns (row->col, u, v).
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[match[j] - 1] = j - 1
    return assign, u[1:], v[1:]


def _lexicographic_min(tight, assign):
    """Smallest permutation, in lexicographic order, among perfect matchings
    of the boolean ``tight`` graph, starting from the matching ``assign``."""
    n = len(assign)
    assign = assign.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[assign] = np.arange(n)
    fixed_cols = np.zeros(n, dtype=bool)

    def reroute(start_row, target_col, banned_col):
        # Alternating path from start_row to target_col avoiding fixed rows/cols.
        parent = {}
        stack = [start_row]
        seen = {start_row}
        while stack:
            row = stack.pop()
            for col in np.flatnonzero(tight[row]):
                if fixed_cols[col] or col == banned_col or col in parent:
                    continue
                parent[col] = row
                if col == target_col:
                    path = [col]
                    while parent[path[-1]] != start_row:
                        path.append(assign[parent[path[-1]]])
                    return [(parent[c], c) for c in path]
                nxt = owner[col]
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return None

    for i in range(n):
        for j in np.flatnonzero(tight[i]):
            if fixed_cols[j]:
                continue
            if j == assign[i]:
                break
            k = owner[j]
            path = reroute(k, assign[i], j)
            if path is None:
                continue
            for row, col in path:
                assign[row] = col
                owner[col] = row
            assign[i], owner[j] = j, i
            break
        fixed_cols[assign[i]] = True
    return assign


def exact_assignment(cost, cap=DEFAULT_ASSIGNMENT_CAP):
    """Minimum-cost permutation ``sigma`` with ``sigma[i]`` the column paired
    to row ``i``. Ties go to the lexicographically smallest permutation."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionMismatch("exact assignment needs a square cost matrix")
    n = cost.shape[0]
    if n > cap:
        raise TooLarge(f"n={n} exceeds the assignment cap {cap}")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix contains NaN or Inf")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    assign, u, v = _hungarian(cost)
    reduced = cost - u[:, None] - v[None, :]
    scale = max(1.0, float(np.max(np.abs(cost))))
    tight = reduced <= 1e-12 * scale * n
    return _lexicographic_min(tight, assign)


def sample_pairs(plan, k, rng):
    """Draw ``k`` (src, tgt) index pairs i.i.d. with probability proportional
    to the plan weights."""
    w = plan.weights if isinstance(plan, CouplingPlan) else np.asarray(plan, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    flat = np.clip(w.ravel(), 0.0, None)
    total = flat.sum()
    if not total > 0:
        raise DegeneratePlan("plan has no positive weight")
    idx = rng.choice(flat.size, size=k, p=flat / total)
    return np.stack(np.divmod(idx, w.shape[1]), axis=1)
