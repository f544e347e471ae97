"""Open-tour TSP over asymmetric cost matrices.

Node 0 is the fixed start; nodes 1..m-1 are goals. Tours do not return to
the start. The solver is nearest-neighbor construction followed by
first-improvement Or-opt and directed 2-opt local search. An optional
refinement stage perturbs the local optimum with every segment swap,
re-optimizes each, and keeps the best until no swap helps.
"""
import itertools
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import InvalidOrder, SizeLimit

BRUTE_FORCE_LIMIT = 10


@dataclass(frozen=True)
class Tour:
    order: tuple
    cost: float

    @property
    def first(self):
        return self.order[0] if self.order else None


def as_matrix(m) -> List[List[float]]:
    rows = m.tolist() if isinstance(m, np.ndarray) else [list(map(float, r)) for r in m]
    n = len(rows)
    for r in rows:
        if len(r) != n:
            raise ValueError("cost matrix must be square")
    return rows


def tour_cost(m, order: Sequence[int]) -> float:
    lam = m if isinstance(m, list) else as_matrix(m)
    n = len(lam)
    if sorted(order) != list(range(1, n)):
        raise InvalidOrder(f"order must be a permutation of 1..{n - 1}")
    total = 0.0
    prev = 0
    for j in order:
        total += lam[prev][j]
        prev = j
    return total


def _path_cost(lam, path) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += lam[a][b]
    return total


def nearest_neighbor(m) -> Tour:
    lam = as_matrix(m)
    n = len(lam)
    left = set(range(1, n))
    cur = 0
    order = []
    while left:
        row = lam[cur]
        nxt = min(left, key=lambda j: (row[j], j))
        order.append(nxt)
        left.remove(nxt)
        cur = nxt
    return Tour(tuple(order), tour_cost(lam, order))


def _or_opt_pass(lam, path, cost, budget):
    """Try relocating segments of length 1-3; apply the first improving move."""
    n = len(path)
    for seg_len in (1, 2, 3):
        for i in range(1, n - seg_len + 1):
            j = i + seg_len - 1
            prev = path[i - 1]
            s0, s1 = path[i], path[j]
            nxt = path[j + 1] if j + 1 < n else None
            removed = lam[prev][s0] + (lam[s1][nxt] - lam[prev][nxt] if nxt is not None else 0.0)
            rest = path[:i] + path[j + 1:]
            for k in range(len(rest)):
                if k == i - 1:
                    continue  # original position
                budget[0] -= 1
                if budget[0] < 0:
                    return None
                a = rest[k]
                b = rest[k + 1] if k + 1 < len(rest) else None
                added = lam[a][s0] + (lam[s1][b] - lam[a][b] if b is not None else 0.0)
                if added - removed < -1e-12 * cost:
                    new = rest[:k + 1] + path[i:j + 1] + rest[k + 1:]
                    return new, _path_cost(lam, new)
    return path, cost


def _two_opt_pass(lam, path, cost, budget):
    """Reverse path[i..j]; every directed edge in the span is re-evaluated."""
    n = len(path)
    for i in range(1, n - 1):
        for j in range(i + 1, n):
            budget[0] -= 1
            if budget[0] < 0:
                return None
            before = lam[path[i - 1]][path[i]]
            after_old = lam[path[i - 1]][path[j]]
            if j + 1 < n:
                before += lam[path[j]][path[j + 1]]
                after_old += lam[path[i]][path[j + 1]]
            fwd = 0.0
            rev = 0.0
            for t in range(i, j):
                fwd += lam[path[t]][path[t + 1]]
                rev += lam[path[t + 1]][path[t]]
            if (after_old + rev) - (before + fwd) < -1e-12 * cost:
                new = path[:i] + path[i:j + 1][::-1] + path[j + 1:]
                return new, _path_cost(lam, new)
    return path, cost


def _local_search(lam, order, cost):
    n = len(lam)
    path = [0] + list(order)
    budget = [50 * n * n]
    while True:
        res = _or_opt_pass(lam, path, cost, budget)
        if res is None:
            break
        if res[0] is not path:
            path, cost = res
            continue
        res = _two_opt_pass(lam, path, cost, budget)
        if res is None or res[0] is path:
            break
        path, cost = res
    return path[1:], cost


def _refine(lam, order, cost):
    while True:
        g = len(order)
        best_order, best_cost = order, cost
        for a, b, c in itertools.combinations(range(g + 1), 3):
            kicked = order[:a] + order[b:c] + order[a:b] + order[c:]
            o, oc = _local_search(lam, kicked, tour_cost(lam, kicked))
            if oc < best_cost - 1e-12 * best_cost:
                best_order, best_cost = o, oc
        if best_order is order:
            return order, cost
        order, cost = best_order, best_cost


def solve_open_tour(m, refine: bool = True) -> Tour:
    """Heuristic open tour from node 0; exact for matrices of size <= 2.

    ``refine=False`` stops at the first Or-opt/2-opt local optimum, which is
    an order of magnitude cheaper.
    """
    lam = as_matrix(m)
    n = len(lam)
    if n <= 1:
        return Tour((), 0.0)
    nn = nearest_neighbor(lam)
    if n == 2:
        return nn
    order, cost = _local_search(lam, nn.order, nn.cost)
    if refine and n >= 4:
        order, cost = _refine(lam, order, cost)
    order = tuple(order)
    return Tour(order, tour_cost(lam, order))


def brute_force_open_tour(m) -> Tour:
    """Exact optimum by enumeration; lexicographically first among ties."""
    lam = as_matrix(m)
    n = len(lam)
    if n > BRUTE_FORCE_LIMIT:
        raise SizeLimit(f"brute force limited to size {BRUTE_FORCE_LIMIT}, got {n}")
    best = None
    best_cost = float("inf")
    for perm in itertools.permutations(range(1, n)):
        c = 0.0
        prev = 0
        for j in perm:
            c += lam[prev][j]
            prev = j
        if c < best_cost:
            best, best_cost = perm, c
    return Tour(tuple(best), best_cost)
