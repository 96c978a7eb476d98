"""Shortest safe-and-fast routes: Dijkstra, Bellman-Ford and tabular Q-learning.

All three engines accept anything exposing ``node_ids()`` and
``neighbors(id) -> [(id, weight), ...]``: a :class:`~saferoute.graph.RouteGraph`
(weights are safety x time) or a :class:`~saferoute.graph.WeightedDigraph`.

Exact engines label nodes with ``(cost, hops)`` compared lexicographically
and, among equally good predecessors, keep the smallest station id, so both
return the same path whenever several paths tie on cost.
"""

from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import NegativeCycleError, NegativeWeightError, PolicyNotConvergedError

DISCONNECTED_REWARD = -99.0
GOAL_REWARD = 100.0


@dataclass
class ShortestPathResult:
    source: str
    target: str
    path: list
    total_cost: float
    dist: dict
    previous: dict
    engine: str
    elapsed: float = 0.0
    settled_or_episodes: int = 0
    settled_order: list = field(default_factory=list, repr=False)

    @property
    def found(self) -> bool:
        return bool(self.path)

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "source": self.source,
            "target": self.target,
            "found": self.found,
            "path": list(self.path),
            "total_cost": self.total_cost if self.found else None,
            "elapsed_seconds": self.elapsed,
            "settled_or_episodes": self.settled_or_episodes,
        }


class _Indexed:
    """Integer view of a graph: ids sorted, CSR adjacency sorted by target id."""

    def __init__(self, graph):
        self.ids = list(graph.node_ids())
        self.index = {k: i for i, k in enumerate(self.ids)}
        src, dst, w = [], [], []
        indptr = [0]
        for i, u in enumerate(self.ids):
            for v, wt in graph.neighbors(u):
                src.append(i)
                dst.append(self.index[v])
                w.append(float(wt))
            indptr.append(len(dst))
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.w = np.asarray(w, dtype=float)
        self.indptr = np.asarray(indptr, dtype=np.int64)

    @property
    def n(self):
        return len(self.ids)

    def out(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return zip(self.dst[lo:hi], self.w[lo:hi])

    def reachable_from(self, i):
        seen = {i}
        todo = deque([i])
        while todo:
            u = todo.popleft()
            for v, _ in self.out(u):
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return seen


def _resolve(graph, g: _Indexed, name: str) -> int:
    if name not in g.index:
        graph.require(name)
    return g.index[name]


def _canonical_predecessors(g: _Indexed, dist, hops):
    """For every labelled node, the smallest-id in-neighbour that attains its label."""
    prev = np.full(g.n, -1, dtype=np.int64)
    for e in range(len(g.src)):
        u, v = g.src[e], g.dst[e]
        if hops[u] < 0 or hops[v] != hops[u] + 1:
            continue
        cand = dist[u] + g.w[e]
        if cand <= dist[v] + 1e-12 * max(1.0, abs(dist[v])) and (prev[v] < 0 or u < prev[v]):
            prev[v] = u
    return prev


def _finish(graph, g, engine, s, t, dist, hops, elapsed, work, settled_order=()):
    prev = _canonical_predecessors(g, dist, hops)
    dist_map = {g.ids[i]: float(dist[i]) for i in range(g.n)}
    prev_map = {g.ids[i]: g.ids[prev[i]] for i in range(g.n) if prev[i] >= 0}
    path = []
    if math.isfinite(dist[t]):
        node = t
        while node != s:
            path.append(g.ids[node])
            node = prev[node]
        path.append(g.ids[s])
        path.reverse()
    cost = path_cost(graph, path) if path else math.inf
    return ShortestPathResult(g.ids[s], g.ids[t], path, cost, dist_map, prev_map, engine,
                              elapsed, int(work), [g.ids[i] for i in settled_order])


def path_cost(graph, path) -> float:
    """Sum of edge weights along ``path``; raises KeyError on a missing edge."""
    total = 0.0
    for u, v in zip(path, path[1:]):
        total += dict(graph.neighbors(u))[v]
    return total


def dijkstra(graph, source: str, target: str) -> ShortestPathResult:
    """Binary-heap Dijkstra.

    Raises:
        NegativeWeightError: if any edge weight is negative.
        UnknownStationError: for an unknown source or target.
    """
    t0 = time.perf_counter()
    g = _Indexed(graph)
    s, t = _resolve(graph, g, source), _resolve(graph, g, target)
    if len(g.w) and g.w.min() < 0:
        e = int(np.argmin(g.w))
        raise NegativeWeightError(
            f"edge {g.ids[g.src[e]]!r} -> {g.ids[g.dst[e]]!r} has weight {g.w[e]}; use bellman_ford"
        )
    dist = np.full(g.n, np.inf)
    hops = np.full(g.n, -1, dtype=np.int64)
    dist[s], hops[s] = 0.0, 0
    done = np.zeros(g.n, dtype=bool)
    heap = [(0.0, 0, s)]
    order = []
    while heap:
        d, h, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        order.append(u)
        for v, w in g.out(u):
            nd, nh = d + w, h + 1
            if nd < dist[v] or (nd == dist[v] and nh < hops[v]):
                dist[v], hops[v] = nd, nh
                heapq.heappush(heap, (nd, nh, int(v)))
    return _finish(graph, g, "dijkstra", s, t, dist, hops, time.perf_counter() - t0, len(order), order)


def bellman_ford(graph, source: str, target: str) -> ShortestPathResult:
    """Bellman-Ford with |V|-1 relaxation rounds (stopping early once stable).

    Raises:
        NegativeCycleError: if a negative cycle is reachable from ``source``.
    """
    t0 = time.perf_counter()
    g = _Indexed(graph)
    s, t = _resolve(graph, g, source), _resolve(graph, g, target)
    dist, hops, negative, rounds = kernels.bellman_ford_relax(g.n, g.src, g.dst, g.w, s)
    if negative:
        raise NegativeCycleError()
    return _finish(graph, g, "bellman-ford", s, t, dist, hops, time.perf_counter() - t0, rounds)


# --------------------------------------------------------------------------
# Q-learning
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QLearningConfig:
    learning_rate: float = 0.8
    discount: float = 0.999
    epsilon: float = 1.0
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.05
    episodes: int = 10_000
    max_steps: int = 200
    seed: int = 0
    allow_invalid_actions: bool = False
    goal_reward_includes_cost: bool = True

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.discount < 1:
            raise ValueError("discount must be in (0, 1)")
        if not (0 <= self.epsilon <= 1 and 0 <= self.epsilon_min <= 1 and 0 < self.epsilon_decay <= 1):
            raise ValueError("epsilon, epsilon_min must be in [0, 1] and epsilon_decay in (0, 1]")
        if self.episodes < 1 or self.max_steps < 1:
            raise ValueError("episodes and max_steps must be positive")


@dataclass
class RewardMatrix:
    ids: list
    values: np.ndarray
    goal: str

    def __getitem__(self, pair):
        u, v = pair
        return float(self.values[self.ids.index(u), self.ids.index(v)])


def build_reward_matrix(graph, goal: str) -> RewardMatrix:
    """-(s*t) on connected pairs, -99 elsewhere (diagonal included), +100 into ``goal``."""
    g = _Indexed(graph)
    gi = _resolve(graph, g, goal)
    R = np.full((g.n, g.n), DISCONNECTED_REWARD)
    R[g.src, g.dst] = -g.w
    R[g.src[g.dst == gi], gi] = GOAL_REWARD
    return RewardMatrix(g.ids, R, goal)


@dataclass
class QTable:
    ids: list
    Q: np.ndarray
    visits: np.ndarray
    goal: str
    episodes: int = 0
    goal_hits: int = 0

    def value(self, u: str, v: str) -> float:
        return float(self.Q[self.ids.index(u), self.ids.index(v)])


def _step_rewards(g: _Indexed, R: RewardMatrix, cfg: QLearningConfig) -> np.ndarray:
    step = R.values.copy()
    if cfg.goal_reward_includes_cost:
        gi = g.index[R.goal]
        into = g.dst == gi
        step[g.src[into], gi] = GOAL_REWARD - g.w[into]
    return step


def q_learning(graph, source: str, goal: str, cfg: QLearningConfig = QLearningConfig()):
    """Train a Q-table toward ``goal`` and extract the greedy route from ``source``.

    Episodes start from uniformly random non-goal stations and pick
    epsilon-greedy among outgoing edges; epsilon decays once per episode.

    Returns:
        ``(QTable, ShortestPathResult)``. The result has an empty path when
        ``goal`` is unreachable from ``source``.

    Raises:
        PolicyNotConvergedError: if the greedy walk revisits a station.
    """
    t0 = time.perf_counter()
    g = _Indexed(graph)
    s, gi = _resolve(graph, g, source), _resolve(graph, g, goal)
    R = build_reward_matrix(graph, goal)
    step_reward = _step_rewards(g, R, cfg)
    connected = np.zeros((g.n, g.n), dtype=bool)
    connected[g.src, g.dst] = True
    Q = np.zeros((g.n, g.n))
    visits = np.zeros((g.n, g.n), dtype=np.int64)
    table = QTable(g.ids, Q, visits, goal)
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.epsilon
    dead_end = DISCONNECTED_REWARD
    if g.n > 1 and s != gi:
        for _ in range(cfg.episodes):
            start = int(rng.integers(g.n - 1))
            start += start >= gi
            uniforms = rng.random((cfg.max_steps, 2))
            _, reached = kernels.q_episode(Q, visits, g.indptr, g.dst, connected, step_reward, gi, start,
                                           eps, cfg.learning_rate, cfg.discount, uniforms,
                                           cfg.allow_invalid_actions, dead_end)
            table.goal_hits += int(reached)
            eps = max(cfg.epsilon_min, eps * cfg.epsilon_decay)
        table.episodes = cfg.episodes
    if gi not in g.reachable_from(s):
        path = []
    else:
        path = extract_path(table, graph, source, goal)
    elapsed = time.perf_counter() - t0
    return table, _path_result(graph, path, source, goal, "q-learning", elapsed, table.episodes)


def extract_path(q: QTable, graph, source: str, goal: str) -> list:
    """Follow argmax-Q over existing edges from ``source``; ties go to the lowest id.

    Raises:
        PolicyNotConvergedError: on a revisit or a dead end before ``goal``.
    """
    index = {k: i for i, k in enumerate(q.ids)}
    graph.require(source)
    graph.require(goal)
    path = [source]
    seen = {source}
    node = source
    while node != goal:
        options = [v for v, _ in graph.neighbors(node)]
        if not options:
            raise PolicyNotConvergedError(path)
        row = q.Q[index[node]]
        best = options[0]
        for v in options[1:]:
            if row[index[v]] > row[index[best]] or (row[index[v]] == row[index[best]] and v < best):
                best = v
        path.append(best)
        if best in seen:
            raise PolicyNotConvergedError(path)
        seen.add(best)
        node = best
    return path


def _path_result(graph, path, source, target, engine, elapsed, work):
    dist, prev = {}, {}
    total = 0.0
    if path:
        dist[path[0]] = 0.0
        for u, v in zip(path, path[1:]):
            total += dict(graph.neighbors(u))[v]
            dist[v] = total
            prev[v] = u
    return ShortestPathResult(source, target, list(path), total if path else math.inf, dist, prev,
                              engine, elapsed, work)


ENGINES = {
    "dijkstra": dijkstra,
    "bellman-ford": bellman_ford,
    "q-learning": lambda graph, s, t, cfg=QLearningConfig(): q_learning(graph, s, t, cfg)[1],
}


def route(graph, source: str, target: str, engine: str = "dijkstra",
          q_config: Optional[QLearningConfig] = None) -> ShortestPathResult:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {sorted(ENGINES)}")
    if engine == "q-learning":
        return q_learning(graph, source, target, q_config or QLearningConfig())[1]
    return ENGINES[engine](graph, source, target)
