"""Random graphs and brute-force oracles shared by the test modules."""

import itertools
import math


from saferoute.graph import WeightedDigraph


def node_names(n):
    return [f"n{i:02d}" for i in range(n)]


def random_graph(rng, n, p=0.35, low=0, high=10, integer=True):
    names = node_names(n)
    edges = []
    for u, v in itertools.permutations(range(n), 2):
        if rng.random() < p:
            w = int(rng.integers(low, high + 1)) if integer else float(rng.uniform(low, high))
            edges.append((names[u], names[v], w))
    return WeightedDigraph(names, edges)


def random_connected_pair(rng, graph):
    """Pick (source, target) with target reachable and distinct, or None."""
    ids = graph.node_ids()
    for _ in range(50):
        s, t = rng.choice(len(ids), size=2, replace=False)
        if ids[t] in reachable(graph, ids[s]):
            return ids[s], ids[t]
    return None


def reachable(graph, s):
    seen, todo = {s}, [s]
    while todo:
        u = todo.pop()
        for v, _ in graph.neighbors(u):
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def all_simple_paths(graph, s, t):
    """Every simple path s -> t, by depth-first enumeration."""
    out = []

    def walk(node, path, seen):
        if node == t:
            out.append(list(path))
            return
        for v, _ in graph.neighbors(node):
            if v not in seen:
                seen.add(v)
                path.append(v)
                walk(v, path, seen)
                path.pop()
                seen.remove(v)

    walk(s, [s], {s})
    return out


def brute_force_distances(graph, s):
    """Min cost over all simple paths from s to every node (inf if unreachable)."""
    dist = {}
    for t in graph.node_ids():
        if t == s:
            dist[t] = 0.0
            continue
        costs = [path_weight(graph, p) for p in all_simple_paths(graph, s, t)]
        dist[t] = min(costs) if costs else math.inf
    return dist


def brute_force_path(graph, s, t):
    """Canonical optimal path: least cost, then fewest hops, then smallest
    predecessor id working back from t (matches the engines' tie-break)."""
    paths = all_simple_paths(graph, s, t)
    if not paths:
        return []
    best_cost = min(path_weight(graph, p) for p in paths)
    best = [p for p in paths if path_weight(graph, p) == best_cost]
    fewest = min(len(p) for p in best)
    best = [p for p in best if len(p) == fewest]
    # compare reversed paths lexicographically: last predecessor first
    return min(best, key=lambda p: list(reversed(p)))


def path_weight(graph, path):
    return sum(graph.weight(u, v) for u, v in zip(path, path[1:]))
