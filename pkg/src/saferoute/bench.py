"""Timing helpers: engine comparison on a graph, numba vs numpy kernel paths."""

from __future__ import annotations

import statistics
import time

import numpy as np

from . import kernels, recurrent, routing
from ._accel import HAS_NUMBA


def bench_engines(graph, source, target, repeat=10, q_config=routing.QLearningConfig()):
    """Run each engine ``repeat`` times; returns (rows, agree).

    Each row: engine, median seconds, path, cost. The first call of every
    engine is a warm-up (JIT compilation) and is not timed.
    """
    rows = []
    for engine in ("dijkstra", "bellman-ford", "q-learning"):
        routing.route(graph, source, target, engine, q_config)
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            res = routing.route(graph, source, target, engine, q_config)
            times.append(time.perf_counter() - t0)
        rows.append({"engine": engine, "median_seconds": statistics.median(times), "runs": repeat,
                     "path": res.path, "total_cost": res.total_cost})
    ref = rows[0]
    agree = all(r["path"] == ref["path"] and abs(r["total_cost"] - ref["total_cost"]) <= 1e-9 for r in rows)
    return rows, agree


def _timeit(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def compare_backends(graph, incidents, source, target, repeat=3, seed=0):
    """Median seconds of each hot kernel under the numba and numpy paths."""
    if not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    g = routing._Indexed(graph)
    s = g.index[source]
    rng = np.random.default_rng(seed)

    lat, lon, _ = incidents.arrays()
    st = [graph.stations[k] for k in g.ids]
    st_lat = np.array([x.lat for x in st])
    st_lon = np.array([x.lon for x in st])
    buckets = rng.integers(0, 24, size=len(lat))

    # a 60-episode slice of Q-learning with frozen random draws
    n = g.n
    goal = g.index[target]
    R = routing.build_reward_matrix(graph, target).values
    connected = np.zeros((n, n), dtype=bool)
    connected[g.src, g.dst] = True
    draws = rng.random((60, 200, 2))
    starts = rng.integers(0, n, size=60)

    def q_run(fn):
        Q = np.zeros((n, n))
        visits = np.zeros((n, n), dtype=np.int64)
        for k in range(60):
            if starts[k] != goal:
                fn(Q, visits, g.indptr, g.dst, connected, R, goal, int(starts[k]), 0.3, 0.8, 0.999,
                   draws[k], False, -99.0)

    series = np.abs(np.sin(np.arange(19))) * 5
    inputs, targets = recurrent.sliding_windows(series / 5, 4)
    params = recurrent.init_params("lstm", recurrent.TrainConfig(hidden_size=8))

    cases = {
        "incident counting": (
            lambda: kernels.count_within_radius_numba(st_lat, st_lon, lat, lon, buckets, 24, 8.0),
            lambda: kernels.count_within_radius_numpy(st_lat, st_lon, lat, lon, buckets, 24, 8.0)),
        "bellman-ford relax": (
            lambda: kernels.bellman_ford_numba(g.n, g.src, g.dst, g.w, s),
            lambda: kernels.bellman_ford_numpy(g.n, g.src, g.dst, g.w, s)),
        "q-learning (60 episodes)": (
            lambda: q_run(kernels.q_episode_numba),
            lambda: q_run(kernels.q_episode_numpy)),
        "lstm training (200 epochs)": (
            lambda: kernels.descend_numba(True, params.flatten(), params.trainable_mask(), 8,
                                          inputs, targets, 0.05, 200, 5.0),
            lambda: recurrent._descend(params.copy(), inputs, targets, inputs.shape[0], 0.05, 200)),
    }
    out = []
    for name, (fast, slow) in cases.items():
        t_nb = _timeit(fast, repeat)
        t_np = _timeit(slow, repeat)
        out.append({"kernel": name, "numba_seconds": t_nb, "numpy_seconds": t_np,
                    "speedup": t_np / t_nb if t_nb > 0 else float("inf")})
    return out
