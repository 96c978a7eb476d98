"""Time the numba and numpy paths of each hot kernel on the bundled fixture.

    python benchmarks/bench_backends.py --repeat 5
"""

import argparse
import logging

from saferoute import bench, pipeline


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--source", default="116th")
    ap.add_argument("--target", default="8th")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR)

    graph = pipeline.load_graph()
    incidents = pipeline.load_incidents()
    rows = bench.compare_backends(graph, incidents, args.source, args.target, args.repeat)
    print(f"{'kernel':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['kernel']:28s} {r['numba_seconds']:10.5f} {r['numpy_seconds']:10.5f} {r['speedup']:8.1f}")

    engine_rows, agree = bench.bench_engines(graph, args.source, args.target, args.repeat)
    print()
    for r in engine_rows:
        print(f"{r['engine']:14s} {r['median_seconds'] * 1000:9.2f} ms  cost {r['total_cost']:.4f}")
    print("paths agree" if agree else "ENGINES DISAGREE")


if __name__ == "__main__":
    main()
