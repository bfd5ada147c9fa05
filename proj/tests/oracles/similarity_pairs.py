"""Brute-force clipped-distance similarity for random rollout pairs.

Writes ../fixtures/similarity_pairs.json. Positions are float32 values so the
C++ side sees exactly the same numbers.
"""
import json
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "similarity_pairs.json"


def brute(a, b, alpha, bins, window):
    T = min(len(a), len(b))
    kind, n = window
    if kind == "entire":
        frames = range(T)
    elif kind == "first":
        frames = range(min(n, T))
    else:
        frames = range(T - min(n, T), T)
    qs = []
    for t in frames:
        for o in range(len(a[0])):
            (xa, ya), (xb, yb) = a[t][o], b[t][o]
            d = math.sqrt((xa - xb) ** 2 + (ya - yb) ** 2)
            qs.append(1.0 - min(d, alpha) / alpha)
    v = math.fsum(qs) / len(qs)
    # nearest integer, halves away from zero (v >= 0)
    x = v * (bins - 1)
    k = math.floor(x)
    if x - k >= 0.5:
        k += 1
    return v, k


def main():
    rng = np.random.default_rng(20261016)
    cases = []
    for i in range(50):
        objects = int(rng.integers(1, 5))
        la, lb = int(rng.integers(1, 70)), int(rng.integers(1, 70))
        a = rng.random((la, objects, 2), dtype=np.float32)
        # b drifts from a so values spread over [0, 1]
        base = a[:lb] if lb <= la else np.concatenate([a, rng.random((lb - la, objects, 2), dtype=np.float32)])
        noise = (rng.normal(size=(lb, objects, 2)) * rng.choice([0.01, 0.1, 0.4])).astype(np.float32)
        b = np.clip(base + noise, 0, 1).astype(np.float32)
        alpha = [math.sqrt(2.0), 0.25, float(rng.uniform(0.05, 1.5))][i % 3]
        bins = [20, 2, 5, 10, 50][i % 5]
        window = [("entire", 0), ("first", int(rng.integers(1, 40))), ("last", int(rng.integers(1, 40)))][i % 3]
        v, k = brute(a.tolist(), b.tolist(), alpha, bins, window)
        cases.append({
            "objects": objects,
            "a": [float(x) for x in a.reshape(-1)],
            "b": [float(x) for x in b.reshape(-1)],
            "alpha": alpha,
            "bins": bins,
            "window": "entire" if window[0] == "entire" else f"{window[0]}:{window[1]}",
            "v": v,
            "bin": k,
        })
    OUT.write_text(json.dumps({"cases": cases}, indent=None))
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
