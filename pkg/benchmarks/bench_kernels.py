"""Time the generation kernels under the numba and pure-Python backends.

Each backend runs in its own interpreter (the switch is read at import), on
identical seeds, and the script checks that both produce the same sentences.

Usage::

    python benchmarks/bench_kernels.py --N 128 --samples 20
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, sys, time
from csrlm._accel import BACKEND
from csrlm.engine import SamplingProtocol, generate_sample
from csrlm.model import ModelParams

cfg = json.loads(sys.argv[1])
p = ModelParams(K=cfg["K"], q=cfg["q"], t=cfg["t"], epsilon=cfg["epsilon"], kT=cfg["kT"])
proto = SamplingProtocol(target_N=cfg["N"], seed=cfg["seed"])
generate_sample(p, SamplingProtocol(target_N=4, seed=0), 0)  # compile outside the clock
best = float("inf")
for _ in range(cfg["repeat"]):
    h = hashlib.sha256()
    t0 = time.perf_counter()
    for i in range(cfg["samples"]):
        h.update(generate_sample(p, proto, i).symbols.tobytes())
    best = min(best, time.perf_counter() - t0)
print(json.dumps({"backend": BACKEND, "seconds": best, "digest": h.hexdigest()}))
"""


def run_backend(disable: bool, cfg: dict) -> dict:
    env = dict(os.environ, CSRLM_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, json.dumps(cfg)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=20)
    ap.add_argument("--q", type=float, default=0.01)
    ap.add_argument("--t", type=float, default=0.0)
    ap.add_argument("--epsilon", type=float, default=0.0)
    ap.add_argument("--kT", type=float, default=0.24)
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    cfg = vars(args)
    fast = run_backend(False, cfg)
    slow = run_backend(True, cfg)
    per = lambda r: 1e3 * r["seconds"] / args.samples  # noqa: E731
    print(f"K={args.K} q={args.q} t={args.t} kT={args.kT} N={args.N} samples={args.samples}")
    print(f"{'backend':<8} {'total s':>10} {'ms/sample':>10}")
    for r in (fast, slow):
        print(f"{r['backend']:<8} {r['seconds']:>10.4f} {per(r):>10.3f}")
    if fast["backend"] == "numba":
        print(f"speedup  {slow['seconds'] / fast['seconds']:.1f}x")
    same = fast["digest"] == slow["digest"]
    print(f"identical output: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
