#!/usr/bin/env python3
"""Smoke test for the trace_rl_py extension module.

Build and stage the module first:

    cargo build -p trace-rl-py --release
    cp target/release/libtrace_rl_py.so python/trace_rl_py.so

then run `python3 python/smoke_test.py`.
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import trace_rl_py as trl


def check(name, ok, detail=""):
    status = "ok" if ok else "FAIL"
    print(f"[smoke] {name}: {status} {detail}")
    if not ok:
        sys.exit(1)


def main():
    # Seeded environments replay exactly.
    a = trl.Gridworld(n_steps=2, seed=7)
    b = trl.Gridworld(n_steps=2, seed=7)
    sa, sb = a.reset(), b.reset()
    check("gridworld seeded reset", sa == sb and len(sa) == 4, f"state={sa}")
    check("gridworld action count", a.action_count == 16)

    ns, r, done = a.step(3)  # (Up, Right)
    check("gridworld step reward", abs(r - (-0.1)) < 1e-12 or done, f"r={r} done={done}")
    check("decode", trl.Gridworld.decode(3, 63) == ["Right", "Right", "Right"])
    check("net displacement", trl.Gridworld.net_displacement(3, 2) == (-1, 2))

    cp = trl.CartPole(force_levels=21, seed=3)
    s0 = cp.reset()
    check("cartpole reset", len(s0) == 4 and all(abs(v) <= 0.05 for v in s0))
    check("cartpole forces", cp.force_for(0) == -10.0 and cp.force_for(20) == 10.0)

    # Tiny offline embedding fit: the loss must drop and same-displacement
    # combos must end closer together than different-displacement ones.
    env_json = json.dumps({"gridworld": {"n_steps": 2}})
    rows, losses = trl.fit_action_embeddings(env_json, embed_dim=2, samples=2000, epochs=10, seed=1)
    check("embedding fit shape", len(rows) == 16 and len(rows[0]) == 2)
    check("embedding loss drops", losses[-1] < 0.5 * losses[0], f"{losses[0]:.3f} -> {losses[-1]:.3f}")
    labels = [trl.Gridworld.net_displacement(2, i) for i in range(16)]
    flat = [100 * (dx + 10) + (dy + 10) for dx, dy in labels]
    intra, inter, ratio = trl.cluster_quality(rows, flat)
    check("cluster ratio sane", 0.0 <= ratio < 1.0, f"ratio={ratio:.3f}")

    check("nearest action", trl.nearest_action([[0.0, 0.0], [1.0, 0.0]], [0.9, 0.1]) == 1)

    comps, proj, ratios = trl.pca_project([[i, i] for i in range(6)], k=2)
    check("pca collinear", abs(ratios[0] - 1.0) < 1e-9 and ratios[1] < 1e-9)

    check("episodes to threshold", trl.episodes_to_threshold([1.0, 2.0, 9.5], 9.0, window=1) == 3)

    mean, lo, hi = trl.bootstrap_band([[0.0, 0.0], [10.0, 10.0]], resamples=2000, seed=0)
    check("bootstrap midpoint", abs(mean[0] - 5.0) < 0.5 and lo[0] >= -1e-9 and hi[0] <= 10.0 + 1e-9)

    # Drive a miniature experiment end to end through the runner.
    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "env": {"gridworld": {"n_steps": 1}},
            "algorithm": "trace",
            "hyperparameters": {
                "ac_hiddens": [8, 8],
                "transition_hiddens": [8],
                "batch_size": 16,
                "warmup_steps": 50,
                "buffer_capacity": 1000,
            },
            "seeds": [1],
            "budget": 10,
            "output_dir": tmp,
        }
        trl.train(json.dumps(config))
        files = sorted(os.listdir(tmp))
        check(
            "train outputs",
            files == ["checkpoint_seed1.bin", "curve_seed1.csv", "manifest.json"],
            str(files),
        )

    print("[smoke] all checks passed")


if __name__ == "__main__":
    main()
