"""Regenerates the CSV/JSON fixtures under tests/fixtures."""
import json
import os
import sys

import numpy as np

out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")
os.makedirs(out, exist_ok=True)


def write_csv(name, header, rows):
    with open(os.path.join(out, name), "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")


def fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def latent(n, seed, mte, L=3, hetero=True):
    rng = np.random.default_rng(seed)
    common = rng.random(n)
    z = (rng.random((n, L)) * 0.6 + common[:, None] * 0.6 > 0.6).astype(int)
    p = 0.05 + 0.1 * z[:, 0] + 0.25 * z[:, 1] + 0.5 * z[:, 2]
    u = rng.random(n)
    d = (p >= u).astype(int)
    y0 = rng.normal(0.0, 1.0, n)
    gain = mte(u) + rng.normal(0.0, 0.5, n) if hetero else np.full(n, 2.0)
    y = y0 + d * gain
    return y, d, z


# Heterogeneous latent-index sample with a decreasing MTE.
y, d, z = latent(3000, 11, lambda u: 8.0 - 10.0 * u)
cluster = np.arange(3000) // 10
cell = np.arange(3000) % 2
rows = [[fmt(float(y[i])), str(d[i])] + [str(v) for v in z[i]] + [f"c{cluster[i]}", f"x{cell[i]}"]
        for i in range(3000)]
write_csv("hetero.csv", ["y", "d", "z1", "z2", "z3", "cluster", "cell"], rows)

# Homogeneous effect of 2.
y, d, z = latent(3000, 12, None, hetero=False)
rows = [[fmt(float(y[i])), str(d[i])] + [str(v) for v in z[i]] for i in range(3000)]
write_csv("homog.csv", ["y", "d", "z1", "z2", "z3"], rows)

# One instrument.
rows = [[fmt(float(y[i])), str(d[i]), str(z[i, 0])] for i in range(3000)]
write_csv("single.csv", ["y", "d", "z1"], rows)

write_csv("tiny.csv", ["y", "d", "z1", "z2"],
          [["1.5", "1", "1", "0"], ["0.2", "0", "0", "1"], ["2.0", "1", "1", "1"], ["-0.3", "0", "0", "0"]])
write_csv("bad_z.csv", ["y", "d", "z1", "z2"],
          [["1.5", "1", "1", "0"], ["0.2", "0", "2", "1"], ["2.0", "1", "1", "1"], ["-0.3", "0", "0", "0"]])
write_csv("tiny_cluster.csv", ["y", "d", "z1", "z2", "school"],
          [["1.5", "1", "1", "0", "A"], ["0.2", "0", "0", "1", "A"], ["2.0", "1", "1", "1", "B"],
           ["-0.3", "0", "0", "0", "B"], ["0.7", "1", "0", "1", "C"]])
write_csv("missing.csv", ["y", "d", "z1", "z2"],
          [["1.5", "1", "1", "0"], ["NA", "0", "0", "1"], ["2.0", "1", "1", "1"], ["-0.3", "0", "0", "0"],
           ["0.4", "1", "0", "1"], ["0.1", "0", "1", "0"], ["", "1", "1", "0"]])

with open(os.path.join(out, "weights_custom.csv"), "w") as f:
    f.write("weight\n0.2\n0.3\n0.5\n")
with open(os.path.join(out, "weights_off_simplex.csv"), "w") as f:
    f.write("weight\n0.6\n0.6\n-0.2\n")
with open(os.path.join(out, "schema.json"), "w") as f:
    json.dump({"y": "y", "d": "d", "z": ["z1", "z2", "z3"], "cluster": "cluster"}, f, indent=2)
with open(os.path.join(out, "policy_staircase.json"), "w") as f:
    json.dump({"type": "staircase", "lipschitz_multipliers": [1, 3],
               "gap": {"bounds": [-15, 15], "mtr": False, "mts": False}}, f, indent=2)
with open(os.path.join(out, "policy_degenerate.json"), "w") as f:
    json.dump({"type": "staircase", "group_probs": [0.5, 0.5], "approval_rates": [0.4, 0.4]}, f, indent=2)
with open(os.path.join(out, "star_spec.json"), "w") as f:
    json.dump({"dgp": "star", "shares": [0.3, 0.3, 0.4], "p": [0.5, 0.4, 0.6],
               "late": [2.0, 5.0, 9.0], "sigma2_y0": [4.0, 5.0, 6.0], "sigma2_tau": [1.0, 4.0, 9.0],
               "R": 100, "n": 600, "seed": 7}, f, indent=2)
with open(os.path.join(out, "latent_spec.json"), "w") as f:
    json.dump({"dgp": "latent", "L": 2, "joint": [0.3, 0.2, 0.2, 0.3], "p_of_z": [0.2, 0.5, 0.4, 0.8],
               "mte": {"breaks": [0, 0.3, 0.6, 1], "values": [6, 3, 0]}, "noise_sd": 1.0, "sigma2_y0": 1.0,
               "estimators": ["2sls", "egmm", "rt_ew", "rt_csw"], "R": 100, "n": 800, "seed": 3}, f, indent=2)
with open(os.path.join(out, "joint_counterexample.json"), "w") as f:
    json.dump({"L": 2, "prob": [1 / 3, 1 / 3, 1 / 3, 0.0]}, f, indent=2)
