#!/usr/bin/env python3
"""Generate the bundled demonstration CSVs under data/.

Two desk-scale handwriting-style shapes (7 demos each, ending at the
origin) plus two small-scale groups used by the multi-attractor
experiment. Deterministic; rerunning reproduces the files bit-for-bit.
"""
import os
import numpy as np

ROOT = os.path.join(os.path.dirname(__file__), "..", "data")
N = 50
T_END = 3.0


def write(dirname, name, pts):
    d = os.path.join(ROOT, dirname)
    os.makedirs(d, exist_ok=True)
    t = np.linspace(0.0, T_END, N)
    with open(os.path.join(d, name + ".csv"), "w", newline="\n") as f:
        f.write("t,z1,z2\n")
        for ti, p in zip(t, pts):
            f.write("%.17g,%.17g,%.17g\n" % (ti, p[0], p[1]))


def jitter(rng, pts):
    s = 1.0 + 0.10 * rng.uniform(-1, 1)
    a = 0.12 * rng.uniform(-1, 1)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    out = (pts * s) @ R.T
    return out - out[-1]  # pin the endpoint at the origin exactly


def sshape(tau):
    x = 0.8 * (1 - tau)
    y = 0.45 * np.sin(2 * np.pi * (1 - tau)) * (1 - tau) ** 0.5
    return np.stack([x, y], axis=1)


def jshape(tau):
    x = -0.55 * (1 - tau) + 0.25 * np.sin(np.pi * (1 - tau))
    y = 0.85 * (1 - tau) ** 2
    return np.stack([x, y], axis=1)


def arc(tau, ang0, ang1, r0):
    ang = ang0 + (ang1 - ang0) * tau
    r = r0 * (1 - tau)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)


def main():
    tau = np.linspace(0.0, 1.0, N)
    rng = np.random.default_rng(20240811)
    for i in range(7):
        write("sshape", "demo%d" % i, jitter(rng, sshape(tau)))
    for i in range(7):
        write("jshape", "demo%d" % i, jitter(rng, jshape(tau)))
    # small-scale groups approaching the origin from opposite sides
    for i in range(7):
        write("multi_a", "demo%d" % i,
              jitter(rng, arc(tau, 0.3 + 0.1 * i, 1.3, 0.12)))
    for i in range(7):
        write("multi_b", "demo%d" % i,
              jitter(rng, arc(tau, np.pi + 0.3 + 0.1 * i, np.pi + 1.3, 0.12)))
    print("wrote data/")


if __name__ == "__main__":
    main()
