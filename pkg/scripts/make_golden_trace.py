#!/usr/bin/env python3
"""Straight-line 3-step trace of the funneled momentum update, by hand.

Computes the update on the 2-D quadratic L(w) = 0.5*(4*w1^2 + w2^2) from
w0 = (1, 1) with an identity inner optimizer, eta=0.1, mu=0.9, beta=0.9,
gamma_p = gamma_s = 0.01, unnormalized updates, a single parameter group.
No library imports: every line is the update rule written out explicitly,
so the output is an independent oracle for the real implementation.

Writes tests/golden/funnel_3step.json. Run once; the fixture is committed.
"""

import json
import math
import os

ETA = 0.1
MU = 0.9
BETA = 0.9
GAMMA_P = 0.01
GAMMA_S = 0.01


def gradient(w):
    # L(w) = 0.5*(4*w1^2 + w2^2)
    return [4.0 * w[0], 1.0 * w[1]]


def main():
    w = [1.0, 1.0]
    m = [0.0, 0.0]
    nu = [0.0, 0.0]
    p = [1.0, 1.0]
    s = 1.0

    records = []
    for t in range(3):
        g = gradient(w)
        g_tilde = list(g)  # identity inner optimizer

        # bias-corrected EMA of past pre-conditioned gradients; zero at t=0
        if t == 0:
            m_hat = [0.0, 0.0]
        else:
            m_hat = [mi / (1.0 - BETA**t) for mi in m]

        p = [p[i] * math.exp(GAMMA_P * g[i] * m_hat[i]) for i in range(2)]
        s = s * math.exp(GAMMA_S * (g[0] * nu[0] + g[1] * nu[1]))
        m = [BETA * m[i] + (1.0 - BETA) * g_tilde[i] for i in range(2)]
        nu = [MU * nu[i] + ETA * p[i] * g_tilde[i] for i in range(2)]
        w = [w[i] - s * nu[i] for i in range(2)]

        records.append(
            {
                "t": t + 1,
                "p": list(p),
                "s": s,
                "m": list(m),
                "nu": list(nu),
                "w": list(w),
            }
        )

    fixture = {
        "problem": "0.5*(4*w1^2 + w2^2), grad = (4*w1, w2)",
        "w0": [1.0, 1.0],
        "eta": ETA,
        "mu": MU,
        "beta": BETA,
        "gamma_p": GAMMA_P,
        "gamma_s": GAMMA_S,
        "normalized": False,
        "steps": records,
    }

    out_dir = os.path.join(os.path.dirname(__file__), "..", "tests", "golden")
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "funnel_3step.json")
    with open(out_path, "w") as fh:
        json.dump(fixture, fh, indent=2)
    print("wrote", os.path.normpath(out_path))
    for rec in records:
        print(rec)


if __name__ == "__main__":
    main()
