"""Why the fitted loss-to-accuracy curve gets an anchor at (loss 0, accuracy 1).

Small models only show the high-loss tail of the sigmoid, so the upper half
of the curve is unconstrained. Here we fit the tail with and without the
anchor and compare what each fit claims at zero loss and at the edge of the data.

    python3 demos/helper_point.py
"""

import math

import numpy as np

from scaledecide.scaling import SigmoidParams, fit_acc_curve


def main():
    a, k, L0 = 0.7, -4.0, 2.0
    truth = SigmoidParams(a, 1.0 - a / (1.0 + math.exp(k * L0)), k, L0)
    losses = np.linspace(2.2, 3.5, 30)
    rng = np.random.default_rng(0)
    y = truth(losses) + rng.normal(0, 0.01, losses.size)

    plain = fit_acc_curve(losses, y).params
    anchored = fit_acc_curve(losses, y, helpers=True).params
    print(f"observed losses {losses[0]:.1f}..{losses[-1]:.1f}, noise std 0.01\n")
    print(f"{'loss':>6}{'truth':>9}{'no anchor':>12}{'anchored':>11}")
    for L in (3.5, 2.2, 1.5, 1.0, 0.5, 0.0):
        print(f"{L:>6.1f}{float(truth(L)):>9.3f}{float(plain(L)):>12.3f}{float(anchored(L)):>11.3f}")


if __name__ == "__main__":
    main()
