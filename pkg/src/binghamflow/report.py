"""
Figure rendering for finished runs: read the delimited outputs from a
run directory and save matplotlib figures next to them.

Uses the Agg backend so runs render identically with or without a
display attached.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("{} is empty".format(path))
    header, body = rows[0], rows[1:]
    cols = {name: [] for name in header}
    for row in body:
        for name, val in zip(header, row):
            cols[name].append(val)
    return cols


def _floats(vals):
    return np.array([float(v) if v != "" else np.nan for v in vals])


def render_convergence(directory, out_name="convergence.png"):
    """
    Log-log decay of the error (when recorded) and of the estimator
    quantity against element count, with reference slopes. Returns the
    written path.
    """
    cols = _read_csv(os.path.join(directory, "convergence.csv"))
    noe = _floats(cols["noe"])
    err = _floats(cols["error"])
    est = _floats(cols["estimator"])

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(noe, est, "o-", ms=3.5, lw=1.0, color="#1f77b4",
              label="estimator quantity")
    if np.isfinite(err).any():
        ax.loglog(noe, err, "s-", ms=3.5, lw=1.0, color="#d62728",
                  label="velocity error")
    # slope guides anchored at the last point of the estimator curve
    n0, n1 = noe[0], noe[-1]
    for slope, ls in ((-0.5, "--"), (-1.0, ":")):
        ref = est[-1] * (noe / n1) ** slope
        ax.loglog(noe, ref, ls, lw=0.8, color="gray",
                  label="slope {:g}".format(slope))
    ax.set_xlabel("number of elements")
    ax.set_ylabel("quantity")
    ax.grid(True, which="both", alpha=0.25)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(directory, out_name)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_iterations(directory, out_name="iterations.png"):
    """
    Inner iteration counts and the regularisation exponent per outer
    step, read from the run log. Returns the written path.
    """
    cols = _read_csv(os.path.join(directory, "run_log.csv"))
    step = _floats(cols["step"])
    nit = _floats(cols["nit"])
    m = _floats(cols["m"])

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    ax1.plot(step, nit, "o-", ms=3, lw=1.0, color="#1f77b4")
    ax1.set_ylabel("inner iterations")
    ax1.grid(True, alpha=0.25)
    ax2.step(step, m, where="post", color="#d62728")
    ax2.set_ylabel("exponent m")
    ax2.set_xlabel("outer step")
    ax2.grid(True, alpha=0.25)
    fig.tight_layout()
    out = os.path.join(directory, out_name)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_all(directory):
    """Render every figure the directory's outputs support."""
    return [render_convergence(directory), render_iterations(directory)]
