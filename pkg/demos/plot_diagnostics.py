"""Plot a diagnostics JSON-lines file written by ``higgslab flow``.

    python demos/plot_diagnostics.py out/flow/diagnostics.jsonl [out.png]

Needs matplotlib (``pip install .[plot]``).
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from higgslab.io import read_diagnostics  # noqa: E402


def main(path, out="diagnostics.png"):
    recs = read_diagnostics(path)
    t = [r["t"] for r in recs]
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    axes[0].semilogy(t, [r["ymh"] for r in recs])
    axes[0].set_title("YMH energy")
    axes[1].semilogy(t, [max(r["theta_sup_residual"], 1e-300) for r in recs], label="sup|Theta|")
    axes[1].semilogy(t, [max(r["theta_l2_residual"], 1e-300) for r in recs], label="||Theta||")
    axes[1].legend()
    axes[1].set_title("residual")
    axes[2].semilogy(t, [max(r["dbar_drift"], 1e-300) for r in recs], label="dbar drift")
    axes[2].semilogy(t, [max(r["wedge_drift"], 1e-300) for r in recs], label="wedge drift")
    axes[2].legend()
    axes[2].set_title("constraints")
    for ax in axes:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(*sys.argv[1:3])
