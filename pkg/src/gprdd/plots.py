"""Static SVG figures, byte-stable across runs."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "gprdd", "svg.fonttype": "path", "path.simplify": False}


def _to_svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def fit_svg(title: str, boundary: float, curves: dict, x=None, y=None) -> str:
    """Arm mean curves (solid) with pointwise 95% bands (dashed).

    ``curves`` maps an arm label to ``(grid, mean, lower, upper)``.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        if x is not None:
            ax.scatter(x, y, s=6, color="0.6", linewidths=0)
        for (label, (grid, mean, lo, hi)), color in zip(curves.items(), ("tab:blue", "tab:red")):
            ax.plot(grid, mean, color=color, lw=1.5, label=label)
            ax.plot(grid, lo, color=color, lw=1, ls="--")
            ax.plot(grid, hi, color=color, lw=1, ls="--")
        ax.axvline(boundary, color="k", lw=0.8, ls=":")
        ax.set_title(title)
        ax.set_xlabel("running variable")
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        return _to_svg(fig)


def profile_svg(title: str, centers, curvature, ratio) -> str:
    """|second derivative| and the MLE ratio on twin axes."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(centers, curvature, "o-", color="tab:blue", ms=3, label="|second derivative|")
        ax.set_xlabel("window center")
        ax.set_ylabel("|second derivative|", color="tab:blue")
        ax2 = ax.twinx()
        ax2.plot(centers, ratio, "s-", color="tab:orange", ms=3, label="sigma_GP / lengthscale")
        ax2.set_ylabel("sigma_GP / lengthscale", color="tab:orange")
        ax.set_title(title)
        fig.tight_layout()
        return _to_svg(fig)
