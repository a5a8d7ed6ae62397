"""Line charts over the CSV traces (SVG via matplotlib)."""

import os

from .experiment import read_csv

CHARTS = (("dist_to_limit", True), ("norm_Z", True), ("loss", False), ("train_accuracy", False))


def write_svg(series, column, path, log=False):
    """``series`` is a list of (label, table) with tables as returned by read_csv."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, table in series:
        t, y = table["t"], table[column]
        if log:
            keep = y > 0
            t, y = t[keep], y[keep]
        ax.plot(t, y, label=label, linewidth=1.2)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(column)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_svgs(out_dir, csv_names, labels, charts=CHARTS):
    series = [(lab, read_csv(os.path.join(out_dir, name))) for name, lab in zip(csv_names, labels)]
    paths = []
    for column, log in charts:
        path = os.path.join(out_dir, f"{column}.svg")
        write_svg(series, column, path, log)
        paths.append(path)
    return paths
