"""Quick-look plots of scenario output directories written by harmonium-cli."""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt


def read(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    header, body = rows[0], [[float(c) for c in r] for r in rows[1:]]
    return header, list(zip(*body))


def plot_dir(out):
    out = Path(out)
    for path in sorted(out.glob("*.csv")):
        header, cols = read(path)
        if not cols:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        if header[:3] in (["x", "y", "density"], ["weight_1", "weight_2", "density"]):
            n = int(round(len(cols[0]) ** 0.5))
            z = [cols[2][i * n:(i + 1) * n] for i in range(n)]
            ax.imshow(list(zip(*z)), origin="lower", extent=(min(cols[0]), max(cols[0]), min(cols[1]), max(cols[1])))
        elif header[0].startswith("c") and len(header) == len(cols[0]):
            ax.imshow(list(zip(*cols)), cmap="RdBu_r")
        else:
            for name, col in zip(header[1:], cols[1:]):
                ax.plot(cols[0], col, label=name)
            if len(header) <= 8:
                ax.legend(fontsize=6)
        ax.set_title(path.stem)
        fig.tight_layout()
        fig.savefig(path.with_suffix(".png"), dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        plot_dir(arg)
