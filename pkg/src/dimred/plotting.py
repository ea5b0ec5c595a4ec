"""Log-log line plots rendered from the emitted CSV (SVG, Agg backend)."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Optional

log = logging.getLogger(__name__)

# (x column, y column, group column) per model
PLOTS = {
    "toy": [("a", "worst_diff_ratio", None)],
    "bo": [("h", "diff", "k")],
    "layer": [("eps", "residual", "k")],
    "shell": [("alpha", "shifted_residual", "j"), ("alpha", "harmonic_scaled", "j")],
    "nsrobin": [("eps", "diff_norm", "z")],
}


def _read(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _series(rows, x, y, group):
    out: dict = {}
    for r in rows:
        if not r.get(x) or not r.get(y):
            continue
        key = r[group] if group and group != "z" else (f"{r['z_re']}{float(r['z_im']):+g}i" if group else "")
        xv, yv = float(r[x]), abs(float(r[y]))
        if xv > 0 and yv > 0:
            out.setdefault(key, []).append((xv, yv))
    return {k: sorted(v) for k, v in out.items()}


def render(model: str, csv_text: str, out_dir, stem: str = "sweep") -> list[Path]:
    """Write one SVG per configured (x, y) pair.  Returns the files written;
    any failure is logged and yields an empty list."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        rows = _read(csv_text)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for x, y, group in PLOTS.get(model, []):
            series = _series(rows, x, y, group)
            if not series:
                continue
            fig, ax = plt.subplots(figsize=(5, 4))
            loglog = model != "toy"
            for key, pts in series.items():
                xs, ys = zip(*pts)
                label = f"{group} = {key}" if group else None
                if loglog:
                    ax.loglog(xs, ys, "o-", label=label)
                else:
                    ax.plot(xs, ys, ".", label=label)
            ax.set_xlabel(x)
            ax.set_ylabel(f"|{y}|" if loglog else y)
            if group:
                ax.legend(fontsize="small")
            ax.grid(True, which="both", alpha=0.3)
            fig.tight_layout()
            path = out / f"{stem}_{y}.svg"
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
        return written
    except Exception as exc:  # plotting never fails a run
        log.warning("plotting failed: %s", exc)
        return []


def render_file(model: str, csv_path, out_dir: Optional[str] = None) -> list[Path]:
    p = Path(csv_path)
    return render(model, p.read_text(encoding="utf-8"), out_dir or p.parent, p.stem)
