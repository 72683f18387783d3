"""SVG panels from result files. Output bytes are deterministic."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

PANELS = ("ids", "mass-delta", "mass-lambda", "self-energy")


class EmptyResultError(ValueError):
    pass


class MissingColumnError(KeyError):
    def __init__(self, column: str, path: Path):
        self.column = column
        super().__init__(f"{path.name}: missing column {column!r}")


def _require(t: dict, needed, path: Path) -> dict:
    for c in needed:
        if c not in t:
            raise MissingColumnError(c, path)
    return t


def load_table(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a result CSV, or the (lam, delta) cells of a holder JSON report."""
    path = Path(path)
    if path.suffix == ".json":
        rep = json.loads(path.read_text())
        for c in ("lambdas", "deltas", "masses"):
            if c not in rep:
                raise MissingColumnError(c, path)
        lam, d = np.meshgrid(rep["lambdas"], rep["deltas"], indexing="ij")
        if lam.size == 0:
            raise EmptyResultError(f"{path} has no cells")
        t = {"lam": lam.ravel(), "delta": d.ravel(), "mass": np.asarray(rep["masses"], dtype=float).ravel()}
        if "wegner" in rep:
            t["wegner_bound"] = np.asarray(rep["wegner"], dtype=float).ravel()
        return t
    _, cols, rows = read_csv(path)
    if not rows:
        raise EmptyResultError(f"{path} has no rows")
    return {c: np.array([r[c] for r in rows]) for c in cols}


def _save(fig, path: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": "idslab", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_ids(t: dict, out: Path, path: Path) -> Path:
    if "N0" in t:
        _require(t, ("E", "N0"), path)
        groups = {"free": (t["E"], t["N0"])}
    else:
        _require(t, ("lam", "E", "N"), path)
        groups = {f"lam={lam:g}": (t["E"][t["lam"] == lam], t["N"][t["lam"] == lam]) for lam in np.unique(t["lam"])}
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (E, N) in groups.items():
        ax.plot(E, N, label=label)
    ax.set(xlabel="E", ylabel="N(E)", ylim=(-0.02, 1.02))
    ax.legend(fontsize=7)
    return _save(fig, out)


def plot_mass_delta(t: dict, out: Path, path: Path) -> Path:
    """Log-log mass against delta per lam, annotated with the fitted slope."""
    _require(t, ("lam", "delta", "mass"), path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for lam in np.unique(t["lam"]):
        sel = (t["lam"] == lam) & (t["mass"] > 0)
        d, m = t["delta"][sel], t["mass"][sel]
        if d.size == 0:
            continue
        line = ax.loglog(d, m, "o-", ms=3, label=f"lam={lam:g}")[0]
        if np.unique(d).size >= 2:
            slope = np.polyfit(np.log(d), np.log(m), 1)[0]
            ax.annotate(f"slope {slope:.3f}", (d[-1], m[-1]), fontsize=7, color=line.get_color())
    ax.set(xlabel="delta", ylabel="window mass")
    ax.legend(fontsize=7)
    return _save(fig, out)


def plot_mass_lambda(t: dict, out: Path, path: Path) -> Path:
    """Mass against lam at each delta with the Wegner bound overlaid."""
    _require(t, ("lam", "delta", "mass", "wegner_bound"), path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for d in np.unique(t["delta"]):
        sel = t["delta"] == d
        lam, m, w = t["lam"][sel], t["mass"][sel], t["wegner_bound"][sel]
        line = ax.loglog(lam, m, "o-", ms=3, label=f"delta={d:g}")[0]
        ax.loglog(lam, w, "--", color=line.get_color(), lw=0.8)
    ax.set(xlabel="lam", ylabel="window mass (dashed: Wegner bound)")
    ax.legend(fontsize=7)
    return _save(fig, out)


def plot_self_energy(t: dict, out: Path, path: Path) -> Path:
    _require(t, ("k", "im_gamma"), path)
    order = np.argsort(t["k"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t["k"][order], t["im_gamma"][order])
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set(xlabel="k", ylabel="Im Gamma(z; k)")
    return _save(fig, out)


_NEEDED = {
    "mass-delta": ("lam", "delta", "mass"),
    "mass-lambda": ("lam", "delta", "mass", "wegner_bound"),
    "self-energy": ("k", "im_gamma"),
}

_PLOTTERS = {
    "ids": plot_ids,
    "mass-delta": plot_mass_delta,
    "mass-lambda": plot_mass_lambda,
    "self-energy": plot_self_energy,
}


def _default_panels(path: Path) -> list[str]:
    n = path.name
    if n.startswith(("free_dos", "ids")):
        return ["ids"]
    if n.startswith("wegner") or (n.startswith("holder") and path.suffix == ".json"):
        return ["mass-delta", "mass-lambda"]
    if n.startswith(("window", "cauchy")):
        return ["mass-delta"]
    if n.startswith("self_energy_"):
        return ["self-energy"]
    return []


def emit_plots(results: list[str | Path], out_dir: str | Path, panels: list[str] | None = None) -> list[Path]:
    """Render one SVG per (result file, panel); nothing is written on error."""
    jobs = []
    for r in map(Path, results):
        t = load_table(r)
        for p in panels or _default_panels(r):
            if p not in _PLOTTERS:
                raise ValueError(f"unknown panel {p!r}; choose from {PANELS}")
            need = _NEEDED.get(p) or (("E", "N0") if "N0" in t else ("lam", "E", "N"))
            _require(t, need, r)
            jobs.append((p, r, t))
    if not jobs:
        raise EmptyResultError("no plottable results")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [_PLOTTERS[p](t, out / f"{r.stem}_{p}.svg", r) for p, r, t in jobs]
