"""Run every acceptance config into runs/acceptance/<name>/, plot, and list failed checks."""
import argparse
import sys
import time
from pathlib import Path

from idslab.experiments import load_config, run_experiment
from idslab.experiments.plots import emit_plots

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "acceptance")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--only", nargs="*", help="config stems to run, e.g. c1_free_dos")
    args = ap.parse_args()

    failed = 0
    for path in sorted((ROOT / "configs" / "acceptance").glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        t0 = time.perf_counter()
        res = run_experiment(load_config(path), args.out / path.stem, args.threads)
        bad = [k for k, ok in res.checks.items() if not ok]
        failed += bool(bad)
        print(f"{path.stem:22s} {time.perf_counter() - t0:7.1f}s  {'ok' if not bad else 'FAILED: ' + ', '.join(bad)}")
        plottable = [o for o in res.outputs if o.suffix == ".csv" and not o.name.startswith(("holder", "expansion"))]
        plottable += [o for o in res.outputs if o.suffix == ".json" and o.name.startswith("holder")]
        if plottable:
            emit_plots(plottable, res.out_dir / "plots")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
