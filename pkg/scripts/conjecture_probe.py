"""Max finite-difference density near E0 as lam shrinks: Laplacian vs the H0 = 0 control."""
import argparse
import json
from pathlib import Path

from idslab.experiments import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "conjecture")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    for name in ("conjecture_laplacian", "conjecture_zero_kernel"):
        res = run_experiment(load_config(ROOT / "configs" / "examples" / f"{name}.json"), args.out / name, args.threads)
        rep = json.loads((res.out_dir / "conjecture.json").read_text())
        print(name)
        for lam, m in zip(rep["lambdas"], rep["max_density"]):
            print(f"  lam={lam:<7g} max density {m:.4f}")
        print(f"  log-log slope against lam: {rep['log_slope_vs_lambda']:.3f}  (0 bounded, -1 Wegner-like)")


if __name__ == "__main__":
    main()
