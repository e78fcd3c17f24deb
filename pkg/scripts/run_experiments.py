"""Run every shipped config over a seed range and print one summary row per run."""
import argparse
from pathlib import Path

import numpy as np

from csg.harness import ExperimentConfig, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--configs", nargs="*", default=sorted(str(p) for p in (ROOT / "configs").glob("*.json")))
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    print(f"{'config':<28}{'seed':>5}{'avg U_P':>10}{'V*':>8}{'gap':>9}{'full CalErr':>13}{'secs':>7}")
    for path in args.configs:
        avgs = []
        for seed in range(args.seeds):
            cfg = ExperimentConfig.load(path)
            cfg.seed = seed
            s = run_experiment(cfg, Path(args.out) / Path(path).stem / f"seed-{seed}").summary
            avgs.append(s.avg_principal_utility)
            print(f"{Path(path).stem:<28}{seed:>5}{s.avg_principal_utility:>10.4f}{s.V_star:>8.4f}{s.gap:>9.4f}"
                  f"{s.full_window_cal_err:>13.2e}{s.wall_clock_s:>7.1f}")
        print(f"{Path(path).stem:<28}{'mean':>5}{np.mean(avgs):>10.4f}")


if __name__ == "__main__":
    main()
