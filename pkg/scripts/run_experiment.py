"""Run one full experiment (generate, template, sweep, render) and print the table.

    python scripts/run_experiment.py configs/mvn_lumpy.json --jobs 4
"""
import argparse
import logging

from taskpls.harness import ExperimentConfig, load_results, run_all
from taskpls.harness.config import full_scale


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--full-scale", action="store_true",
                   help="64x64, 190k+190k training images, 10k iterations (needs ~12 GB)")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.full_scale:
        cfg = full_scale(cfg)
    run_dir = run_all(cfg, jobs=args.jobs)

    print(f"{'alpha':>6} {'beta':>6} {'gamma':>6} {'auc':>7} {'se':>7} {'rmse':>8}")
    for r in load_results(run_dir / "sweep" / "results.csv"):
        label = ["raw" if r[k] is None else f"{r[k]:g}" for k in ("alpha", "beta", "gamma")]
        print(f"{label[0]:>6} {label[1]:>6} {label[2]:>6} {r['auc']:7.4f} {r['auc_std_err']:7.4f} {r['mean_rmse']:8.5f}")
    print(run_dir)


if __name__ == "__main__":
    main()
