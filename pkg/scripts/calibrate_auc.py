"""Raw-data Hotelling AUC as one background or noise parameter varies.

Used to pick background settings whose undenoised AUC leaves room for
denoising to move it (roughly 0.65 to 0.85).

    python scripts/calibrate_auc.py configs/binary_texture.json background.spectral_exponent 1.5 2.0 2.5
"""
import argparse
import dataclasses

from taskpls.evaluation import evaluate_pipeline
from taskpls.harness import ExperimentConfig
from taskpls.objects import make_ensemble
from taskpls.observer import estimate_hotelling


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("field", help="dotted name, e.g. background.field_std or noise.std")
    p.add_argument("values", type=float, nargs="+")
    p.add_argument("--seeds", type=int, default=3)
    args = p.parse_args()

    cfg = ExperimentConfig.load(args.config)
    group, name = args.field.split(".")
    for value in args.values:
        part = dataclasses.replace(getattr(cfg, group), **{name: value})
        c = dataclasses.replace(cfg, **{group: part})
        aucs = []
        for seed in range(args.seeds):
            train = make_ensemble(c.background, c.signal, c.noise, c.n_train_absent, c.n_train_present, 2 * seed)
            test = make_ensemble(c.background, c.signal, c.noise, c.n_test_absent, c.n_test_present, 2 * seed + 1)
            aucs.append(evaluate_pipeline(test, estimate_hotelling(train, c.shrinkage)).auc)
        print(f"{args.field}={value:g}  auc " + " ".join(f"{a:.3f}" for a in aucs))


if __name__ == "__main__":
    main()
