"""Train every attention-order and stage-removal configuration on the toy corpus.

    python scripts/run_ablation.py --epochs 40
"""

import argparse

from mganet.experiments import ABLATIONS, TOY_SEED, prepare_toy, run_ablation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--corpus-seed", type=int, default=TOY_SEED)
    ap.add_argument("--only", nargs="*", choices=sorted(ABLATIONS), help="subset of configurations")
    args = ap.parse_args()

    print("config\tholdout_f1\tholdout_bce\tfinal_loss")
    run_ablation(prepare_toy(seed=args.corpus_seed), args.epochs, names=args.only, log=print)


if __name__ == "__main__":
    main()
