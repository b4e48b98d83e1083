"""Compare the constant-velocity baseline with a briefly trained recurrent model.

Trains on the first tracks of the bundled synthetic sample and scores both
predictors on the rest. With a few dozen epochs the recurrent model is a toy;
the point is the workflow, not the numbers.

    python demos/prediction_metrics.py --epochs 40
"""

import argparse
import time

import numpy as np

from ecas.pipeline import bundled_dataset_text
from ecas.prediction import SrLstmModel, fad, mad, predict_constant_velocity, predict_srlstm, train_desk_scale
from ecas.scenario import load_trajectory_dataset, split_tracks


def score(preds, pairs):
    return (float(np.mean([mad(p, t) for p, (_, t) in zip(preds, pairs)])),
            float(np.mean([fad(p, t) for p, (_, t) in zip(preds, pairs)])))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--train-tracks", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    tracks = load_trajectory_dataset(bundled_dataset_text())
    train, held_out = tracks[:args.train_tracks], tracks[args.train_tracks:]
    pairs, _ = split_tracks(held_out)
    print(f"{len(train)} training tracks, {len(pairs)} held-out tracks (8 observed, 12 predicted frames)")

    cv = [predict_constant_velocity(h, 12) for h, _ in pairs]
    print("constant velocity  MAD %.3f m  FAD %.3f m" % score(cv, pairs))

    t0 = time.perf_counter()
    model, trace = train_desk_scale(SrLstmModel.initialize(seed=args.seed), train, epochs=args.epochs)
    print(f"trained {args.epochs} epochs in {time.perf_counter() - t0:.1f} s; "
          f"loss {trace[0]:.3f} -> {trace[-1]:.3f} m^2")

    # each history is predicted on its own here, so no neighbour refinement takes place
    rec = [predict_srlstm(model, [h], 12)[0] for h, _ in pairs]
    print("recurrent model    MAD %.3f m  FAD %.3f m" % score(rec, pairs))


if __name__ == "__main__":
    main()
