"""How interventional error moves with message-passing depth when the data
were generated with three hops.

Too few layers cannot see the whole neighbourhood that shaped a node's
features; extra layers mostly add variance.  Defaults are small so the
script finishes in about a minute; use ``--seeds 5 --n 2000`` for the
full study.
"""
import argparse

from netfair.cli import parse_int_list, sensitivity_errors


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--layers", default="1..5")
    parser.add_argument("--seeds", type=int, default=2)
    parser.add_argument("--n", type=int, default=800)
    args = parser.parse_args()
    layers = parse_int_list(args.layers)

    errors = sensitivity_errors("s3", layers, list(range(args.seeds)), {}, n=args.n, hops=3)
    best = errors.mean(axis=0).min()
    for j, L in enumerate(layers):
        mean, std = errors[:, j].mean(), errors[:, j].std()
        bar = "#" * int(round(40 * best / mean))
        print(f"L={L}  error {mean:.3f} +- {std:.3f}  {bar}")


if __name__ == "__main__":
    main()
