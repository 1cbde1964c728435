"""Synthetic stand-in for the three-formulation experiment grid.

Generates a manifest, trains one linear embedding per formulation, evaluates
all of them plus the untrained initialisation on held-out identities, and
writes the comparison table and prevention ledger under ``--out-dir``.

    python scripts/run_pipeline.py --out-dir runs/pipeline
"""
import argparse
import sys
from pathlib import Path

from tripperm.cli import main as cli


def run(argv):
    code = cli([str(a) for a in argv])
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/pipeline")
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--kind", choices=["linear", "two_layer"], default="linear")
    ap.add_argument("--hidden", type=int, default=None)
    args = ap.parse_args()

    out = Path(args.out_dir)
    manifest = out / "synthetic.csv"
    run(["synth", "--p-shared", 80, "--extra-b", 40, "--dim", 16, "--shift-norm", 4.0,
         "--noise", 0.5, "--seed", args.seed, "--out", manifest])
    compare = ["compare", "--manifest", manifest, "--n-train", 40, "--epochs", args.epochs,
               "--lr", 0.01, "--tau", 1.0, "--kind", args.kind, "--out-dir", out / "grid"]
    if args.hidden:
        compare += ["--hidden", args.hidden]
    run(compare)
    print(f"outputs in {out / 'grid'}")


if __name__ == "__main__":
    main()
