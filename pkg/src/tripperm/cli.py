"""Command-line front end: ``tripperm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data / protocol / dependency error.
Every subcommand accepts ``--config file.json`` whose keys mirror the flags
(dashes or underscores); explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .audit import audit, prevention_ledger
from .cmc import DEFAULT_RANKS, compare_curves, evaluate_cmc
from .dataset import held_out_dataset, load_manifest, save_manifest, split_prid_protocol, synth_dataset
from .embedding import init_model, load_model, save_model
from .errors import DependencyError, ReidError
from .trainer import TrainConfig, train
from .tripletgen import Formulation, enumerate_triplets, expected_count, save_triplets

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def random_shift(d: int, norm: float, seed: int) -> np.ndarray:
    """Direction drawn from its own stream so it does not perturb the dataset draw."""
    rng = np.random.default_rng([seed, 1])
    v = rng.standard_normal(d)
    return v * (norm / np.linalg.norm(v))


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


# --- argument groups ---------------------------------------------------------

def _add_split(p):
    p.add_argument("--manifest", help="input manifest CSV")
    p.add_argument("--n-train", type=int, default=100, help="training identities drawn from the shared ones")
    p.add_argument("--split-seed", type=int, default=0)


def _add_model(p):
    p.add_argument("--kind", choices=["linear", "two_layer"], default="linear")
    p.add_argument("--out-dim", type=int, default=16)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--init-scale", type=float, default=0.1)


def _add_train(p):
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="tripperm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic two-view manifest")
    p.add_argument("--p-shared", type=int)
    p.add_argument("--extra-a", type=int, default=0)
    p.add_argument("--extra-b", type=int, default=0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--view-shift", type=_floats, default=None, help="comma-separated shift; overrides --shift-norm")
    p.add_argument("--shift-norm", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("gen-triplets", help="split a manifest and export one formulation's triplets")
    _add_split(p)
    p.add_argument("--formulation", choices=[f.value for f in Formulation])
    p.add_argument("--out")

    p = sub.add_parser("train", help="train an embedding on one formulation")
    _add_split(p)
    p.add_argument("--formulation", choices=[f.value for f in Formulation])
    _add_model(p)
    _add_train(p)
    p.add_argument("--out-dir")

    p = sub.add_parser("audit", help="audit constraints and situations of a model")
    _add_split(p)
    p.add_argument("--model")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--held-out", action="store_true", help="audit held-out shared identities instead of training ones")
    p.add_argument("--formulation", choices=[f.value for f in Formulation], default=None,
                   help="also emit the prevention-ledger row for this formulation")
    p.add_argument("--out-dir")

    p = sub.add_parser("eval", help="CMC evaluation of a model on the probe/gallery split")
    _add_split(p)
    p.add_argument("--model")
    p.add_argument("--ranks", type=_ints, default=list(DEFAULT_RANKS))
    p.add_argument("--out-dir")

    p = sub.add_parser("compare", help="train all three formulations and compare against the untrained model")
    _add_split(p)
    _add_model(p)
    _add_train(p)
    p.add_argument("--ranks", type=_ints, default=list(DEFAULT_RANKS))
    p.add_argument("--out-dir")

    for action in sub.choices.values():
        action.add_argument("--config", default=None, help="JSON file with flag values")
    parser.subcommands = sub.choices
    return parser


REQUIRED = {
    "synth": ["p_shared", "out"],
    "gen-triplets": ["manifest", "formulation", "out"],
    "train": ["manifest", "formulation", "out_dir"],
    "audit": ["manifest", "model", "out_dir"],
    "eval": ["manifest", "model", "out_dir"],
    "compare": ["manifest", "out_dir"],
}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("tripperm: a subcommand is required (see --help)")
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DependencyError(f"config file not found: {path}")
        cfg = {k.replace("-", "_"): v for k, v in json.loads(path.read_text()).items()}
        sub = parser.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown keys in {path}: {sorted(unknown)}")
        for key in ("view_shift",):
            if isinstance(cfg.get(key), str):
                cfg[key] = _floats(cfg[key])
        for key in ("ranks",):
            if isinstance(cfg.get(key), str):
                cfg[key] = _ints(cfg[key])
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"tripperm {args.command}: missing " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


# --- helpers -------------------------------------------------------------------

def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise DependencyError(f"missing {what}: {p}")
    return p


def _out_dir(path):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo(args):
    return {"tripperm_version": __version__,
            **{k: v for k, v in sorted(vars(args).items()) if k != "config"}}


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load_split(args):
    ds = load_manifest(_require_file(args.manifest, "manifest"))
    train_ds, split = split_prid_protocol(ds, args.n_train, args.split_seed)
    return ds, train_ds, split


def _train_config(args):
    return TrainConfig(margin_tau=args.tau, batch_size=args.batch_size,
                       learning_rate=args.lr, epochs=args.epochs, seed=args.seed)


def _init(args, in_dim):
    return init_model(args.kind, in_dim, args.out_dim, hidden=args.hidden,
                      seed=args.init_seed, scale=args.init_scale)


def _check_model_dim(model, ds):
    if model.in_dim != ds.d:
        raise ReidError(f"model expects inputs of dimension {model.in_dim}, manifest has {ds.d}")


# --- subcommands -------------------------------------------------------------

def cmd_synth(args):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    shift = args.view_shift if args.view_shift is not None else random_shift(args.dim, args.shift_norm, args.seed)
    ds = synth_dataset(args.p_shared, extra_b=args.extra_b, d=args.dim, view_shift=shift,
                       noise_sigma=args.noise, seed=args.seed, extra_a=args.extra_a)
    save_manifest(ds, out)
    echo = _echo(args)
    echo["view_shift"] = [float(x) for x in shift]
    _write_json(out.with_name(out.name + ".config.json"), echo)
    n_a = len(ds.identities("A"))
    n_b = len(ds.identities("B"))
    print(f"wrote {out}: {len(ds)} samples, view A={n_a}, view B={n_b}, shared P={ds.P}, d={ds.d}")


def cmd_gen_triplets(args):
    _, train_ds, _ = _load_split(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    f = Formulation(args.formulation)
    tset = enumerate_triplets(train_ds, f)
    expected = expected_count(train_ds.P, f)
    save_triplets(tset, out)
    _write_json(out.with_name(out.name + ".config.json"), _echo(args))
    print(f"formulation {f.value}: P={train_ds.P} M={tset.M} expected={expected}")
    if tset.M != expected:
        raise ReidError(f"internal error: enumerated {tset.M} triplets, closed form gives {expected}")


def _run_training(args, train_ds, formulation, out_dir):
    report = train(train_ds, formulation, _init(args, train_ds.d), _train_config(args))
    save_model(report.final_model, out_dir / "model.txt")
    report.save_json(out_dir / "train_report.json", model_path="model.txt")
    return report


def cmd_train(args):
    _, train_ds, _ = _load_split(args)
    out_dir = _out_dir(args.out_dir)
    _write_json(out_dir / "config.json", _echo(args))
    f = Formulation(args.formulation)
    report = _run_training(args, train_ds, f, out_dir)
    last = report.loss_history[-1] if report.loss_history else float("nan")
    print(f"formulation {f.value}: M={report.n_triplets} epochs={report.config.epochs} "
          f"final loss={last:.6g} final violations={report.final_violation}")


def cmd_audit(args):
    model_path = _require_file(args.model, "model")
    ds, train_ds, split = _load_split(args)
    model = load_model(model_path)
    _check_model_dim(model, ds)
    out_dir = _out_dir(args.out_dir)
    _write_json(out_dir / "config.json", _echo(args))
    scope = "held_out" if args.held_out else "train"
    target = held_out_dataset(ds, split) if args.held_out else train_ds
    report = audit(model, target, args.tau, scope=scope)
    report.save_json(out_dir / "audit.json")
    flags = " ".join(f"{s.value}={'yes' if report.occurs(s) else 'no'}" for s in report.situations)
    print(f"audit ({scope}, P={report.P}, tau={args.tau:g}): {flags}")
    if args.formulation:
        ledger = prevention_ledger({Formulation(args.formulation): model}, train_ds, args.tau)
        (out_dir / "ledger.txt").write_text(ledger.render(), encoding="utf-8")
        _write_json(out_dir / "ledger.json", ledger.to_dict())
        print(ledger.render(), end="")


def cmd_eval(args):
    model_path = _require_file(args.model, "model")
    ds, _, split = _load_split(args)
    model = load_model(model_path)
    _check_model_dim(model, ds)
    out_dir = _out_dir(args.out_dir)
    _write_json(out_dir / "config.json", _echo(args))
    curve, results = evaluate_cmc(model, split, ranks=args.ranks)
    curve.save_csv(out_dir / "cmc.csv")
    _write_json(out_dir / "ranks.json", [asdict(r) for r in results])
    print(f"probes={curve.probe_count} gallery={curve.gallery_count} "
          + " ".join(f"r{r}={s:.3f}" for r, s in zip(curve.ranks, curve.scores)))


def cmd_compare(args):
    ds, train_ds, split = _load_split(args)
    out_dir = _out_dir(args.out_dir)
    _write_json(out_dir / "config.json", _echo(args))

    curves, models = {}, {}
    base = _init(args, ds.d)
    base_dir = _out_dir(out_dir / "untrained")
    save_model(base, base_dir / "model.txt")
    curves["untrained"], _ = evaluate_cmc(base, split, ranks=args.ranks)
    curves["untrained"].save_csv(base_dir / "cmc.csv")
    for f in Formulation:
        run_dir = _out_dir(out_dir / f"formulation_{f.value}")
        report = _run_training(args, train_ds, f, run_dir)
        models[f] = report.final_model
        label = f"set_{f.value}"
        curves[label], _ = evaluate_cmc(report.final_model, split, ranks=args.ranks)
        curves[label].save_csv(run_dir / "cmc.csv")
        print(f"formulation {f.value}: M={report.n_triplets} final violations={report.final_violation}")

    table = compare_curves(curves)
    table.save_json(out_dir / "comparison.json")
    (out_dir / "comparison.txt").write_text(table.render(), encoding="utf-8")
    ledger = prevention_ledger(models, train_ds, args.tau)
    (out_dir / "ledger.txt").write_text(ledger.render(), encoding="utf-8")
    _write_json(out_dir / "ledger.json", ledger.to_dict())
    print(table.render(), end="")
    print(ledger.render(), end="")


COMMANDS = {
    "synth": cmd_synth,
    "gen-triplets": cmd_gen_triplets,
    "train": cmd_train,
    "audit": cmd_audit,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ReidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        COMMANDS[args.command](args)
    except (ReidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
