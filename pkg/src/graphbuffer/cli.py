"""Command-line entry point.

Subcommands: generate | pretrain | tune | eval | analyze | sweep. Every flag
can instead come from a flat ``key = value`` config file (flag beats file
beats default), and each run writes its resolved configuration into the
output directory next to its artifacts. Reports are JSON/CSV plus rendered
PNG figures.

Heavy imports happen inside the command functions so the GB_THREADS cap can
take effect before the numeric stack loads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Bad flag, config-file entry, or missing input path."""


def _apply_thread_cap() -> None:
    cap = os.environ.get("GB_THREADS")
    if not cap:
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


# ---------------------------------------------------------------------------
# option plumbing


def _parse_bool(text: str) -> bool:
    val = text.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def read_config_file(path: Path) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


_CONVERTERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "floats": _parse_float_list,
}


def resolve_options(args: argparse.Namespace, spec: dict[str, tuple[str, object]]) -> dict:
    """Merge flag > config file > default for every declared option."""
    file_entries: dict[str, str] = {}
    if getattr(args, "config", None):
        file_entries = read_config_file(Path(args.config))
    unknown = set(file_entries) - set(spec)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = {}
    for name, (kind, default) in spec.items():
        flag_val = getattr(args, name, None)
        if flag_val is not None:
            resolved[name] = flag_val
        elif name in file_entries:
            try:
                resolved[name] = _CONVERTERS[kind](file_entries[name])
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(
                    f"config key {name!r}: cannot parse {file_entries[name]!r} as {kind}"
                ) from None
        else:
            resolved[name] = default
    missing = [k for k, v in resolved.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    return resolved


_REQUIRED = object()


def _echo_config(out_dir: Path, subcommand: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"subcommand": subcommand}
    doc.update({k: v for k, v in sorted(resolved.items())})
    (out_dir / "resolved_config.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2, default=str) + "\n"
    )


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _require_dir(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _history_artifacts(out: Path, history) -> None:
    from . import figures

    (out / "history.jsonl").write_text(history.to_jsonl())
    records = [r.to_dict() for r in history.records]
    monitored = any("test_robust" in r for r in records)
    header = ["epoch", "train_loss", "bias_term", "robust_term", "val_acc"]
    if monitored:
        header += ["test_bias", "test_robust"]
    rows = [[r.get(k, "") if r.get(k) is not None else "" for k in header] for r in records]
    _write_csv(out / "curves.csv", header, rows)
    figures.render_training_curves(records, out / "curves.png")


# ---------------------------------------------------------------------------
# subcommands


_SBM_KEYS = {
    "n": int, "classes": int, "p_in": float, "p_out": float,
    "feature_dim": int, "separation": float, "noise": float,
}


def _parse_sbm_spec(text: str) -> dict:
    out = {}
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "=" not in token:
            raise ConfigError(f"sbm spec token {token!r} is not key=value")
        key, _, value = token.partition("=")
        key = key.strip()
        if key not in _SBM_KEYS:
            raise ConfigError(f"unknown sbm key {key!r}")
        try:
            out[key] = _SBM_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"sbm key {key!r}: bad value {value!r}") from None
    return out


GENERATE_OPTS = {
    "sbm": ("str", _REQUIRED),
    "out": ("str", _REQUIRED),
    "seed": ("int", 0),
    "name": ("str", "sbm"),
}


def cmd_generate(args) -> int:
    from . import graph as G

    resolved = resolve_options(args, GENERATE_OPTS)
    spec = _parse_sbm_spec(resolved["sbm"])
    try:
        cfg = G.SbmConfig(
            n=spec.get("n", 1000),
            classes=spec.get("classes", 4),
            p_in=spec.get("p_in", 0.01),
            p_out=spec.get("p_out", 0.001),
            feature_dim=spec.get("feature_dim", 16),
            separation=spec.get("separation", 1.3),
            noise=spec.get("noise", 1.0),
            seed=resolved["seed"],
            name=resolved["name"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(resolved["out"])
    bundle = G.generate_sbm(cfg)
    G.save_dataset(bundle, out)
    _echo_config(out, "generate", resolved)
    print(f"wrote {bundle.graph.num_nodes} nodes / {bundle.graph.num_edges} edges to {out}")
    return EXIT_OK


_MODEL_OPT_SPEC = {
    "arch": ("str", "gcn"),
    "layers": ("int", 2),
    "hidden": ("int", 64),
    "activation": ("str", "relu"),
    "scheme": ("str", "symmetric"),
    "self_loops": ("bool", True),
    "gin_hidden": ("int", 64),
}

PRETRAIN_OPTS = {
    "data": ("str", _REQUIRED),
    "out": ("str", _REQUIRED),
    **_MODEL_OPT_SPEC,
    "dropout": ("float", 0.5),
    "lr": ("float", 1e-2),
    "weight_decay": ("float", 5e-4),
    "max_epochs": ("int", 2000),
    "patience": ("int", 100),
    "seed": ("int", 0),
    "split": ("str", "split_0"),
    "with_drop_edge": ("bool", False),
    "drop_edge": ("float", 0.5),
}


def _model_config(resolved, bundle):
    from . import models as M
    from .graph import NormScheme

    scheme_map = {"regular": "regular", "random_walk": "random_walk", "rw": "random_walk",
                  "symmetric": "symmetric", "sym": "symmetric"}
    if resolved["scheme"] not in scheme_map:
        raise ConfigError(f"unknown scheme {resolved['scheme']!r}")
    d0, c = bundle.num_features, bundle.num_classes
    layers = resolved["layers"]
    if resolved["arch"] == "sgc":
        dims = (d0,) * layers + (c,)
    else:
        dims = (d0,) + (resolved["hidden"],) * (layers - 1) + (c,)
    try:
        return M.ModelConfig(
            arch=resolved["arch"],
            dims=dims,
            activation=resolved["activation"],
            dropout=resolved["dropout"],
            scheme=NormScheme(scheme_map[resolved["scheme"]], resolved["self_loops"]),
            gin_hidden=resolved["gin_hidden"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_pretrain(args) -> int:
    from . import checkpoint as C
    from . import graph as G
    from . import training as TR

    resolved = resolve_options(args, PRETRAIN_OPTS)
    data_dir = _require_dir(resolved["data"], "dataset directory")
    bundle = G.load_dataset(data_dir)
    cfg = _model_config(resolved, bundle)
    try:
        tc = TR.TrainConfig(
            lr=resolved["lr"], weight_decay=resolved["weight_decay"],
            max_epochs=resolved["max_epochs"], patience=resolved["patience"],
            seed=resolved["seed"], drop_edge=resolved["drop_edge"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(resolved["out"])
    _echo_config(out, "pretrain", resolved)
    params, history = TR.pretrain(
        cfg, tc, bundle, split_key=resolved["split"],
        with_drop_edge=resolved["with_drop_edge"],
    )
    C.save_model(params, out / "model.ckpt")
    _history_artifacts(out, history)
    print(f"best epoch {history.best_epoch}, validation accuracy {history.best_val_acc:.4f}")
    return EXIT_OK


TUNE_OPTS = {
    "base": ("str", _REQUIRED),
    "data": ("str", _REQUIRED),
    "out": ("str", _REQUIRED),
    "variant": ("str", "full"),
    "lam": ("float", 1.0),
    "drop_edge": ("float", 0.5),
    "dropout": ("float", 0.0),
    "lr": ("float", 1e-2),
    "weight_decay": ("float", 0.0),
    "max_epochs": ("int", 2000),
    "patience": ("int", 100),
    "seed": ("int", 0),
    "split": ("str", "split_0"),
    "objective": ("str", "rc"),
    "stop_clean_gradient": ("bool", False),
    "monitor": ("bool", False),
    "monitor_draws": ("int", 10),
}


def cmd_tune(args) -> int:
    from . import buffer as B
    from . import checkpoint as C
    from . import graph as G
    from . import training as TR

    resolved = resolve_options(args, TUNE_OPTS)
    base_path = _require_file(resolved["base"], "base checkpoint")
    data_dir = _require_dir(resolved["data"], "dataset directory")
    bundle = G.load_dataset(data_dir)
    base = C.load_model(base_path)
    if resolved["variant"] not in B.VARIANTS:
        raise ConfigError(f"unknown buffer variant {resolved['variant']!r}")
    try:
        tc = TR.TrainConfig(
            lr=resolved["lr"], weight_decay=resolved["weight_decay"],
            max_epochs=resolved["max_epochs"], patience=resolved["patience"],
            seed=resolved["seed"], drop_edge=resolved["drop_edge"],
            lam=resolved["lam"], dropout=resolved["dropout"],
            objective=resolved["objective"],
            stop_clean_gradient=resolved["stop_clean_gradient"],
            monitor=resolved["monitor"], monitor_draws=resolved["monitor_draws"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(resolved["out"])
    _echo_config(out, "tune", resolved)
    bm = B.attach(base, resolved["variant"])
    buffers, history = TR.tune_buffer(bm, tc, bundle, split_key=resolved["split"])
    C.save_buffer(buffers, bm.base_hash, out / "buffer.ckpt")
    _history_artifacts(out, history)
    print(f"best epoch {history.best_epoch}, validation accuracy {history.best_val_acc:.4f}")
    return EXIT_OK


EVAL_OPTS = {
    "model": ("str", _REQUIRED),
    "base": ("str", None),
    "data": ("str", _REQUIRED),
    "out": ("str", _REQUIRED),
    "split": ("str", "split_0"),
    "removal": ("floats", None),
    "removal_seeds": ("int", 5),
    "seed": ("int", 0),
    "tag": ("str", None),
}


def cmd_eval(args) -> int:
    from . import buffer as B
    from . import checkpoint as C
    from . import evaluation as E
    from . import figures
    from . import graph as G
    from . import models as M

    resolved = resolve_options(args, EVAL_OPTS)
    model_path = _require_file(resolved["model"], "model checkpoint")
    data_dir = _require_dir(resolved["data"], "dataset directory")
    bundle = G.load_dataset(data_dir)
    kind = C.peek_kind(model_path)
    if kind == "buffer":
        if not resolved["base"]:
            raise ConfigError("evaluating a buffer checkpoint requires --base")
        base = C.load_model(_require_file(resolved["base"], "base checkpoint"))
        bm = C.load_buffer(model_path, base)
        predict = lambda sub: B.buffered_predict(bm, bundle.features, sub)
    else:
        params = C.load_model(model_path)
        cfg = params.cfg
        predict = lambda sub: M.predict(
            params, bundle.features, M.propagation_matrix(cfg, sub)
        )
    tag = resolved["tag"] or Path(model_path).stem
    out = Path(resolved["out"])
    _echo_config(out, "eval", resolved)

    split = bundle.split(resolved["split"])
    removal = None
    if resolved["removal"]:
        removal = E.edge_removal_sweep(
            predict, bundle.graph, bundle.labels, split["test"],
            ratios=resolved["removal"],
            seeds=[resolved["seed"] * 1000 + k for k in range(resolved["removal_seeds"])],
        )
    report = E.compute_metrics(
        predict(bundle.graph), bundle.graph, bundle.labels, split["test"],
        model_tag=tag, seed=resolved["seed"], split_id=resolved["split"],
        removal=removal,
    )
    E.emit_report([report], out / "report.json")
    if removal:
        header = ["ratio", "mean", "std"] + [f"seed_{k}" for k in range(resolved["removal_seeds"])]
        rows = [[r, cell["mean"], cell["std"], *cell["per_seed"]]
                for r, cell in sorted(removal.items(), reverse=True)]
        _write_csv(out / "removal.csv", header, rows)
        figures.render_removal_curve({tag: removal}, out / "removal.png")
    print(f"overall {report.overall:.4f} | head {report.head:.4f} | tail {report.tail:.4f}")
    return EXIT_OK


ANALYZE_OPTS = {
    "out": ("str", _REQUIRED),
    "trials": ("int", 1000),
    "p": ("float", 0.5),
    "nodes": ("int", 32),
    "density": ("float", 0.2),
    "seed": ("int", 0),
    "witnesses": ("int", 50),
    "condition_trials": ("int", 1000),
}


def cmd_analyze(args) -> int:
    import numpy as np

    from . import analysis as A
    from . import buffer as B
    from . import figures
    from . import graph as G

    resolved = resolve_options(args, ANALYZE_OPTS)
    out = Path(resolved["out"])
    _echo_config(out, "analyze", resolved)
    rng = np.random.default_rng(resolved["seed"])
    n, density, p, trials = (resolved["nodes"], resolved["density"],
                             resolved["p"], resolved["trials"])

    def sample_graph():
        dense = np.triu(rng.random((n, n)) < density, k=1)
        return G.Graph(n, np.argwhere(dense))

    bound_rows = []
    combos = [
        (A.GCN_NORMALIZED, G.SYMMETRIC),
        (A.GCN_NORMALIZED, G.RANDOM_WALK),
        (A.GCN_REGULAR, None),
        (A.SAGE, None),
        (A.GIN, None),
    ]
    for arch, scheme in combos:
        kw = {"scheme": scheme} if scheme else {}
        rep = A.verify_bound(arch, sample_graph(), p, trials, rng, **kw)
        row = rep.to_dict()
        row["scheme"] = scheme
        bound_rows.append(row)
    for activation in ("relu", "sigmoid"):
        rep = A.verify_mlp_cascade(3, trials, rng, activation)
        row = rep.to_dict()
        row["scheme"] = activation
        bound_rows.append(row)

    witness_found = 0
    for _ in range(resolved["witnesses"]):
        g = sample_graph()
        if g.num_edges == 0:
            continue
        w = rng.normal(size=(4, 3))
        try:
            A.theorem_no_constant_witness(w, g, rng)
            witness_found += 1
        except A.SearchExhaustedError:
            pass

    conditions = []
    for variant in B.VARIANTS:
        rep = A.check_buffer_conditions(variant, resolved["condition_trials"], rng)
        conditions.append(rep.to_dict())

    doc = {
        "bounds": bound_rows,
        "witness": {"attempted": resolved["witnesses"], "found": witness_found},
        "buffer_conditions": conditions,
    }
    _write_json(out / "bounds.json", doc)
    _write_csv(
        out / "bounds.csv",
        ["arch", "scheme", "trials", "c1", "c2_max", "max_ratio", "violations"],
        [[r["arch"], r["scheme"] or "", r["trials"], r["c1"], r["c2_max"],
          r["max_ratio"], r["violations"]] for r in bound_rows],
    )
    figures.render_bound_ratios(bound_rows, out / "bounds.png")

    print(f"{'bound':<28} {'trials':>6} {'max ratio':>10} {'violations':>10}")
    for r in bound_rows:
        tag = r["arch"] + (f"/{r['scheme']}" if r["scheme"] else "")
        print(f"{tag:<28} {r['trials']:>6} {r['max_ratio']:>10.4f} {r['violations']:>10}")
    print(f"{'witness search':<28} {resolved['witnesses']:>6} "
          f"{'found:':>10} {witness_found:>10}")
    for c in conditions:
        print(f"{'buffer ' + c['variant']:<28} {c['trials']:>6} "
              f"{'C1/C2:':>10} {c['c1_holds']:>5}/{c['c2_strict_holds']}")
    return EXIT_OK


SWEEP_OPTS = {
    "base": ("str", _REQUIRED),
    "data": ("str", _REQUIRED),
    "out": ("str", _REQUIRED),
    "space": ("str", "lam=1,0.5,0.1;drop_edge=0.2,0.5,0.7,1.0;dropout=0,0.2,0.5,0.7"),
    "runs": ("int", 5),
    "seed": ("int", 0),
    "split": ("str", "split_0"),
    "lr": ("float", 1e-2),
    "max_epochs": ("int", 2000),
    "patience": ("int", 100),
    "objective": ("str", "rc"),
    "variant": ("str", "full"),
}

_SWEEPABLE = {"lam", "drop_edge", "dropout", "lr", "weight_decay"}


def _parse_space(text: str) -> dict[str, list[float]]:
    space: dict[str, list[float]] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"space term {part!r} is not key=v1,v2,...")
        key, _, values = part.partition("=")
        key = key.strip()
        if key not in _SWEEPABLE:
            raise ConfigError(f"cannot sweep {key!r}; choose from {sorted(_SWEEPABLE)}")
        space[key] = _parse_float_list(values)
        if not space[key]:
            raise ConfigError(f"space term {part!r} lists no values")
    if not space:
        raise ConfigError("empty sweep space")
    return space


def cmd_sweep(args) -> int:
    from dataclasses import replace

    from . import buffer as B
    from . import checkpoint as C
    from . import graph as G
    from . import training as TR

    resolved = resolve_options(args, SWEEP_OPTS)
    base_path = _require_file(resolved["base"], "base checkpoint")
    data_dir = _require_dir(resolved["data"], "dataset directory")
    space = _parse_space(resolved["space"])
    bundle = G.load_dataset(data_dir)
    base = C.load_model(base_path)
    out = Path(resolved["out"])
    _echo_config(out, "sweep", resolved)
    try:
        base_tc = TR.TrainConfig(
            lr=resolved["lr"], max_epochs=resolved["max_epochs"],
            patience=resolved["patience"], objective=resolved["objective"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def run(point: dict, seed: int) -> float:
        tc = replace(base_tc, seed=seed, **point)
        bm = B.attach(base, resolved["variant"])
        _, history = TR.tune_buffer(bm, tc, bundle, split_key=resolved["split"])
        return history.best_val_acc

    entries = TR.grid_sweep(run, space, seeds=resolved["runs"], master_seed=resolved["seed"])
    _write_json(out / "sweep.json", {"entries": [e.to_dict() for e in entries]})
    keys = list(space.keys())
    _write_csv(
        out / "sweep.csv",
        ["rank", "index", *keys, "mean_val_acc", *[f"run_{i}" for i in range(resolved["runs"])]],
        [[rank, e.index, *[e.point[k] for k in keys], e.mean_val_acc, *e.val_accs]
         for rank, e in enumerate(entries)],
    )
    top = entries[0]
    print(f"best configuration: {top.point} (mean validation accuracy {top.mean_val_acc:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_options(sub: argparse.ArgumentParser, spec: dict[str, tuple[str, object]]):
    typemap = {"int": int, "float": float, "str": str, "floats": _parse_float_list}
    for name, (kind, _default) in spec.items():
        flag = "--" + name.replace("_", "-")
        if name == "lam":
            sub.add_argument("--lambda", dest="lam", type=float, default=None)
            continue
        if kind == "bool":
            group = sub.add_mutually_exclusive_group()
            group.add_argument(flag, dest=name, action="store_true", default=None)
            group.add_argument("--no-" + name.replace("_", "-"), dest=name,
                               action="store_false", default=None)
        else:
            sub.add_argument(flag, dest=name, type=typemap[kind], default=None)
    sub.add_argument("--config", type=str, default=None,
                     help="flat key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphbuffer",
        description="Edge-robust GNN training with aggregation buffers",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, fn, spec in (
        ("generate", cmd_generate, GENERATE_OPTS),
        ("pretrain", cmd_pretrain, PRETRAIN_OPTS),
        ("tune", cmd_tune, TUNE_OPTS),
        ("eval", cmd_eval, EVAL_OPTS),
        ("analyze", cmd_analyze, ANALYZE_OPTS),
        ("sweep", cmd_sweep, SWEEP_OPTS),
    ):
        sub = subs.add_parser(name)
        _add_options(sub, spec)
        sub.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps to exit codes
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
