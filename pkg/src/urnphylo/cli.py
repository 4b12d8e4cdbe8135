"""Command-line interface: ``urnphylo <command> [options]``.

Exit codes: 0 success, 1 a statistical or verification test failed (or an
urn trajectory went negative), 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import tomli_w

from . import __version__, harness, models, moments, spectral, urn, verify
from . import rng as _rng
from .tree import ClassificationUndefinedError, TreeError, classify_all_edges, to_newick

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class CliConfigError(Exception):
    pass


def _metadata(seed, config: dict) -> dict:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return {
        "tool": "urnphylo",
        "version": __version__,
        "rng_algorithm": _rng.RNG_ALGORITHM,
        "base_seed": seed,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
    }


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliConfigError(f"cannot read config {path}: {exc}") from exc
    return dict(data.get(section, data))


def _merge(file_cfg: dict, args: argparse.Namespace, keys: dict) -> dict:
    """Config file values overridden by any flag the user actually set."""
    out = dict(file_cfg)
    for flag, key in keys.items():
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


def _rooted_flag(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rooted", dest="rooted", action="store_true", default=None)
    g.add_argument("--unrooted", dest="rooted", action="store_false")


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    try:
        return np.array([[int(x) for x in r.replace(",", " ").split()] for r in rows],
                        dtype=np.int64)
    except ValueError as exc:
        raise CliConfigError(f"bad matrix {text!r}: {exc}") from exc


def _matrix_arg(args) -> tuple[np.ndarray, str | None]:
    if getattr(args, "matrix", None):
        text = args.matrix
        try:
            with open(text) as fh:
                text = fh.read()
        except OSError:
            pass
        return _parse_matrix(text), None
    model = args.model or "yhk"
    return urn.replacement_matrix(model), model


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    rooted = True if args.rooted is None else args.rooted
    kind = models.ProcessKind(args.model, rooted)
    seed_source = args.seed_tree or ("t2" if rooted else "star3")
    try:
        seed_tree = harness.resolve_tree(seed_source, rooted)
    except (TreeError, ValueError) as exc:
        raise CliConfigError(f"bad seed tree {seed_source!r}: {exc}") from exc
    if not rooted and args.n < 6 and not args.no_stats:
        raise CliConfigError(
            "edge statistics are undefined for unrooted trees with fewer than 6 leaves; "
            "pass --no-stats to emit the tree only"
        )
    config = {"model": args.model, "rooted": rooted, "n": args.n, "seed_tree": seed_source,
              "seed": args.seed, "count": args.count}
    meta = _metadata(args.seed, config)
    lines = []
    traces = []
    for r in range(args.count):
        try:
            tree, trace = models.generate(kind, seed_tree, args.n, args.seed, replicate_id=r,
                                          record=bool(args.trace))
        except TreeError as exc:
            raise CliConfigError(str(exc)) from exc
        rec = {"replicate": r, "newick": to_newick(tree)}
        if not args.no_stats:
            vec = classify_all_edges(tree)
            rec.update({"A": vec[0] // 2, "B": (vec[0] + vec[1]) // 2,
                        "alpha": list(vec[:4]), "beta": list(vec)})
        if trace is not None:
            traces.append(trace)
        lines.append(rec)
    if args.format == "json":
        _emit(json.dumps({"metadata": meta, "trees": lines}, indent=2), args.out)
    else:
        out = [f"# {json.dumps(meta, sort_keys=True)}"]
        for rec in lines:
            out.append(rec["newick"])
            if "A" in rec:
                out.append(f"# A={rec['A']} B={rec['B']} alpha={rec['alpha']} beta={rec['beta']}")
        _emit("\n".join(out) + "\n", args.out)
    if args.trace:
        with open(args.trace, "w") as fh:
            for t in traces:
                fh.write(t.to_jsonl())
    return EXIT_OK


SIM_KEYS = {"model": "model", "rooted": "rooted", "seed_tree": "seed_tree", "n": "n",
            "replicates": "replicates", "seed": "base_seed", "tests": "tests",
            "chunk": "chunk", "backend": "backend"}


def cmd_simulate(args) -> int:
    cfg = _merge(_load_config(args.config, "simulate"), args, SIM_KEYS)
    if isinstance(cfg.get("tests"), str):
        cfg["tests"] = [t for t in cfg["tests"].split(",") if t]
    try:
        config = harness.CampaignConfig.from_dict(cfg)
        config.validate()
    except (harness.ConfigError, TypeError) as exc:
        raise CliConfigError(str(exc)) from exc
    config.keep_samples = args.raw_csv is not None
    if args.dump_config:
        _emit(tomli_w.dumps({"simulate": config.to_dict()}), args.dump_config)
    result = harness.run_campaign(config)
    report = result.to_dict()
    report["metadata"] = {**_metadata(config.base_seed, config.to_dict()), **result.metadata}
    _emit(json.dumps(report, indent=2), args.out)
    if args.raw_csv:
        _emit(result.samples_csv(), args.raw_csv)
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_enumerate(args) -> int:
    rooted = True if args.rooted is None else args.rooted
    try:
        law = moments.enumerate_exact(args.model, rooted=rooted, seed_tree=args.seed_tree,
                                      n=args.n, cap=args.cap)
    except (moments.EnumerationTooLargeError, TreeError, KeyError, ValueError) as exc:
        raise CliConfigError(str(exc)) from exc
    if args.format == "csv":
        text = law.edges_csv() if args.edges else law.ab_csv()
        _emit(text, args.out)
        return EXIT_OK
    config = {"model": args.model, "rooted": rooted, "n": args.n, "seed_tree": args.seed_tree}
    out = {
        "metadata": _metadata(None, config),
        "model": args.model,
        "rooted": rooted,
        "n": args.n,
        "pmf": {f"({a},{b})": spectral.fraction_str(p) for (a, b), p in sorted(law.ab.items())},
    }
    if law.ab:
        m = law.moments()
        out["moments"] = {k: spectral.fraction_str(v) for k, v in m.as_dict().items()
                          if k not in ("n", "model")}
    if args.edges and law.edges is not None:
        out["edge_pmf"] = {",".join(map(str, v)): spectral.fraction_str(p)
                           for v, p in sorted(law.edges.items())}
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK


def cmd_spectral(args) -> int:
    R, model = _matrix_arg(args)
    try:
        sp = spectral.builtin_spectral(model) if model else spectral.diagonalize(R)
    except spectral.SpectralError as exc:
        raise CliConfigError(str(exc)) from exc
    rep = spectral.spectral_report(sp, model)
    rep["metadata"] = _metadata(None, {"model": model, "matrix": R.tolist()})
    _emit(json.dumps(rep, indent=2), args.out)
    return EXIT_OK


def cmd_urn_run(args) -> int:
    R, model = _matrix_arg(args)
    if args.initial:
        initial = [int(x) for x in args.initial.replace(",", " ").split()]
    elif model == "yhk":
        initial = [0, 2, 0, 0]
    elif model == "pda":
        initial = [0, 2, 0, 0, 1, 0]
    else:
        raise CliConfigError("--initial is required with --matrix")
    if len(initial) != R.shape[0]:
        raise CliConfigError("initial state and matrix dimensions differ")
    try:
        state = urn.UrnState(tuple(initial))
        traj = urn.run(state, R, args.steps, _rng.make_stream(args.seed, 0),
                       require_balanced=not args.allow_unbalanced)
    except urn.TenabilityError as exc:
        print(f"tenability violation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        raise CliConfigError(str(exc)) from exc
    meta = _metadata(args.seed, {"matrix": R.tolist(), "initial": initial, "steps": args.steps})
    _emit(f"# {json.dumps(meta, sort_keys=True)}\n" + traj.to_csv(), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run_suite(args.suite, args.scale, args.seed)
    rep = verify.report(checks, args.scale, args.seed)
    rep["metadata"] = _metadata(args.seed, {"suite": args.suite, "scale": args.scale})
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  [{c.suite}] {c.name}  {c.detail}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(rep, fh, indent=2)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urnphylo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"urnphylo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="grow random trees")
    g.add_argument("--model", choices=models.MODELS, default="yhk")
    _rooted_flag(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed-tree", help="built-in name, Newick string or Newick file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--format", choices=("newick", "json"), default="newick")
    g.add_argument("--no-stats", action="store_true")
    g.add_argument("--trace", help="write growth traces as JSON lines")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run a Monte-Carlo campaign")
    s.add_argument("--config", help="TOML file; flags override its values")
    s.add_argument("--model", choices=models.MODELS)
    _rooted_flag(s)
    s.add_argument("--seed-tree")
    s.add_argument("--n", type=int)
    s.add_argument("--replicates", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--tests", help="comma-separated subset of mean,cov,normality")
    s.add_argument("--chunk", type=int)
    s.add_argument("--backend", choices=("cython", "python"))
    s.add_argument("--out")
    s.add_argument("--raw-csv", help="also dump the raw per-replicate counts")
    s.add_argument("--dump-config", help="write the effective configuration as TOML")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("enumerate", help="exact law by enumeration")
    e.add_argument("--model", choices=models.MODELS, default="yhk")
    _rooted_flag(e)
    e.add_argument("--seed-tree")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--cap", type=int, default=12)
    e.add_argument("--edges", action="store_true", help="include the edge-type law")
    e.add_argument("--format", choices=("json", "csv"), default="json")
    e.add_argument("--out")
    e.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("spectral", help="eigendata and limit covariance")
    sp.add_argument("--model", choices=models.MODELS)
    sp.add_argument("--matrix", help="rows separated by ';', entries by ',' (or a file)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_spectral)

    u = sub.add_parser("urn-run", help="simulate a Polya urn trajectory")
    u.add_argument("--model", choices=models.MODELS)
    u.add_argument("--matrix")
    u.add_argument("--initial", help="comma-separated initial counts")
    u.add_argument("--steps", type=int, default=100)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--allow-unbalanced", action="store_true")
    u.add_argument("--out")
    u.set_defaults(func=cmd_urn_run)

    v = sub.add_parser("verify", help="run self-check suites")
    v.add_argument("--suite", choices=(*verify.SUITES, "all"), default="all")
    v.add_argument("--scale", choices=tuple(verify.SCALES), default="quick")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--report")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClassificationUndefinedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
