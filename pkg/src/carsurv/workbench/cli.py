"""``carsurv`` command line: simulate, estimate, car-check, verify.

Exit codes: 0 success, 1 suite failure (or a requested witness not found),
2 usage, IO or data error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..coarsening import (
    DEFAULT_WITNESS_BUDGET,
    WITNESS_MODES,
    car_by_definition,
    car_characterization,
    full_support_connected,
    scar_characterization,
    search_witness,
)
from ..errors import CarsurvError, ConfigError
from ..estimators import METHODS, estimate, estimate_contrast, fit_nuisance, floor_nuisance
from ..finite_law import FiniteLaw, law_to_json
from . import verify as verify_mod
from .config import MUTANTS, ScenarioConfig, resolve_law
from .io import format_sample, read_sample
from .simulate import monte_carlo, sample_observed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(doc: Any, out: str | None) -> None:
    _emit(json.dumps(doc, indent=2) + "\n", out)


def _law_source(text: str) -> Any:
    """``W2`` names a fixture; anything else is a path to a law JSON file."""
    from ..worlds import WORLDS

    return {"fixture": text} if text in WORLDS else text


def _config(args: argparse.Namespace) -> ScenarioConfig:
    base = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    doc: dict[str, Any] = {}
    for key in ("n", "seed", "replicates", "epsilon_floor", "tolerance", "mutant", "cases"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "law", None):
        doc["law"] = _law_source(args.law)
    if getattr(args, "method", None):
        doc["methods"] = tuple(args.method)
    if getattr(args, "a", None) is not None:
        doc["a"] = tuple(args.a)
    if getattr(args, "t", None) is not None:
        doc["t"] = tuple(args.t)
    if not doc:
        return base
    merged = {f: getattr(base, f) for f in base.__dataclass_fields__}
    merged.update(doc)
    return ScenarioConfig(**merged)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    law = cfg.load_law()
    records = sample_observed(law, cfg.n, np.random.default_rng(cfg.seed))
    _emit(format_sample(records), args.out)
    return EXIT_OK


def _curves(nuis) -> dict[str, Any]:
    def key(s):
        return f"a={s[0]},l={s[1]}"

    return {
        "K": {key(s): c.to_json() for s, c in sorted(nuis.K.items())},
        "H": {key(s): c.to_json() for s, c in sorted(nuis.H.items())},
    }


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.sample is None:
        _emit_json({"monte_carlo": monte_carlo(cfg, cfg.load_law())}, args.out)
        return EXIT_OK
    sample = read_sample(args.sample)
    nuis = fit_nuisance(sample)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        floored = floor_nuisance(nuis, cfg.epsilon_floor)
    reports = [
        estimate(sample, m, a, t, nuisance=floored, epsilon_floor=None, z=cfg.z).to_json()
        for m in cfg.methods
        for a in cfg.a
        for t in cfg.t
    ]
    for rep in reports:
        rep["floored"] = floored.floored
    doc: dict[str, Any] = {"reports": reports, "curves": _curves(nuis)}
    if set(cfg.a) == {0, 1}:
        doc["contrasts"] = [
            estimate_contrast(sample, m, t, nuisance=floored, epsilon_floor=None, z=cfg.z)
            for m in cfg.methods
            for t in cfg.t
        ]
    if caught:
        doc["warnings"] = [str(w.message) for w in caught]
    _emit_json(doc, args.out)
    return EXIT_OK


def car_summary(law: FiniteLaw) -> dict[str, Any]:
    by_def = car_by_definition(law)
    by_char = car_characterization(law)
    return {
        "car": by_def,
        "car_definition": by_def,
        "car_characterization": by_char,
        "scar": scar_characterization(law),
        "support_connected": full_support_connected(law),
        "routes_agree": by_def == by_char,
    }


def cmd_car_check(args: argparse.Namespace) -> int:
    if args.witness:
        law = search_witness(args.witness, seed=args.seed or 0, budget=args.budget)
        if law is None:
            _emit_json({"witness": None, "mode": args.witness, "budget": args.budget, "seed": args.seed or 0}, args.out)
            return EXIT_FAIL
        doc = {"mode": args.witness, "seed": args.seed or 0, **car_summary(law), "witness": law_to_json(law)}
    else:
        if not args.law:
            raise ConfigError("car-check needs a law path or --witness MODE")
        doc = car_summary(resolve_law(_law_source(args.law)))
    _emit_json(doc, args.out)
    return EXIT_OK if doc["routes_agree"] else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    if args.replay:
        payload = json.loads(Path(args.replay).read_text())
        ok, out = verify_mod.replay(payload)
        _emit_json({"suite": payload["suite"], "case": payload["case"], "passed": ok, "error": out.error,
                    "inputs": out.inputs}, args.out)
        return EXIT_OK if ok else EXIT_FAIL
    cfg = _config(args)
    unknown = [s for s in args.suite or () if s not in verify_mod.SUITES]
    if unknown:
        raise ConfigError(f"unknown suites {unknown}; choose from {list(verify_mod.SUITES)}")
    report = verify_mod.run_verify(
        seed=cfg.seed,
        cases=cfg.cases_for if cfg.cases is not None else None,
        tolerance=cfg.tolerance,
        mutant=cfg.mutant,
        suites=args.suite,
        informational=not args.skip_informational,
    )
    _emit_json(report, args.out)
    for suite in report["suites"]:
        status = "PASS" if suite["passed"] else "FAIL"
        print(f"{status} {suite['name']} ({suite['cases']} cases, max error {suite['max_error']:.3g})", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carsurv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON scenario config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("simulate", help="draw an observed sample as CSV")
    common(p)
    p.add_argument("--law", help="law JSON path or fixture name (W1, W2, W3)")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate counterfactual survival from a CSV sample")
    common(p)
    p.add_argument("sample", nargs="?", help="CSV with header l,a,delta,x; omit to run Monte Carlo on the config law")
    p.add_argument("--method", action="append", choices=METHODS)
    p.add_argument("--a", type=int, action="append", choices=(0, 1))
    p.add_argument("--t", type=int, action="append")
    p.add_argument("--epsilon-floor", dest="epsilon_floor", type=float)
    p.add_argument("--law", help="law for Monte Carlo runs")
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("car-check", help="check CAR and sequential CAR of a law")
    common(p)
    p.add_argument("law", nargs="?", help="law JSON path or fixture name")
    p.add_argument("--witness", choices=WITNESS_MODES, help="search for a separating law instead")
    p.add_argument("--budget", type=int, default=DEFAULT_WITNESS_BUDGET)
    p.set_defaults(func=cmd_car_check)

    p = sub.add_parser("verify", help="run the property suites")
    common(p)
    p.add_argument("--replay", help="failure payload JSON to rerun")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--cases", type=int)
    p.add_argument("--mutant", choices=[m for m in MUTANTS if m])
    p.add_argument("--skip-informational", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CarsurvError, OSError, ValueError, KeyError) as exc:
        print(f"carsurv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
