"""rplab command-line front end.

Flags and config-file keys are generated from the single parameter table
below and correspond one to one: ``--some-name`` is the key ``some_name``,
except that point-cloud parameters live in a nested ``"source"`` object
(``--preset`` is ``source.preset``, ``--input`` is ``source.file``). A
config file is a JSON object with ``"version": 1``; flags override file
values and the ``RPLAB_SEED`` environment variable overrides file seeds.

Exit codes: 0 pass, 2 config error, 3 certification failure, 4 verdict fail
or hypothesis violated, 5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .concentration import All, parse_sample_policy
from .errors import ConfigError, FitUndefined, InvalidInput, RplabError
from .experiments import (
    THM1,
    THM2,
    THM3,
    SweepConfig,
    exponent_fit,
    family_spec,
    load_source,
    sweep,
    verdict,
)
from .generators import (
    CantorProduct,
    Grid,
    KernelLine,
    Segment,
    SeededRandom,
    export,
    generate,
    natural_delta0,
    validate,
)
from .grid import GridIndex, brute_masses
from .measures import ATOMS, CENTER_POLICIES, frostman_certify
from .rep_core import PK, PiTR, RepPush, apply_many

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_VERDICT, EXIT_ORACLE = 0, 2, 3, 4, 5
ORACLE_MAX_POINTS = 5000
CONFIG_VERSION = 1

log = logging.getLogger("rplab")


def parse_real(text) -> float:
    """Float, or an exact fraction such as '1/128'."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_vector(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(parse_real(v) for v in text)
    return tuple(parse_real(v) for v in str(text).split(","))


def parse_axes(text) -> tuple:
    """'b:d,d,...;b:d,...' one group per coordinate, or [[b, [d, ...]], ...]."""
    if isinstance(text, (list, tuple)):
        return tuple((int(b), tuple(int(x) for x in digits)) for b, digits in text)
    groups = []
    for group in str(text).split(";"):
        base, _, digits = group.partition(":")
        groups.append((int(base), tuple(int(x) for x in digits.split(",") if x.strip())))
    return tuple(groups)


def parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_int(value) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError(f"not an integer: {value!r}")
    return int(value)


def parse_str(value) -> str:
    if not isinstance(value, str):
        raise ValueError(f"not a string: {value!r}")
    return value


@dataclass(frozen=True)
class Param:
    key: str
    parse: Callable[[Any], Any]
    default: Any
    help: str
    commands: frozenset
    flag_kind: str = "value"  # "value" or "switch"
    path: tuple = ()

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")

    @property
    def config_key(self) -> str:
        return ".".join(self.path or (self.key,))


SOURCE = {"gen", "certify", "sweep", "verify", "exponent"}
RUNS = {"sweep", "verify"}
ALL = {"gen", "certify", "sweep", "verify", "oracle-check", "exponent"}


def _p(key, parse, default, help, commands, flag_kind="value", path=()):
    return Param(key, parse, default, help, frozenset(commands), flag_kind, tuple(path))


def _s(key, parse, help, commands=SOURCE, field=None, default=None):
    return _p(key, parse, default, help, commands, path=("source", field or key))


PARAMS = [
    _s("input", parse_str, "point-cloud CSV to use instead of a generator preset", SOURCE - {"gen"}, "file"),
    _s("preset", parse_str, "generator: grid, cantor, segment, kernel-line or random"),
    _s("n", parse_int, "ambient dimension is n+1", default=2),
    _s("delta0", parse_real, "finest scale; lattice step for grid/segment/kernel-line"),
    _s("axes", parse_axes, "cantor digit sets, e.g. '3:0,2;2:0;2:0'"),
    _s("depth", parse_int, "cantor depth"),
    _s("direction", parse_vector, "segment direction, comma separated"),
    _s("kernel_k", parse_int, "kernel-line order", field="k"),
    _s("r_star", parse_real, "kernel-line parameter"),
    _s("basepoint", parse_vector, "kernel-line base point, comma separated"),
    _s("count", parse_int, "random source size"),
    _s("alpha_target", parse_real, "random source exponent"),
    _s("source_seed", parse_int, "random source seed (default: --seed)", field="seed"),
    _p("seed", parse_int, 0, "seed for sampling, oracle points and random sources", ALL),
    _p("k", parse_int, None, "projection order for theorem 3 and exponent", RUNS | {"exponent"}),
    _p("output", parse_str, None, "output file (CSV for gen, JSON for certify/exponent)", {"gen", "certify", "exponent"}),
    _p("output_dir", parse_str, "rplab-out", "directory for reports", RUNS),
    _p("certify", parse_real, None, "certify the generated set at this alpha", {"gen"}),
    _p("require_cert", parse_bool, False, "exit 3 when certification fails", {"gen"}, "switch"),
    _p("alpha", parse_real, None, "Frostman exponent", {"certify"} | RUNS),
    _p("cap", parse_real, None, "certification passes iff C0 <= cap (default 2^(2(n+1)))", {"gen", "certify"}),
    _p("center_policy", parse_str, ATOMS, f"ball centres: {' or '.join(CENTER_POLICIES)}", {"gen", "certify"} | RUNS),
    _p("theorem", parse_int, None, "projection family: 1 (pi_{t,r}), 2 (a_t u_r), 3 (p_r^(k))", RUNS | {"exponent"}),
    _p("t", parse_real, 0.0, "flow time", RUNS | {"exponent"}),
    _p("delta", parse_real, None, "scale (largest scale for exponent)", RUNS | {"exponent"}),
    _p("c0", parse_real, None, "bound constant; default is the certified C0", RUNS),
    _p("epsilon", parse_real, None, "loss exponent", RUNS),
    _p("eta", parse_real, None, "threshold tuning exponent (default epsilon/20)", RUNS),
    _p("eta_mult", parse_real, 18.0, "multiplier of eta in the bad threshold", RUNS),
    _p("r_count", parse_int, 512, "number of r cells", RUNS),
    _p("r_min", parse_real, 0.0, "lower end of the r range", RUNS),
    _p("r_max", parse_real, 1.0, "upper end of the r range", RUNS),
    _p("r", parse_real, None, "parameter r for exponent", {"exponent"}),
    _p("scales", parse_int, 8, "number of dyadic scales for exponent", {"exponent"}),
    _p("expect", parse_real, None, "expected slope; exit 4 when off by more than tol", {"exponent"}),
    _p("tol", parse_real, 0.15, "slope tolerance", {"exponent"}),
    _p("sample", parse_str, None, "sampled atoms: 'all' or 'random:K[:SEED]'", RUNS | {"exponent"}),
    _p("e_cap", parse_real, 0.1, "cap on the flagged fraction of r", RUNS),
    _p("g_cap", parse_real, 0.1, "cap on the good-set deficiency", RUNS),
    _p("slack", parse_real, 8.0, "slack multiplier on the bound", RUNS),
    _p("atom_fraction", parse_real, 0.99, "required fraction of sampled atoms within slack", RUNS),
    _p("lenient_window", parse_bool, False, "note scale-window violations instead of failing", RUNS, "switch"),
    _p("fit_scales", parse_int, 4, "scales for per-r exponent fits (0 disables)", RUNS),
    _p("threads", parse_int, None, "worker threads (default: available CPUs)", RUNS),
    _p("points", parse_int, 1000, "number of random points", {"oracle-check"}),
    _p("inject_bug", parse_bool, False, "self-test: drop the lower neighbour cells", {"oracle-check"}, "switch"),
]
PARAM_BY_KEY = {p.key: p for p in PARAMS}


def config_keys(command: str) -> dict:
    """Config-file key (dotted for nested source fields) -> parameter key."""
    return {p.config_key: p.key for p in PARAMS if command in p.commands}


def _flatten(data: dict, command: str) -> dict:
    mapping = config_keys(command)
    flat, unknown = {}, []
    for name, value in data.items():
        if name == "source" and isinstance(value, dict):
            items = [(f"source.{k}", v) for k, v in value.items()]
        else:
            items = [(name, value)]
        for key, v in items:
            if key in mapping:
                flat[mapping[key]] = v
            else:
                unknown.append(key)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    return flat

HELP = {
    "gen": "generate a point cloud",
    "certify": "certify the Frostman condition of a point cloud",
    "sweep": "sweep r and write reports",
    "verify": "sweep r and judge the three-part shape check",
    "oracle-check": "compare accelerated counts with the exhaustive scan",
    "exponent": "fit the concentration exponent at one r",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rplab", description="Restricted projection experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in HELP:
        sp = sub.add_parser(command, help=HELP[command], description=HELP[command])
        sp.add_argument("--config", help="JSON config file with \"version\": 1")
        for p in PARAMS:
            if command not in p.commands:
                continue
            names = [p.flag] + (["-o"] if p.key in ("output", "output_dir") else [])
            if p.flag_kind == "switch":
                sp.add_argument(*names, dest=p.key, action="store_true", default=argparse.SUPPRESS, help=p.help)
            else:
                sp.add_argument(*names, dest=p.key, default=argparse.SUPPRESS, help=p.help, metavar=p.key.upper())
    return parser


def resolve(command: str, args: argparse.Namespace, environ=os.environ) -> dict:
    """Defaults, then config file, then RPLAB_SEED, then flags."""
    allowed = {p.key for p in PARAMS if command in p.commands}
    values = {k: PARAM_BY_KEY[k].default for k in allowed}
    raw = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if data.pop("version", None) != CONFIG_VERSION:
            raise ConfigError(f"config file must declare \"version\": {CONFIG_VERSION}")
        raw.update(_flatten(data, command))
    if environ.get("RPLAB_SEED") not in (None, ""):
        for key in ("seed", "source_seed"):
            if key in allowed and (key == "seed" or raw.get(key) is not None):
                raw[key] = environ["RPLAB_SEED"]
    for key in allowed:
        if hasattr(args, key):
            raw[key] = getattr(args, key)
    for key, value in raw.items():
        if value is None:
            values[key] = None
            continue
        try:
            values[key] = PARAM_BY_KEY[key].parse(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return values


def _require(values: dict, *keys):
    missing = [PARAM_BY_KEY[k].flag for k in keys if values.get(k) is None]
    if missing:
        raise ConfigError(f"missing required parameter(s): {', '.join(missing)}")


def source_spec(values: dict):
    preset = values.get("preset")
    _require(values, "preset")
    n = values["n"]
    if preset == "grid":
        _require(values, "delta0")
        spec = Grid(n, values["delta0"])
    elif preset == "cantor":
        _require(values, "axes", "depth")
        spec = CantorProduct(n, values["axes"], values["depth"])
    elif preset == "segment":
        _require(values, "direction", "delta0")
        spec = Segment(n, values["direction"], values["delta0"])
    elif preset == "kernel-line":
        _require(values, "kernel_k", "r_star", "delta0")
        spec = KernelLine(n, values["kernel_k"], values["r_star"], values["delta0"], values.get("basepoint"))
    elif preset == "random":
        _require(values, "count", "alpha_target")
        seed = values["seed"] if values.get("source_seed") is None else values["source_seed"]
        spec = SeededRandom(n, values["count"], values["alpha_target"], seed)
    else:
        raise ConfigError(f"preset must be grid, cantor, segment, kernel-line or random, got {preset!r}")
    try:
        validate(spec)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from None
    return spec


def load(values: dict):
    """(measure, generator spec or input path, delta0)."""
    if values.get("input"):
        if values.get("preset"):
            raise ConfigError("give either --input or --preset, not both")
        _require(values, "delta0")
        return load_source(values["input"], values["n"]), values["input"], values["delta0"]
    spec = source_spec(values)
    delta0 = natural_delta0(spec) if values.get("delta0") is None else values["delta0"]
    return generate(spec), spec, delta0


def _cap(values: dict, n: int) -> float:
    return 2.0 ** (2 * (n + 1)) if values.get("cap") is None else values["cap"]


def _check_policy(values):
    if values["center_policy"] not in CENTER_POLICIES:
        raise ConfigError(f"center_policy must be one of {CENTER_POLICIES}")


def _write_json(path, payload):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(values: dict) -> int:
    _require(values, "output")
    _check_policy(values)
    spec = source_spec(values)
    mu = generate(spec)
    export(mu, values["output"])
    print(f"wrote {mu.size} atoms to {values['output']}")
    if values["certify"] is not None:
        cert = frostman_certify(mu, values["certify"], natural_delta0(spec), values["center_policy"], cap=_cap(values, spec.n))
        print(f"alpha={cert.alpha} C0={cert.c0:.6g} delta0={cert.delta0:.6g} cap={cert.cap:.6g} passed={cert.passed}")
        if values["require_cert"] and not cert.passed:
            return EXIT_CERT
    elif values["require_cert"]:
        raise ConfigError("--require-cert needs --certify ALPHA")
    return EXIT_OK


def cmd_certify(values: dict) -> int:
    _require(values, "alpha")
    _check_policy(values)
    mu, _, delta0 = load(values)
    cert = frostman_certify(mu, values["alpha"], delta0, values["center_policy"], cap=_cap(values, mu.ambient_n))
    if values.get("output"):
        _write_json(values["output"], cert.to_dict())
    print(f"alpha={cert.alpha} C0={cert.c0:.6g} delta0={cert.delta0:.6g} cap={cert.cap:.6g} passed={cert.passed}")
    return EXIT_OK if cert.passed else EXIT_CERT


_THEOREMS = {1: THM1, 2: THM2, 3: THM3}


def _family(values) -> str:
    _require(values, "theorem")
    if values["theorem"] not in _THEOREMS:
        raise ConfigError("theorem must be 1, 2 or 3")
    return _THEOREMS[values["theorem"]]


def sweep_config(values: dict, source, delta0: float) -> SweepConfig:
    _require(values, "delta", "alpha", "epsilon")
    _check_policy(values)
    sample = None if values.get("sample") is None else parse_sample_policy(values["sample"])
    threads = values.get("threads") or os.cpu_count() or 1
    return SweepConfig(
        source=source,
        family=_family(values),
        delta=values["delta"],
        alpha=values["alpha"],
        epsilon=values["epsilon"],
        t=values["t"],
        n=values["n"],
        k=values.get("k"),
        c0=values.get("c0"),
        delta0=delta0,
        eta=values.get("eta"),
        eta_mult=values["eta_mult"],
        r_count=values["r_count"],
        r_min=values["r_min"],
        r_max=values["r_max"],
        sample_policy=sample,
        seed=values["seed"],
        e_cap=values["e_cap"],
        g_cap=values["g_cap"],
        slack=values["slack"],
        atom_fraction=values["atom_fraction"],
        strict_window=not values["lenient_window"],
        fit_scales=values["fit_scales"],
        center_policy=values["center_policy"],
        threads=threads,
    )


def _run(values: dict, judge: bool) -> int:
    mu, source, delta0 = load(values)
    config = sweep_config(values, source, delta0)
    report = sweep(config, mu)
    out = values["output_dir"]
    report.write(out)
    result = verdict(report, config)
    if judge:
        _write_json(os.path.join(out, "verdict.json"), result)
        for name, part in result["parts"].items():
            print(f"{name}: {'pass' if part['passed'] else 'fail'}")
    print(f"status={report.status} exceptional_measure={report.exceptional_measure:.6g} bound={report.bound_value:.6g}")
    for note in report.notes:
        print(f"note: {note}")
    if not report.hypothesis_ok:
        return EXIT_VERDICT
    if judge and not result["passed"]:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_sweep(values: dict) -> int:
    return _run(values, judge=False)


def cmd_verify(values: dict) -> int:
    return _run(values, judge=True)


ORACLE_SPECS = (PiTR(1.0, 0.4), RepPush(2, 0.5, 0.7), PK(2, 2, 0.3))
ORACLE_DELTAS = (2.0**-2, 2.0**-3, 2.0**-4, 2.0**-5)


def random_ball_points(count: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((count, 1)) ** (1.0 / dim)


def oracle_check(points: int, seed: int, inject_bug: bool = False, out=None) -> bool:
    out = sys.stdout if out is None else out
    pts = random_ball_points(points, 3, seed)
    offsets = (0, 1) if inject_bug else (-1, 1)
    ok = True
    for spec in ORACLE_SPECS:
        images = apply_many(spec, pts)
        for delta in ORACLE_DELTAS:
            fast = GridIndex(images, delta, offset_range=offsets).counts(images, delta)
            slow = np.rint(brute_masses(images, delta, np.full(points, 1.0 / points), True) * points).astype(np.int64)
            bad = np.flatnonzero(fast != slow)
            status = "ok" if len(bad) == 0 else "MISMATCH"
            print(f"{type(spec).__name__} delta={delta:g}: {status}", file=out)
            if len(bad) and ok:
                i = bad[0]
                print(f"first mismatch: atom {i} accelerated={fast[i]} exhaustive={slow[i]}", file=out)
                ok = False
    return ok


def cmd_oracle_check(values: dict) -> int:
    if not 1 <= values["points"] <= ORACLE_MAX_POINTS:
        raise ConfigError(f"points must lie in 1..{ORACLE_MAX_POINTS}")
    return EXIT_OK if oracle_check(values["points"], values["seed"], values["inject_bug"]) else EXIT_ORACLE


def cmd_exponent(values: dict) -> int:
    _require(values, "r", "delta")
    mu, source, _ = load(values)
    family = THM3 if values.get("theorem") is None else _family(values)
    k = values.get("k")
    if family == THM3 and k is None:
        k = 1
    if not 0 <= values["r"] <= 1:
        raise ConfigError("r must lie in [0, 1]")
    probe = SweepConfig(source, family, values["delta"], 1.0, 1e-6, t=values["t"], n=values["n"], k=k)
    spec = family_spec(probe, values["r"])
    deltas = [values["delta"] * 2.0**-j for j in range(values["scales"])]
    policy = All() if values.get("sample") is None else parse_sample_policy(values["sample"])
    try:
        slope = exponent_fit(mu, spec, deltas, policy)
    except FitUndefined as exc:
        print(f"fit undefined: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    print(f"slope={slope:.6f}")
    expect = values.get("expect")
    passed = expect is None or abs(slope - expect) <= values["tol"]
    if values.get("output"):
        _write_json(values["output"], {"slope": slope, "deltas": deltas, "r": values["r"], "expect": expect, "passed": passed})
    return EXIT_OK if passed else EXIT_VERDICT


COMMANDS = {
    "gen": cmd_gen,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "oracle-check": cmd_oracle_check,
    "exponent": cmd_exponent,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        values = resolve(args.command, args)
        return COMMANDS[args.command](values)
    except (RplabError, OSError) as exc:
        print(f"rplab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
