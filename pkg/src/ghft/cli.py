"""Command line front end: ``ghft check|convergence|green|algebra <config>``.

Scenarios are INI files with the sections ``[spacetime]``, ``[model]``,
``[numerics]``, ``[suites]``, ``[output]`` and optionally ``[algebra]``;
see the README for every key. Exit status: 0 when every check passes,
1 on a failed check, 2 on an invalid configuration or input, 3 on I/O
errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import algebra as al
from . import checks as ck
from . import greenops as go
from .spacetime import Family, LatticeError, build_spacetime, write_pgm

log = logging.getLogger("ghft")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

REPORT_HEADER = ["suite", "check", "measured", "threshold", "pass"]

# name -> (lower, upper) accepted for tolerance overrides (lower bound exclusive)
TOLERANCE_RANGES = {
    "green_tol": (0.0, 1e-6),
    "causality_tol": (0.0, 1e-6),
    "symmetry_tol": (0.0, 1e-6),
    "split_tol": (0.0, 1e-6),
    "equality_tol": (0.0, 1e-4),
    "symbol_tol": (0.0, 1e-1),
    "order_min": (0.0, 4.0),
    "order_band": (0.0, 1.0),
    "cfl": (0.0, 1.0),
}
COUNTS = {"sources": 1, "pairs": 1, "observables": 2, "algebra_samples": 1,
          "algebra_pairs": 1, "levels": 2}


class ConfigError(ValueError):
    """Invalid scenario configuration (exit status 2)."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario: geometry, model parameters, numerics, suites and output."""

    spacetime: dict
    params: ck.ModelParams
    numerics: ck.Numerics
    suites: tuple[str, ...]
    output: Path
    algebra: dict = field(default_factory=dict)

    def lattice(self):
        try:
            return build_spacetime(**self.spacetime)
        except (LatticeError, ValueError, TypeError) as exc:
            raise ConfigError(f"[spacetime] {exc}") from exc


def _number(section: str, key: str, text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"[{section}] {key} = {text!r} is not a number") from None


def _integer(section: str, key: str, text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {text!r} is not an integer") from None


def _known_keys(parser, section: str, allowed) -> None:
    if parser.has_section(section):
        extra = set(parser[section]) - set(allowed)
        if extra:
            raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(extra))}")


def load_config(path, out_override: str | None = None) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        On syntax errors, unknown keys or out-of-range values.
    """
    parser = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    unknown = set(parser.sections()) - {"spacetime", "model", "numerics", "suites",
                                        "output", "algebra"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")

    sp = parser["spacetime"] if parser.has_section("spacetime") else {}
    _known_keys(parser, "spacetime", {"family", "n_t", "n_x", "delta_t", "delta_x", "t0",
                                      "scale_factor", "lapse", "spatial_metric", "radius"})
    family = sp.get("family", "Minkowski").strip()
    if family not in {f.value for f in Family} - {"Custom"}:
        raise ConfigError(f"[spacetime] unknown family {family!r}")

    num_sec = parser["numerics"] if parser.has_section("numerics") else {}
    _known_keys(parser, "numerics", set(TOLERANCE_RANGES) | set(COUNTS) | {"seed", "band"})
    numerics = {}
    for key, (lo, hi) in TOLERANCE_RANGES.items():
        if key in num_sec:
            v = _number("numerics", key, num_sec[key])
            if not lo < v <= hi:
                raise ConfigError(f"[numerics] {key} = {v:g} outside the range ({lo:g}, {hi:g}]")
            numerics[key] = v
    for key, least in COUNTS.items():
        if key in num_sec:
            v = _integer("numerics", key, num_sec[key])
            if v < least:
                raise ConfigError(f"[numerics] {key} must be at least {least}")
            numerics[key] = v
    if "seed" in num_sec:
        numerics["seed"] = _integer("numerics", "seed", num_sec["seed"])
    if num_sec.get("band", "").strip():
        parts = [p for p in num_sec["band"].replace(",", " ").split()]
        if len(parts) != 2:
            raise ConfigError("[numerics] band needs two level indices 'start, stop'")
        numerics["band"] = tuple(_integer("numerics", "band", p) for p in parts)
    numerics = ck.Numerics(**numerics)

    geometry = {"family": family}
    for key in ("n_t", "n_x"):
        geometry[key] = _integer("spacetime", key, sp.get(key, "64"))
    for key in ("delta_x", "t0", "radius"):
        if key in sp:
            geometry[key] = _number("spacetime", key, sp[key])
    geometry.setdefault("delta_x", 1 / 32)
    geometry["delta_t"] = (_number("spacetime", "delta_t", sp["delta_t"]) if "delta_t" in sp
                           else numerics.cfl * geometry["delta_x"])
    for key in ("scale_factor", "lapse", "spatial_metric"):
        if sp.get(key, "").strip():
            geometry[key] = sp[key].strip()
    if numerics.band is not None:
        a, b = numerics.band
        if not 0 <= a < b < geometry["n_t"]:
            raise ConfigError(f"[numerics] band {numerics.band} outside 0..{geometry['n_t'] - 1}")

    md = parser["model"] if parser.has_section("model") else {}
    _known_keys(parser, "model", {"scalar_mass_sq", "scalar_coupling", "dirac_mass",
                                  "proca_mass_sq"})
    values = {k: _number("model", k, md[k]) for k in ("scalar_mass_sq", "scalar_coupling",
                                                      "dirac_mass", "proca_mass_sq") if k in md}
    params = ck.ModelParams(**values)
    if params.proca_mass_sq == 0:
        raise ConfigError("[model] proca_mass_sq must be a non-zero real number "
                          "(the Proca mass term m^2 may not vanish)")

    _known_keys(parser, "suites", {"run"})
    run = parser.get("suites", "run", fallback="scalar")
    suites = tuple(s for s in run.replace(",", " ").split())
    bad = [s for s in suites if s not in ck.SUITES]
    if bad:
        raise ConfigError(f"[suites] unknown suites: {', '.join(bad)} "
                          f"(known: {', '.join(ck.SUITES)})")

    _known_keys(parser, "output", {"dir"})
    out = out_override or parser.get("output", "dir", fallback="ghft_out")
    out = Path(out)
    if not out.is_absolute():
        out = Path(path).resolve().parent / out if out_override is None else out

    _known_keys(parser, "algebra", {"statistics", "generators"})
    alg = {"statistics": parser.get("algebra", "statistics", fallback="bose").strip(),
           "generators": _integer("algebra", "generators",
                                  parser.get("algebra", "generators", fallback="3"))}
    if alg["statistics"] not in ("bose", "fermi"):
        raise ConfigError("[algebra] statistics must be 'bose' or 'fermi'")
    if alg["generators"] < 1:
        raise ConfigError("[algebra] generators must be at least 1")
    return ScenarioConfig(geometry, params, numerics, suites, out, alg)


# output

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _report_rows(results) -> list[list]:
    rows = [REPORT_HEADER]
    for res in results:
        for c in res.checks:
            rows.append([c.suite, c.check, float(c.measured), float(c.threshold), c.passed])
    return rows


def _write_artifacts(out: Path, results) -> None:
    for res in results:
        for name, rows in res.tables.items():
            write_csv(out / name, rows)
        for name, mask in res.masks.items():
            write_pgm(out / name, mask)


def _suite_rng(seed: int, name: str) -> np.random.Generator:
    # one seed, a fixed child stream per suite: results do not depend on the selection
    return np.random.default_rng([seed, ck.SUITES.index(name)])


# subcommands

def cmd_check(cfg: ScenarioConfig, jobs: int = 1) -> int:
    lat = cfg.lattice() if cfg.suites else None

    def run(name):
        log.info("running suite %s", name)
        return ck.run_suite(name, lat, _suite_rng(cfg.numerics.seed, name), cfg.numerics,
                            cfg.params)

    if jobs > 1 and len(cfg.suites) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, cfg.suites))
    else:
        results = [run(name) for name in cfg.suites]
    cfg.output.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.output / "report.csv", _report_rows(results))
    _write_artifacts(cfg.output, results)
    failed = [f"{c.suite}/{c.check}" for r in results for c in r.checks if not c.passed]
    for name in failed:
        log.error("check failed: %s", name)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_convergence(cfg: ScenarioConfig, levels: int | None = None) -> int:
    fields = [s for s in cfg.suites if s in ck.FIELDS]
    num = cfg.numerics
    if levels is not None:
        if levels < 2:
            raise ConfigError("convergence needs at least two levels")
        num = ck.Numerics(**{**num.__dict__, "levels": levels})
    rows, res = ([], ck.SuiteResult("convergence"))
    if fields:
        try:
            rows, res = ck.convergence_study(cfg.lattice(), fields,
                                             np.random.default_rng([num.seed, 99]), num,
                                             cfg.params)
        except LatticeError as exc:
            raise ConfigError(f"[spacetime] {exc}") from exc
    exact = {name for name, (_, kind, _) in ck.IDENTITIES.items() if kind == "exact"}
    exact |= {c.check[:-len("_exact")] for c in res.checks if c.check.endswith("_exact")}
    table = [["identity", "level", "n_t", "n_x", "error", "order"]]
    prev: dict[str, float] = {}
    for r in rows:
        if r.identity in exact:
            order = "exact"
        elif r.identity in prev and prev[r.identity] > 0 and r.error > 0:
            order = float(np.log2(prev[r.identity] / r.error))
        else:
            order = ""
        prev[r.identity] = r.error
        table.append([r.identity, r.level, r.n_t, r.n_x, r.error, order])
    cfg.output.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.output / "convergence.csv", table)
    write_csv(cfg.output / "report.csv", _report_rows([res]))
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_green(cfg: ScenarioConfig, source: Path, which: str, field_name: str) -> int:
    lat = cfg.lattice()
    model = ck.make_model(field_name, lat, cfg.params)
    try:
        f = go.read_section_csv(source, lat, model.fiber_dim, model.kind)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid source file {source}: {exc}") from exc
    f = model.section(f.values)
    op = model.operator
    try:
        if which == "causal":
            u = go.causal_propagator(op, f)
        else:
            u = go.green_apply(op, f, which)
    except go.SupportClassError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.output.mkdir(parents=True, exist_ok=True)
    stem = f"green_{field_name}_{which}"
    go.write_section_csv(cfg.output / f"{stem}.csv", u)
    write_pgm(cfg.output / f"{stem}.pgm", u.point_mask)
    res = ck.SuiteResult("green")
    if which != "causal":
        res.at_most(f"{field_name}_{which}_LE_minus_f",
                    go.interior_residual(op, u, f) / max(f.norm_inf(), 1e-300),
                    cfg.numerics.green_tol)
    write_csv(cfg.output / "report.csv", _report_rows([res]))
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_algebra(cfg: ScenarioConfig, expr_path: Path) -> int:
    lines = [ln.strip() for ln in Path(expr_path).read_text().splitlines()]
    exprs = [ln for ln in lines if ln and not ln.startswith("#")]
    stats = cfg.algebra["statistics"]
    n = cfg.algebra["generators"]
    model = ck.make_model("scalar" if stats == "bose" else "dirac", cfg.lattice(), cfg.params)
    rng = np.random.default_rng([cfg.numerics.seed, 98])
    reg = al.Registry.from_observables(go.observables_batch(model,
                                                            ck.random_sources(model, rng, n)))
    out = []
    for text in exprs:
        try:
            x = al.parse(reg, text)
        except al.AlgebraError as exc:
            raise ConfigError(f"cannot parse {text!r}: {exc}") from exc
        out.append(f"{text}\n  = {al.format_element(x, multiline=False)}")
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "normal_forms.txt").write_text("\n".join(out) + ("\n" if out else ""))
    gram = [["i", "j", "value"]] + [[i, j, str(reg.gram[i][j])]
                                    for i in range(reg.size) for j in range(reg.size)]
    write_csv(cfg.output / "registry_gram.csv", gram)
    print("\n".join(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghft", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run the selected check suites")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1, help="run suites in parallel threads")

    p = sub.add_parser("convergence", help="convergence orders of the registered identities")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=None, help="number of dyadic levels")

    p = sub.add_parser("green", help="apply a Green operator to a source CSV")
    p.add_argument("config")
    p.add_argument("--source", required=True)
    p.add_argument("--which", choices=("retarded", "advanced", "causal"), default="retarded")
    p.add_argument("--field", choices=ck.FIELDS, default="scalar")

    p = sub.add_parser("algebra", help="normal forms of expressions in the field algebra")
    p.add_argument("config")
    p.add_argument("--expr", required=True, help="file with one expression per line")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = load_config(args.config, os.environ.get("GHFT_OUT") or None)
        if args.command == "check":
            return cmd_check(cfg, args.jobs)
        if args.command == "convergence":
            return cmd_convergence(cfg, args.levels)
        if args.command == "green":
            return cmd_green(cfg, Path(args.source), args.which, args.field)
        return cmd_algebra(cfg, Path(args.expr))
    except ConfigError as exc:
        print(f"ghft: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ghft: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
