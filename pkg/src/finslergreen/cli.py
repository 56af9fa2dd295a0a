"""Command-line driver: ``finslergreen <subcommand> --config run.toml``.

Exit codes: 0 ok, 2 config/schema error, 3 model hypotheses violated,
4 geometric precondition failed (non-unique geodesic, conjugate point),
5 numerical failure.  See ``configs/README.md`` for the config schema.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from . import __version__
from .asymptotics import (
    SWEEP_COLUMNS,
    AsymptoticsRefused,
    convergence_sweep,
    geometry,
    green_leading,
    green_leading_bordered,
    green_oz,
    prop72_residual,
    rate_summary,
)
from .fieldexpr import FieldDomainError, FieldSyntaxError, parse
from .finsler import FinslerError, direction_grid, finsler_tensor
from .geodesics import GeodesicError, NoGeodesicFound, UniquenessViolated, flow, shoot
from .hamiltonian import hamiltonian
from .lattice import OracleError, assemble, choose_box, default_tilt, green_column
from .model import LatticeSite, ModelError, ModelSpec, check_hypotheses, is_translation_invariant, offsets, representative
from .spectral import SpectralError, quadrature_refine

log = logging.getLogger("finslergreen")

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_GEOMETRY, EXIT_NUMERICAL = 0, 2, 3, 4, 5
SUBCOMMANDS = ("check", "finsler", "geodesic", "evaluate", "oracle", "oz", "compare")


class ConfigError(ValueError):
    pass


class HypothesisFailure(RuntimeError):
    pass


def fmt(x) -> str:
    """17 significant digits, '.' decimal."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    model: ModelSpec
    N: int
    x: tuple  # integer numerators over 2^N
    y: tuple
    sweep: tuple  # (n_min, n_max) inclusive
    eval_n: int
    oracle: str
    target_rel_err: float
    quadrature_rel_tol: float
    rate_window: tuple
    uniqueness_seeds: int
    check_samples: int
    check_box: tuple | None
    enforce_hypotheses: bool
    finsler_directions: int
    geodesic_samples: int
    oracle_column: bool
    seed: int
    out_dir: str
    digest: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def x_point(self) -> np.ndarray:
        return np.asarray(self.x, float) / 2**self.N

    @property
    def y_point(self) -> np.ndarray:
        return np.asarray(self.y, float) / 2**self.N


def _get(tbl: dict, key: str, kind, default=None, required=False):
    if key not in tbl:
        if required:
            raise ConfigError(f"missing key '{key}'")
        return default
    val = tbl[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
        raise ConfigError(f"key '{key}' must be {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_offset(key: str, d: int) -> tuple:
    try:
        ell = tuple(int(c) for c in key.split(","))
    except ValueError:
        raise ConfigError(f"wpp key '{key}' is neither 'all_unit' nor a comma-separated offset") from None
    if len(ell) != d:
        raise ConfigError(f"wpp offset '{key}' has the wrong dimension")
    return ell


def build_model(tbl: dict) -> ModelSpec:
    d = _get(tbl, "d", int, required=True)
    R = _get(tbl, "R", float, 1.0)
    J = _get(tbl, "J", float, required=True)
    wtbl = _get(tbl, "wpp", dict, {})
    try:
        dpp = parse(_get(tbl, "dpp", str, required=True), d)
        wpp = {}
        for key, text in wtbl.items():
            if not isinstance(text, str):
                raise ConfigError(f"wpp['{key}'] must be an expression string")
            if key == "all_unit":
                continue
            wpp[representative(_parse_offset(key, d))] = parse(text, d)
        if "all_unit" in wtbl:
            fld = parse(wtbl["all_unit"], d)
            for ell in offsets(d, R):
                if sum(c * c for c in ell) == 1:
                    wpp.setdefault(representative(ell), fld)
        return ModelSpec(d, R, J, dpp, wpp, _get(tbl, "name", str, ""))
    except (FieldSyntaxError, ModelError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def _grid_point(vals, N: int, d: int, name: str) -> tuple:
    """Numerators over 2^N; strings 'p/q' give exact coordinate values instead."""
    if not isinstance(vals, list) or len(vals) != d:
        raise ConfigError(f"point '{name}' must be a list of {d} entries")
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, str)):
            raise ConfigError(f"point '{name}': entries must be integers or 'p/q' strings, got {v!r}")
        if isinstance(v, int):
            out.append(v)
            continue
        try:
            q = Fraction(v) * 2**N
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"point '{name}': cannot read {v!r} as a rational") from None
        if q.denominator != 1:
            raise ConfigError(f"point '{name}' coordinate {v} is not on the grid of spacing 2^-{N}")
        out.append(int(q))
    return tuple(out)


def load_config(path: str, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    data = _read_config_bytes(path)
    try:
        raw = tomli.loads(data.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = {"model", "points", "sweep", "evaluate", "tolerances", "geometry", "checks", "finsler", "geodesic", "oracle", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    model = build_model(_get(raw, "model", dict, required=True))
    d = model.d
    pts = _get(raw, "points", dict, required=True)
    N = _get(pts, "N", int, required=True)
    if N < 0:
        raise ConfigError("points.N must be non-negative")
    x = _grid_point(_get(pts, "x", list, required=True), N, d, "x")
    y = _grid_point(_get(pts, "y", list, required=True), N, d, "y")

    sw = _get(raw, "sweep", dict, {})
    n_range = _get(sw, "n", list, [2, 5])
    if len(n_range) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in n_range):
        raise ConfigError("sweep.n must be [n_min, n_max] integers")
    if not n_range[0] < n_range[1]:
        raise ConfigError("sweep exponents must be increasing")
    if n_range[0] < N:
        raise ConfigError(f"sweep starts at n={n_range[0]} but the points need n >= N={N}")
    oracle = _get(sw, "oracle", str, "auto")
    if oracle not in ("auto", "lattice", "spectral"):
        raise ConfigError(f"sweep.oracle must be auto, lattice or spectral, not {oracle!r}")

    ev = _get(raw, "evaluate", dict, {})
    eval_n = _get(ev, "n", int, n_range[1])
    if eval_n < N:
        raise ConfigError(f"evaluate.n={eval_n} is coarser than the point grid N={N}")

    tol = _get(raw, "tolerances", dict, {})
    target = _get(tol, "target_rel_err", float, 1e-10)
    qtol = _get(tol, "quadrature_rel_tol", float, 1e-12)
    window = _get(tol, "rate_window", list, [1.5, 2.6])
    if len(window) != 2 or not all(isinstance(v, (int, float)) for v in window):
        raise ConfigError("tolerances.rate_window must be [low, high]")
    if not (target > 0 and qtol > 0 and 0 < window[0] < window[1]):
        raise ConfigError("tolerances must be positive and the rate window increasing")

    geo = _get(raw, "geometry", dict, {})
    seeds = _get(geo, "uniqueness_seeds", int, 8)
    chk = _get(raw, "checks", dict, {})
    samples = _get(chk, "samples", int, 10_000)
    box = _get(chk, "box", list, None)
    if box is not None:
        if len(box) != 2 or any(not isinstance(b, list) or len(b) != d for b in box):
            raise ConfigError("checks.box must be [[lo...], [hi...]]")
        box = (tuple(float(v) for v in box[0]), tuple(float(v) for v in box[1]))
    enforce = _get(chk, "enforce", bool, True)
    fin = _get(raw, "finsler", dict, {})
    n_dir = _get(fin, "directions", int, 16)
    gd = _get(raw, "geodesic", dict, {})
    n_samp = _get(gd, "samples", int, 101)
    orc = _get(raw, "oracle", dict, {})
    column = _get(orc, "column", bool, False)
    outp = _get(raw, "output", dict, {})
    cfg_seed = _get(outp, "seed", int, 0)
    cfg_dir = _get(outp, "dir", str, "out")
    for name, v in (("uniqueness_seeds", seeds), ("samples", samples), ("directions", n_dir), ("geodesic samples", n_samp)):
        if v < 0 or (v == 0 and name != "uniqueness_seeds"):
            raise ConfigError(f"{name} must be positive")

    digest = hashlib.sha256(data).hexdigest()
    return RunConfig(
        model, N, x, y, tuple(n_range), eval_n, oracle, target, qtol, tuple(window), seeds, samples, box,
        enforce, n_dir, n_samp, column, cfg_seed if seed is None else seed,
        cfg_dir if out_dir is None else out_dir, digest, raw,
    )


def _read_config_bytes(path: str) -> bytes:
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        res = resources.files("finslergreen") / "configs" / f"{name}.toml"
        if not res.is_file():
            raise ConfigError(f"no bundled config named {name!r}")
        return res.read_bytes()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


# --------------------------------------------------------------------------
# report emission


class Reporter:
    def __init__(self, cfg: RunConfig, command: str, stream=None):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.out_dir)
        self.stream = stream or sys.stdout

    def header(self) -> list[str]:
        return [
            f"config_sha256 = {self.cfg.digest}",
            f"seed = {self.cfg.seed}",
            f"command = {self.command}",
            f"version = {__version__}",
        ]

    def record(self, name: str, items: list[tuple[str, object]]) -> Path:
        lines = self.header() + [f"{k} = {fmt(v)}" for k, v in items]
        text = "\n".join(lines) + "\n"
        self.stream.write(text)
        return self._write(name, text)

    def table(self, name: str, columns, rows) -> Path:
        buf = io.StringIO()
        for line in self.header():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
        return self._write(name, buf.getvalue())

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return path


# --------------------------------------------------------------------------
# subcommands


def _hypotheses(cfg: RunConfig):
    rep = check_hypotheses(cfg.model, cfg.check_box, cfg.check_samples, cfg.seed)
    return rep


def _require_hypotheses(cfg: RunConfig):
    if not cfg.enforce_hypotheses:
        return
    rep = _hypotheses(cfg)
    if not rep.ok:
        raise HypothesisFailure("; ".join(rep.violations))


def cmd_check(cfg: RunConfig, rep: Reporter) -> int:
    hr = _hypotheses(cfg)
    items = [(ln.split(" = ", 1)[0], ln.split(" = ", 1)[1]) for ln in hr.lines()]
    items.insert(0, ("translation_invariant", is_translation_invariant(cfg.model)))
    rep.record("check.txt", items)
    return EXIT_OK if hr.ok else EXIT_HYPOTHESIS


def cmd_finsler(cfg: RunConfig, rep: Reporter) -> int:
    _require_hypotheses(cfg)
    d = cfg.model.d
    cols = ["site"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["F"]
    cols += [f"p{i + 1}" for i in range(d)] + [f"G{i + 1}{j + 1}" for i in range(d) for j in range(d)] + ["detG"]
    rows = []
    for label, pt in (("y", cfg.y_point), ("x", cfg.x_point)):
        for v in direction_grid(d, cfg.finsler_directions):
            ft = finsler_tensor(cfg.model, pt, v)
            rows.append([label, *pt, *v, ft.F, *ft.p, *ft.G.ravel(), np.linalg.det(ft.G)])
    path = rep.table("finsler.csv", cols, rows)
    rep.stream.write(f"wrote {path}\n")
    return EXIT_OK


def _solutions_text(sols) -> list[tuple[str, object]]:
    items = [("n_solutions", len(sols))]
    for i, s in enumerate(sols):
        items += [(f"solution{i}.dF", s.dF), (f"solution{i}.tau", s.tau)]
        items += [(f"solution{i}.p_y{j + 1}", c) for j, c in enumerate(s.p_y)]
    return items


def cmd_geodesic(cfg: RunConfig, rep: Reporter) -> int:
    _require_hypotheses(cfg)
    m = cfg.model
    sol = shoot(m, cfg.y_point, cfg.x_point, n_seeds=cfg.uniqueness_seeds)
    tr = flow(m, sol.y, sol.p_y, sol.tau, n_samples=cfg.geodesic_samples)
    d = m.d
    cols = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H_residual"]
    rows = [[t, *x, *p, hamiltonian(m, x, p)] for t, x, p in zip(tr.t, tr.x, tr.p)]
    rep.table("geodesic.csv", cols, rows)
    rep.record(
        "geodesic.txt",
        [("dF", sol.dF), ("dF_lagrangian", sol.dF_lagrangian), ("tau", sol.tau), ("residual", sol.residual),
         ("unique", sol.unique), ("conjugate_free", sol.conjugate_free)]
        + [(f"p_y{i + 1}", c) for i, c in enumerate(sol.p_y)]
        + [(f"p_x{i + 1}", c) for i, c in enumerate(sol.p_x)],
    )
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, rep: Reporter) -> int:
    _require_hypotheses(cfg)
    m = cfg.model
    h = 2.0**-cfg.eval_n
    g = geometry(m, cfg.x_point, cfg.y_point, cfg.uniqueness_seeds)
    est = green_leading(m, cfg.x_point, cfg.y_point, h, g)
    alt = green_leading_bordered(m, cfg.x_point, cfg.y_point, h, g)
    items = list(est.record().items())
    items += [("bordered_route_value", alt.value), ("route_agreement", abs(alt.value / est.value - 1.0)),
              ("identity_residual", prop72_residual(g, m.d))]
    rep.record("evaluate.txt", items)
    return EXIT_OK


def _oracle_value(cfg: RunConfig, h: float):
    m = cfg.model
    kind = cfg.oracle
    if kind == "auto":
        kind = "spectral" if is_translation_invariant(m) else "lattice"
    x, y = cfg.x_point, cfg.y_point
    if kind == "spectral":
        sv = quadrature_refine(m, x - y, h, rel_tol=cfg.quadrature_rel_tol)
        return kind, sv.value, [("nodes", sv.n), ("imag_residual", sv.imag_residual), ("condition", sv.condition)], None
    xs, ys = LatticeSite.from_point(x, h), LatticeSite.from_point(y, h)
    box = choose_box(m, xs.point, ys.point, h, cfg.target_rel_err)
    tilt = None if xs.k == ys.k else default_tilt(m, xs.point, ys.point, box, h)
    col = green_column(assemble(m, box, h, tilt), ys)
    extra = [("sites", col.op.n_sites), ("residual", col.residual)]
    extra += [(f"box_lo{i + 1}", v) for i, v in enumerate(box[0])] + [(f"box_hi{i + 1}", v) for i, v in enumerate(box[1])]
    return kind, col.at(xs.k), extra, col


def cmd_oracle(cfg: RunConfig, rep: Reporter) -> int:
    _require_hypotheses(cfg)
    h = 2.0**-cfg.eval_n
    kind, value, extra, col = _oracle_value(cfg, h)
    rep.record("oracle.txt", [("oracle", kind), ("h", h), ("value", value)] + extra)
    if cfg.oracle_column:
        if col is None:
            raise ConfigError("oracle.column needs the lattice oracle")
        d = cfg.model.d
        K = col.op.coords()
        cols = [f"k{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(d)] + ["value"]
        rep.table("column.csv", cols, ([*k, *(h * k), v] for k, v in zip(K, col.values)))
    return EXIT_OK


def cmd_oz(cfg: RunConfig, rep: Reporter) -> int:
    _require_hypotheses(cfg)
    m = cfg.model
    if not is_translation_invariant(m):
        raise ConfigError("oz needs a translation-invariant model")
    h = 2.0**-cfg.eval_n
    z = cfg.x_point - cfg.y_point
    oz = green_oz(m, z, h)
    sv = quadrature_refine(m, z, h, rel_tol=cfg.quadrature_rel_tol)
    rep.record(
        "oz.txt",
        [("h", h), ("F", oz.F), ("spectral", sv.value), ("value_ti1", oz.value_ti1), ("value_ti2", oz.value_ti2),
         ("prefactor_ti1", oz.prefactor_ti1), ("prefactor_ti2", oz.prefactor_ti2),
         ("ratio_spectral_ti1", sv.value / oz.value_ti1), ("ti1_ti2_agreement", abs(oz.value_ti1 / oz.value_ti2 - 1.0))],
    )
    return EXIT_OK


def cmd_compare(cfg: RunConfig, rep: Reporter, threads: int = 1) -> int:
    _require_hypotheses(cfg)
    m = cfg.model
    g = geometry(m, cfg.x_point, cfg.y_point, cfg.uniqueness_seeds)
    rows = convergence_sweep(
        m, cfg.x_point, cfg.y_point, range(cfg.sweep[0], cfg.sweep[1] + 1), cfg.oracle, g, workers=threads
    )
    rep.table("compare.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))
    s = rate_summary(rows, cfg.rate_window)
    items = [("rate_window_low", cfg.rate_window[0]), ("rate_window_high", cfg.rate_window[1])]
    items += [(f"error_n{r['n']}", e) for r, e in zip(rows, s["errors"])]
    items += [(f"error_ratio_n{r['n']}", q) for r, q in zip(rows[1:], s["error_ratios"])]
    items += [("monotone", s["monotone"]), ("in_window", s["in_window"]),
              ("status", "pass" if s["monotone"] and s["in_window"] else "fail")]
    rep.record("compare_summary.txt", items)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "finsler": cmd_finsler, "geodesic": cmd_geodesic, "evaluate": cmd_evaluate,
    "oracle": cmd_oracle, "oz": cmd_oz, "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run config, or builtin:<name>")
    common.add_argument("--out-dir", default=None, help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--seed", type=int, default=None, help="RNG seed for sampled checks (overrides output.seed)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="finslergreen", description="Finsler asymptotics of lattice Green kernels.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "check": "sampled hypothesis report",
        "finsler": "F, dual point and fundamental tensor tables at x and y",
        "geodesic": "minimizing geodesic y -> x as CSV",
        "evaluate": "leading-order asymptotic estimate",
        "oracle": "brute-force Green entry",
        "oz": "spectral value next to both OZ formulas",
        "compare": "convergence sweep against the oracle",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def run(argv=None, stream=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    err = sys.stderr
    if args.threads < 1:
        err.write("error: --threads must be positive\n")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.seed, args.out_dir)
        rep = Reporter(cfg, args.command, stream)
        fn = COMMANDS[args.command]
        return fn(cfg, rep, args.threads) if args.command == "compare" else fn(cfg, rep)
    except ConfigError as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except HypothesisFailure as exc:
        err.write(f"model hypotheses violated: {exc}\n")
        return EXIT_HYPOTHESIS
    except (AsymptoticsRefused, UniquenessViolated) as exc:
        err.write(f"geometry precondition failed: {exc}\n")
        for s in exc.solutions:
            err.write(f"  solution dF={fmt(s.dF)} tau={fmt(s.tau)} p_y={[fmt(c) for c in s.p_y]}\n")
        return EXIT_GEOMETRY
    except NoGeodesicFound as exc:
        err.write(f"geometry precondition failed: {exc}\n")
        return EXIT_GEOMETRY
    except ModelError as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (GeodesicError, FinslerError, OracleError, SpectralError, FieldDomainError, ArithmeticError) as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
