"""Command-line entry point: ``gdyn <command> [options]``.

Every option can also come from an INI file given with ``--config``; the
section is named after the command (``[simulate]``, ``[exact]``, ...) and keys
use the option names with underscores. Values given on the command line win.
Each run writes its outputs plus ``manifest.json`` into ``--out``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 a
verification or cross-check did not pass.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .asymptotics import collision_micro_law, edge_micro_law, ginibre_bulk_O, macro_O, macro_spiric
from .errors import NumericalError, PoleCollision, ValidationError
from .exact import (
    SourceSpec,
    correlator_beta_form,
    correlator_double_contour,
    density_source,
    ginibre_closed_sum,
    ginibre_density,
    parse_source,
    spiric_boundary,
    support_components,
)
from .integrators import NoiseConvention, Scheme, SimConfig, map_ordered, run_trajectory
from .observables import FieldGrid, grid_from_nodes
from .sfp import format_report, report_csv

log = logging.getLogger("gdyn")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_FAILED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    kind: type | object
    default: object
    help: str


COMMON = (
    Opt("out", str, None, "output directory (default: gdyn-out/<command>)"),
    Opt("gnuplot", _flag, False, "also write a gnuplot script"),
    Opt("threads", int, None, "worker threads (capped by GDYN_THREADS)"),
)

OPTIONS = {
    "simulate": (
        Opt("scheme", str, "coulomb", "bm | ou | dyson | coulomb"),
        Opt("n", int, 100, "matrix size / number of charges"),
        Opt("dt", float, 1e-3, "time step"),
        Opt("steps", int, 1000, "number of steps"),
        Opt("seed", int, 0, "random seed"),
        Opt("snapshot_every", int, 100, "steps between snapshots"),
        Opt("source", str, "ginibre", "initial diagonal: ginibre | spiric:<a> | list | @file"),
        Opt("init_scale", float, None, "add this multiple of a unit-radius Ginibre matrix (default 1 for coulomb, else 0)"),
        Opt("convention", str, "default", "raw | ou | coulomb | default (per scheme)"),
        Opt("variance_rate", float, None, "override the noise variance rate of a raw convention"),
        Opt("trajectories", int, 1, "independent trajectories"),
        Opt("dump_matrices", _flag, False, "write binary matrix dumps at every snapshot"),
        Opt("gap_floor", float, 1e-8, "minimum eigenvalue gap"),
    ),
    "exact": (
        Opt("quantity", str, "correlator", "density | correlator"),
        Opt("method", str, "auto", "auto | beta | double | closed (correlator); auto | analytic | fd | closed (density)"),
        Opt("n", int, 8, "matrix size"),
        Opt("tau", float, 1.0, "tau = N t"),
        Opt("source", str, "ginibre", "ginibre | spiric:<a> | list | @file"),
        Opt("grid", str, "-1:1:21,-1:1:21", "re0:re1:nre,im0:im1:nim (cell centres)"),
        Opt("cross_check", _flag, False, "also evaluate the other correlator representation"),
        Opt("cross_check_tol", float, 1e-6, "allowed discrepancy for --cross-check"),
    ),
    "asymptotic": (
        Opt("law", str, "macro", "macro | bulk | edge | collision | spiric"),
        Opt("n", int, 100, "matrix size (macro source, edge scaling)"),
        Opt("tau", float, 1.0, "tau"),
        Opt("source", str, "ginibre", "source for the macro law"),
        Opt("a", str, "0.5", "two-point source value for spiric and collision"),
        Opt("t", float, 0.0, "collision time offset"),
        Opt("grid", str, "-1.5:1.5:31,-1.5:1.5:31", "re0:re1:nre,im0:im1:nim"),
    ),
    "verify": (
        Opt("seed", int, 1, "random seed"),
        Opt("points", int, None, "random points (identities: 100, covariances: 20)"),
        Opt("n", int, None, "matrix size (ecp: 3, hierarchy: 4)"),
        Opt("draws", int, 100_000, "draws per covariance point"),
        Opt("trajectories", int, 10_000, "Monte Carlo trajectories for the ecp suite"),
        Opt("states", int, 2000, "states for the integrator suite"),
    ),
    "compare-fig1": (
        Opt("n", int, 100, "matrix size, even"),
        Opt("steps", int, 2000, "steps for both schemes"),
        Opt("seed", int, 0, "random seed"),
        Opt("interval", int, 20, "steps between histogram snapshots"),
        Opt("snapshots", int, 40, "snapshots pooled into each histogram"),
        Opt("trace_every", int, 1, "steps between recorded trajectory positions"),
        Opt("bins", int, 48, "histogram bins on [-1.2, 1.2]"),
    ),
}

SUITES = ("identities", "covariances", "ecp", "hierarchy", "integrators")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gdyn", description="Diffusing non-Hermitian matrices: simulation and exact results")
    p.add_argument("--version", action="version", version=f"gdyn {__version__}")
    p.add_argument("--config", help="INI file with one section per command")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and results")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, opts in OPTIONS.items():
        sp = sub.add_parser(cmd)
        if cmd == "verify":
            sp.add_argument("suite", choices=SUITES)
        for o in COMMON + opts:
            flag = "--" + o.name.replace("_", "-")
            if o.kind is _flag:
                sp.add_argument(flag, dest=o.name, action="store_const", const=True, default=None, help=o.help)
            else:
                sp.add_argument(flag, dest=o.name, default=None, help=o.help)
    return p


def resolve(command: str, args: argparse.Namespace, config_path: str | None) -> dict:
    """Defaults, then the config section, then explicit flags; values converted per field."""
    opts = {o.name: o for o in COMMON + OPTIONS[command]}
    raw: dict = {name: o.default for name, o in opts.items()}
    if config_path:
        cp = configparser.ConfigParser()
        if not cp.read(config_path):
            raise ValidationError(f"cannot read config file {config_path}")
        if cp.has_section(command):
            for key, val in cp.items(command):
                name = key.replace("-", "_")
                if name not in opts:
                    raise ValidationError(f"unknown config field '{key}' in [{command}]")
                raw[name] = val
    for name in opts:
        val = getattr(args, name, None)
        if val is not None:
            raw[name] = val
    out = {}
    for name, val in raw.items():
        if val is None:
            out[name] = None
            continue
        try:
            out[name] = opts[name].kind(val)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"config field '{name}': {exc}") from exc
    if getattr(args, "suite", None):
        out["suite"] = args.suite
    return out


# --------------------------------------------------------------------------- helpers


def parse_source_arg(text: str, n: int) -> SourceSpec:
    t = text.strip()
    if t.lower() == "ginibre":
        return SourceSpec.ginibre(n)
    if t.lower().startswith("spiric:"):
        return SourceSpec.spiric(n, _complex(t.split(":", 1)[1]))
    if t.startswith("@"):
        path = Path(t[1:])
        if not path.exists():
            raise ValidationError(f"source file {path} not found")
        src = parse_source(path.read_text())
    else:
        src = parse_source(t)
    if src.n != n:
        raise ValidationError(f"source has {src.n} entries but n = {n}")
    return src


def _complex(text: str) -> complex:
    try:
        return complex(text.strip().replace("i", "j"))
    except ValueError as exc:
        raise ValidationError(f"cannot parse complex number {text!r}") from exc


def parse_grid(text: str) -> FieldGrid:
    try:
        re_part, im_part = text.split(",")
        r0, r1, nr = re_part.split(":")
        i0, i1, ni = im_part.split(":")
        return grid_from_nodes(float(r0), float(r1), float(i0), float(i1), int(nr), int(ni))
    except ValueError as exc:
        raise ValidationError(f"grid must look like re0:re1:nre,im0:im1:nim, got {text!r}") from exc


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command: str, cfg: dict, argv):
        self.command = command
        self.cfg = cfg
        self.argv = list(argv)
        self.out = Path(cfg["out"] or Path("gdyn-out") / command)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.started = _now()

    def add(self, *paths) -> None:
        self.files.extend(Path(p) for p in paths)

    def text(self, name: str, content: str) -> Path:
        p = io.write_atomic(self.out / name, content)
        self.add(p)
        return p

    def grid(self, grid: FieldGrid, stem: str) -> None:
        self.add(*io.write_field_grid(grid, self.out / stem))

    def finish(self) -> Path:
        return io.write_manifest(self.out / "manifest.json", argv=self.argv, config=self.cfg,
                                 seed=self.cfg.get("seed"), version=__version__, started=self.started,
                                 finished=_now(), outputs=self.files, root=self.out)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _grid_gnuplot(stem: str, title: str) -> str:
    return (f"# heat map of {stem}.csv\n"
            "set datafile separator ','\n"
            f"set title '{title}'\n"
            "set xlabel 'Re z'\nset ylabel 'Im z'\n"
            "set view map\nset key off\n"
            f"splot '{stem}.csv' every ::1 using 1:2:3 with image\n")


def _map_grid(fn, grid: FieldGrid, threads):
    zs = grid.centers().ravel()
    vals = map_ordered(fn, list(zs), threads)
    return vals


# --------------------------------------------------------------------------- commands


def cmd_simulate(cfg: dict, run: Run) -> int:
    n = cfg["n"]
    scheme = Scheme.parse(cfg["scheme"])
    source = parse_source_arg(cfg["source"], n)
    conv_name = cfg["convention"].strip().lower()
    if conv_name == "default":
        conv = scheme.default_convention(n)
    elif conv_name == "raw":
        conv = NoiseConvention.raw()
    elif conv_name == "ou":
        conv = NoiseConvention.unit_disk_ou(n)
    elif conv_name == "coulomb":
        conv = NoiseConvention.coulomb(n)
    else:
        raise ValidationError(f"config field 'convention': unknown value {cfg['convention']!r}")
    if cfg["variance_rate"] is not None:
        if conv.drift_coeff != 0:
            raise ValidationError("config field 'variance_rate' applies to the raw convention only")
        conv = NoiseConvention.raw(cfg["variance_rate"])
    init_scale = cfg["init_scale"]
    if init_scale is None:
        init_scale = 1.0 if scheme is Scheme.COULOMB else 0.0
    if cfg["trajectories"] < 1:
        raise ValidationError("config field 'trajectories' must be at least 1")
    cfg["init_scale"] = init_scale
    sim = SimConfig(n, scheme, cfg["dt"], cfg["steps"], cfg["seed"], conv, source,
                    snapshot_every=cfg["snapshot_every"], init_scale=init_scale,
                    gap_floor=cfg["gap_floor"], keep_matrix=cfg["dump_matrices"])
    cfg["resolved_convention"] = {"kind": conv.kind.value, "variance_rate": conv.variance_rate,
                                  "drift_coeff": conv.drift_coeff}
    runs = map_ordered(lambda k: run_trajectory(sim, k), range(cfg["trajectories"]), cfg["threads"])
    for k, snaps in enumerate(runs):
        run.text(f"snapshots_traj{k:04d}.csv", io.snapshots_csv(snaps))
        if cfg["dump_matrices"]:
            for s in snaps:
                if s.x is not None:
                    run.add(io.write_matrix(run.out / "matrices" / f"traj{k:04d}_step{s.step:08d}.gdyn", s.x))
        log.info("trajectory %d: %d snapshots after step 0", k, len(snaps) - 1)
    if cfg["gnuplot"]:
        run.text("snapshots.gp", "set datafile separator ','\nset size square\nset key off\n"
                 "plot 'snapshots_traj0000.csv' every ::1 using 4:5 with dots\n")
    print(f"wrote {cfg['trajectories']} trajectory file(s) to {run.out}")
    return EXIT_OK


def _is_null(source: SourceSpec) -> bool:
    return len(source.values) == 1 and source.values[0] == 0


def _exact_method(quantity: str, method: str, source: SourceSpec) -> str:
    """``auto`` picks the closed forms for the null source (finite at ``z = 0``) and
    the contour representations otherwise."""
    if method != "auto":
        return method
    if _is_null(source):
        return "closed"
    return "beta" if quantity == "correlator" else "analytic"


def _exact_value(quantity: str, method: str, n: int, tau: float, source: SourceSpec):
    if method == "closed" and not _is_null(source):
        raise ValidationError("the closed forms need the null (ginibre) source")
    if quantity == "density":
        if method == "closed":
            return lambda z: (float(ginibre_density(n, tau, abs(z) ** 2)), None)
        if method not in ("analytic", "fd"):
            raise ValidationError(f"config field 'method': density supports auto | analytic | fd | closed, not {method!r}")
        return lambda z: density_source(n, tau, z, source, method=method, return_info=True)
    if quantity != "correlator":
        raise ValidationError(f"config field 'quantity': unknown value {quantity!r}")
    if method == "beta":
        return lambda z: correlator_beta_form(n, tau, z, source, return_info=True)
    if method == "double":
        return lambda z: correlator_double_contour(n, tau, z, source, return_info=True)
    if method == "closed":
        return lambda z: (float(ginibre_closed_sum(n, tau, abs(z) ** 2)), None)
    raise ValidationError(f"config field 'method': unknown value {method!r}")


def _evaluate(fn, grid: FieldGrid, threads):
    """Values, missing cells and merged diagnostics; pole collisions become ``nan``."""

    def safe(z):
        try:
            return fn(z)
        except PoleCollision as exc:
            return math.nan, str(exc)

    res = _map_grid(safe, grid, threads)
    vals = np.array([r[0] for r in res], dtype=float).reshape(grid.nx, grid.ny)
    diag = {"outer_nodes_max": 0, "contour_nodes_max": 0, "outer_error_max": 0.0}
    missing = []
    for z, (_, info) in zip(grid.centers().ravel(), res):
        if isinstance(info, str):
            missing.append([z.real, z.imag])
        elif info is not None:
            diag["outer_nodes_max"] = max(diag["outer_nodes_max"], info.outer_nodes)
            diag["contour_nodes_max"] = max(diag["contour_nodes_max"], info.max_contour_nodes)
            diag["outer_error_max"] = max(diag["outer_error_max"], float(info.outer_error))
    return vals, missing, diag


def _two_point_value(source: SourceSpec):
    if len(source.values) == 2 and source.counts[0] == source.counts[1]:
        a, b = (complex(v) for v in source.values)
        if a == -b and a != 0:
            return a
    return None


def cmd_exact(cfg: dict, run: Run) -> int:
    n, tau = cfg["n"], cfg["tau"]
    source = parse_source_arg(cfg["source"], n)
    grid = parse_grid(cfg["grid"])
    quantity = cfg["quantity"].strip().lower()
    method = _exact_method(quantity, cfg["method"].strip().lower(), source)
    vals, missing, diag = _evaluate(_exact_value(quantity, method, n, tau, source), grid, cfg["threads"])
    meta = {"estimator": f"exact_{quantity}", "method": method, "N": n, "tau": tau,
            "source": [[complex(v).real, complex(v).imag, c] for v, c in zip(source.values, source.counts)],
            "quadrature": diag, "missing": missing}
    two_point = _two_point_value(source)
    if two_point is not None:
        comps = support_components(spiric_boundary(tau, two_point, grid.centers()))
        meta["support_components"] = comps
        print(f"two-point support covers {comps} connected region(s) on the grid")
    status = EXIT_OK
    if cfg["cross_check"]:
        if quantity != "correlator":
            raise ValidationError("--cross-check applies to the correlator")
        other = "double" if method in ("beta", "closed") else "beta"
        vals2, _, _ = _evaluate(_exact_value(quantity, other, n, tau, source), grid, cfg["threads"])
        ok = np.isfinite(vals) & np.isfinite(vals2)
        gap = float(np.max(np.abs(vals[ok] - vals2[ok]))) if ok.any() else 0.0
        meta["cross_check"] = {"method": other, "max_abs_discrepancy": gap, "tolerance": cfg["cross_check_tol"]}
        print(f"cross-check against {other}: max discrepancy {gap:.3e}")
        if not gap < cfg["cross_check_tol"]:
            status = EXIT_FAILED
    stem = quantity
    run.grid(FieldGrid(grid.window, grid.nx, grid.ny, vals, np.zeros_like(vals), meta), stem)
    if cfg["gnuplot"]:
        run.text(f"{stem}.gp", _grid_gnuplot(stem, f"{quantity}, N={n}, tau={tau}"))
    if missing:
        log.warning("%d grid point(s) sit on a source entry and were left missing", len(missing))
    print(f"wrote {run.out / (stem + '.csv')}")
    return status


def cmd_asymptotic(cfg: dict, run: Run) -> int:
    law = cfg["law"].strip().lower()
    n, tau = cfg["n"], cfg["tau"]
    grid = parse_grid(cfg["grid"])
    a = _complex(cfg["a"])
    meta = {"estimator": f"asymptotic_{law}", "N": n, "tau": tau}
    if law == "macro":
        source = parse_source_arg(cfg["source"], n)
        fn = lambda z: macro_O(tau, z, source)  # noqa: E731
    elif law == "bulk":
        fn = lambda z: float(ginibre_bulk_O(tau, abs(z) ** 2))  # noqa: E731
    elif law == "spiric":
        meta["a"] = [a.real, a.imag]
        fn = lambda z: float(macro_spiric(tau, a, z))  # noqa: E731
    elif law == "edge":
        # sqrt(N) O at |z| = sqrt(tau) + delta / sqrt(N), divided back by sqrt(N)
        rt = math.sqrt(n)
        fn = lambda z: float(edge_micro_law((abs(z) - math.sqrt(tau)) * rt, tau)) / rt  # noqa: E731
    elif law == "collision":
        meta.update(a=[a.real, a.imag], t=cfg["t"], coordinates="scaled eta", scaled="sqrt(N) O")
        fn = lambda z: collision_micro_law(z, cfg["t"], a)  # noqa: E731
    else:
        raise ValidationError(f"config field 'law': unknown value {law!r}")
    vals = np.array(_map_grid(fn, grid, cfg["threads"]), dtype=float).reshape(grid.nx, grid.ny)
    run.grid(FieldGrid(grid.window, grid.nx, grid.ny, vals, np.zeros_like(vals), meta), law)
    if cfg["gnuplot"]:
        run.text(f"{law}.gp", _grid_gnuplot(law, f"{law} law, tau={tau}"))
    print(f"wrote {run.out / (law + '.csv')}")
    return EXIT_OK


def cmd_verify(cfg: dict, run: Run) -> int:
    from . import verify

    suite = cfg["suite"]
    seed = cfg["seed"]
    if suite == "identities":
        rows = verify.identity_rows(seed, cfg["points"] or 100)
    elif suite == "covariances":
        rows = verify.covariance_rows(seed, cfg["points"] or 20, cfg["draws"])
    elif suite == "ecp":
        rows = verify.ecp_rows(cfg["n"] or 3, seed, cfg["trajectories"])
    elif suite == "hierarchy":
        rows = verify.hierarchy_rows(cfg["n"] or 4, cfg["threads"])
    else:
        rows = verify.integrator_rows(seed, cfg["states"])
    text = format_report(rows)
    run.text("report.txt", text)
    run.text("report.csv", report_csv(rows))
    sys.stdout.write(text)
    failed = [r.name for r in rows if not r.passed]
    if failed:
        print("failing checks: " + ", ".join(failed))
        return EXIT_FAILED
    return EXIT_OK


def cmd_compare_fig1(cfg: dict, run: Run) -> int:
    from .verify import fig1_run, semicircle_cdf

    n = cfg["n"]
    if n < 2 or n % 2:
        raise ValidationError("config field 'n' must be even and at least 2")
    interval, count, trace = cfg["interval"], cfg["snapshots"], cfg["trace_every"]
    if min(interval, count, trace, cfg["bins"]) < 1:
        raise ValidationError("interval, snapshots, trace_every and bins must be positive")
    record = math.gcd(interval, trace)
    edges = np.linspace(-1.2, 1.2, cfg["bins"] + 1)
    summary = {}
    for label, scheme in (("coulomb", Scheme.COULOMB), ("ou", Scheme.MATRIX_OU)):
        res = fig1_run(scheme, n, cfg["steps"], cfg["seed"], interval=interval, n_snapshots=count,
                       record_every=record)
        run.text(f"fig1_{label}_trajectories.csv", io.snapshots_csv(
            [s for s in res.snapshots if s.step % trace == 0]))
        hist, _ = np.histogram(res.pooled_real, bins=edges)
        width = np.diff(edges)
        dens = hist / (res.pooled_real.size * width)
        expect = np.diff(semicircle_cdf(edges)) / width
        lines = ["bin_lo,bin_hi,density,semicircle"]
        lines += [f"{lo!r},{hi!r},{d!r},{e!r}" for lo, hi, d, e in
                  zip(edges[:-1].tolist(), edges[1:].tolist(), dens.tolist(), expect.tolist())]
        run.text(f"fig1_{label}_histogram.csv", "\n".join(lines) + "\n")
        summary[label] = res.ks
        print(f"{label}: KS distance to the semicircle {res.ks:.4f} "
              f"({res.pooled_real.size} real parts from {min(count, len(res.snapshots))} snapshots)")
    cfg["ks"] = summary
    if cfg["gnuplot"]:
        run.text("fig1.gp", "set datafile separator ','\nset key top right\n"
                 "plot 'fig1_coulomb_histogram.csv' every ::1 using (($1+$2)/2):3 with steps title 'Coulomb', "
                 "'fig1_ou_histogram.csv' every ::1 using (($1+$2)/2):3 with steps title 'matrix OU', "
                 "'fig1_ou_histogram.csv' every ::1 using (($1+$2)/2):4 with lines title 'semicircle'\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "exact": cmd_exact,
    "asymptotic": cmd_asymptotic,
    "verify": cmd_verify,
    "compare-fig1": cmd_compare_fig1,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"gdyn: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args.command, args, args.config)
        run = Run(args.command, cfg, argv)
        status = COMMANDS[args.command](cfg, run)
        run.finish()
        return status
    except ValidationError as exc:
        print(f"gdyn: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"gdyn: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
