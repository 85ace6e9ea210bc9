"""Command-line sweeps: DoS curves, convergence tables, truncation probes.

Every subcommand computes its rows first (optionally on a thread pool, one
task per grid point), then writes a CSV atomically in grid order.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import error_bounds as eb
from . import laplacian_dos as lap
from . import mathieu_bloch as mb
from . import spectral_core as sc
from . import truncation_probe as tp

log = logging.getLogger("tbdos")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
ANCHOR_TOL = 1e-9

SCHEMAS = {
    "laplacian-dos": ["mu", "dos_d_eps", "dos_c", "abs_err"],
    "mathieu-dos": ["mu", "dos_d_eps", "dos_c", "abs_err", "L_used", "k_panels_used"],
    "converge": ["mu", "eps", "abs_err", "bound_total", "bound_valid", "fitted_exponent"],
    "probes": ["probe", "param_json", "value", "threshold", "pass"],
    "self-test": ["probe", "param_json", "value", "threshold", "pass"],
}

DEFAULT_EPS_LISTS = {
    "laplacian": "1/20,1/40,1/80,1/160",
    "mathieu": "1/50,1/100,1/200",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    subcommand: str
    model: str = "laplacian"
    lam: float = 8.0
    eps: float = 1 / 40
    q: float = eb.Q_OPT
    L: int | None = None
    mu_min: float = 0.0
    mu_max: float = 20.0
    mu_step: float = 1.0
    k_panels: int | None = None
    tail_cutoff: float = 50.0
    eps_list: list = field(default_factory=list)
    out: str | None = None
    threads: int = 1
    seed: int = 0
    anchors_dir: str | None = None
    strict: bool = False
    synthetic: bool = False

    def identity(self) -> str:
        """Hash of the settings that determine the output rows."""
        d = asdict(self)
        for k in ("out", "threads", "anchors_dir", "strict"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def parse_number(text: str) -> float:
    """Accept plain floats or fractions such as ``1/40``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def parse_list(text: str) -> list:
    return [parse_number(t) for t in text.split(",") if t.strip()]


def mu_grid(cfg: RunConfig) -> list:
    if cfg.mu_min > cfg.mu_max:
        raise UsageError("mu_min must not exceed mu_max")
    if cfg.mu_min == cfg.mu_max:
        return [float(cfg.mu_min)]
    if not cfg.mu_step > 0:
        raise UsageError("mu_step must be positive")
    n = int(math.floor((cfg.mu_max - cfg.mu_min) / cfg.mu_step + 1e-9)) + 1
    return [cfg.mu_min + i * cfg.mu_step for i in range(n)]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return format(float(x), ".17g")
    return str(x)


def _parallel_map(fn, items, threads):
    items = list(items)
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_eps(values):
    for e in values:
        try:
            mb.inverse_even_integer(e)
        except lap.InvalidParameterError as exc:
            raise UsageError(str(exc))


# -- subcommands -------------------------------------------------------------

@dataclass
class Outcome:
    rows: list
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def _lap_quad(cfg):
    return lap.QuadratureSpec(panels=cfg.k_panels or 4096, tail_cutoff=cfg.tail_cutoff)


def _mathieu_kquad(cfg):
    return lap.QuadratureSpec(panels=cfg.k_panels or mb.DEFAULT_KQUAD.panels)


def cmd_laplacian_dos(cfg: RunConfig) -> Outcome:
    if not 0 < cfg.eps < 1:
        raise UsageError("eps must lie in (0, 1)")
    quad = _lap_quad(cfg)

    def point(mu):
        d = lap.discrete_scaled_result(mu, cfg.eps, quad)
        c = lap.continuum_result(mu, quad)
        return d, c

    out = Outcome([])
    for mu, (d, c) in zip(mu_grid(cfg), _parallel_map(point, mu_grid(cfg), cfg.threads)):
        out.rows.append([mu, d.value, c.value, abs(d.value - c.value)])
        if not (d.converged and c.converged):
            out.warnings.append(f"mu={mu}: quadrature did not converge")
    return out


def cmd_mathieu_dos(cfg: RunConfig) -> Outcome:
    _check_eps([cfg.eps])
    params = mb.MathieuParams(cfg.lam, cfg.eps, cfg.q, cfg.L)
    window = mb.default_window(params)
    kquad = _mathieu_kquad(cfg)

    def point(mu):
        d = mb.mathieu_discrete_result(mu, params, window, kquad)
        c = mb.mathieu_continuum_result(mu, cfg.lam, window, kquad)
        return d, c

    out = Outcome([])
    for mu, (d, c) in zip(mu_grid(cfg), _parallel_map(point, mu_grid(cfg), cfg.threads)):
        out.rows.append([mu, d.value, c.value, abs(d.value - c.value),
                         max(d.L_used, c.L_used), max(d.k_panels_used, c.k_panels_used)])
        if not (d.converged and c.converged):
            out.warnings.append(f"mu={mu}: Mathieu DoS did not converge")
    return out


def _converge_errors(cfg, mu):
    """[(eps, abs_err, budget)] for one mu, plus warnings."""
    warn = []
    if cfg.synthetic:
        return [(e, e * e, eb.laplacian_bound(e, mu, cfg.q)) for e in cfg.eps_list], warn
    if cfg.model == "laplacian":
        quad = _lap_quad(cfg)
        c = lap.continuum_result(mu, quad)
        res = []
        for e in cfg.eps_list:
            d = lap.discrete_scaled_result(mu, e, quad)
            warn += [] if d.converged else [f"mu={mu} eps={e}: not converged"]
            res.append((e, abs(d.value - c.value), eb.laplacian_bound(e, mu, cfg.q)))
        return res, warn
    kquad = _mathieu_kquad(cfg)
    c = mb.mathieu_continuum_result(mu, cfg.lam, None, kquad)
    try:
        c5, c6 = eb.estimate_mathieu_constants(cfg.lam, mu)
    except tp.InsufficientDataError:
        c5, c6 = 1.0, 1.0
    res = []
    for e in cfg.eps_list:
        params = mb.MathieuParams(cfg.lam, e, cfg.q, cfg.L)
        d = mb.mathieu_discrete_result(mu, params, None, kquad)
        warn += [] if (d.converged and c.converged) else [f"mu={mu} eps={e}: not converged"]
        res.append((e, abs(d.value - c.value), eb.mathieu_bound(e, cfg.q, c5, c6)))
    return res, warn


def cmd_converge(cfg: RunConfig) -> Outcome:
    if len(cfg.eps_list) < 3:
        raise UsageError("converge needs at least 3 eps values")
    if any(b >= a for a, b in zip(cfg.eps_list, cfg.eps_list[1:])):
        raise UsageError("eps list must be strictly decreasing")
    if cfg.model == "mathieu" and not cfg.synthetic:
        _check_eps(cfg.eps_list)
    elif any(not 0 < e < 1 for e in cfg.eps_list):
        raise UsageError("eps values must lie in (0, 1)")
    out = Outcome([])
    mus = mu_grid(cfg)
    for mu, (res, warn) in zip(mus, _parallel_map(lambda m: _converge_errors(cfg, m),
                                                  mus, cfg.threads)):
        out.warnings += warn
        try:
            exponent = eb.fit_rate([(e, err) for e, err, _ in res]).exponent
        except eb.DegenerateDataError:
            exponent = math.nan
            out.warnings.append(f"mu={mu}: degenerate errors, no rate fit")
        for i, (e, err, budget) in enumerate(res):
            last = i == len(res) - 1
            out.rows.append([mu, e, err, budget.dos_bound, budget.valid,
                             exponent if last else ""])
    return out


def _probe(name, params, value, threshold, ok):
    return [name, json.dumps(params, sort_keys=True, separators=(",", ":")),
            value, threshold, bool(ok)]


def probe_suite(cfg: RunConfig) -> list:
    """Default truncation-probe rows; ``cfg.lam`` sets the coupling."""
    lam, q = cfg.lam, cfg.q
    cont = mb.MathieuParams(lam)
    disc = mb.MathieuParams(lam, 1 / 100, q)
    rows = []

    for kind, params, Ls in ((mb.CONTINUUM, cont, [4, 8, 16, 32, 64]),
                             (mb.DISCRETE, disc, [2, 4, 8, 12, 16, 24])):
        rep = tp.window_trace_sequence(kind, 0.0, 0.0, params, Ls)
        tail = rep.deltas[len(rep.deltas) // 2:]
        worst = max(b - a for a, b in zip(tail, tail[1:]))
        rows.append(_probe("window_trace_monotone",
                           {"kind": kind, "k": 0.0, "mu": 0.0, "lambda": lam,
                            "eps": params.eps, "L_values": Ls},
                           worst, 0.0, worst < 0))

    gaps = []
    for L in (8, 16, 32):
        g = tp.corner_truncation_gap(mb.CONTINUUM, 0.0, 0.0, cont, L)
        gaps.append(g)
        rows.append(_probe("corner_gap", {"kind": mb.CONTINUUM, "k": 0.0, "mu": 0.0,
                                          "lambda": lam, "L": L}, g, 2.0 / L, g <= 2.0 / L))
    worst = max(b - a for a, b in zip(gaps, gaps[1:]))
    rows.append(_probe("corner_gap_decreasing", {"lambda": lam, "L_values": [8, 16, 32]},
                       worst, 0.0, worst < 0))

    m = mb.build_dc(0.0, lam, mb.BlochIndexWindow(50))
    try:
        fit = tp.combes_thomas_fit(m, 0.0)
        rows.append(_probe("combes_thomas_slope", {"lambda": lam, "L": 50, "mu": 0.0},
                           fit.slope, -0.5, fit.slope <= -0.5))
        rows.append(_probe("combes_thomas_r2", {"lambda": lam, "L": 50, "mu": 0.0},
                           fit.r_squared, 0.9, fit.r_squared >= 0.9))
    except tp.InsufficientDataError:
        rows.append(_probe("combes_thomas_slope", {"lambda": lam, "L": 50, "mu": 0.0,
                                                   "outcome": "insufficient-data"},
                           math.nan, -0.5, lam == 0))

    diag_m = mb.build_dc(0.0, 0.0, mb.BlochIndexWindow(50))
    try:
        tp.combes_thomas_fit(diag_m, 0.0)
        documented = False
    except tp.InsufficientDataError:
        documented = True
    rows.append(_probe("combes_thomas_diagonal",
                       {"lambda": 0.0, "L": 50, "mu": 0.0, "outcome": "insufficient-data"},
                       math.nan, math.nan, documented))

    for kind, params in ((mb.CONTINUUM, cont), (mb.DISCRETE, disc)):
        for k in (-math.pi, 0.0, 1.0):
            for L in (8, 16):
                mat = tp.bloch_matrix(kind, k, params, L)
                gap = tp.gershgorin_min_eig_bound(mat) - float(sc.eig_bisection(mat).values[0])
                rows.append(_probe("gershgorin", {"kind": kind, "k": k, "lambda": lam,
                                                  "eps": params.eps, "L": L},
                                   gap, 0.0, gap <= 0))

    half = disc.eps ** (q / 2 - 1)
    start = math.ceil(half / 2)
    floor_val = (math.pi * half) ** 4 / 8
    for k in (-math.pi, 0.0, 1.0):
        corner = tp.corner_matrix(mb.DISCRETE, k, disc, start, disc.max_window - 1)
        g = tp.gershgorin_min_eig_bound(corner)
        val = 1.0 + max(g - 0.0, 0.0) ** 2
        rows.append(_probe("corner_eigenvalue_floor",
                           {"kind": mb.DISCRETE, "k": k, "lambda": lam, "eps": disc.eps,
                            "q": q, "mu": 0.0, "n_start": start},
                           val, floor_val, val >= floor_val))
    return rows


def cmd_probes(cfg: RunConfig) -> Outcome:
    rows = probe_suite(cfg)
    return Outcome(rows, failures=[r[0] for r in rows if not r[4]])


def self_test_rows(seed: int = 0) -> list:
    """Fast consistency checks of the numerical kernels."""
    rng = np.random.default_rng(seed)
    worst_eig = worst_tr = 0.0
    gersh_ok = True
    for _ in range(20):
        n = int(rng.integers(5, 81))
        m = sc.SymTriMatrix(rng.uniform(-1, 1, n), rng.uniform(-1, 1, n - 1))
        b = sc.eig_bisection(m).values
        worst_eig = max(worst_eig, float(np.max(np.abs(b - sc.eig_ql(m).values))))
        mu = float(rng.uniform(-2, 2))
        worst_tr = max(worst_tr, abs(sc.lorentzian_trace(m, mu)
                                     - sc.lorentzian_trace_resolvent(m, mu)) / n)
        gersh_ok &= tp.gershgorin_min_eig_bound(m) <= b[0]
    c0 = lap.dos_laplacian_continuum(0.0)
    sym = max(abs(lap.dos_laplacian_discrete_scaled(mu, 1 / 20)
                  - lap.dos_laplacian_discrete_scaled(1600.0 - mu, 1 / 20)) for mu in (0, 1, 2, 5))
    synth = eb.fit_rate([(e, e * e) for e in (0.1, 0.05, 0.025)]).exponent
    return [
        _probe("eig_oracle", {"seed": seed, "n_matrices": 20}, worst_eig, 1e-10, worst_eig <= 1e-10),
        _probe("trace_paths", {"seed": seed}, worst_tr, 1e-8, worst_tr <= 1e-8),
        _probe("gershgorin_random", {"seed": seed}, float(gersh_ok), 1.0, gersh_ok),
        _probe("continuum_anchor", {"mu": 0.0}, abs(c0 - 1 / (2 * math.sqrt(2))), 1e-6,
               abs(c0 - 1 / (2 * math.sqrt(2))) <= 1e-6),
        _probe("discrete_symmetry", {"eps": 1 / 20}, sym, 1e-10, sym <= 1e-10),
        _probe("synthetic_rate", {"law": "eps^2"}, synth, 2.0, abs(synth - 2.0) <= 1e-12),
    ]


def cmd_self_test(cfg: RunConfig) -> Outcome:
    rows = self_test_rows(cfg.seed)
    return Outcome(rows, failures=[r[0] for r in rows if not r[4]])


COMMANDS = {
    "laplacian-dos": cmd_laplacian_dos,
    "mathieu-dos": cmd_mathieu_dos,
    "converge": cmd_converge,
    "probes": cmd_probes,
    "self-test": cmd_self_test,
}


# -- output ------------------------------------------------------------------

def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tbdos-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _numeric(s):
    try:
        return float(s)
    except ValueError:
        return None


def compare_csv(expected: str, actual: str, tol: float = ANCHOR_TOL) -> list:
    """Differences between two CSV texts; numeric cells compared within ``tol``."""
    a = list(csv.reader(io.StringIO(expected)))
    b = list(csv.reader(io.StringIO(actual)))
    problems = []
    if len(a) != len(b):
        return [f"row count {len(b)} != anchor {len(a)}"]
    for i, (ra, rb) in enumerate(zip(a, b)):
        if len(ra) != len(rb):
            problems.append(f"row {i}: column count differs")
            continue
        for j, (x, y) in enumerate(zip(ra, rb)):
            fx, fy = _numeric(x), _numeric(y)
            if fx is not None and fy is not None:
                if math.isnan(fx) and math.isnan(fy):
                    continue
                if not abs(fx - fy) <= tol * max(1.0, abs(fx)):
                    problems.append(f"row {i} col {j}: {y} vs anchor {x}")
            elif x != y:
                problems.append(f"row {i} col {j}: {y!r} vs anchor {x!r}")
    return problems


def check_anchor(cfg: RunConfig, text: str) -> list:
    os.makedirs(cfg.anchors_dir, exist_ok=True)
    path = os.path.join(cfg.anchors_dir, f"{cfg.subcommand}-{cfg.identity()}.csv")
    if not os.path.exists(path):
        write_atomic(path, text)
        log.info("blessed new anchor %s", path)
        return []
    with open(path) as fh:
        return compare_csv(fh.read(), text)


# -- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mu-min", type=parse_number)
    common.add_argument("--mu-max", type=parse_number)
    common.add_argument("--mu-step", type=parse_number)
    common.add_argument("--eps", type=parse_number)
    common.add_argument("--lambda", dest="lam", type=parse_number)
    common.add_argument("--q", type=parse_number)
    common.add_argument("--L", type=int)
    common.add_argument("--k-panels", type=int)
    common.add_argument("--tail-cutoff", type=parse_number)
    common.add_argument("--eps-list", type=parse_list)
    common.add_argument("--out", help="CSV path (default: stdout)")
    common.add_argument("--threads", type=int, default=1, help="0 = one per CPU")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--anchors-dir")
    common.add_argument("--strict", action="store_true",
                        help="treat non-convergence as an error (exit 2)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="tbdos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("laplacian-dos", parents=[common], help="discrete vs continuum Laplacian DoS")
    sub.add_parser("mathieu-dos", parents=[common], help="discrete vs continuum Mathieu DoS")
    conv = sub.add_parser("converge", parents=[common], help="error vs eps with bounds and rate fit")
    conv.add_argument("--model", choices=["laplacian", "mathieu"], default="laplacian")
    conv.add_argument("--synthetic", action="store_true",
                      help="replace measured errors with eps^2 (rate-fit self check)")
    sub.add_parser("probes", parents=[common], help="truncation probe suite")
    sub.add_parser("self-test", parents=[common], help="quick kernel consistency checks")
    return p


_DEFAULTS = {
    "laplacian-dos": dict(eps=1 / 40, mu_min=0.0, mu_max=20.0, mu_step=1.0),
    "mathieu-dos": dict(eps=1 / 100, lam=8.0, mu_min=0.0, mu_max=60.0, mu_step=0.5),
    "converge": dict(mu_min=5.0, mu_max=5.0, mu_step=1.0),
    "probes": dict(lam=8.0),
    "self-test": dict(),
}


def config_from_args(ns) -> RunConfig:
    cfg = RunConfig(ns.subcommand)
    for k, v in _DEFAULTS[ns.subcommand].items():
        setattr(cfg, k, v)
    for k in ("mu_min", "mu_max", "mu_step", "eps", "lam", "q", "L", "k_panels",
              "tail_cutoff", "out", "threads", "seed", "anchors_dir", "strict"):
        v = getattr(ns, k, None)
        if v is not None:
            setattr(cfg, k, v)
    cfg.model = getattr(ns, "model", "laplacian")
    cfg.synthetic = getattr(ns, "synthetic", False)
    if ns.subcommand == "converge":
        cfg.eps_list = ns.eps_list or parse_list(DEFAULT_EPS_LISTS[cfg.model])
    elif ns.eps_list:
        cfg.eps_list = ns.eps_list
    if cfg.threads < 0:
        raise UsageError("threads must be >= 0")
    if not 10 / 7 < cfg.q < 1.5 and ns.subcommand in ("converge", "probes"):
        raise UsageError("q must lie in (10/7, 3/2)")
    if cfg.k_panels is not None and cfg.k_panels < 16:
        raise UsageError("k_panels must be >= 16")
    if cfg.tail_cutoff < 10:
        raise UsageError("tail_cutoff must be >= 10")
    if cfg.L is not None and cfg.L < 1:
        raise UsageError("L must be >= 1")
    return cfg


def run(cfg: RunConfig) -> tuple[int, str]:
    """Execute a configuration; returns (exit code, CSV text)."""
    outcome = COMMANDS[cfg.subcommand](cfg)
    text = render_csv(SCHEMAS[cfg.subcommand], outcome.rows)
    code = EXIT_OK
    for w in outcome.warnings:
        log.warning(w)
    if outcome.warnings and cfg.strict:
        code = EXIT_NUMERIC
    for f in outcome.failures:
        log.error("check failed: %s", f)
        code = EXIT_NUMERIC
    return code, text


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        ns = build_parser().parse_args(argv)
        if ns.verbose:
            log.setLevel(logging.INFO)
        cfg = config_from_args(ns)
        code, text = run(cfg)
    except UsageError as exc:
        print(f"tbdos: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except lap.InvalidParameterError as exc:
        print(f"tbdos: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if cfg.anchors_dir:
            problems = check_anchor(cfg, text)
            for p in problems[:20]:
                log.error("anchor mismatch: %s", p)
            if problems:
                code = EXIT_NUMERIC
        if cfg.out:
            write_atomic(cfg.out, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"tbdos: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code
