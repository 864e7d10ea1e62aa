"""Command-line front end: ``amspec <command> [options]``.

Configuration is a flat ``key = value`` text file (``--config``) whose keys
are the fields of :class:`RunConfig`; ``--set key=value`` and the dedicated
flags override it.  Every command writes its reports and a ``manifest.json``
(schema ``amspec/1``) into the configured output directory and nowhere else.

Exit codes: 0 success, 1 usage / parse / missing file, 2 numerical
precondition (uncovered frequencies, insufficient sampling, bad parameters),
3 non-convergence (Neumann series, fit target not reached).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

SCHEMA = "amspec/1"
EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_NONCONVERGENCE = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(Exception):
    """Malformed configuration text or value."""


class UsageError(Exception):
    """Bad command-line usage (maps to exit code 1)."""


# -----------------------------------------------------------------------------
# configuration
# -----------------------------------------------------------------------------
def _floats(text: str) -> tuple:
    parts = [t for t in text.replace(",", " ").split() if t]
    if not parts:
        raise ValueError("empty vector")
    return tuple(float(t) for t in parts)


def _c1(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else float(text)


@dataclass
class RunConfig:
    """Parameters shared by all commands.

    ``p`` has one exponent per space dimension, so ``len(p)`` fixes ``n``.
    ``c1 = None`` (written ``auto``) selects the smallest certified radius.
    """

    alpha: float = 0.0
    s: float = 0.0
    p: tuple = (2.0,)
    q: float = 2.0
    kmax: int = 16
    N: int = 1024
    T: float = 32.0
    seed: int = 0
    out: str = "amspec_out"
    c1: float | None = None

    _PARSERS = {"alpha": float, "s": float, "p": _floats, "q": float, "kmax": int, "N": int, "T": float,
                "seed": int, "out": str, "c1": _c1}

    @property
    def dim(self) -> int:
        return len(self.p)

    # -- text form ----------------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "p":
                v = ",".join(repr(float(x)) for x in v)
            elif f.name == "c1":
                v = "auto" if v is None else repr(float(v))
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
            key, val = (t.strip() for t in line.split("=", 1))
            cfg = cfg.override(key, val, f"{source}:{no}")
        return cfg

    def override(self, key: str, value: str, where: str = "--set") -> "RunConfig":
        if key not in self._PARSERS:
            raise ConfigError(f"{where}: unknown key {key!r} (known: {', '.join(self._PARSERS)})")
        try:
            v = self._PARSERS[key](value)
        except ValueError as err:
            raise ConfigError(f"{where}: bad value for {key}: {value!r} ({err})") from None
        return dataclasses.replace(self, **{key: v})

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except UnicodeDecodeError:
            raise ConfigError(f"{path}: not a text configuration file") from None
        return cls.from_text(text, str(path))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["p"] = [float(x) for x in self.p]
        return d

    def digest(self) -> str:
        """SHA-256 of the text form without ``out`` (the output location is not a parameter)."""
        text = "".join(line + "\n" for line in self.to_text().splitlines() if not line.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()

    def validate(self) -> None:
        from .errors import PreconditionError

        if not (0.0 <= self.alpha < 1.0):
            raise PreconditionError(f"alpha must lie in [0,1), got {self.alpha}")
        if self.kmax < 1 or self.N < 8 or not self.T > 0:
            raise PreconditionError("need kmax >= 1, N >= 8 and T > 0")
        if any(not pj > 0 for pj in self.p) or not self.q > 0:
            raise PreconditionError("exponents p and q must be positive")
        if self.c1 is not None and not self.c1 > 0:
            raise PreconditionError("c1 must be positive")


# -----------------------------------------------------------------------------
# shared plumbing
# -----------------------------------------------------------------------------
def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"amspec": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _clean(obj):
    """Convert numpy scalars / arrays / tuples into plain JSON values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


class Run:
    """Output directory, report collection and the manifest of one command."""

    def __init__(self, command: str, cfg: RunConfig, options: dict):
        self.command = command
        self.cfg = cfg
        self.options = options
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.constants: dict = {}

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def report(self, name: str, obj) -> None:
        write_json(self.path(name), obj)

    def manifest(self) -> dict:
        m = {
            "schema": SCHEMA,
            "command": self.command,
            "config": self.cfg.to_json(),
            "config_hash": self.cfg.digest(),
            "options": self.options,
            "versions": _versions(),
            "fitted_constants": self.constants,
            "outputs": sorted(self.outputs),
        }
        write_json(self.dir / "manifest.json", m)
        return m


def build_geometry(cfg: RunConfig):
    from .lattice import AlphaGeometry, default_a, select_c1

    if cfg.c1 is None:
        return select_c1(cfg.alpha, cfg.dim, cfg.kmax, cfg.T)
    return AlphaGeometry(cfg.alpha, cfg.dim, cfg.c1, default_a(cfg.c1, cfg.dim, cfg.T))


def build_frame(cfg: RunConfig, geometry=None):
    from .bapu import BapuSystem
    from .frame import TightFrame
    from .grid import Grid
    from .lattice import Truncation

    g = geometry if geometry is not None else build_geometry(cfg)
    return TightFrame(BapuSystem(g, Truncation(cfg.kmax, cfg.T)), Grid(cfg.dim, cfg.T, cfg.N))


def _need_file(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what}: --in is required")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what}: input file not found: {p}")
    return p


def _load_signal(path: Path, grid):
    from .errors import DimensionMismatch
    from .grid import SampledSignal

    try:
        return SampledSignal.load(path, grid)
    except DimensionMismatch:
        raise
    except (ValueError, OSError) as err:  # includes malformed headers / CSV
        raise UsageError(f"cannot read signal {path}: {err}") from None


def _load_coeffs(path: Path, layout):
    from .coeffs import CoeffField

    try:
        return CoeffField.load_csv(path, layout)
    except (ValueError, KeyError, IndexError) as err:
        raise UsageError(f"cannot read coefficients {path}: {err}") from None


def _space_params(cfg: RunConfig):
    from .transform import SpaceParams

    return SpaceParams(cfg.s, cfg.alpha, cfg.p, cfg.q)


def _write_signal_csv(path: Path, f) -> None:
    """Plot export: one row per sample ``x_1..x_n, re, im``."""
    import numpy as np

    x = f.grid.coords().reshape(-1, f.grid.dim)
    v = f.values.ravel()
    hdr = ",".join([f"x{i + 1}" for i in range(f.grid.dim)] + ["re", "im"])
    np.savetxt(path, np.column_stack([x, v.real, v.imag]), delimiter=",", header=hdr, comments="", fmt="%.17g")


def _rel(a, b) -> float:
    d = (a - b).norm()
    nb = b.norm()
    return float(d / nb) if nb > 0 else float(d)


# -----------------------------------------------------------------------------
# commands
# -----------------------------------------------------------------------------
def cmd_cover(cfg: RunConfig, args, run: Run) -> int:
    import numpy as np

    from .bapu import SUPPORT_FACTOR
    from .lattice import Truncation, certify_covering, covering_members, interior_half_width, probe_points

    geom = build_geometry(cfg)
    trunc = Truncation(cfg.kmax, cfg.T)
    rep = certify_covering(geom, trunc)
    # overlap of the bump supports (balls enlarged by SUPPORT_FACTOR)
    R = interior_half_width(geom, trunc)
    pts = probe_points(R, geom.c1 / (64.0 if geom.dim == 1 else 8.0), geom.dim)
    n_supp = 0
    for s0 in range(0, len(pts), 20000):
        _, mask = covering_members(geom, pts[s0 : s0 + 20000], SUPPORT_FACTOR, cfg.kmax)
        n_supp = max(n_supp, int(mask.sum(axis=1).max(initial=0)))
    out = rep.to_json() | {"probes": rep.probes, "interior_half_width": rep.interior_half_width,
                           "support_overlap": n_supp, "alpha": geom.alpha, "dim": geom.dim}
    run.report("cover.json", out)
    ks = trunc.freq_indices(geom.dim)
    xi = geom.xi(ks.astype(float))
    rad = geom.c1 * geom.r(ks.astype(float))
    hdr = ",".join([f"k{i + 1}" for i in range(geom.dim)] + [f"xi{i + 1}" for i in range(geom.dim)] + ["radius"])
    np.savetxt(run.path("cover_balls.csv"), np.column_stack([ks, xi, rad]), delimiter=",", header=hdr,
               comments="", fmt="%.17g")
    run.constants.update({"n0": rep.n0, "support_overlap": n_supp, "c1": geom.c1, "a": geom.a})
    print(f"covering certified: n0={rep.n0}, c1={geom.c1:g}, a={geom.a:.6g}, {rep.probes} probes")
    return EXIT_OK


def cmd_signal(cfg: RunConfig, args, run: Run) -> int:
    from .grid import Grid
    from .lattice import Truncation, interior_half_width
    from .panels import random_panel

    geom = build_geometry(cfg)
    grid = Grid(cfg.dim, cfg.T, cfg.N)
    R = interior_half_width(geom, Truncation(cfg.kmax, cfg.T))
    f = random_panel(grid, R, 1, seed=cfg.seed)[0]
    f = f * (1.0 / f.norm())
    name = args.name or f"signal_seed{cfg.seed}.amsig"
    f.save(run.path(name))
    if args.csv:
        _write_signal_csv(run.path(Path(name).stem + ".csv"), f)
    run.report("signal.json", {"file": name, "band_radius": R, "l2_norm": f.norm()})
    print(f"wrote unit-norm signal {run.dir / name} (band radius {R:.6g})")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args, run: Run) -> int:
    path = _need_file(args.input, "analyze")
    frame = build_frame(cfg)
    f = _load_signal(path, frame.grid)
    c = frame.analyze(f)
    c.save_csv(run.path("coeffs.csv"))
    back = frame.synthesize(c)
    nf = f.norm()
    rep = {"input": path.name, "l2_signal": nf, "l2_coeffs": c.l2(),
           "parseval_rel_error": abs(c.l2() ** 2 - nf**2) / nf**2 if nf > 0 else 0.0,
           "roundtrip_rel_error": _rel(back, f), "atoms": frame.layout.size}
    run.report("analyze.json", rep)
    run.constants.update({"parseval_rel_error": rep["parseval_rel_error"],
                          "roundtrip_rel_error": rep["roundtrip_rel_error"]})
    print(f"relative round-trip error {rep['roundtrip_rel_error']:.3e}")
    return EXIT_OK


def cmd_synthesize(cfg: RunConfig, args, run: Run) -> int:
    path = _need_file(args.input, "synthesize")
    frame = build_frame(cfg)
    c = _load_coeffs(path, frame.layout)
    f = frame.synthesize(c)
    f.save(run.path(args.name or "synth.amsig"))
    if args.csv:
        _write_signal_csv(run.path("synth.csv"), f)
    rep = {"input": path.name, "l2_signal": f.norm()}
    if args.reference:
        ref = _load_signal(_need_file(args.reference, "synthesize --reference"), frame.grid)
        rep["relative_error"] = _rel(f, ref)
        run.constants["relative_error"] = rep["relative_error"]
        print(f"relative error {rep['relative_error']:.3e}")
    run.report("synthesize.json", rep)
    return EXIT_OK


def cmd_norm(cfg: RunConfig, args, run: Run) -> int:
    import numpy as np

    from .bapu import SUPPORT_FACTOR
    from .lattice import covering_members, interior_half_width, probe_points
    from .mixednorm import mixed_norm
    from .transform import band_signal, mod_norm, seq_norm

    path = _need_file(args.input, "norm")
    frame = build_frame(cfg)
    sp = _space_params(cfg)
    f = _load_signal(path, frame.grid)
    geom, trunc = frame.geometry, frame.truncation
    mnorm = mod_norm(f, sp, frame.system)
    snorm = seq_norm(frame.analyze(f), sp, frame.grid)
    # every interior point lies in a ball where one bump equals 1 and in at most
    # n_supp bump supports, so ||f||_2 <= mod_norm <= sqrt(n_supp) ||f||_2 at p = q = 2, s = 0
    R = interior_half_width(geom, trunc)
    pts = probe_points(R, geom.c1 / (64.0 if geom.dim == 1 else 8.0), geom.dim)
    n_supp = 0
    for s0 in range(0, len(pts), 20000):
        _, mask = covering_members(geom, pts[s0 : s0 + 20000], SUPPORT_FACTOR, cfg.kmax)
        n_supp = max(n_supp, int(mask.sum(axis=1).max(initial=0)))
    l2 = f.norm()
    rep = {"input": path.name, "mod_norm": mnorm, "seq_norm": snorm, "ratio": snorm / mnorm if mnorm else None,
           "l2_norm": l2, "support_overlap": n_supp}
    if cfg.s == 0 and cfg.q == 2 and all(pj == 2 for pj in cfg.p):
        lo, hi = l2, math.sqrt(n_supp) * l2
        rep["l2_bracket"] = [lo, hi]
        rep["in_bracket"] = bool(lo * (1 - 1e-9) <= mnorm <= hi * (1 + 1e-9))
    run.report("norm.json", rep)
    # plot export: per-band contributions
    fhat = f.spectrum()
    rows = []
    for k in frame.system.ks:
        band = band_signal(frame.system, frame.grid, fhat, k)
        r = float(geom.r(k.astype(float)))
        rows.append([*k, r, r**sp.s * mixed_norm(band, sp.p, frame.grid.h) if band is not None else 0.0])
    hdr = ",".join([f"k{i + 1}" for i in range(geom.dim)] + ["r_k", "band_norm"])
    np.savetxt(run.path("norm_bands.csv"), np.array(rows), delimiter=",", header=hdr, comments="", fmt="%.17g")
    run.constants.update({"mod_norm": mnorm, "seq_norm": snorm})
    msg = f"mod_norm {mnorm:.10g}  seq_norm {snorm:.10g}"
    if "l2_bracket" in rep:
        msg += f"  bracket [{rep['l2_bracket'][0]:.6g}, {rep['l2_bracket'][1]:.6g}] {'ok' if rep['in_bracket'] else 'VIOLATED'}"
    print(msg)
    return EXIT_OK


def cmd_admat(cfg: RunConfig, args, run: Run) -> int:
    from .admat import AdParams, OpMatrix, fitted_constant, gram, gram_decay_check, is_almost_diagonal, summability_check

    frame = build_frame(cfg)
    par = AdParams(cfg.s, cfg.alpha, cfg.p, delta=args.delta, q=cfg.q)
    G = gram(frame)
    doubled = None
    if args.doubled:
        cfg2 = dataclasses.replace(cfg, kmax=2 * cfg.kmax, N=2 * cfg.N)
        doubled = gram(build_frame(cfg2, frame.geometry))
    mem = is_almost_diagonal(G, par, doubled)
    dec = gram_decay_check(G, M=2.0, N=2.0, L=1.0)
    summ = summability_check(cfg.alpha, cfg.dim, args.delta, cfg.kmax)
    ident = fitted_constant(OpMatrix.identity(frame.layout), par)
    rep = {"params": par.to_json(), "gram_membership": mem.to_json(), "gram_decay": dec.to_json(),
           "summability": summ.to_json(), "identity_C": ident, "gram_nnz": int(G.mat.nnz)}
    run.report("admat.json", rep)
    if args.export_matrix:
        G.save_csv(run.path("gram.csv"))
    run.constants.update({"gram_C": mem.C, "gram_C_doubled": mem.C_doubled, "molecule_C": dec.C_molecule,
                          "Ca": summ.Ca, "Cb": summ.Cb, "identity_C": ident})
    print(f"gram fitted C {mem.C:.6g}" + (f" -> {mem.C_doubled:.6g} (member: {mem.member})" if doubled else "")
          + f"; Ca {summ.Ca:.6g}, Cb {summ.Cb:.6g}")
    return EXIT_OK


def _symbol(args):
    from .multiplier import Symbol

    spec = args.symbol
    if spec[0] == "one" and len(spec) == 1:
        return Symbol.one()
    if spec[0] == "bracket-power" and len(spec) == 2:
        try:
            return Symbol.bracket_power(float(spec[1]))
        except ValueError:
            raise UsageError(f"--symbol bracket-power needs a number, got {spec[1]!r}") from None
    if spec[0] == "file" and len(spec) == 2:
        return Symbol.from_csv(_need_file(spec[1], "--symbol file"), args.order)
    raise UsageError("--symbol must be 'one', 'bracket-power B' or 'file PATH'")


def cmd_multiply(cfg: RunConfig, args, run: Run) -> int:
    from .multiplier import apply_multiplier, multiplier_matrix, symbol_class_check

    m = _symbol(args)
    path = _need_file(args.input, "multiply")
    frame = build_frame(cfg)
    f = _load_signal(path, frame.grid)
    cls = symbol_class_check(m, cfg.alpha, dim=cfg.dim)
    rep = {"symbol": m.name, "order": m.order, "route": args.route, "class_check": cls.to_json()}
    if args.route == "matrix":
        M = multiplier_matrix(m, frame)
        g = apply_multiplier(m, f, "matrix", frame, M)
        rep["matrix_nnz"] = int(M.mat.nnz)
        rep["route_difference"] = _rel(g, apply_multiplier(m, f, "direct"))
        run.constants["route_difference"] = rep["route_difference"]
    else:
        g = apply_multiplier(m, f, "direct")
    g.save(run.path(args.name or "multiplied.amsig"))
    if args.csv:
        _write_signal_csv(run.path("multiplied.csv"), g)
    rep["l2_in"], rep["l2_out"] = f.norm(), g.norm()
    run.report("multiply.json", rep)
    run.constants["in_class"] = cls.in_class
    print(f"{m.name} via {args.route}: |m(D)f| = {g.norm():.10g}; symbol in class: {cls.in_class}"
          + (f"; routes differ by {rep['route_difference']:.3e}" if "route_difference" in rep else ""))
    return EXIT_OK


def _csupp_fit(cfg: RunConfig, args):
    from .csupp import BSplineGenerator, fit_all
    from .errors import PreconditionError

    if cfg.dim != 1:
        raise PreconditionError("csupp commands support n = 1 only (give a single exponent p)")
    frame = build_frame(cfg)
    gen = BSplineGenerator(args.spline_order, 1)
    taus = fit_all(frame, gen, args.K, args.m, args.N_env, args.M_env, args.eps_target)
    return frame, gen, taus


def cmd_csupp_fit(cfg: RunConfig, args, run: Run) -> int:
    import numpy as np

    frame, gen, taus = _csupp_fit(cfg, args)
    per_k = [{"k": list(k), "K": t.K, "m": t.m, "eps": t.eps, "eps_space": t.eps_space, "eps_freq": t.eps_freq,
              "eps_freq_grid": t.eps_freq_grid} for k, t in sorted(taus.items())]
    worst = max(t.eps for t in taus.values())
    run.report("csupp_fit.json", {"spline_order": gen.order, "N_env": args.N_env, "M_env": args.M_env,
                                  "eps_target": args.eps_target, "eps_max": worst, "fits": per_k})
    np.savetxt(run.path("csupp_fit.csv"), np.array([[r["k"][0], r["K"], r["m"], r["eps_space"], r["eps_freq"]]
                                                     for r in per_k]),
               delimiter=",", header="k,K,m,eps_space,eps_freq", comments="", fmt="%.17g")
    run.constants["eps_max"] = worst
    print(f"fitted {len(taus)} envelopes, max eps {worst:.3e}")
    return EXIT_OK


def cmd_csupp_expand(cfg: RunConfig, args, run: Run) -> int:
    from .csupp import build_perturbed_family, frame_expansion
    from .lattice import interior_half_width

    path = _need_file(args.input, "csupp-expand")
    frame, gen, taus = _csupp_fit(cfg, args)
    f = _load_signal(path, frame.grid)
    fam = build_perturbed_family(frame, taus)
    R = interior_half_width(frame.geometry, frame.truncation)
    res = frame_expansion(fam, f, R, args.tol)
    res.coeffs.save_csv(run.path("csupp_coeffs.csv"))
    rep = {"input": path.name, "eps": fam.eps, "band_radius": R, "iterations": res.iterations,
           "contraction": res.contraction, "reconstruction_error": res.reconstruction_error}
    run.report("csupp_expand.json", rep)
    run.constants.update({"eps": fam.eps, "contraction": res.contraction,
                          "reconstruction_error": res.reconstruction_error})
    print(f"expansion converged in {res.iterations} iterations, relative error {res.reconstruction_error:.3e}")
    return EXIT_OK


COMMANDS = {
    "cover": cmd_cover,
    "signal": cmd_signal,
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "norm": cmd_norm,
    "admat": cmd_admat,
    "multiply": cmd_multiply,
    "csupp-fit": cmd_csupp_fit,
    "csupp-expand": cmd_csupp_expand,
}


# -----------------------------------------------------------------------------
# argument parsing
# -----------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="FILE", help="flat key=value configuration file")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one configuration key (repeatable); keys: " + ", ".join(RunConfig._PARSERS))
    g.add_argument("--alpha", type=float, help="covering parameter alpha in [0,1) (overrides the config)")
    g.add_argument("--kmax", type=int, help="frequency truncation |k|_inf <= kmax (overrides the config)")
    g.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    g.add_argument("--threads", type=int, default=None, metavar="T",
                   help="cap the worker threads of the numerical libraries")


def _input(p: argparse.ArgumentParser, what: str) -> None:
    p.add_argument("--in", dest="input", metavar="FILE", help=what)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="amspec", description="Discrete decompositions of mixed-norm alpha-modulation spaces.",
                 epilog="Exit codes: 0 ok, 1 usage/parse, 2 numerical precondition, 3 non-convergence.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("cover", help="certify the alpha-covering (writes cover.json, cover_balls.csv)")
    _common(p)

    p = sub.add_parser("signal", help="write a seeded unit-norm band-limited example signal")
    _common(p)
    p.add_argument("--name", help="output file name (default signal_seed<seed>.amsig)")
    p.add_argument("--csv", action="store_true", help="also export the samples as CSV")

    p = sub.add_parser("analyze", help="frame coefficients of a signal (writes coeffs.csv)")
    _common(p)
    _input(p, "signal file (AMSIG1 binary, or CSV re,im)")

    p = sub.add_parser("synthesize", help="synthesize a signal from coefficients")
    _common(p)
    _input(p, "coefficient CSV k..,l..,re,im")
    p.add_argument("--reference", metavar="FILE", help="signal to compare with (prints the relative error)")
    p.add_argument("--name", help="output file name (default synth.amsig)")
    p.add_argument("--csv", action="store_true", help="also export the samples as CSV")

    p = sub.add_parser("norm", help="modulation and sequence norms of a signal")
    _common(p)
    _input(p, "signal file")

    p = sub.add_parser("admat", help="almost-diagonal certificates of the frame Gram matrix")
    _common(p)
    p.add_argument("--delta", type=float, default=1.0, help="decay margin delta > 0 (default 1)")
    p.add_argument("--doubled", action="store_true", help="refit at doubled kmax and N (stability)")
    p.add_argument("--export-matrix", action="store_true", help="write the Gram matrix as gram.csv")

    p = sub.add_parser("multiply", help="apply a Fourier multiplier m(D)")
    _common(p)
    _input(p, "signal file")
    p.add_argument("--symbol", nargs="+", default=["one"], metavar="SPEC",
                   help="'one', 'bracket-power B' (<xi>^B) or 'file PATH' (CSV xi,re,im; signed xi in 1-D, radial otherwise)")
    p.add_argument("--order", type=float, default=0.0, help="nominal order of a file symbol (default 0)")
    p.add_argument("--route", choices=["direct", "matrix"], default="direct",
                   help="apply in frequency (direct) or through the frame matrix (matrix)")
    p.add_argument("--name", help="output file name (default multiplied.amsig)")
    p.add_argument("--csv", action="store_true", help="also export the samples as CSV")

    for name, hlp in [("csupp-fit", "fit compactly supported spline envelopes for every k"),
                      ("csupp-expand", "expand a signal in the compactly supported frame")]:
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--spline-order", type=int, default=4, help="B-spline order (>= 3, default 4)")
        p.add_argument("--K", type=int, default=None, help="number of shifts per axis (default: automatic)")
        p.add_argument("--m", type=float, default=None, help="dilation of the spline (default: automatic)")
        p.add_argument("--eps-target", type=float, default=None, help="fail (exit 3) if some fit exceeds this eps")
        p.add_argument("--N-env", type=float, default=4.0, help="space decay exponent of the envelope error")
        p.add_argument("--M-env", type=float, default=11.0, help="frequency decay exponent of the envelope error")
        if name == "csupp-expand":
            _input(p, "signal file")
            p.add_argument("--tol", type=float, default=1e-10, help="Neumann residual tolerance (default 1e-10)")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg = cfg.override(k.strip(), v.strip())
    for key in ("alpha", "kmax", "out"):
        v = getattr(args, key, None)
        if v is not None:
            cfg = dataclasses.replace(cfg, **{key: v})
    cfg.validate()
    return cfg


def _cap_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be positive")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    from .errors import AmspecError, CoverageGap, NoConvergence, TargetNotReached

    try:
        args = build_parser().parse_args(argv)
        _cap_threads(args.threads)
        cfg = resolve_config(args)
        opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "set", "command", "threads")}
        run = Run(args.command, cfg, opts)
        code = COMMANDS[args.command](cfg, args, run)
        run.manifest()
        return code
    except SystemExit as ex:  # --help
        return int(ex.code or 0)
    except (UsageError, ConfigError) as err:
        print(f"amspec: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"amspec: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CoverageGap as err:
        print(f"amspec: coverage gap: {err}", file=sys.stderr)
        for pt in (err.points if err.points is not None else []):
            print("  uncovered: " + " ".join(f"{float(v):.10g}" for v in pt), file=sys.stderr)
        return EXIT_PRECONDITION
    except (NoConvergence, TargetNotReached) as err:
        print(f"amspec: not converged: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except AmspecError as err:
        print(f"amspec: precondition failed: {err}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
