"""Command-line front end.

Exit codes: 0 on success, 2 when a tolerance is not met, 1 on
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import run_suite
from .asa import asa_body, asa_boundary, asa_density
from .bodies import ball_cap_profile, deficit_reference, deficit_sweep
from .cache import CapCache
from .config import RunConfig, load_config, make_body, make_function
from .errors import ConfigError, DomainError, ToleranceNotMet
from .floating import build_floating_function, build_ulam_function, floating_excess, sandwich_report, ulam_excess
from .harness import degenerate_sweep, floating_sweep, ulam_deficit_sweep
from .report import write_csv, write_json

log = logging.getLogger("ulamfloat")

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 1, 2

# flags that map onto config keys of the same name
MATH_FLAGS = {
    "family": str,
    "A": str,
    "b": str,
    "c": str,
    "n": str,
    "p": str,
    "scale": str,
    "slopes": str,
    "offsets": str,
    "beta": str,
    "mu": str,
    "body": str,
    "radius": str,
    "m": str,
    "axes": str,
    "half_width": str,
    "vertices": str,
    "which": str,
    "delta": str,
    "delta_start": str,
    "delta_ratio": str,
    "delta_count": str,
    "grid_extent": str,
    "grid_step": str,
    "x": str,
    "tolerance": str,
    "decay": str,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, math_flags=()):
    p.add_argument("--config", help="key = value run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--cache", help="cap cache CSV")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="random seed (Monte Carlo checks)")
    p.add_argument("--plot", choices=("png", "svg", "none"), default="png", help="figure format")
    for name in math_flags:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, action="append", help=f"config key {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ulamfloat", description="Ulam floating functions, floating functions and affine surface area.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fn_flags = ("family", "A", "b", "c", "n", "p", "scale", "slopes", "offsets", "beta", "mu")
    body_flags = ("body", "radius", "m", "axes", "half_width", "vertices")
    sweep_flags = ("delta", "delta_start", "delta_ratio", "delta_count", "tolerance", "decay", "grid_extent", "grid_step")

    p = sub.add_parser("asa", help="affine surface area of exp(-psi) or of a body")
    _common(p, fn_flags + body_flags)
    p.add_argument("--form", choices=("density", "boundary"), default="density")

    for name, what in (("ulam-eval", "Ulam floating function"), ("float-eval", "floating function")):
        p = sub.add_parser(name, help=f"evaluate the {what} at points --x")
        _common(p, fn_flags + ("delta", "x", "grid_extent", "grid_step"))

    p = sub.add_parser("converge", help="I and J sweeps against c_{n+1} as(f)")
    _common(p, fn_flags + sweep_flags)
    p = sub.add_parser("float-converge", help="floating-function sweep against d_{n+1} as(f)")
    _common(p, fn_flags + sweep_flags)

    p = sub.add_parser("bodies", help="floating body or metronoid deficits")
    _common(p, body_flags + ("which",) + sweep_flags)

    p = sub.add_parser("cap-ratio", help="ball cap height over barycenter depth")
    _common(p, ("radius", "m", "delta"))

    p = sub.add_parser("sandwich", help="psi <= Ulam floating <= floating on probe points")
    _common(p, fn_flags + ("delta", "x", "grid_step"))

    p = sub.add_parser("check", help="acceptance suites")
    _common(p)
    p.add_argument("--suite", choices=("quick", "full"), default="quick")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key in MATH_FLAGS:
        values = getattr(args, key, None)
        if values:
            cfg.set(key, values if len(values) > 1 else values[0])
    for key in ("threads", "seed", "cache", "out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.set(key, value)
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path | None:
    out = cfg.get("out")
    return Path(out) if out else None


def _cache(cfg: RunConfig):
    path = cfg.get("cache")
    return CapCache(path) if path else None


def _points(cfg: RunConfig, dim: int, default: np.ndarray | None = None) -> np.ndarray:
    values = cfg.floats("x")
    if not values:
        if default is not None:
            return default
        raise ConfigError("need evaluation points (--x)")
    if len(values) % dim:
        raise ConfigError(f"number of coordinates is not a multiple of n={dim}")
    return np.array(values).reshape(-1, dim)


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")


def _plot(args, out: Path | None, name: str, draw) -> None:
    if out is None or args.plot == "none":
        return
    draw(out / f"{name}.{args.plot}")


# -- subcommands -----------------------------------------------------------------------


def cmd_asa(args, cfg):
    if cfg.has("body"):
        _emit(f"{asa_body(make_body(cfg)):.7f}")
        return EXIT_OK
    psi = make_function(cfg)
    res = asa_density(psi) if args.form == "density" else asa_boundary(psi)
    _emit(f"{res.value:.7f}")
    out = _out_dir(cfg)
    if out:
        write_json(out / "asa.json", {"value": res.value, "err_estimate": res.err_estimate, "form": res.form})
    return EXIT_OK


def cmd_eval(args, cfg, kind):
    psi = make_function(cfg)
    delta = cfg.scalar("delta")
    x = _points(cfg, psi.dim)
    grid = cfg.slope_grid(psi.dim)
    cache = _cache(cfg)
    if grid is None:
        fn = ulam_excess if kind == "ulam" else floating_excess
        values = psi.value(x) + fn(psi, x, delta, cache=cache, threads=cfg.threads)
        slack = 0.0
    else:
        builder = build_ulam_function if kind == "ulam" else build_floating_function
        approx = builder(psi, delta, grid, probes=x, cache=cache, threads=cfg.threads)
        values, slack = approx(x), approx.grid_slack
    psi_values = psi.value(x)
    header = [f"x{i}" for i in range(psi.dim)] + ["psi", kind, "slack"]
    rows = [[*xi, p, v, slack] for xi, p, v in zip(x.tolist(), psi_values, values)]
    for row in rows:
        _emit(",".join(f"{v:.10g}" for v in row))
    out = _out_dir(cfg)
    if out:
        write_csv(out / f"{kind}_eval.csv", header, rows)
    return EXIT_OK


def _tolerance(cfg, default):
    return cfg.scalar("tolerance", default)


def _write_report(out, name, rep):
    write_csv(out / f"{name}.csv", ["delta", "raw", "scaled"], rep.rows)
    write_json(out / f"{name}.json", rep.summary())


def cmd_converge(args, cfg):
    from .plotting import plot_convergence

    psi = make_function(cfg)
    if cfg.get("family") == "smoothmax":
        return _converge_degenerate(args, cfg, psi)
    rep_i, rep_j = ulam_deficit_sweep(
        psi, cfg.deltas(), cfg.slope_grid(psi.dim), threads=cfg.threads, cache=_cache(cfg)
    )
    tol = _tolerance(cfg, 0.03 if psi.dim == 1 else 0.05)
    out = _out_dir(cfg)
    if out:
        _write_report(out, "converge_I", rep_i)
        _write_report(out, "converge_J", rep_j)
    _plot(args, out, "converge", lambda path: plot_convergence([rep_i, rep_j], path))
    for rep in (rep_i, rep_j):
        _emit(f"{rep.quantity}: limit={rep.limit:.7f} reference={rep.reference:.7f} rel_gap={rep.rel_gap:.3e}")
    ok = rep_i.rel_gap <= tol and rep_j.rel_gap <= tol
    return EXIT_OK if ok else EXIT_TOLERANCE


def _converge_degenerate(args, cfg, psi):
    """Smoothed max-affine input: the scaled J sequence must decay by the ``decay`` factor."""
    from .plotting import plot_convergence

    rep = degenerate_sweep(psi, cfg.deltas(), threads=cfg.threads, cache=_cache(cfg))
    out = _out_dir(cfg)
    if out:
        _write_report(out, "converge_J", rep)
    _plot(args, out, "converge", lambda path: plot_convergence(rep, path))
    first, last = rep.rows[0][2], rep.rows[-1][2]
    _emit(f"{rep.quantity}: first={first:.7f} last={last:.7f} ratio={last / first:.3e} reference={rep.reference:.7f}")
    return EXIT_OK if last <= cfg.scalar("decay", 0.5) * first else EXIT_TOLERANCE


def cmd_float_converge(args, cfg):
    from .plotting import plot_convergence

    psi = make_function(cfg)
    rep = floating_sweep(psi, cfg.deltas(), cfg.slope_grid(psi.dim), threads=cfg.threads, cache=_cache(cfg))
    tol = _tolerance(cfg, 0.03 if psi.dim == 1 else 0.05)
    out = _out_dir(cfg)
    if out:
        _write_report(out, "float_converge", rep)
    _plot(args, out, "float_converge", lambda path: plot_convergence(rep, path))
    _emit(f"{rep.quantity}: limit={rep.limit:.7f} reference={rep.reference:.7f} rel_gap={rep.rel_gap:.3e}")
    return EXIT_OK if rep.rel_gap <= tol else EXIT_TOLERANCE


def cmd_bodies(args, cfg):
    from .plotting import plot_deficits

    body = make_body(cfg)
    which = cfg.scalar("which", "floating", str)
    rows, fit = deficit_sweep(body, cfg.deltas(), which)
    reference = deficit_reference(body, which)
    out = _out_dir(cfg)
    if out:
        write_csv(out / "bodies.csv", ["delta", "deficit", "scaled"], [(r.delta, r.deficit, r.scaled) for r in rows])
        gap = abs(fit.limit - reference) / reference if reference else abs(fit.limit)
        write_json(
            out / "bodies.json",
            {"quantity": f"{which}_deficit", "reference": reference, "limit": fit.limit, "rel_gap": gap, "fit": fit.as_dict()},
        )
    _plot(args, out, "bodies", lambda path: plot_deficits(rows, fit, reference, path, label=which))
    for r in rows:
        _emit(f"{r.delta:.6e},{r.deficit:.10g},{r.scaled:.10g}")
    _emit(f"limit={fit.limit:.7f} reference={reference:.7f}")
    if cfg.has("tolerance") and reference > 0:
        return EXIT_OK if abs(fit.limit - reference) / reference <= cfg.scalar("tolerance") else EXIT_TOLERANCE
    return EXIT_OK


def cmd_cap_ratio(args, cfg):
    dh, drho, ratio = ball_cap_profile(cfg.scalar("radius", 1.0), cfg.scalar("m", 2, int), cfg.scalar("delta"))
    _emit(f"height={dh:.10g} barycenter_depth={drho:.10g} ratio={ratio:.7f}")
    return EXIT_OK


def cmd_sandwich(args, cfg):
    from .plotting import plot_sandwich

    psi = make_function(cfg)
    probes = None
    if psi.dim == 1:
        probes = psi.argmin()[0] + np.linspace(-0.5, 0.5, 11)[:, None]
    x = _points(cfg, psi.dim, probes)
    delta = cfg.scalar("delta") if cfg.has("delta") else cfg.deltas()[0]
    rep = sandwich_report(
        psi, delta, x, step=cfg.scalar("grid_step", 0.02), cache=_cache(cfg), threads=cfg.threads
    )
    out = _out_dir(cfg)
    rows = [[*xi, p, u, f, rep.slack] for xi, p, u, f in zip(x.tolist(), rep.psi_values, rep.ulam_values, rep.floating_values)]
    if out:
        header = (["x"] if psi.dim == 1 else [f"x{i}" for i in range(psi.dim)]) + ["psi", "ulam", "floating", "slack"]
        write_csv(out / "sandwich.csv", header, rows)
    if psi.dim == 1:
        _plot(args, out, "sandwich", lambda path: plot_sandwich(rep, path))
    lower, mid, upper = rep.as_tuple()
    _emit(f"violations lower={lower:.3e} mid={mid:.3e} upper={upper:.3e} slack={rep.slack:.3e}")
    return EXIT_OK if rep.holds else EXIT_TOLERANCE


def cmd_check(args, cfg):
    results = run_suite(args.suite)
    for r in results:
        _emit(r.line())
    out = _out_dir(cfg)
    if out:
        write_json(out / f"check_{args.suite}.json", [{"number": r.number, "passed": r.passed, "details": r.details} for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_TOLERANCE


COMMANDS = {
    "asa": cmd_asa,
    "ulam-eval": lambda a, c: cmd_eval(a, c, "ulam"),
    "float-eval": lambda a, c: cmd_eval(a, c, "floating"),
    "converge": cmd_converge,
    "float-converge": cmd_float_converge,
    "bodies": cmd_bodies,
    "cap-ratio": cmd_cap_ratio,
    "sandwich": cmd_sandwich,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ToleranceNotMet as exc:
        log.error("tolerance not met: %s", exc)
        return EXIT_TOLERANCE
    except (ConfigError, DomainError) as exc:
        sys.stderr.write(f"ulamfloat: error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
