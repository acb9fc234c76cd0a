"""Command-line front end.

Subcommands read a sectioned ``key = value`` config file, dispatch to
the computational modules, and write CSV tables (plus optional SVG
renderings of the same data).  Every CSV starts with a comment line
recording the tool version, a hash of the effective configuration, and
the seed, and reruns with the same configuration are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .aipd import discrepancy_report
from .calibration import (
    OBF,
    POCOCK,
    CalibrationTarget,
    InformationSchedule,
    SpendingFunction,
    build_classical_design,
    build_spending_design,
    calibrate_n_max,
    operating_characteristics,
)
from .design import (
    BoundarySet,
    OutcomeModel,
    StageSchedule,
    TrialDesign,
    path_from_data,
)
from .errors import ConfigError, SeqPosteriorError
from .likelihood import stopping_probabilities
from .posterior import NormalPrior, PosteriorGrid, conditional_grid, unconditional_posterior
from .simulate import SimConfig, expected_aipd_curve

_SECTIONS = {
    "design": {
        "group_sizes", "info_fractions", "n_max", "sigma",
        "boundaries_efficacy", "boundaries_futility",
        "calibration", "alpha", "power", "theta_null", "theta_alt", "futility",
    },
    "prior": {"mu0", "tau0_sq"},
    "analysis": {"xbars", "level"},
    "simulation": {"replicates", "seed", "theta_min", "theta_max", "theta_step"},
    "output": {"directory", "svg"},
}

_CALIBRATIONS = {
    "classical_obf": ("classical", OBF),
    "classical_pocock": ("classical", POCOCK),
    "spending_obf": ("spending", OBF),
    "spending_pocock": ("spending", POCOCK),
}


@dataclass
class RunConfig:
    """Validated run configuration; one design route, optional blocks."""

    sigma: float
    group_sizes: tuple[int, ...] | None = None
    info_fractions: tuple[float, ...] | None = None
    n_max: int | None = None
    boundaries: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    calibration: str | None = None
    alpha: float | None = None
    power: float | None = None
    theta_null: float = 0.0
    theta_alt: float | None = None
    futility: str = "none"
    mu0: float | None = None
    tau0_sq: float | None = None
    xbars: tuple[float, ...] | None = None
    level: float = 0.95
    replicates: int = 10_000
    seed: int = 0
    theta_range: tuple[float, float, float] | None = None
    out_dir: Path = field(default_factory=lambda: Path("."))
    svg: bool = False
    raw_text: str = ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:12]


def _parse_floats(raw: str, where: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {raw!r}", where) from exc


def _get_typed(section, key, caster, where, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError("missing required key", where)
        return default
    try:
        return caster(section[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value {section[key]!r}", where) from exc


def load_config(path: Path) -> RunConfig:
    """Parse and fully validate a config file; any unknown content rejects."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    parser = configparser.ConfigParser(delimiters=("=",), inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}", str(path)) from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError("unknown section", f"[{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError("unknown key", f"[{section}] {key}")

    if "design" not in parser:
        raise ConfigError("missing required section", "[design]")
    d = parser["design"]
    cfg = RunConfig(sigma=_get_typed(d, "sigma", float, "[design] sigma", required=True),
                    raw_text=text)
    if cfg.sigma <= 0:
        raise ConfigError("sigma must be positive", "[design] sigma")

    if "group_sizes" in d and "info_fractions" in d:
        raise ConfigError("give either group_sizes or info_fractions, not both",
                          "[design] group_sizes")
    if "group_sizes" in d:
        sizes = _parse_floats(d["group_sizes"], "[design] group_sizes")
        if any(s != int(s) or s < 1 for s in sizes):
            raise ConfigError("group sizes must be positive integers", "[design] group_sizes")
        cfg.group_sizes = tuple(int(s) for s in sizes)
    elif "info_fractions" in d:
        cfg.info_fractions = _parse_floats(d["info_fractions"], "[design] info_fractions")
        cfg.n_max = _get_typed(d, "n_max", int, "[design] n_max")
    else:
        raise ConfigError("need group_sizes or info_fractions", "[design]")

    has_explicit = "boundaries_efficacy" in d
    has_calibration = "calibration" in d
    if has_explicit == has_calibration:
        raise ConfigError("exactly one of explicit boundaries or a calibration spec required",
                          "[design]")
    if has_explicit:
        eff = _parse_floats(d["boundaries_efficacy"], "[design] boundaries_efficacy")
        if "boundaries_futility" in d:
            fut = _parse_floats(d["boundaries_futility"], "[design] boundaries_futility")
        else:
            fut = tuple([-math.inf] * (len(eff) - 1) + [eff[-1]])
        if len(fut) != len(eff):
            raise ConfigError("boundary vectors differ in length", "[design] boundaries_futility")
        cfg.boundaries = (fut, eff)
    else:
        name = d["calibration"].strip().lower()
        if name not in _CALIBRATIONS:
            raise ConfigError(f"unknown calibration {name!r} (choose from "
                              f"{sorted(_CALIBRATIONS)})", "[design] calibration")
        cfg.calibration = name
        cfg.alpha = _get_typed(d, "alpha", float, "[design] alpha", required=True)
        cfg.power = _get_typed(d, "power", float, "[design] power")
        cfg.theta_alt = _get_typed(d, "theta_alt", float, "[design] theta_alt")
        cfg.theta_null = _get_typed(d, "theta_null", float, "[design] theta_null", default=0.0)
        cfg.futility = _get_typed(d, "futility", str, "[design] futility", default="none")
        if cfg.futility not in ("none", "nonbinding_mirror", "binding"):
            raise ConfigError(f"unknown futility mode {cfg.futility!r}", "[design] futility")

    if "prior" in parser:
        p = parser["prior"]
        cfg.mu0 = _get_typed(p, "mu0", float, "[prior] mu0", required=True)
        cfg.tau0_sq = _get_typed(p, "tau0_sq", float, "[prior] tau0_sq", required=True)
        if cfg.tau0_sq <= 0:
            raise ConfigError("tau0_sq must be positive", "[prior] tau0_sq")

    if "analysis" in parser:
        a = parser["analysis"]
        if "xbars" not in a:
            raise ConfigError("missing required key", "[analysis] xbars")
        cfg.xbars = _parse_floats(a["xbars"], "[analysis] xbars")
        cfg.level = _get_typed(a, "level", float, "[analysis] level", default=0.95)
        if not 0.0 < cfg.level < 1.0:
            raise ConfigError("level must lie in (0, 1)", "[analysis] level")

    if "simulation" in parser:
        s = parser["simulation"]
        cfg.replicates = _get_typed(s, "replicates", int, "[simulation] replicates",
                                    default=10_000)
        cfg.seed = _get_typed(s, "seed", int, "[simulation] seed", default=0)
        tmin = _get_typed(s, "theta_min", float, "[simulation] theta_min")
        tmax = _get_typed(s, "theta_max", float, "[simulation] theta_max")
        tstep = _get_typed(s, "theta_step", float, "[simulation] theta_step")
        if None in (tmin, tmax, tstep):
            raise ConfigError("theta_min, theta_max and theta_step are all required",
                              "[simulation]")
        if not (tstep > 0 and tmax > tmin):
            raise ConfigError("need theta_max > theta_min and theta_step > 0", "[simulation]")
        cfg.theta_range = (tmin, tmax, tstep)

    if "output" in parser:
        o = parser["output"]
        if "directory" in o:
            cfg.out_dir = Path(o["directory"])
        cfg.svg = _get_typed(o, "svg", lambda v: v.strip().lower() in ("1", "true", "yes"),
                             "[output] svg", default=False)
    return cfg


def _require(cfg: RunConfig, attr: str, where: str):
    if getattr(cfg, attr) is None:
        raise ConfigError(f"this subcommand needs {where}", where)


def _build_design(cfg: RunConfig) -> tuple[TrialDesign, dict]:
    """Design from config, plus calibration metadata when applicable."""
    meta: dict = {}
    if cfg.group_sizes is not None:
        schedule = StageSchedule(cfg.group_sizes)
    else:
        _require(cfg, "n_max", "[design] n_max")
        schedule = InformationSchedule(cfg.info_fractions).schedule(cfg.n_max)
    if cfg.boundaries is not None:
        fut, eff = cfg.boundaries
        return TrialDesign(schedule, BoundarySet(fut, eff), OutcomeModel(cfg.sigma)), meta

    method, kind = _CALIBRATIONS[cfg.calibration]
    if method == "classical" or cfg.n_max is not None or cfg.group_sizes is not None:
        # sample size fixed by the schedule; calibrate the boundary scale
        if cfg.group_sizes is None and cfg.n_max is None:
            raise ConfigError("calibrating n_max needs power and theta_alt", "[design]")
    target = CalibrationTarget(
        alpha=cfg.alpha,
        power=cfg.power if cfg.power is not None else max(0.5, cfg.alpha * 2),
        theta_alt=cfg.theta_alt if cfg.theta_alt is not None else cfg.theta_null + 1.0,
        theta_null=cfg.theta_null,
        futility_mode=cfg.futility,
    )
    if cfg.group_sizes is None and cfg.power is not None and cfg.theta_alt is not None \
            and cfg.n_max is None:
        fn = SpendingFunction(kind, cfg.alpha)
        n_max, _ = calibrate_n_max(fn, InformationSchedule(cfg.info_fractions), target,
                                   cfg.sigma, method=method)
        meta["n_max"] = n_max
        schedule = InformationSchedule(cfg.info_fractions).schedule(n_max)
    if method == "classical":
        design = build_classical_design(kind, schedule, target, cfg.sigma)
    else:
        fracs = tuple(n / schedule.max_sample_size for n in schedule.cumulative_sizes)
        design = build_spending_design(SpendingFunction(kind, cfg.alpha),
                                       InformationSchedule(fracs),
                                       schedule.max_sample_size, cfg.sigma, cfg.theta_null)
    meta["achieved_alpha"] = stopping_probabilities(design, cfg.theta_null).total_efficacy
    if cfg.theta_alt is not None:
        meta["achieved_power"] = stopping_probabilities(design, cfg.theta_alt).total_efficacy
    return design, meta


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence],
               cfg: RunConfig, footer: Sequence[str] = ()) -> None:
    lines = [f"# seqposterior {__version__} config={cfg.config_hash()} seed={cfg.seed}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    lines.extend(footer)
    path.write_text("\n".join(lines) + "\n")


def _svg_plot(path: Path, series: list[tuple[str, np.ndarray, np.ndarray]],
              x_label: str, y_label: str) -> None:
    """Minimal polyline SVG of one or more (label, x, y) series."""
    width, height, margin = 640, 420, 56
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(min(ys.min(), 0.0)), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    colors = ["#1b6ca8", "#c0392b", "#27803b", "#8e44ad"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" font-size="11" '
                     f'text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{margin - 6}" y="{sy(yv):.1f}" font-size="11" '
                     f'text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{height / 2}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 16 {height / 2})">{y_label}</text>')
    for i, (label, x, y) in enumerate(series):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        color = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{width - margin - 6}" y="{margin + 16 + 16 * i}" font-size="12" '
                     f'text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def cmd_analyze(cfg: RunConfig) -> int:
    _require(cfg, "xbars", "[analysis] xbars")
    _require(cfg, "mu0", "[prior]")
    design, _ = _build_design(cfg)
    prior = NormalPrior(cfg.mu0, cfg.tau0_sq)
    path_from_data(design, cfg.xbars)  # reject sequences continuing past a stop
    rows = []
    grid_rows = None
    for upto in range(1, len(cfg.xbars) + 1):
        data = cfg.xbars[:upto]
        path = path_from_data(design, data)
        rep = discrepancy_report(prior, data, path, design, level=cfg.level)
        rows.append([rep.stage, rep.xbar, rep.decision, rep.aipd, rep.ovci_pct,
                     rep.cpui_pct, rep.pvr, rep.mean_diff, rep.mode_diff, rep.bayes_factor])
        if upto == len(cfg.xbars):
            grid, cond = conditional_grid(prior, data, path, design)
            post = unconditional_posterior(prior, data[-1], design.n_cum[upto - 1], cfg.sigma)
            pu = PosteriorGrid.from_normal(grid, post)
            prior_log = -0.5 * ((grid.points - cfg.mu0) ** 2 / cfg.tau0_sq) \
                - 0.5 * math.log(2 * math.pi * cfg.tau0_sq)
            grid_rows = (grid.points, pu.density(), cond.density(), np.exp(prior_log))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "analyze.csv",
               ["stage", "xbar", "decision", "aipd", "ovci_pct", "cpui_pct", "pvr",
                "mean_diff", "mode_diff", "bayes_factor"], rows, cfg)
    x, pu_d, pc_d, pr_d = grid_rows
    _write_csv(cfg.out_dir / "posterior_grid.csv",
               ["theta", "pdf_unconditional", "pdf_conditional", "pdf_prior"],
               list(zip(x, pu_d, pc_d, pr_d)), cfg)
    if cfg.svg:
        _svg_plot(cfg.out_dir / "posteriors.svg",
                  [("unconditional", x, pu_d), ("conditional", x, pc_d), ("prior", x, pr_d)],
                  "theta", "density")
    return 0


def cmd_boundaries(cfg: RunConfig) -> int:
    if cfg.calibration is None:
        raise ConfigError("boundaries subcommand needs a calibration spec",
                          "[design] calibration")
    design, meta = _build_design(cfg)
    rows = []
    for s in range(design.n_stages):
        e = design.boundaries.efficacy[s]
        f = design.boundaries.futility[s]
        n = design.n_cum[s]
        rows.append([s + 1, n, e, f, (e - cfg.theta_null) * math.sqrt(n) / cfg.sigma])
    footer = [f"# achieved_alpha={meta.get('achieved_alpha', float('nan')):.6g}"]
    if "achieved_power" in meta:
        footer.append(f"# achieved_power={meta['achieved_power']:.6g}")
    if "n_max" in meta:
        footer.append(f"# n_max={meta['n_max']}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "boundaries.csv",
               ["stage", "n_cum", "efficacy", "futility", "z_scale"], rows, cfg, footer)
    return 0


def _theta_grid(cfg: RunConfig) -> np.ndarray:
    tmin, tmax, tstep = cfg.theta_range
    n = int(math.floor((tmax - tmin) / tstep + 0.5)) + 1
    return tmin + tstep * np.arange(n)


def cmd_operating(cfg: RunConfig) -> int:
    if cfg.theta_range is None:
        raise ConfigError("operating subcommand needs a [simulation] theta grid",
                          "[simulation]")
    design, _ = _build_design(cfg)
    grid = _theta_grid(cfg)
    table = operating_characteristics(design, grid)
    rows = [[p.theta, p.prob_efficacy, p.prob_futility, p.ess] for p in table]
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "operating.csv",
               ["theta", "prob_efficacy", "prob_futility", "ess"], rows, cfg)
    if cfg.svg:
        _svg_plot(cfg.out_dir / "operating.svg",
                  [("ess", grid, np.array([p.ess for p in table]))],
                  "theta", "expected sample size")
    return 0


def cmd_expected_aipd(cfg: RunConfig) -> int:
    if cfg.theta_range is None:
        raise ConfigError("expected-aipd subcommand needs a [simulation] block",
                          "[simulation]")
    _require(cfg, "mu0", "[prior]")
    design, _ = _build_design(cfg)
    prior = NormalPrior(cfg.mu0, cfg.tau0_sq)
    grid = _theta_grid(cfg)
    sim = SimConfig(replicates=cfg.replicates, seed=cfg.seed, theta_grid=tuple(grid))
    curve = expected_aipd_curve(design, prior, sim)
    rows = list(zip(curve.theta, curve.dbar, curve.std_err))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "expected_aipd.csv", ["theta", "dbar", "std_err"], rows, cfg,
               footer=[f"# auc={curve.auc:.6g}"])
    if cfg.svg:
        _svg_plot(cfg.out_dir / "expected_aipd.svg", [("expected AIPD", curve.theta, curve.dbar)],
                  "theta", "expected AIPD")
    return 0


_COMMANDS = {
    "analyze": cmd_analyze,
    "boundaries": cmd_boundaries,
    "operating": cmd_operating,
    "expected-aipd": cmd_expected_aipd,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqposterior",
        description="Posterior analysis and boundary evaluation for group sequential trials",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None, help="output directory override")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--replicates", type=int, default=None, help="replicate override")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.svg:
            cfg.svg = True
        if args.seed is not None:
            cfg.seed = args.seed
        if args.replicates is not None:
            cfg.replicates = args.replicates
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SeqPosteriorError, ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
