"""Command-line experiment runner.

Usage::

    condthin ratio-cdf  --config cfg.json [--output out.csv] [--seed N] [--trials N]
    condthin coverage   --config cfg.json ...
    condthin generative --config cfg.json ...
    condthin validate   [--quick] [--output report.csv]

The config file is a flat JSON object whose keys mirror :class:`ExperimentSpec`
and :class:`~condthin.montecarlo.ScenarioConfig` (``lambda`` is accepted for
``lam``). Command-line flags override file values. Every output starts with
``#`` comment lines holding the tool version and the fully resolved config.

Exit codes: 0 success, 1 validation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from condthin import __version__, analytic
from condthin.montecarlo import (
    ConfigError,
    ScenarioConfig,
    estimate_coverage,
    estimate_generative_coverage,
    estimate_ratio_distribution,
)
from condthin.stats import ecdf_at, ks_distance

log = logging.getLogger("condthin")

COMMANDS = ("ratio-cdf", "coverage", "generative", "validate")
RATIO_GRID = np.linspace(1.0, 6.0, 200)
ALPHA4_CHECK_RTOL = 1e-9

_SCENARIO_KEYS = {"lam", "p", "alpha", "window_radius", "guard_fraction", "users_per_cell", "seed", "trials"}
_SPEC_KEYS = {"command", "p_list", "threshold_grid_db", "output_path", "format", "workers"}


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    p_list: tuple = (0.3, 0.5, 0.7, 1.0)
    threshold_grid_db: tuple = (-10.0, 20.0, 31)
    output_path: str | None = None
    format: str = "csv"
    workers: int = 1
    quick: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        object.__setattr__(self, "p_list", tuple(float(p) for p in self.p_list))
        if not self.p_list:
            raise ConfigError("p_list is empty")
        low = 0.0 if self.command == "coverage" else np.nextafter(0.0, 1.0)
        for p in self.p_list:
            if not low <= p <= 1.0:
                raise ConfigError(f"p={p} is outside the allowed range for {self.command}")
        try:
            lo, hi, steps = self.threshold_grid_db
        except (TypeError, ValueError):
            raise ConfigError("threshold_grid_db must be [min_db, max_db, steps]") from None
        if int(steps) != steps:
            raise ConfigError("threshold grid steps must be an integer")
        if not (float(lo) < float(hi) and int(steps) >= 2):
            raise ConfigError("threshold grid needs min < max and at least 2 steps")
        object.__setattr__(self, "threshold_grid_db", (float(lo), float(hi), int(steps)))
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.format!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")

    @property
    def thresholds_db(self) -> np.ndarray:
        lo, hi, steps = self.threshold_grid_db
        return np.linspace(lo, hi, steps)

    @property
    def thresholds(self) -> np.ndarray:
        return 10.0 ** (self.thresholds_db / 10.0)

    def header(self) -> dict:
        # output_path and workers are deliberately absent: they do not affect results
        d = {"tool": "condthin", "version": __version__, "command": self.command}
        d["scenario"] = self.scenario.resolved()
        d["p_list"] = list(self.p_list)
        d["threshold_grid_db"] = list(self.threshold_grid_db)
        d["format"] = self.format
        return d


def _num(x) -> str:
    return repr(float(x))


def _render(spec: ExperimentSpec, columns: list[str], rows: list[list], notes=()) -> str:
    buf = io.StringIO()
    buf.write(f"# condthin {__version__}\n")
    buf.write("# config: " + json.dumps(spec.header(), sort_keys=True) + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    if spec.format == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    else:
        objs = [
            {c: (float(v) if isinstance(v, (float, np.floating)) else v) for c, v in zip(columns, row)}
            for row in rows
        ]
        buf.write(json.dumps(objs, indent=1, allow_nan=False))
        buf.write("\n")
    return buf.getvalue()


def _emit(spec: ExperimentSpec, text: str) -> None:
    if spec.output_path is None:
        sys.stdout.write(text)
        return
    tmp = spec.output_path + ".partial"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, spec.output_path)


def _check_writable(path: str | None) -> None:
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write output to {path!r}")


def cmd_ratio_cdf(spec: ExperimentSpec) -> str:
    """Analytic and empirical CDF of the distance ratio on [1, 6] for each p."""
    _check_writable(spec.output_path)
    rows, notes = [], []
    for p in spec.p_list:
        dist = estimate_ratio_distribution(replace(spec.scenario, p=p), workers=spec.workers)
        ks = ks_distance(dist, lambda r, p=p: analytic.ratio_cdf(r, p))
        exact = analytic.ratio_cdf(RATIO_GRID, p)
        emp = ecdf_at(dist, RATIO_GRID)
        notes.append(
            f"p={p!r} n={dist.n} ks={ks!r} redraws={dist.metadata['redraw_count']} "
            f"regenerations={dist.metadata['regenerations']}"
        )
        rows += [[p, r, a, e, ks] for r, a, e in zip(RATIO_GRID, exact, emp)]
    text = _render(spec, ["p", "r", "analytic_cdf", "empirical_cdf", "ks_distance"], rows, notes)
    _emit(spec, text)
    return text


def cmd_coverage(spec: ExperimentSpec) -> str:
    """Typical-UE coverage: quadrature formula next to Monte Carlo estimates."""
    _check_writable(spec.output_path)
    t, t_db = spec.thresholds, spec.thresholds_db
    alpha = spec.scenario.alpha
    rows = []
    for p in spec.p_list:
        exact = analytic.coverage_probability(alpha, t, p)
        if alpha == 4.0:
            closed = analytic.coverage_probability_alpha4(t, p)
            err = float(np.max(np.abs(exact / closed - 1.0)))
            if err > ALPHA4_CHECK_RTOL:
                raise RuntimeError(f"quadrature disagrees with the alpha=4 closed form ({err:.3g})")
        curve = estimate_coverage(replace(spec.scenario, p=p), t, workers=spec.workers)
        rows += [
            [p, db, x, a, e, lo, hi]
            for db, x, a, e, lo, hi in zip(t_db, t, exact, curve.values, curve.ci_lo, curve.ci_hi)
        ]
    cols = ["p", "threshold_db", "threshold", "analytic", "empirical", "ci_lo", "ci_hi"]
    text = _render(spec, cols, rows)
    _emit(spec, text)
    return text


def cmd_generative(spec: ExperimentSpec) -> str:
    """Generative-model coverage against the formula at the same p and at p = 1."""
    _check_writable(spec.output_path)
    t, t_db = spec.thresholds, spec.thresholds_db
    alpha = spec.scenario.alpha
    baseline = analytic.coverage_probability(alpha, t, 1.0)
    rows, notes = [], []
    for p in spec.p_list:
        curve = estimate_generative_coverage(replace(spec.scenario, p=p), t, workers=spec.workers)
        exact = analytic.coverage_probability(alpha, t, p)
        notes.append(f"p={p!r} ue_samples={curve.n} serving_mismatches=0")
        rows += [
            [p, db, x, g, lo, hi, a, b, g - a, g - b]
            for db, x, g, lo, hi, a, b in zip(
                t_db, t, curve.values, curve.ci_lo, curve.ci_hi, exact, baseline
            )
        ]
    cols = [
        "p", "threshold_db", "threshold", "generative", "ci_lo", "ci_hi",
        "analytic", "analytic_baseline", "gap_analytic", "gap_baseline",
    ]
    text = _render(spec, cols, rows, notes)
    _emit(spec, text)
    return text


def cmd_validate(spec: ExperimentSpec, overrides: dict | None = None) -> int:
    """Run the acceptance suite; exit status 0 iff every criterion passes."""
    from condthin.validation import Runner, Scale, CRITERIA

    _check_writable(spec.output_path)
    kw = dict(overrides or {})
    kw["workers"] = spec.workers
    scale = Scale.quick(**kw) if spec.quick else Scale(**kw)
    runner = Runner(scale)
    results = []
    for k in CRITERIA:
        res = runner.run(k)
        log.info(res.line())
        print(res.line(), file=sys.stderr)
        results.append(res)
    rows = [
        [r.number, r.name, "pass" if r.passed else "fail", float(r.measured), float(r.tolerance), r.seconds, r.detail]
        for r in results
    ]
    cols = ["criterion", "name", "status", "measured", "tolerance", "seconds", "detail"]
    notes = [f"scale: {json.dumps(asdict(scale), sort_keys=True)}"]
    _emit(spec, _render(spec, cols, rows, notes))
    return 0 if all(r.passed for r in results) else 1


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if "lambda" in data:
        if "lam" in data:
            raise ConfigError("give either 'lambda' or 'lam', not both")
        data["lam"] = data.pop("lambda")
    unknown = set(data) - _SCENARIO_KEYS - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_spec(args: argparse.Namespace) -> tuple[ExperimentSpec, dict]:
    data = load_config(args.config) if args.config else {}
    if "command" in data and data["command"] != args.command:
        log.warning("config command %r overridden by %r", data["command"], args.command)
    for flag in ("seed", "trials", "workers"):
        if getattr(args, flag) is not None:
            data[flag] = getattr(args, flag)
    if args.output is not None:
        data["output_path"] = args.output
    if args.format is not None:
        data["format"] = args.format
    scenario = {k: data[k] for k in _SCENARIO_KEYS if k in data}
    spec_kw = {k: data[k] for k in _SPEC_KEYS - {"command"} if k in data}
    overrides = {}
    if args.command == "validate":
        # validate runs its own scenarios; only seed and trials carry over
        for k in ("seed", "trials"):
            if k in scenario:
                overrides[k] = int(scenario.pop(k))
    try:
        spec = ExperimentSpec(
            command=args.command,
            scenario=ScenarioConfig(**scenario),
            quick=args.quick,
            **spec_kw,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return spec, overrides


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="condthin", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--output", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    parser.add_argument("--quick", action="store_true", help="validate: 10^4 trials, tolerances x3")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec, overrides = build_spec(args)
        _check_writable(spec.output_path)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"condthin: error: {exc}", file=sys.stderr)
        return 2
    try:
        if spec.command == "validate":
            return cmd_validate(spec, overrides)
        {"ratio-cdf": cmd_ratio_cdf, "coverage": cmd_coverage, "generative": cmd_generative}[spec.command](spec)
    except (ConfigError, OSError) as exc:
        print(f"condthin: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
