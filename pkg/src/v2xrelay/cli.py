"""
Command-line front end.

    v2xrelay run <experiment> --config <path|fig3|fig4|fig5> --seed N --out DIR
                 [--trials N] [--l-min A --l-max B]
    v2xrelay validate --config <path>

Exit codes: 0 success, 2 config error, 3 infeasible scenario, 4 invariant
violation.  Failures print one JSON record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .channel_model import verify_snr_bound
from .config import ExperimentConfig, load_config
from .errors import ConfigError, InfeasibleBudget, InsufficientRelays, V2XError
from .simulation import (
    _NS_TRIAL,
    SweepResult,
    chain_sweep,
    compare_algorithms,
    derive_seed,
    draw_destinations,
    generate_population,
    orchestrate_multi_destination,
    random_bound_instance,
    sweep_capacity,
)

log = logging.getLogger("v2xrelay")

EXPERIMENTS = ("fig3", "fig4", "fig5", "chain-check", "bound-check", "orchestrate")
DEFAULT_CONFIG = {"fig3": "fig3", "fig4": "fig4"}
OUT_ENV = "V2XRELAY_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 2, 3, 4

SWEEP_HEADER = ["L", "label", "mean_capacity_kbps", "trials", "seed"]


class InvariantViolation(V2XError):
    """A checked invariant failed; outputs were still written."""

    def __init__(self, message: str, outputs=(), summary: dict | None = None):
        super().__init__(message)
        self.outputs = list(outputs)
        self.summary = summary or {}


@dataclass
class RunManifest:
    scenario: str
    experiment: str
    config_path: str
    config_digest: str
    master_seed: int
    tool_version: str
    timestamp: str
    output_dir: str
    output_dir_source: str
    outputs: list[str] = field(default_factory=list)
    effective_config: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    status: str = "ok"


# ----------------------------------------------------------------------
# output helpers
# ----------------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return "invalid"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".15g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sweep_rows(result: SweepResult, suffix: str = ""):
    for r in result.rows:
        yield [r.L, r.label + suffix, r.mean_capacity_kbps, r.trials, result.seed]


def invalid_cells(result: SweepResult, suffix: str = "") -> list[dict]:
    return [{"L": r.L, "label": r.label + suffix, "error": r.error} for r in result.rows if not r.valid]


def _require_some_valid(result: SweepResult):
    if result.rows and not any(r.valid for r in result.rows):
        raise InfeasibleBudget(f"every sweep cell failed; first error: {result.rows[0].error}")


def argmax_L(curve: dict[int, float | None]) -> int | None:
    valid = {L: c for L, c in curve.items() if c is not None}
    if not valid:
        return None
    return min(valid, key=lambda L: (-valid[L], L))


# ----------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------

def _sweep_variants(cfg: ExperimentConfig, seed: int, out: Path, variants) -> tuple[list[Path], dict]:
    rows, invalid, curves = [], [], {}
    for suffix, spec, scenario in variants:
        res = sweep_capacity(
            spec, scenario, cfg.sweep.L_values(), cfg.sweep.algorithms, cfg.sweep.trials, seed, cfg.allocation
        )
        _require_some_valid(res)
        rows.extend(sweep_rows(res, suffix))
        invalid.extend(invalid_cells(res, suffix))
        for label in res.labels:
            curves[label + suffix] = res.curve(label)
    path = write_csv(out / "results.csv", SWEEP_HEADER, rows)
    summary = {"invalid_cells": invalid, "argmax_L": {k: argmax_L(v) for k, v in curves.items()}}
    Ls = cfg.sweep.L_values()
    summary["first_vs_last"] = {
        k: {"L_first": Ls[0], "first": v[Ls[0]], "L_last": Ls[-1], "last": v[Ls[-1]]} for k, v in curves.items()
    }
    return [path], summary


def run_fig3(cfg: ExperimentConfig, seed: int, out: Path):
    ds = cfg.sweep.d_values or (cfg.population.d,)
    variants = [(f"@d={d:g}", replace(cfg.population, d=d), cfg.scenario) for d in ds]
    return _sweep_variants(cfg, seed, out, variants)


def run_fig4(cfg: ExperimentConfig, seed: int, out: Path):
    qs = cfg.sweep.source_powers or (cfg.scenario.source_power,)
    variants = [(f"@Q_src={q:g}", cfg.population, replace(cfg.scenario, source_power=q)) for q in qs]
    return _sweep_variants(cfg, seed, out, variants)


def run_fig5(cfg: ExperimentConfig, seed: int, out: Path):
    res, margins = compare_algorithms(
        cfg.population, cfg.scenario, cfg.sweep.L_values(), cfg.sweep.trials, seed, cfg.allocation
    )
    _require_some_valid(res)
    p1 = write_csv(out / "results.csv", SWEEP_HEADER, sweep_rows(res))
    p2 = write_csv(
        out / "margins.csv",
        ["L", "baseline_label", "margin_kbps"],
        ([m.L, m.baseline_label, m.margin_kbps] for m in margins),
    )
    curve = res.curve("proposed_b3")
    by_baseline = {}
    for m in margins:
        if m.margin_kbps is not None and m.L >= 2:
            by_baseline.setdefault(m.baseline_label, []).append(m.margin_kbps)
    summary = {
        "invalid_cells": invalid_cells(res),
        "proposed_b3_argmax_L": argmax_L(curve),
        "margin_range_kbps": {b: [min(v), max(v)] for b, v in by_baseline.items()},
    }
    return [p1, p2], summary


def run_chain_check(cfg: ExperimentConfig, seed: int, out: Path):
    rows = chain_sweep(
        cfg.population, cfg.scenario, cfg.chain.l_values, cfg.chain.instances, cfg.chain.b1_draws, seed, cfg.allocation
    )
    header = [
        "instance", "L", "c_b3_kbps", "c_b2_kbps", "c_b1_mean_kbps",
        "b1_draws_above_b2", "b3_dominates", "b2_beats_b1_mean", "chain_holds",
    ]
    path = write_csv(
        out / "chain.csv",
        header,
        (
            [r.instance, r.L, r.report.c_b3, r.report.c_b2, r.report.c_b1_mean, r.report.b1_draws_above_b2,
             r.report.b3_dominates, r.report.b2_beats_b1_mean, r.report.chain_holds]
            for r in rows
        ),
    )
    n = len(rows)
    b3_fail = [(r.instance, r.L) for r in rows if not r.report.b3_dominates]
    b2_fail = [(r.instance, r.L) for r in rows if not r.report.b2_beats_b1_mean]
    summary = {
        "rows": n,
        "b3_dominance_failures": b3_fail,
        "b2_vs_b1_mean_counterexamples": b2_fail,
        "b2_vs_b1_mean_pass_rate": 1 - len(b2_fail) / n,
    }
    if b3_fail:
        raise InvariantViolation(f"optimized allocation fell below equal power on {len(b3_fail)} rows", [path], summary)
    return [path], summary


def run_bound_check(cfg: ExperimentConfig, seed: int, out: Path):
    b = cfg.bound
    rng = np.random.default_rng(derive_seed(seed, 4))
    rows, failures = [], 0
    for i in range(b.instances):
        source, relays, dest = random_bound_instance(
            rng, b.l_max, b.coef_range, b.power_range, b.noise_max, b.source_power_range, b.y_sq_range
        )
        rep = verify_snr_bound(source, relays, dest)
        ok_steps = rep.all_steps_hold()
        failures += (not rep.holds) + (not ok_steps)
        rows.append([i, len(relays), rep.combined, rep.summed, rep.holds, ok_steps])
    path = write_csv(out / "bound.csv", ["instance", "L", "combined_snr", "summed_snr", "holds", "steps_hold"], rows)
    summary = {"instances": b.instances, "violations": failures}
    if failures:
        raise InvariantViolation(f"{failures} bound or step violations", [path], summary)
    return [path], summary


def run_orchestrate(cfg: ExperimentConfig, seed: int, out: Path):
    spec, sc, o = cfg.population, cfg.scenario, cfg.orchestrate
    pool = generate_population(replace(spec, seed=derive_seed(seed, _NS_TRIAL, 0)))
    dests = draw_destinations(spec, o.destinations, sc.dest_noise_var, seed)
    entries = orchestrate_multi_destination(
        sc.source(), dests, pool, list(range(o.l_min, o.l_max + 1)),
        lambda L: sc.budget(L, spec.mean_relay_power), cfg.allocation, sc.bandwidth_kbps,
    )
    rows = []
    for e in entries:
        if e.selection is None:
            rows.append([e.destination, None, None, "", "", e.error])
        else:
            rows.append([
                e.destination, e.L, e.capacity.kbps,
                " ".join(str(i) for i in e.selection.relay_ids),
                " ".join(fmt(p) for p in e.selection.powers), "",
            ])
    path = write_csv(out / "orchestrate.csv", ["destination", "L", "capacity_kbps", "relay_ids", "powers_w", "error"], rows)
    summary = {"failed_destinations": [e.destination for e in entries if e.error]}
    if entries and all(e.error for e in entries):
        raise InfeasibleBudget("no destination could be served")
    return [path], summary


RUNNERS: dict[str, Callable] = {
    "fig3": run_fig3,
    "fig4": run_fig4,
    "fig5": run_fig5,
    "chain-check": run_chain_check,
    "bound-check": run_bound_check,
    "orchestrate": run_orchestrate,
}


# ----------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------

def apply_overrides(cfg: ExperimentConfig, trials=None, l_min=None, l_max=None) -> ExperimentConfig:
    sweep = cfg.sweep
    if trials is not None:
        if trials < 1:
            raise ConfigError("--trials must be >= 1")
        sweep = replace(sweep, trials=trials)
    if l_min is not None or l_max is not None:
        lo = l_min if l_min is not None else sweep.l_min
        hi = l_max if l_max is not None else sweep.l_max
        if not 1 <= lo <= hi <= cfg.population.n_total:
            raise ConfigError(f"--l-min/--l-max must satisfy 1 <= {lo} <= {hi} <= {cfg.population.n_total}")
        sweep = replace(sweep, l_min=lo, l_max=hi, l_step=1, l_values=None)
    return replace(cfg, sweep=sweep)


def run_experiment(
    name: str,
    config: ExperimentConfig,
    seed: int,
    output_dir: Path,
    output_dir_source: str = "--out",
) -> RunManifest:
    """Run one named experiment, write its CSV files and ``manifest.json``.

    Raises :class:`InvariantViolation` (after writing outputs) when a checked
    invariant fails.
    """
    if name not in RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        scenario=config.name,
        experiment=name,
        config_path=config.source,
        config_digest=config.digest,
        master_seed=seed,
        tool_version=__version__,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        output_dir=str(output_dir),
        output_dir_source=output_dir_source,
        effective_config=config.effective(),
    )
    try:
        paths, summary = RUNNERS[name](config, seed, output_dir)
    except InvariantViolation as exc:
        manifest.status = "invariant_violation"
        manifest.outputs = [p.name for p in exc.outputs]
        manifest.summary = exc.summary
        _write_manifest(manifest, output_dir)
        raise
    manifest.outputs = [p.name for p in paths]
    manifest.summary = summary
    _write_manifest(manifest, output_dir)
    return manifest


def _write_manifest(manifest: RunManifest, output_dir: Path):
    with open(output_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _fail(code: int, exc: BaseException) -> int:
    record = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2xrelay", description="Cooperative relay selection experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="config file, or a bundled name (fig3, fig4, fig5)")
    run.add_argument("--seed", type=int, help="master seed (default: the config's seed)")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
    run.add_argument("--trials", type=int)
    run.add_argument("--l-min", type=int)
    run.add_argument("--l-max", type=int)

    val = sub.add_parser("validate", help="parse and validate a config file")
    val.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            return _fail(EXIT_CONFIG, exc)
        print(json.dumps({"config": cfg.source, "digest": cfg.digest, "effective": cfg.effective()}, indent=2, default=str))
        return EXIT_OK

    try:
        cfg = load_config(args.config or DEFAULT_CONFIG.get(args.experiment, "fig5"))
        cfg = apply_overrides(cfg, args.trials, args.l_min, args.l_max)
        seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {seed}")
        if args.out:
            out, source = Path(args.out), "--out"
        elif os.environ.get(OUT_ENV):
            out, source = Path(os.environ[OUT_ENV]), f"${OUT_ENV}"
        else:
            raise ConfigError(f"no output directory: pass --out or set ${OUT_ENV}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)

    try:
        manifest = run_experiment(args.experiment, cfg, seed, out, source)
    except InvariantViolation as exc:
        return _fail(EXIT_INVARIANT, exc)
    except (InfeasibleBudget, InsufficientRelays) as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (V2XError, ValueError) as exc:
        return _fail(EXIT_INVARIANT, exc)
    print(json.dumps({"experiment": manifest.experiment, "outputs": manifest.outputs, "summary": manifest.summary}, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
