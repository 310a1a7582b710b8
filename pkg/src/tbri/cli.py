"""Command-line driver: ``tbri {spectrum,sf,pr,therm,sweep}``.

Exit codes: 0 success, 2 invalid input, 3 computation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import basis_dimension, enumerate_basis
from .ensemble import PlanError, SweepPlan, run_sweep
from .hamiltonian import OPERATOR_SUMS, SpMode, assemble, connectivity_bounds, draw_disorder, row_connectivity
from .spectral import DEFAULT_MAX_DIMENSION, diagonalize, dos

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3

log = logging.getLogger("tbri")

FULL_SF_GRID = (0.01, 0.02, 0.04, 0.06, 0.1, 0.14, 0.18, 0.26, 0.31, 0.35, 0.4)
DESK_SF_GRID = tuple(float(v) for v in np.round(np.geomspace(0.01, 0.5, 14), 6))
PROBES = (("low", 0.03), ("lower", 0.12), ("mid", 0.45))


def _log_grid(lo, hi, n):
    return tuple(float(v) for v in np.round(np.geomspace(lo, hi, n), 6))


# Named sweep templates.  Desk variants run in minutes on one core; full
# variants use the full N=6, M=11 space (8008 states) and take hours.
PRESETS: dict[str, dict[str, dict]] = {
    "sf-shape": {
        "full": dict(n_particles=6, n_levels=11, v_grid=FULL_SF_GRID, n_realizations=100, analyses=("sf",)),
        "desk": dict(n_particles=4, n_levels=9, v_grid=DESK_SF_GRID, n_realizations=50, analyses=("sf",)),
    },
    "sf-width": {
        "full": dict(n_particles=6, n_levels=11, v_grid=_log_grid(0.01, 1.0, 15), n_realizations=100,
                      analyses=("sf",)),
        "desk": dict(n_particles=4, n_levels=9, v_grid=DESK_SF_GRID, n_realizations=50, analyses=("sf",)),
    },
    "pr-map": {
        "full": dict(n_particles=6, n_levels=11, v_grid=_log_grid(0.01, 1.0, 12), n_realizations=10,
                      analyses=("pr",)),
        "desk": dict(n_particles=4, n_levels=9, v_grid=_log_grid(0.01, 2.0, 12), n_realizations=20,
                     analyses=("pr",)),
    },
    "ond": {
        "full": dict(n_particles=6, n_levels=11, v_grid=(0.04, 0.1, 0.4), n_realizations=500,
                      analyses=("therm",), energy_windows=PROBES, sp_seed=7),
        "desk": dict(n_particles=4, n_levels=9, v_grid=(0.04, 0.33, 1.33), n_realizations=200,
                     analyses=("therm",), energy_windows=PROBES, sp_seed=12345),
    },
    "fluctuations": {
        "full": dict(n_particles=6, n_levels=11, v_grid=(0.04, 0.1, 0.4), n_realizations=500,
                      analyses=("therm",), energy_windows=PROBES, sp_seed=7),
        "desk": dict(n_particles=4, n_levels=9, v_grid=(0.04, 0.33, 1.33), n_realizations=200,
                     analyses=("therm",), energy_windows=PROBES, sp_seed=12345),
    },
    "classifier": {
        "full": dict(n_particles=6, n_levels=11, v_grid=_log_grid(0.01, 1.0, 12), n_realizations=20,
                      analyses=("therm", "pr"), energy_windows=PROBES, sp_seed=7),
        "desk": dict(n_particles=4, n_levels=9, v_grid=_log_grid(0.01, 2.0, 12), n_realizations=50,
                     analyses=("therm", "pr"), energy_windows=PROBES, sp_seed=12345),
    },
}


def preset_plan(name: str, scale: str = "desk", **overrides) -> SweepPlan:
    try:
        base = dict(PRESETS[name][scale])
    except KeyError:
        raise PlanError(f"unknown preset {name!r}/{scale!r}; presets: {sorted(PRESETS)}, scales: desk, full") from None
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SweepPlan(**base)


class ValidationError(ValueError):
    pass


def _validate(n: int, m: int, v: float | None = None, cap: int = DEFAULT_MAX_DIMENSION) -> None:
    if n < 1:
        raise ValidationError(f"--n must be at least 1 (got {n})")
    if m < 2:
        raise ValidationError(f"--m must be at least 2 (got {m})")
    if v is not None and not (math.isfinite(v) and v >= 0):
        raise ValidationError(f"--v must be finite and non-negative (got {v})")
    dim = basis_dimension(n, m)
    if dim > cap:
        raise ValidationError(f"basis dimension C({n + m - 1},{n}) = {dim} exceeds the cap {cap}; "
                              "lower --n or --m, or raise --max-dimension")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(summary: dict, out: Path) -> None:
    io.write_json(out / "summary.json", summary)
    sys.stdout.write(io.json_text(summary))


def cmd_spectrum(args) -> int:
    _validate(args.n, args.m, args.v, args.max_dimension)
    out = _out(args)
    basis = enumerate_basis(args.n, args.m)
    model = draw_disorder(args.n, args.m, args.v, args.seed, sp_mode=args.sp_mode, sp_seed=args.sp_seed,
                          operator_sum=args.operator_sum)
    h = assemble(model, basis)
    spec = diagonalize(h, max_dimension=args.max_dimension)
    io.write_matrix(out / "matrix", h, model)
    (out / "eigenvalues.csv").write_text(io.eigenvalues_text(spec.eigenvalues))
    (out / "basis.txt").write_text(basis.to_text())
    hist = dos(spec.eigenvalues, args.bins)
    io.write_csv(out / "dos.csv", ("e_lo", "e_hi", "count", "density"),
                 zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts, hist.density))
    conn = row_connectivity(h)
    _emit({"dimension": spec.dimension, "connectivity_min": int(conn.min()), "connectivity_max": int(conn.max()),
           "connectivity_bounds": list(connectivity_bounds(args.n, args.m)),
           "e_min": float(spec.eigenvalues[0]), "e_max": float(spec.eigenvalues[-1]),
           "dos_mean": hist.mean, "dos_variance": hist.variance, "dos_skewness": hist.skewness,
           **io.model_header(model)}, out)
    return EXIT_OK


def _single_v_plan(args, analyses, **extra) -> SweepPlan:
    _validate(args.n, args.m, args.v, args.max_dimension)
    return SweepPlan(n_particles=args.n, n_levels=args.m, v_grid=(args.v,), n_realizations=args.realizations,
                     base_seed=args.seed, sp_mode=args.sp_mode, analyses=analyses, sp_seed=args.sp_seed,
                     operator_sum=args.operator_sum, max_dimension=args.max_dimension, **extra).validate()


def _run_plan(plan: SweepPlan, out: Path, workers) -> tuple:
    report, agg = run_sweep(plan, out / "store", workers)
    agg.write(out)
    if report.partial:
        log.error("%d realization(s) failed: %s", len(report.failed), ", ".join(report.failed[:5]))
    return report, agg


def cmd_sf(args) -> int:
    plan = _single_v_plan(args, ("sf",), sf_window=args.window, sf_bins=args.bins)
    out = _out(args)
    report, agg = _run_plan(plan, out, args.workers)
    c = agg.data["crossover"]
    _emit({"v": args.v, "preferred_shape": c["shapes"][0], "d_f_mean": c["d_f_mean"], "d_f_std": c["d_f_std"],
           "crossover_estimate": c["v_c"], "crossover_band": c["band"], "realizations": plan.n_realizations,
           "partial": report.partial}, out)
    return EXIT_FAILED if report.partial else EXIT_OK


def cmd_pr(args) -> int:
    plan = _single_v_plan(args, ("pr", "spectrum"), classifier_bins=args.bins)
    out = _out(args)
    report, agg = _run_plan(plan, out, args.workers)
    _emit({"v": args.v, "realizations": plan.n_realizations, "crossover_estimate": agg.data["crossover"]["v_c"],
           "partial": report.partial}, out)
    return EXIT_FAILED if report.partial else EXIT_OK


def _parse_windows(text: str | None):
    if not text:
        return PROBES
    windows = []
    for part in text.split(","):
        name, _, frac = part.partition("=")
        try:
            windows.append((name.strip(), float(frac)))
        except ValueError:
            raise ValidationError(f"--probes expects name=fraction pairs, got {part!r}") from None
    return tuple(windows)


def cmd_therm(args) -> int:
    plan = _single_v_plan(args, ("therm",), therm_window=args.window, energy_windows=_parse_windows(args.probes))
    out = _out(args)
    report, agg = _run_plan(plan, out, args.workers)
    windows = {name: agg.data["windows"][(float(args.v), name)] for name, _ in plan.energy_windows}
    _emit({"v": args.v, "realizations": plan.n_realizations, "windows": windows, "partial": report.partial}, out)
    return EXIT_FAILED if report.partial else EXIT_OK


def cmd_sweep(args) -> int:
    if args.plan:
        plan = SweepPlan.load(args.plan)
        if args.realizations_given:
            plan = SweepPlan.from_dict({**plan.to_dict(), "n_realizations": args.realizations})
    elif args.preset:
        plan = preset_plan(args.preset, args.scale,
                           n_realizations=args.realizations if args.realizations_given else None,
                           base_seed=args.seed)
    else:
        raise ValidationError("sweep needs a plan file or --preset")
    plan.validate()
    out = _out(args)
    report, agg = run_sweep(plan, out, args.workers)
    summary = {"computed": report.computed, "skipped": report.skipped, "failed": list(report.failed),
               "aggregate": str(out / "aggregate")}
    if "crossover" in agg.data and "shapes" in agg.data["crossover"]:
        summary["crossover"] = agg.data["crossover"]
    sys.stdout.write(io.json_text(summary))
    return EXIT_FAILED if report.partial else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbri", description="Bosons with two-body random interactions: "
                                "exact spectra, strength functions, localization and thermalization.",
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bins, window=None):
        sp.add_argument("--n", type=int, default=4, help="number of bosons N")
        sp.add_argument("--m", type=int, default=9, help="number of single-particle levels M")
        sp.add_argument("--v", type=float, default=0.1, help="interaction strength V")
        sp.add_argument("--seed", type=int, default=0, help="disorder seed (base seed for ensembles)")
        sp.add_argument("--sp-mode", choices=[m.value for m in SpMode], default=SpMode.UNIFORM_RANDOM.value,
                        help="single-particle spectrum")
        sp.add_argument("--sp-seed", type=int, default=None,
                        help="fix the single-particle energies across realizations")
        sp.add_argument("--operator-sum", choices=OPERATOR_SUMS, default="classes",
                        help="how pair operators are summed in the interaction")
        sp.add_argument("--out", default="tbri-out", help="output directory")
        sp.add_argument("--bins", type=int, default=bins, help="histogram bins")
        if window is not None:
            sp.add_argument("--window", type=int, default=window, help="number of states per window")
        sp.add_argument("--max-dimension", type=int, default=DEFAULT_MAX_DIMENSION, help="dense size cap")

    def ensemble(sp):
        sp.add_argument("--realizations", type=int, default=1, help="disorder realizations")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (TBRI_WORKERS overrides)")

    s = sub.add_parser("spectrum", help="one realization: matrix export, eigenvalues, DOS",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(s, bins=50)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("sf", help="ensemble strength function and line-shape verdict",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(s, bins=51, window=100)
    ensemble(s)
    s.set_defaults(func=cmd_sf)

    s = sub.add_parser("pr", help="participation ratios versus energy",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(s, bins=20)
    ensemble(s)
    s.set_defaults(func=cmd_pr)

    s = sub.add_parser("therm", help="occupation numbers, Bose-Einstein fits and thermal verdicts",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(s, bins=20, window=20)
    ensemble(s)
    s.add_argument("--probes", default=None, help="probe windows as name=rank_fraction,... "
                   f"(default {','.join(f'{n}={f}' for n, f in PROBES)})")
    s.set_defaults(func=cmd_therm)

    s = sub.add_parser("sweep", help="run a sweep plan (JSON file or named preset)",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    s.add_argument("plan", nargs="?", help="plan JSON file")
    s.add_argument("--preset", choices=sorted(PRESETS), help="named sweep template")
    s.add_argument("--scale", choices=("desk", "full"), default="desk", help="preset size")
    s.add_argument("--seed", type=int, default=0, help="base seed for presets")
    s.add_argument("--realizations", type=int, default=None, help="override the realization count")
    s.add_argument("--workers", type=int, default=None, help="worker processes (TBRI_WORKERS overrides)")
    s.add_argument("--out", default="tbri-sweep", help="store directory")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep":
        args.realizations_given = args.realizations is not None
    try:
        return args.func(args)
    except (ValidationError, PlanError, json.JSONDecodeError, FileNotFoundError) as exc:
        sys.stderr.write(f"tbri {args.command}: invalid input: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported through the exit code
        log.debug("computation failed", exc_info=True)
        sys.stderr.write(f"tbri {args.command}: computation failed: {exc}\n")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
