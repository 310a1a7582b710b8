"""Disorder-ensemble sweeps over an interaction-strength grid.

Every realization is an independent, pure task: its outputs depend only on
the plan and on ``(v_index, realization)``.  Tasks run in a process pool,
the parent process is the only writer of files and of the manifest, and
aggregation reads the finished runs back in sorted key order.  Sums use
``math.fsum``, which is correctly rounded and therefore independent of the
order and grouping of the terms, so aggregates are bit-identical however the
work was scheduled or split.

Layout of a store::

    root/manifest.json
    root/plan.json
    root/runs/v000/r00000/{meta.json, eigenvalues.csv, ...}
    root/aggregate/{crossover.json, sf_sweep.csv, ...}
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .basis import basis_dimension, enumerate_basis
from .eigstats import pr_reference, rescaled_energies
from .hamiltonian import OPERATOR_SUMS, SpMode, assemble, draw_disorder
from .spectral import DEFAULT_MAX_DIMENSION, diagonalize
from .strength import (
    Shape,
    averaged_profile,
    effective_spacing,
    fermi_golden_rule_width,
    scaled_edges,
    scaled_strength_histograms,
)
from .thermal import (
    OccupationDistribution,
    all_occupations,
    bed_comparison,
    classify,
    energy_width,
    occupation_fluctuations,
    principal_components,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ANALYSES = ("spectrum", "sf", "pr", "therm")
WORKERS_ENV = "TBRI_WORKERS"


class PlanError(ValueError):
    pass


class IncompatibleRunsError(ValueError):
    pass


@dataclass(frozen=True)
class SweepPlan:
    """Everything that determines a sweep's output.

    ``energy_windows`` maps probe names to rank fractions of the spectrum;
    each probe covers ``therm_window`` consecutive eigenstates centred there.
    ``sp_seed`` fixes the single-particle energies across realizations.
    With ``shared_disorder`` the same two-body table (up to the factor V) is
    used at every grid point, so curves versus V are free of
    realization-to-realization noise.
    """

    n_particles: int
    n_levels: int
    v_grid: tuple[float, ...]
    n_realizations: int
    base_seed: int = 0
    sp_mode: str = SpMode.UNIFORM_RANDOM.value
    analyses: tuple[str, ...] = ANALYSES
    energy_windows: tuple[tuple[str, float], ...] = (("low", 0.1), ("mid", 0.5))
    sf_window: int = 100
    sf_bins: int = 51
    sf_span: float = 4.0
    therm_window: int = 20
    classifier_bins: int = 20
    sp_seed: int | None = None
    shared_disorder: bool = True
    operator_sum: str = "classes"
    pc_measure: str = "pr"
    max_dimension: int = DEFAULT_MAX_DIMENSION

    def __post_init__(self):
        object.__setattr__(self, "v_grid", tuple(float(v) for v in self.v_grid))
        object.__setattr__(self, "analyses", tuple(sorted(set(self.analyses))))
        object.__setattr__(self, "energy_windows",
                           tuple((str(name), float(f)) for name, f in self.energy_windows))

    def validate(self) -> "SweepPlan":
        if self.n_particles < 1:
            raise PlanError("n_particles must be at least 1")
        if self.n_levels < 2:
            raise PlanError("n_levels must be at least 2")
        if not self.v_grid:
            raise PlanError("v_grid is empty")
        if any(not math.isfinite(v) or v < 0 for v in self.v_grid):
            raise PlanError("interaction strengths must be finite and non-negative")
        if self.n_realizations < 1:
            raise PlanError("n_realizations must be at least 1")
        unknown = set(self.analyses) - set(ANALYSES)
        if unknown:
            raise PlanError(f"unknown analyses {sorted(unknown)}; choose from {ANALYSES}")
        try:
            SpMode(self.sp_mode)
        except ValueError:
            raise PlanError(f"unknown sp_mode {self.sp_mode!r}") from None
        if self.operator_sum not in OPERATOR_SUMS:
            raise PlanError(f"operator_sum must be one of {OPERATOR_SUMS}")
        if self.pc_measure not in ("pr", "entropy"):
            raise PlanError("pc_measure must be 'pr' or 'entropy'")
        for name, f in self.energy_windows:
            if not 0.0 <= f <= 1.0:
                raise PlanError(f"window {name!r}: rank fraction {f} outside [0, 1]")
        if len({name for name, _ in self.energy_windows}) != len(self.energy_windows):
            raise PlanError("window names must be unique")
        if self.sf_bins < 3 or self.sf_window < 1 or self.therm_window < 1 or self.classifier_bins < 1:
            raise PlanError("bin counts and window sizes must be positive")
        dim = basis_dimension(self.n_particles, self.n_levels)
        if dim > self.max_dimension:
            raise PlanError(f"basis dimension {dim} exceeds the cap {self.max_dimension}")
        return self

    @property
    def dimension(self) -> int:
        return basis_dimension(self.n_particles, self.n_levels)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["v_grid"] = list(self.v_grid)
        d["analyses"] = list(self.analyses)
        d["energy_windows"] = [list(w) for w in self.energy_windows]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "SweepPlan":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise PlanError(f"unknown plan fields {sorted(unknown)}")
        kwargs = dict(data)
        if "energy_windows" in kwargs:
            ew = kwargs["energy_windows"]
            kwargs["energy_windows"] = tuple(ew.items()) if isinstance(ew, Mapping) else tuple(map(tuple, ew))
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise PlanError(str(exc)) from None

    @classmethod
    def load(cls, path: Path) -> "SweepPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def run_digest(self, v_index: int, realization: int) -> str:
        """Hash of everything that determines one run's output.

        The realization count and the rest of the grid are excluded, so a
        plan extended with more seeds or grid points reuses finished runs.
        """
        d = self.to_dict()
        d.pop("n_realizations")
        d.pop("v_grid")
        d["v"] = self.v_grid[v_index]
        d["key"] = [v_index, realization]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def keys(self) -> list[tuple[int, int]]:
        return [(i, r) for i in range(len(self.v_grid)) for r in range(self.n_realizations)]


def derive_seed(base_seed: int, v_index: int, realization: int) -> int:
    """63-bit seed from ``SeedSequence(base_seed, spawn_key=(v_index, realization))``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(v_index), int(realization)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_seed(plan: SweepPlan, v_index: int, realization: int) -> int:
    return derive_seed(plan.base_seed, 0 if plan.shared_disorder else v_index, realization)


def run_name(v_index: int, realization: int) -> str:
    return f"v{v_index:03d}/r{realization:05d}"


# -- one realization --------------------------------------------------------------

def window_slice(dimension: int, fraction: float, width: int) -> slice:
    centre = int(round(fraction * (dimension - 1)))
    lo = min(max(centre - width // 2, 0), max(dimension - width, 0))
    return slice(lo, min(lo + width, dimension))


def run_realization(plan: SweepPlan, v_index: int, realization: int) -> dict[str, str]:
    """Compute every enabled analysis for one (V, seed); returns file texts."""
    v = plan.v_grid[v_index]
    seed = run_seed(plan, v_index, realization)
    n, m = plan.n_particles, plan.n_levels
    basis = enumerate_basis(n, m)
    model = draw_disorder(n, m, v, seed, sp_mode=plan.sp_mode, sp_seed=plan.sp_seed,
                          operator_sum=plan.operator_sum)
    h = assemble(model, basis)
    spec = diagonalize(h, max_dimension=plan.max_dimension)
    dim = spec.dimension
    e0 = h.h0_diagonal
    eps = np.asarray(model.sp_energies)
    out: dict[str, str] = {}

    spacing = effective_spacing(h)
    mask = spacing.summary_mask()
    summary = {
        "v": v,
        "v_index": v_index,
        "realization": realization,
        "seed": seed,
        "dimension": dim,
        "sp_energies": eps,
        "spacing": {"count": int(mask.sum()),
                    "sum": math.fsum(spacing.d_f[mask]),
                    "sumsq": math.fsum(spacing.d_f[mask] ** 2)},
    }

    if "spectrum" in plan.analyses:
        out["eigenvalues.csv"] = io.eigenvalues_text(spec.eigenvalues)

    if "sf" in plan.analyses:
        order = np.argsort(e0, kind="stable")
        states = order[window_slice(dim, 0.5, plan.sf_window)]
        masses, _, widths = scaled_strength_histograms(spec, states, plan.sf_bins, plan.sf_span)
        edges = scaled_edges(plan.sf_bins, plan.sf_span)
        out["sf_hist.csv"] = io.csv_text(
            ("bin", "x_lo", "x_hi", "mass_sum"),
            ((b, edges[b], edges[b + 1], math.fsum(masses[:, b])) for b in range(plan.sf_bins)))
        summary["sf"] = {"n_states": int(states.size), "width_sum": math.fsum(widths),
                         "width_sumsq": math.fsum(widths**2)}

    pr = None
    if "pr" in plan.analyses or "therm" in plan.analyses:
        pr = principal_components(spec.coefficients, plan.pc_measure)
    if "pr" in plan.analyses:
        x = rescaled_energies(spec.eigenvalues)
        out["pr.csv"] = io.csv_text(("alpha", "energy", "x", "pr", "pr_fraction"),
                                    zip(range(dim), spec.eigenvalues, x, pr, pr / dim))
        if v_index == 0:
            # interaction-only reference, shared by every grid point
            ref_model = draw_disorder(n, m, 1.0, seed, sp_mode=plan.sp_mode, sp_seed=plan.sp_seed,
                                      operator_sum=plan.operator_sum).without_h0()
            ref = diagonalize(assemble(ref_model, basis), max_dimension=plan.max_dimension)
            ref_pr = principal_components(ref.coefficients, plan.pc_measure)
            out["pr_ref.csv"] = io.csv_text(("alpha", "energy", "pr"),
                                            zip(range(dim), ref.eigenvalues, ref_pr))

    if "therm" in plan.analyses:
        occ = all_occupations(spec, basis)
        d0 = energy_width(spec, e0)
        rows = []
        for a in range(dim):
            verdict = classify(a, spec.eigenvalues[a], d0[a], pr[a], v)
            rows.append((a, verdict.energy, a / max(dim - 1, 1), verdict.delta0, verdict.n_pc,
                         verdict.d_loc, verdict.log_ratio if verdict.ratio > 0 else math.nan,
                         int(verdict.verdict.value == "thermal")))
        out["classifier.csv"] = io.csv_text(
            ("alpha", "energy", "rank_fraction", "delta0", "n_pc", "d_loc", "log_ratio", "thermal"), rows)

        therm_rows, ond_rows = [], []
        for w, (name, frac) in enumerate(plan.energy_windows):
            sl = window_slice(dim, frac, plan.therm_window)
            n_avg = occ[sl].mean(axis=0)
            energy = float(spec.eigenvalues[sl].mean())
            dist = OccupationDistribution(-1, n_avg, energy, float(n_avg @ eps))
            cmp = bed_comparison(dist, eps)
            therm_rows.append((w, sl.start, sl.stop, energy, dist.dressed_energy,
                               cmp.bare.beta if cmp.bare else math.nan,
                               cmp.dressed.beta if cmp.dressed else math.nan,
                               cmp.chi2_bare, cmp.chi2_dressed))
            for a in range(sl.start, sl.stop):
                ond_rows.append((w, a, spec.eigenvalues[a], *occ[a]))
        out["therm.csv"] = io.csv_text(
            ("window", "alpha_lo", "alpha_hi", "energy", "dressed_energy", "beta_bare", "beta_dressed",
             "chi2_bare", "chi2_dressed"), therm_rows)
        out["ond.csv"] = io.csv_text(("window", "alpha", "energy", *(f"n{s}" for s in range(m))), ond_rows)

    out["meta.json"] = io.json_text(summary)
    return out


def _task(plan_dict: dict, v_index: int, realization: int) -> tuple[int, int, dict | None, str | None]:
    plan = SweepPlan.from_dict(plan_dict)
    try:
        with threadpool_limits(limits=1):
            return v_index, realization, run_realization(plan, v_index, realization), None
    except Exception:  # noqa: BLE001 - isolated per task and reported
        return v_index, realization, None, traceback.format_exc(limit=4)


# -- storage ----------------------------------------------------------------------

def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunStore:
    """Directory of per-run artifacts plus a JSON manifest.

    Manifest schema (version 1)::

        {"schema_version": 1,
         "runs": {"v000/r00000": {"run_digest": str, "status": "ok" | "failed",
                                  "v": float, "seed": int,
                                  "files": {name: sha256}, "error": str?}}}
    """

    root: Path
    manifest: dict = field(default_factory=dict)

    @classmethod
    def open(cls, root: Path) -> "RunStore":
        root = Path(root)
        path = root / "manifest.json"
        if path.exists():
            manifest = json.loads(path.read_text())
            if manifest.get("schema_version") != SCHEMA_VERSION:
                raise IncompatibleRunsError(f"manifest schema {manifest.get('schema_version')} is not supported")
        else:
            manifest = {"schema_version": SCHEMA_VERSION, "runs": {}}
        return cls(root, manifest)

    @property
    def runs(self) -> dict:
        return self.manifest["runs"]

    def run_dir(self, v_index: int, realization: int) -> Path:
        return self.root / "runs" / run_name(v_index, realization)

    def is_current(self, plan: SweepPlan, v_index: int, realization: int) -> bool:
        entry = self.runs.get(run_name(v_index, realization))
        if not entry or entry["status"] != "ok" or entry["run_digest"] != plan.run_digest(v_index, realization):
            return False
        d = self.run_dir(v_index, realization)
        for name, digest in entry["files"].items():
            p = d / name
            if not p.exists() or _sha(p.read_text()) != digest:
                return False
        return True

    def record(self, plan: SweepPlan, v_index: int, realization: int,
               files: dict[str, str] | None, error: str | None) -> None:
        d = self.run_dir(v_index, realization)
        d.mkdir(parents=True, exist_ok=True)
        entry = {"run_digest": plan.run_digest(v_index, realization), "v": plan.v_grid[v_index],
                 "seed": run_seed(plan, v_index, realization)}
        if files is None:
            entry.update(status="failed", error=error or "", files={})
        else:
            for name, text in files.items():
                (d / name).write_text(text)
            entry.update(status="ok", files={name: _sha(t) for name, t in sorted(files.items())})
        self.runs[run_name(v_index, realization)] = entry

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.root / "manifest.json")


@dataclass(frozen=True)
class ExecutionReport:
    computed: int
    skipped: int
    failed: tuple[str, ...]

    @property
    def partial(self) -> bool:
        return bool(self.failed)


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise PlanError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, requested or 1)


def execute(plan: SweepPlan, root: Path, workers: int | None = None,
            progress: Callable[[str], None] | None = None) -> ExecutionReport:
    """Run every missing or stale realization of ``plan`` into the store at ``root``.

    Runs already present with a matching digest and intact files are skipped.
    The worker count comes from ``workers`` or the ``TBRI_WORKERS``
    environment variable (which wins).  A failing realization is recorded
    as failed and the remaining ones continue.
    """
    plan.validate()
    store = RunStore.open(root)
    store.root.mkdir(parents=True, exist_ok=True)
    (store.root / "plan.json").write_text(plan.to_json())
    todo = [k for k in plan.keys() if not store.is_current(plan, *k)]
    skipped = len(plan.keys()) - len(todo)
    failed: list[str] = []
    n_workers = worker_count(workers)

    def done(v_index, r, files, error):
        store.record(plan, v_index, r, files, error)
        store.save()
        if error:
            failed.append(run_name(v_index, r))
            log.error("run %s failed:\n%s", run_name(v_index, r), error)
        if progress:
            progress(run_name(v_index, r))

    plan_dict = plan.to_dict()
    if n_workers == 1 or len(todo) <= 1:
        for k in todo:
            done(*_task(plan_dict, *k))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_task, plan_dict, *k) for k in todo]
            for fut in as_completed(futures):
                done(*fut.result())
    store.save()
    return ExecutionReport(len(todo), skipped, tuple(sorted(failed)))


# -- aggregation ------------------------------------------------------------------

def _fsum_rows(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Column sums that are correctly rounded, hence order independent."""
    if not arrays:
        return np.zeros(0)
    stacked = np.vstack(arrays)
    return np.array([math.fsum(col) for col in stacked.T])


def _log_slope(x: np.ndarray, y: np.ndarray) -> float:
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _log_crossing(v: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """First V where ``a`` overtakes ``b`` (log-log linear interpolation)."""
    ok = (v > 0) & (a > 0) & (b > 0) & np.isfinite(a) & np.isfinite(b)
    v, a, b = v[ok], a[ok], b[ok]
    d = np.log(a) - np.log(b)
    for i in range(d.size - 1):
        if d[i] < 0 <= d[i + 1]:
            t = -d[i] / (d[i + 1] - d[i])
            return float(math.exp(math.log(v[i]) + t * (math.log(v[i + 1]) - math.log(v[i]))))
    return math.nan


@dataclass
class Aggregate:
    """In-memory result of :func:`aggregate`; ``files`` maps names to texts."""

    plan: SweepPlan
    keys: tuple[tuple[int, int], ...]
    files: dict[str, str]
    data: dict

    def write(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.files.items()):
            (directory / name).write_text(text)


def _load_run(store: RunStore, key: tuple[int, int]) -> dict:
    d = store.run_dir(*key)
    entry = store.runs[run_name(*key)]
    return {name: (d / name).read_text() for name in entry["files"]}


def _csv(text: str) -> np.ndarray:
    lines = text.strip().splitlines()[1:]
    if not lines:
        return np.zeros((0, 0))
    return np.array([[float(x) for x in ln.split(",")] for ln in lines])


def aggregate(store: RunStore | Path, selector: Callable[[int, int], bool] | Iterable[tuple[int, int]] | None = None,
              plan: SweepPlan | None = None) -> Aggregate:
    """Merge the finished runs of a store into ensemble tables.

    ``selector`` is either a predicate on ``(v_index, realization)`` or an
    explicit collection of keys.  Runs from different plans cannot be mixed.
    """
    if not isinstance(store, RunStore):
        store = RunStore.open(store)
    if plan is None:
        plan_path = store.root / "plan.json"
        if not plan_path.exists():
            raise IncompatibleRunsError(f"no plan.json in {store.root}")
        plan = SweepPlan.load(plan_path)

    ok_keys = []
    for name, entry in store.runs.items():
        v_part, r_part = name.split("/")
        key = (int(v_part[1:]), int(r_part[1:]))
        if entry["status"] != "ok":
            continue
        if key[0] >= len(plan.v_grid) or entry["run_digest"] != plan.run_digest(*key):
            if selector is None:
                continue
            raise IncompatibleRunsError(f"run {name} was produced by a different plan")
        ok_keys.append(key)
    if selector is not None:
        wanted = selector if callable(selector) else set(map(tuple, selector)).__contains__
        chosen = sorted(k for k in ok_keys if (wanted(*k) if callable(selector) else wanted(k)))
        if not callable(selector):
            missing = set(map(tuple, selector)) - set(chosen)
            if missing:
                raise IncompatibleRunsError(f"selected runs missing or incompatible: {sorted(missing)[:5]}")
    else:
        chosen = sorted(ok_keys)
    if not chosen:
        raise IncompatibleRunsError("no finished runs selected")

    runs = {k: _load_run(store, k) for k in chosen}
    failed = sorted(n for n, e in store.runs.items() if e["status"] != "ok")
    return merge(plan, runs, failed)


def merge(plan: SweepPlan, runs: Mapping[tuple[int, int], Mapping[str, str]],
          failed: Sequence[str] = ()) -> Aggregate:
    """Reduce per-run artifact texts (keyed by ``(v_index, realization)``)."""
    keys = tuple(sorted(runs))
    files: dict[str, str] = {}
    data: dict = {}
    v_grid = np.array(plan.v_grid)
    metas = {k: json.loads(runs[k]["meta.json"]) for k in keys}
    by_v: dict[int, list[tuple[int, int]]] = {}
    for k in keys:
        by_v.setdefault(k[0], []).append(k)
    v_indices = sorted(by_v)

    # effective spacing pooled over every run and state in the summary window
    count = sum(metas[k]["spacing"]["count"] for k in keys)
    s1 = math.fsum(metas[k]["spacing"]["sum"] for k in keys)
    s2 = math.fsum(metas[k]["spacing"]["sumsq"] for k in keys)
    d_mean = s1 / count if count else math.nan
    d_std = math.sqrt(max(s2 / count - d_mean**2, 0.0)) if count else math.nan
    root_n = math.sqrt(plan.n_particles + 1)
    crossover = {"d_f_mean": d_mean, "d_f_std": d_std, "v_c": d_mean * root_n,
                 "band": [(d_mean - d_std) * root_n, (d_mean + d_std) * root_n]}

    if "sf" in plan.analyses:
        rows, prof_rows, shapes, gammas, widths = [], [], [], [], []
        edges = scaled_edges(plan.sf_bins, plan.sf_span)
        centers = 0.5 * (edges[1:] + edges[:-1])
        for i in v_indices:
            ks = by_v[i]
            mass = _fsum_rows([_csv(runs[k]["sf_hist.csv"])[:, 3] for k in ks])
            n_states = sum(metas[k]["sf"]["n_states"] for k in ks)
            mean_width = math.fsum(metas[k]["sf"]["width_sum"] for k in ks) / n_states
            v = v_grid[i]
            if mean_width > 0:
                prof = averaged_profile(mass / n_states, mean_width, plan.sf_bins, plan.sf_span)
            else:
                prof = averaged_profile(mass / n_states, 1.0, plan.sf_bins, plan.sf_span)
            bw_m, ga_m = prof.model_masses()
            fgr = fermi_golden_rule_width(v, d_mean) if d_mean > 0 else math.nan
            gamma = prof.fit_bw.width if mean_width > 0 else 0.0
            sigma = prof.fit_gauss.width if mean_width > 0 else 0.0
            rows.append((v, n_states, mean_width, gamma, sigma, prof.fit_bw.sse, prof.fit_gauss.sse,
                         fgr, prof.preferred_shape.value))
            shapes.append(prof.preferred_shape.value)
            gammas.append(gamma)
            widths.append(mean_width)
            for b in range(plan.sf_bins):
                prof_rows.append((v, b, centers[b], centers[b] * mean_width, prof.weights[b], bw_m[b], ga_m[b]))
        files["sf_sweep.csv"] = io.csv_text(
            ("v", "n_states", "exact_width", "gamma_bw", "sigma_gauss", "sse_bw", "sse_gauss", "fgr_width",
             "shape"), rows)
        files["sf_profiles.csv"] = io.csv_text(
            ("v", "bin", "x", "energy_offset", "mass", "bw_mass", "gauss_mass"), prof_rows)
        vs = v_grid[v_indices]
        gammas, widths = np.array(gammas), np.array(widths)
        bw = np.array([s == Shape.BREIT_WIGNER.value for s in shapes])
        crossover.update(
            shapes=shapes,
            v=list(vs),
            gamma_slope_bw=_log_slope(vs[bw], gammas[bw]),
            width_slope=_log_slope(vs, widths),
            intersection=_log_crossing(vs, gammas, widths),
            fgr_intersection=_log_crossing(vs, 2 * np.pi * vs**2 / d_mean, widths) if d_mean > 0 else math.nan,
        )
        lo, hi = crossover["band"]
        x = crossover["intersection"]
        crossover["intersection_in_band"] = bool(np.isfinite(x) and lo <= x <= hi)
    data["crossover"] = crossover
    files["crossover.json"] = io.json_text(crossover)

    if "pr" in plan.analyses:
        ref_runs = [(r[:, 1], r[:, 2]) for r in (_csv(runs[k]["pr_ref.csv"]) for k in keys if "pr_ref.csv" in runs[k])]
        ref = pr_reference(ref_runs, description="interaction only") if ref_runs else None
        if ref is not None:
            files["pr_ref.csv"] = io.csv_text(("x", "mean_pr", "count"),
                                              zip(ref.bin_centers, ref.mean_pr, ref.counts))
        n_bins = plan.classifier_bins
        rows = []
        for i in v_indices:
            tabs = [_csv(runs[k]["pr.csv"]) for k in by_v[i]]
            frac = np.concatenate([np.arange(t.shape[0]) / max(t.shape[0] - 1, 1) for t in tabs])
            energy = np.concatenate([t[:, 1] for t in tabs])
            x = np.concatenate([t[:, 2] for t in tabs])
            pr = np.concatenate([t[:, 3] for t in tabs])
            prf = np.concatenate([t[:, 4] for t in tabs])
            rel = pr / ref(x) if ref is not None else np.full(pr.size, math.nan)
            b = np.minimum((frac * n_bins).astype(int), n_bins - 1)
            for j in range(n_bins):
                sel = b == j
                if sel.any():
                    rows.append((v_grid[i], j, float(np.median(energy[sel])), math.fsum(prf[sel]) / sel.sum(),
                                 math.fsum(rel[sel]) / sel.sum(), int(sel.sum())))
        files["pr_map.csv"] = io.csv_text(
            ("v", "bin", "energy_median", "pr_fraction", "pr_relative", "count"), rows)

    if "therm" in plan.analyses:
        n_bins = plan.classifier_bins
        class_rows = []
        for i in v_indices:
            tabs = [_csv(runs[k]["classifier.csv"]) for k in by_v[i]]
            t = np.vstack(tabs)
            b = np.minimum((t[:, 2] * n_bins).astype(int), n_bins - 1)
            for j in range(n_bins):
                sel = b == j
                if sel.any():
                    lr = t[sel, 6]
                    class_rows.append((v_grid[i], j, float(np.median(t[sel, 1])), float(np.median(lr)),
                                       math.fsum(t[sel, 7]) / sel.sum(), int(sel.sum())))
        files["classifier_map.csv"] = io.csv_text(
            ("v", "bin", "energy_median", "log_ratio_median", "thermal_fraction", "count"), class_rows)

        therm_rows, ond_rows, stat_rows, hist_rows = [], [], [], []
        zeta_edges = np.linspace(-4.0, 4.0, 41)
        windows = {}
        for i in v_indices:
            ks = by_v[i]
            therm = [_csv(runs[k]["therm.csv"]) for k in ks]
            ond = [_csv(runs[k]["ond.csv"]) for k in ks]
            clf = [_csv(runs[k]["classifier.csv"]) for k in ks]
            for w, (name, frac) in enumerate(plan.energy_windows):
                rec = np.vstack([t[t[:, 0] == w] for t in therm])
                chi_b, chi_d = rec[:, 7], rec[:, 8]
                wins = (chi_d < chi_b) | (np.isnan(chi_b) & np.isfinite(chi_d))
                # per-eigenstate classifier quantities inside the window
                lrs = np.concatenate([c[int(r[1]):int(r[2]), 6] for c, r in zip(clf, rec)])
                samples = np.vstack([o[o[:, 0] == w][:, 3:] for o in ond])
                rep = occupation_fluctuations(samples, min_samples=1) if samples.shape[0] > 1 else None
                norm = rep.normality if rep is not None else None
                if norm is not None and norm.n_samples < 1000:
                    norm = None  # below the battery's sample floor
                zeta_pass = None if norm is None else norm.passed
                med = float(np.median(lrs))
                thermal = med > 0 and zeta_pass is not False
                diff = np.abs(chi_d - chi_b)
                with np.errstate(invalid="ignore", divide="ignore"):
                    ratio = chi_d / chi_b
                therm_rows.append((v_grid[i], name, frac, rec.shape[0], float(np.median(rec[:, 3])),
                                   float(np.median(rec[:, 4])), float(np.mean(wins)),
                                   float(np.nanmedian(chi_b)) if np.isfinite(chi_b).any() else math.nan,
                                   float(np.nanmedian(chi_d)) if np.isfinite(chi_d).any() else math.nan,
                                   float(np.nanmedian(ratio)) if np.isfinite(ratio).any() else math.nan,
                                   med, "" if zeta_pass is None else int(zeta_pass),
                                   "thermal" if thermal else "non-thermal"))
                mean = samples.mean(axis=0)
                std = samples.std(axis=0)
                for s in range(plan.n_levels):
                    ond_rows.append((v_grid[i], name, s, mean[s], std[s]))
                if norm is not None:
                    stat_rows.append((v_grid[i], name, norm.n_samples, norm.skewness, norm.excess_kurtosis,
                                      norm.ks_statistic, norm.ks_pvalue, int(norm.passed)))
                    counts, _ = np.histogram(rep.zeta, bins=zeta_edges)
                    dens = counts / (rep.zeta.size * np.diff(zeta_edges))
                    for b in range(counts.size):
                        hist_rows.append((v_grid[i], name, 0.5 * (zeta_edges[b] + zeta_edges[b + 1]), dens[b]))
                windows[(float(v_grid[i]), name)] = {
                    "dressed_win_fraction": float(np.mean(wins)),
                    "chi2_ratio_median": therm_rows[-1][9],
                    "log_ratio_median": med,
                    "zeta": None if norm is None else norm.as_dict(),
                    "verdict": "thermal" if thermal else "non-thermal",
                    "n_windows": int(rec.shape[0]),
                    "abs_diff_median": float(np.nanmedian(diff)) if np.isfinite(diff).any() else math.nan,
                }
        files["therm_summary.csv"] = io.csv_text(
            ("v", "window", "rank_fraction", "n_windows", "energy_median", "dressed_energy_median",
             "dressed_win_fraction", "chi2_bare_median", "chi2_dressed_median", "chi2_ratio_median",
             "log_ratio_median", "zeta_pass", "verdict"), therm_rows)
        files["ond_mean.csv"] = io.csv_text(("v", "window", "level", "mean", "std"), ond_rows)
        files["zeta_stats.csv"] = io.csv_text(
            ("v", "window", "n_samples", "skewness", "excess_kurtosis", "ks_statistic", "ks_pvalue", "passed"),
            stat_rows)
        files["zeta_hist.csv"] = io.csv_text(("v", "window", "zeta", "density"), hist_rows)
        data["windows"] = windows

    expected = len(plan.keys())
    report = {"n_runs": len(keys), "expected_runs": expected, "failed": list(failed),
              "partial": bool(failed) or len(keys) < expected,
              "v_indices": v_indices, "plan_digest": plan.digest()}
    data["report"] = report
    files["report.json"] = io.json_text(report)
    return Aggregate(plan, keys, files, data)


def run_sweep(plan: SweepPlan, root: Path, workers: int | None = None) -> tuple[ExecutionReport, Aggregate]:
    """Execute, aggregate and write ``root/aggregate``."""
    report = execute(plan, root, workers)
    agg = aggregate(root, plan=plan)
    agg.write(Path(root) / "aggregate")
    return report, agg
