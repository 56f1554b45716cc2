"""End-to-end experiments: sample systems, solve, compare against theory.

One experiment is described by a small TOML document (tables: ensemble, run,
grid, solver, output).  Given a master seed, every byte of output is
reproducible: per-system generators are split off the master seed by index
(counter-based), so results do not depend on scheduling or thread count.

All zero counts are normalized per unit degree: a system of degree D in m
variables contributes its zero count divided by D^m.  Limit potentials are
correspondingly expressed over the unit simplex (spectra scaled by 1/p), so
one normalization convention serves every ensemble.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import ensemble as ens
from . import lattice as lat
from . import potentials as pot
from . import solver as sol

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


class ConfigError(ValueError):
    """Invalid experiment configuration; lists every offending field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration: " + "; ".join(problems))


_ENSEMBLE_KINDS = (
    "fixed_spectrum",
    "dilated_random",
    "random_simplex",
    "random_polytope",
    "kac",
    "toric",
)

_TORIC_POTENTIALS = {
    "fs": lambda: pot.fubini_study_potential(1),
    "fs_perturbed": lambda: pot.perturbed_fs_potential(0.1),
}


@dataclass
class ExperimentConfig:
    kind: str = "random_simplex"
    m: int = 1
    k: int = 1
    N: int | None = 100
    N_list: tuple[int, ...] | None = None
    f: int = 3
    f_list: tuple[int, ...] | None = None  # per-equation fewnomial numbers
    systems: int = 100
    seed: int = 0
    threads: int = 1
    # ensemble-specific
    points: tuple[tuple[float, ...], ...] | None = None  # fixed spectrum, scale p
    p: int = 1
    vertices: tuple[tuple[float, ...], ...] | None = None  # polytope, scale p
    u_id: str = "fs"
    # grid
    grid_lo: float = -8.0
    grid_hi: float = 8.0
    grid_bins: int = 400
    # solver / theory
    residual_tol: float = 1e-8
    window: float = 6.5
    mc_tuples: int = 100_000
    out_dir: str = "out"
    label: str = ""

    def grid(self) -> pot.GridSpec:
        return pot.GridSpec(axes=tuple((self.grid_lo, self.grid_hi, self.grid_bins) for _ in range(self.m)))

    def f_values(self) -> tuple[int, ...]:
        return self.f_list if self.f_list is not None else (self.f,) * self.k

    def polytope(self) -> lat.NewtonPolytope | None:
        if self.vertices is None:
            return None
        verts = tuple(tuple(Fraction(str(c)) for c in v) for v in self.vertices)
        return lat.NewtonPolytope(vertices=verts, scale=self.p)

    def toric_potential(self) -> pot.SymplecticPotential | None:
        if self.kind != "toric":
            return None
        return _TORIC_POTENTIALS[self.u_id]()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        problems: list[str] = []
        e = doc.get("ensemble", {})
        r = doc.get("run", {})
        g = doc.get("grid", {})
        s = doc.get("solver", {})
        o = doc.get("output", {})
        kind = e.get("kind", "random_simplex")
        if kind not in _ENSEMBLE_KINDS:
            problems.append(f"ensemble.kind {kind!r} not one of {_ENSEMBLE_KINDS}")
        cfg = cls(
            kind=kind,
            m=int(r.get("m", 1)),
            k=int(r.get("k", 1)),
            N=int(r["N"]) if "N" in r else None,
            N_list=tuple(int(n) for n in r["N_list"]) if "N_list" in r else None,
            f=int(e.get("f", 1)),
            f_list=tuple(int(v) for v in e["f_list"]) if "f_list" in e else None,
            systems=int(r.get("systems", 100)),
            seed=int(r.get("seed", 0)),
            threads=int(r.get("threads", 1)),
            points=tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in e["points"])
            if "points" in e
            else None,
            p=int(e.get("p", 1)),
            vertices=tuple(tuple(v) for v in e["vertices"]) if "vertices" in e else None,
            u_id=str(e.get("u", "fs")),
            grid_lo=float(g.get("lo", -8.0)),
            grid_hi=float(g.get("hi", 8.0)),
            grid_bins=int(g.get("bins", 400)),
            residual_tol=float(s.get("residual_tol", 1e-8)),
            window=float(s.get("window", 6.5)),
            mc_tuples=int(s.get("mc_tuples", 100_000)),
            out_dir=str(o.get("dir", "out")),
            label=str(o.get("label", "")),
        )
        if cfg.m not in (1, 2):
            problems.append("run.m must be 1 or 2")
        if not 1 <= cfg.k <= max(cfg.m, 1):
            problems.append("run.k must satisfy 1 <= k <= m")
        if cfg.f < 1:
            problems.append("ensemble.f must be >= 1")
        if cfg.f_list is not None:
            if len(cfg.f_list) != cfg.k:
                problems.append("ensemble.f_list must have one entry per equation (k)")
            if any(v < 1 for v in cfg.f_list):
                problems.append("ensemble.f_list entries must be >= 1")
            if kind == "fixed_spectrum":
                problems.append("ensemble.f_list does not apply to fixed spectra")
        if cfg.N is None and cfg.N_list is None:
            problems.append("run.N or run.N_list is required")
        if cfg.N is not None and cfg.N < 1:
            problems.append("run.N must be >= 1")
        if cfg.N_list is not None and any(b <= a for a, b in zip(cfg.N_list, cfg.N_list[1:])):
            problems.append("run.N_list must be strictly increasing")
        if cfg.systems < 1:
            problems.append("run.systems must be >= 1")
        if cfg.grid_hi <= cfg.grid_lo or cfg.grid_bins < 2:
            problems.append("grid.lo/hi/bins malformed")
        if kind == "fixed_spectrum" and cfg.points is None:
            problems.append("ensemble.points required for fixed_spectrum")
        if kind in ("dilated_random", "random_polytope") and cfg.vertices is None:
            problems.append("ensemble.vertices required for polytope ensembles")
        if kind == "toric" and cfg.u_id not in _TORIC_POTENTIALS:
            problems.append(f"ensemble.u {cfg.u_id!r} unknown (have {sorted(_TORIC_POTENTIALS)})")
        if kind == "toric" and cfg.m != 1:
            problems.append("toric ensembles are implemented for m = 1")
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(_toml.load(fh))

    def echo_toml(self) -> str:
        lines = ["[ensemble]", f'kind = "{self.kind}"', f"f = {self.f}", f"p = {self.p}"]
        if self.f_list is not None:
            lines.append(f"f_list = [{', '.join(str(v) for v in self.f_list)}]")
        if self.points is not None:
            pts = ", ".join("[" + ", ".join(repr(c) for c in v) + "]" for v in self.points)
            lines.append(f"points = [{pts}]")
        if self.vertices is not None:
            vs = ", ".join("[" + ", ".join(repr(float(c)) for c in v) + "]" for v in self.vertices)
            lines.append(f"vertices = [{vs}]")
        if self.kind == "toric":
            lines.append(f'u = "{self.u_id}"')
        lines += ["", "[run]", f"m = {self.m}", f"k = {self.k}"]
        if self.N is not None:
            lines.append(f"N = {self.N}")
        if self.N_list is not None:
            lines.append(f"N_list = [{', '.join(str(n) for n in self.N_list)}]")
        lines += [
            f"systems = {self.systems}",
            f"seed = {self.seed}",
            f"threads = {self.threads}",
            "",
            "[grid]",
            f"lo = {self.grid_lo!r}",
            f"hi = {self.grid_hi!r}",
            f"bins = {self.grid_bins}",
            "",
            "[solver]",
            f"residual_tol = {self.residual_tol!r}",
            f"window = {self.window!r}",
            f"mc_tuples = {self.mc_tuples}",
            "",
            "[output]",
            f'dir = "{self.out_dir}"',
            f'label = "{self.label}"',
        ]
        return "\n".join(lines) + "\n"


@dataclass
class ComparisonReport:
    config: ExperimentConfig
    theory: pot.DensityGrid
    empirical: sol.EmpiricalMeasure
    corners: list[tuple[float, float]] | None
    metrics: dict
    per_n: list[dict] = field(default_factory=list)
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# system generation
# ---------------------------------------------------------------------------


def _system_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1000 + index]))


def _theory_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 7]))


def _ensemble_tag(kind: str) -> str:
    return {"kac": "kac", "toric": "toric"}.get(kind, "su")


def build_system(cfg: ExperimentConfig, N: int, index: int) -> ens.FewnomialSystem:
    """Deterministically build the index-th random system at degree scale N."""
    rng = _system_rng(cfg.seed, index)
    tag = _ensemble_tag(cfg.kind)
    u = cfg.toric_potential()
    spectra: list[lat.Spectrum] = []
    if cfg.kind == "fixed_spectrum":
        base = lat.Spectrum(
            points=tuple(tuple(int(round(c)) for c in v) for v in cfg.points),
            degree=cfg.p,
        )
        dil = lat.dilate_spectrum(base, N)
        spectra = [dil] * cfg.k
    elif cfg.kind == "dilated_random":
        poly = cfg.polytope()
        for f_j in cfg.f_values():
            s = lat.sample_spectrum_uniform(1, cfg.m, f_j, polytope=poly, rng=rng)
            spectra.append(lat.dilate_spectrum(s, N))
    elif cfg.kind == "random_polytope":
        poly = cfg.polytope()
        for f_j in cfg.f_values():
            spectra.append(lat.sample_spectrum_uniform(N, cfg.m, f_j, polytope=poly, rng=rng))
    else:  # random_simplex, kac, toric: uniform f-subsets of the degree-N simplex
        for f_j in cfg.f_values():
            f_eff = min(f_j, lat.lattice_size(N, cfg.m))
            spectra.append(lat.sample_spectrum_uniform(N, cfg.m, f_eff, rng=rng))
    return ens.sample_system(spectra, rng, ensemble_tag=tag, toric_u=u)


# ---------------------------------------------------------------------------
# theory densities
# ---------------------------------------------------------------------------


def theory_field(
    cfg: ExperimentConfig, N: int, f: int | None = None
) -> tuple[pot.PotentialField, list[tuple[float, float]] | None]:
    """Limit potential (per unit degree) and its corner atoms when atomic."""
    m = cfg.m
    f = f if f is not None else cfg.f
    if cfg.kind == "fixed_spectrum":
        pts = np.asarray(cfg.points, dtype=float) / cfg.p
        fld = pot.discrete_legendre_field(pts, 1.0)
        corners = pot.ma_corner_measure(pts[:, 0], 1.0) if m == 1 else None
        return fld, corners
    if cfg.kind == "dilated_random":
        poly = cfg.polytope()
        lattice_pts = lat.enumerate_lattice(1, m, poly)
        coords = np.array([q.coords for q in lattice_pts], dtype=float) / cfg.p
        n_pts = len(coords)
        total = math.comb(n_pts, f)
        rng = _theory_rng(cfg.seed)
        if total <= 20_000:
            import itertools

            sets = np.array(
                [[coords[i] for i in comb] for comb in itertools.combinations(range(n_pts), f)]
            )
        else:
            K = 4000
            sets = np.empty((K, f, m))
            for i in range(K):
                idx = rng.choice(n_pts, size=f, replace=False)
                sets[i] = coords[idx]
        return pot.mean_legendre_field(sets, 1.0), None
    if cfg.kind == "random_simplex" or cfg.kind == "toric":
        u = cfg.toric_potential()
        if cfg.kind == "random_simplex" and f >= lat.lattice_size(N, m):
            # a full spectrum reproduces the unrestricted ensemble exactly
            return pot.fubini_study_field(m), None
        if m == 1:
            return pot.averaged_field_db(f, u=u), None
        return pot.averaged_field_mc(f, m, cfg.mc_tuples, _theory_rng(cfg.seed), u=u), None
    if cfg.kind == "random_polytope":
        poly = cfg.polytope()
        rng = _theory_rng(cfg.seed)
        samples = _sample_polytope(poly, cfg.mc_tuples * f, rng) / cfg.p
        sets = samples.reshape(cfg.mc_tuples, f, m)
        return pot.mean_legendre_field(sets, 1.0), None
    if cfg.kind == "kac":
        fld = pot.kac_field(f, m, rng=None if m == 1 else _theory_rng(cfg.seed))
        corners = [(0.0, (f - 1) / (f + 1))] if m == 1 else None
        return fld, corners
    raise ConfigError([f"unknown ensemble kind {cfg.kind!r}"])


def _sample_polytope(poly: lat.NewtonPolytope, n: int, rng: np.random.Generator) -> np.ndarray:
    verts = np.array([[float(c) for c in v] for v in poly.vertices])
    m = verts.shape[1]
    if m == 1:
        lo, hi = verts.min(), verts.max()
        return rng.uniform(lo, hi, size=(n, 1))
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    out = np.empty((n, 2))
    got = 0
    while got < n:
        cand = rng.uniform(lo, hi, size=(max(1024, n), 2))
        keep = np.ones(len(cand), dtype=bool)
        for i in range(len(poly.vertices)):
            a = verts[i]
            b = verts[(i + 1) % len(verts)]
            cross = (b[0] - a[0]) * (cand[:, 1] - a[1]) - (b[1] - a[1]) * (cand[:, 0] - a[0])
            keep &= cross >= -1e-12
        cand = cand[keep]
        take = min(n - got, len(cand))
        out[got : got + take] = cand[:take]
        got += take
    return out


def theory_density(cfg: ExperimentConfig, N: int) -> tuple[pot.DensityGrid, list | None]:
    grid = cfg.grid()
    fs = cfg.f_values()
    if len(set(fs)) <= 1:
        fld, corners = theory_field(cfg, N, f=fs[0])
        dens = pot.ma_density(fld, grid, fd_step=grid.steps()[0])
        return dens, corners
    if cfg.m == 2 and cfg.k == 2:
        fld_a, _ = theory_field(cfg, N, f=fs[0])
        fld_b, _ = theory_field(cfg, N, f=fs[1])
        dens = pot.ma_density_mixed(fld_a, fld_b, grid, fd_step=grid.steps()[0])
        return dens, None
    raise ConfigError(["mixed ensemble.f_list needs m = 2, k = 2"])


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------


def _solve_indexed(args):
    cfg, N, idx = args
    system = build_system(cfg, N, idx)
    try:
        zeros = sol.solve_system(
            system, window=cfg.window, system_id=idx, residual_tol=cfg.residual_tol
        )
        return idx, zeros, None
    except sol.SolverFailure as exc:
        return idx, None, str(exc)


def solve_all(cfg: ExperimentConfig, N: int):
    """Zero sets for every system index, order-independent of scheduling."""
    jobs = [(cfg, N, i) for i in range(cfg.systems)]
    results: dict[int, object] = {}
    if cfg.threads > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for idx, zeros, err in pool.map(_solve_indexed, jobs, chunksize=4):
                results[idx] = (zeros, err)
    else:
        for job in jobs:
            idx, zeros, err = _solve_indexed(job)
            results[idx] = (zeros, err)
    return [results[i] for i in range(cfg.systems)]


def run_experiment(cfg: ExperimentConfig, N: int | None = None) -> ComparisonReport:
    """Full pipeline: theory density, seeded batch of systems, metrics."""
    t_start = time.time()
    N = N if N is not None else cfg.N
    if N is None:
        raise ConfigError(["run.N required (or pass N explicitly)"])
    theory, corners = theory_density(cfg, N)
    grid = cfg.grid()
    solved = solve_all(cfg, N)

    def lookup_solver(_system, idx):
        zeros, err = solved[idx]
        if zeros is None:
            raise sol.SolverFailure(err)
        return zeros

    empirical = sol.empirical_zero_measure(
        range(cfg.systems),
        lookup_solver,
        grid,
        norm_scale=float(N * cfg.p) if cfg.kind in ("fixed_spectrum", "dilated_random", "random_polytope") else float(N),
    )
    metrics = compare_measures(theory, empirical, corners)
    return ComparisonReport(
        config=cfg,
        theory=theory,
        empirical=empirical,
        corners=corners,
        metrics=metrics,
        wall_time=time.time() - t_start,
    )


def compare_measures(
    theory: pot.DensityGrid,
    empirical: sol.EmpiricalMeasure,
    corners: list[tuple[float, float]] | None = None,
) -> dict:
    """Grid metrics between a theory density and an empirical histogram."""
    tmass = theory.cell_masses()
    emass = empirical.masses
    if tmass.shape != emass.shape:
        raise ValueError("grids are not dimensionally compatible")
    tv = 0.5 * float(np.abs(tmass - emass).sum())
    metrics = {
        "tv": tv,
        "theory_total": theory.total_mass,
        "empirical_total": float(emass.sum()),
        "mean_normalized_count": empirical.mean_normalized_count,
        "se_normalized_count": empirical.se_normalized_count,
        "failures": empirical.failures,
        "systems": empirical.sample_count,
    }
    if theory.grid.m == 1:
        metrics["w1"] = wasserstein1_1d(tmass, emass, theory.grid.steps()[0])
        if corners:
            atom_mass = sum(mass for _, mass in corners)
            metrics["corner_total"] = atom_mass
    return metrics


def tv_distance(mass_a: np.ndarray, mass_b: np.ndarray) -> float:
    return 0.5 * float(np.abs(mass_a - mass_b).sum())


def wasserstein1_1d(mass_a: np.ndarray, mass_b: np.ndarray, step: float) -> float:
    """W1 between the probability normalizations of two 1-D mass vectors."""
    a = mass_a / mass_a.sum() if mass_a.sum() > 0 else mass_a
    b = mass_b / mass_b.sum() if mass_b.sum() > 0 else mass_b
    return float(np.abs(np.cumsum(a - b)).sum() * step)


# ---------------------------------------------------------------------------
# kernel-level diagnostics (Stirling envelopes and potential convergence)
# ---------------------------------------------------------------------------


def stirling_constant(m: int) -> float:
    """Explicit envelope constant: Stirling remainder plus boundary terms.

    sum_{j<=m} log(1+j) + (m/2) log 2pi + (m+1)/12 covers the interior
    remainder; 0.5 log(m+1) covers the vertex correction of the half-log
    term and m^2/20 the boundary-face reduction at N >= 20.
    """
    return (
        sum(math.log(1 + j) for j in range(1, m + 1))
        + 0.5 * m * math.log(2 * math.pi)
        + (m + 1) / 12.0
        + 0.5 * math.log(m + 1)
        + m * m / 20.0
    )


def stirling_envelope_check(
    m_values=(1, 2),
    N_values=(20, 100, 500),
    rho_count: int = 5,
    seed: int = 123,
) -> dict:
    """Check -Nb + (m/2)logN - C <= log mass <= -Nb + m logN + C for all alpha.

    Returns the worst lower/upper margins (nonnegative means the bound holds).
    """
    rng = np.random.default_rng(seed)
    worst_lower = math.inf
    worst_upper = math.inf
    checked = 0
    for m in m_values:
        C = stirling_constant(m)
        for N in N_values:
            alphas = np.array([q.coords for q in lat.enumerate_lattice(N, m)], dtype=np.int64)
            rhos = rng.uniform(-3.0, 3.0, size=(rho_count, m))
            for rho in rhos:
                mass = ens.log_monomial_mass_array(alphas, N, rho)
                b = pot.decay_rate(alphas / N, rho, p=1.0)
                lower = -N * b + 0.5 * m * math.log(N) - C
                upper = -N * b + m * math.log(N) + C
                worst_lower = min(worst_lower, float((mass - lower).min()))
                worst_upper = min(worst_upper, float((upper - mass).min()))
                checked += alphas.shape[0]
    return {
        "worst_lower_margin": worst_lower,
        "worst_upper_margin": worst_upper,
        "passed": worst_lower >= 0.0 and worst_upper >= 0.0,
        "checked": checked,
    }


def kernel_convergence_check(
    base_points=((0,), (1,), (2,)),
    p: int = 2,
    N_values=(25, 50, 100, 200, 400),
    rho_box: float = 5.0,
    rho_count: int = 101,
    f_label: int | None = None,
) -> dict:
    """Sup-norm error of (1/N) log kernel against the limit envelope.

    err(N) = sup_rho |(1/N) log kernel(NS at degree Np) + p log(1+e^rho)
                      - max_S[<rho,lam> - entropy_p(lam)] - p log p|,
    which the Stirling envelopes bound by (m log(Np) + C + log f)/N.
    """
    base = lat.Spectrum(points=tuple(tuple(q) for q in base_points), degree=p)
    f = base.fewnomial_number
    pts = base.as_array().astype(float)
    rhos = np.linspace(-rho_box, rho_box, rho_count)
    m = base.m
    C = stirling_constant(m)
    rows = []
    for N in N_values:
        spec = lat.dilate_spectrum(base, N)
        err = 0.0
        lim = pot.discrete_legendre(pts, float(p), rhos[:, None]) + p * math.log(p)
        for i, r in enumerate(rhos):
            val = ens.conditional_szego_kernel(spec, N * p, m, np.array([r])) / N
            approx = val + p * float(np.logaddexp(0.0, r))
            err = max(err, abs(approx - lim[i]))
        bound = (m * math.log(N * p) + C + math.log(f)) / N
        rows.append({"N": N, "sup_error": err, "bound": bound})
    errors = [row["sup_error"] for row in rows]
    return {
        "rows": rows,
        "monotone": all(a > b for a, b in zip(errors, errors[1:])),
        "within_bound": all(row["sup_error"] <= row["bound"] for row in rows),
    }


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


def dump_kernel_csv(
    spectrum: lat.Spectrum,
    N: int,
    path,
    rho_lo: float = -5.0,
    rho_hi: float = 5.0,
    count: int = 201,
    tag: str = "su",
) -> None:
    """Write diagonal-kernel samples as "rho_1,...,rho_m,log_kernel" rows."""
    m = spectrum.m
    axes = [np.linspace(rho_lo, rho_hi, count if m == 1 else max(3, int(math.sqrt(count))))] * m
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    with open(path, "w") as fh:
        cols = ",".join(f"rho_{i+1}" for i in range(m))
        fh.write(f"{cols},log_kernel\n")
        for rho in mesh:
            if tag == "kac":
                val = ens.kac_kernel(spectrum, rho)
            else:
                val = ens.conditional_szego_kernel(spectrum, N, m, rho)
            coords = ",".join(f"{c:.17g}" for c in rho)
            fh.write(f"{coords},{val:.17g}\n")


def convergence_study(cfg: ExperimentConfig) -> ComparisonReport:
    """Per-N comparison metrics plus the fitted decay exponent.

    Requires at least three N values; the fitted slope is the least-squares
    exponent of the potential-level sup error (fixed spectra) or of the TV
    distance (random spectra) against N.
    """
    if cfg.N_list is None or len(cfg.N_list) < 3:
        raise ConfigError(["run.N_list with >= 3 entries required for a convergence study"])
    rows = []
    last = None
    for N in cfg.N_list:
        rep = run_experiment(cfg, N=N)
        row = {"N": N, **{k: rep.metrics[k] for k in ("tv", "theory_total", "mean_normalized_count")}}
        if "w1" in rep.metrics:
            row["w1"] = rep.metrics["w1"]
        if cfg.kind == "fixed_spectrum":
            chk = kernel_convergence_check(
                base_points=tuple(tuple(int(c) for c in v) for v in cfg.points),
                p=cfg.p,
                N_values=(N,),
                rho_box=5.0,
            )
            row["potential_sup_error"] = chk["rows"][0]["sup_error"]
        rows.append(row)
        last = rep
    key = "potential_sup_error" if cfg.kind == "fixed_spectrum" else "tv"
    xs = np.log([row["N"] for row in rows])
    ys = np.log([max(row[key], 1e-300) for row in rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    last.per_n = rows
    last.metrics["fit_metric"] = key
    last.metrics["fit_exponent"] = slope
    return last


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def emit_report(report: ComparisonReport, out_dir) -> list[Path]:
    """Write the full artifact set; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []

    density_path = out / "density.csv"
    pot.density_to_csv(report.theory, density_path)
    created.append(density_path)

    empirical_path = out / "empirical.csv"
    report.empirical.to_csv(empirical_path)
    created.append(empirical_path)

    if report.corners is not None:
        corners_path = out / "corners.csv"
        pot.corners_to_csv(report.corners, corners_path)
        created.append(corners_path)

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w") as fh:
        fh.write("metric,value\n")
        for key in sorted(report.metrics):
            fh.write(f"{key},{report.metrics[key]:.17g}\n")
        for row in report.per_n:
            for key in sorted(row):
                fh.write(f"N{row['N']}_{key},{row[key]:.17g}\n")
    created.append(metrics_path)

    echo_path = out / "config_echo.toml"
    echo_path.write_text(report.config.echo_toml())
    created.append(echo_path)

    summary_path = out / "summary.txt"
    lines = [
        f"label: {report.config.label or report.config.kind}",
        f"seed: {report.config.seed}",
        "commit: <unknown>",
        f"wall_time_s: {report.wall_time:.3f}",
        f"written_at: {time.strftime('%Y-%m-%d %H:%M:%S')}",
        "",
        "metrics:",
    ]
    for key in sorted(report.metrics):
        lines.append(f"  {key} = {report.metrics[key]:.10g}")
    summary_path.write_text("\n".join(lines) + "\n")
    created.append(summary_path)

    plot_path = out / "plot.gp"
    m = report.theory.grid.m
    if m == 1:
        plot_path.write_text(
            "set datafile separator ','\n"
            "set xlabel 'rho'\n"
            "set ylabel 'density'\n"
            "plot 'density.csv' using 1:2 skip 1 with lines title 'theory', \\\n"
            "     'empirical.csv' using 1:2 skip 1 with boxes title 'empirical'\n"
        )
    else:
        plot_path.write_text(
            "set datafile separator ','\n"
            "set view map\n"
            "splot 'density.csv' using 1:2:3 skip 1 with points palette title 'theory'\n"
        )
    created.append(plot_path)
    return created


def dump_samples(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """`sample` artifact: the systems (spectra + coefficients) and all zeros."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    N = cfg.N
    if N is None:
        raise ConfigError(["run.N required for sampling"])
    systems_path = out / "systems.txt"
    zeros_path = out / "zeros.csv"
    if zeros_path.exists():
        zeros_path.unlink()
    solved = solve_all(cfg, N)
    with open(systems_path, "w") as fh:
        for idx in range(cfg.systems):
            system = build_system(cfg, N, idx)
            for j, (spec, coeffs) in enumerate(system.polys):
                cs = ";".join(f"{c.real:.17g},{c.imag:.17g}" for c in coeffs)
                fh.write(f"system {idx} poly {j}: {lat.spectrum_to_record(spec)} | coeffs {cs}\n")
            zeros, err = solved[idx]
            if zeros is not None:
                zeros.to_csv(zeros_path)
            else:
                fh.write(f"system {idx} FAILED: {err}\n")
    return [systems_path, zeros_path]
