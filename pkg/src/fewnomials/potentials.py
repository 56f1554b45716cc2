"""Limiting convex potentials and their Monge-Ampere densities.

The zero distributions under study all arise as Monge-Ampere measures of
torus-invariant convex potentials of rho = log|z|^2:

* the upper envelope of finitely many affine functions (discrete Legendre
  transform of an entropy over a fixed spectrum),
* its average over f-tuples of simplex points (two independent evaluation
  routes: Monte Carlo over tuples, and a closed 1-D reduction through the
  distribution function of the pointwise decay rate),
* the flat-weight (Kac) potential, piecewise linear with a corner at 0,
* general convex symplectic potentials u in place of the standard entropy.

Densities are reported per unit rho-volume with the angular factors already
marginalized, normalized so that the full-spectrum control case has total
mass exactly one in every dimension.  Concretely the reported density is
m! det D^2_rho phi; in one dimension this is just phi''.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    bisect_decreasing,
    log1p_exp_sum,
    maximize_concave,
    xlogx,
)


# ---------------------------------------------------------------------------
# symplectic potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymplecticPotential:
    """A convex function on the open simplex, with optional derivatives.

    `value` maps arrays of shape (..., m) to (...); `grad` maps (..., m) to
    (..., m); `hess` maps a single point (m,) to (m, m).  Missing derivatives
    are supplied by finite differences where needed.
    """

    value: object
    grad: object = None
    hess: object = None
    name: str = "custom"

    def __call__(self, lam):
        return self.value(lam)


def fubini_study_potential(m: int = 1) -> SymplecticPotential:
    """The standard entropy sum_{j=0}^m lam_j log lam_j with lam_0 = 1 - |lam|."""

    def value(lam):
        lam = np.asarray(lam, dtype=float)
        tail = 1.0 - lam.sum(axis=-1)
        return xlogx(lam).sum(axis=-1) + xlogx(tail)

    def grad(lam):
        lam = np.asarray(lam, dtype=float)
        tail = 1.0 - lam.sum(axis=-1, keepdims=True)
        return np.log(lam) - np.log(tail)

    def hess(lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        tail = 1.0 - lam.sum()
        return np.diag(1.0 / lam) + 1.0 / tail

    return SymplecticPotential(value=value, grad=grad, hess=hess, name="fubini_study")


def perturbed_fs_potential(strength: float = 0.1, center: float = 0.5, m: int = 1) -> SymplecticPotential:
    """Entropy plus a convex quadratic bump: u_FS + strength * |lam - center|^2."""
    base = fubini_study_potential(m)

    def value(lam):
        lam = np.asarray(lam, dtype=float)
        return base.value(lam) + strength * ((lam - center) ** 2).sum(axis=-1)

    def grad(lam):
        lam = np.asarray(lam, dtype=float)
        return base.grad(lam) + 2.0 * strength * (lam - center)

    def hess(lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return base.hess(lam) + 2.0 * strength * np.eye(lam.shape[0])

    return SymplecticPotential(value=value, grad=grad, hess=hess, name=f"fs_plus_quadratic_{strength}")


# ---------------------------------------------------------------------------
# pointwise decay rate and its distribution function
# ---------------------------------------------------------------------------


def decay_rate(lam, rho, p: float = 1.0):
    """Exponential decay exponent of the normalized monomial mass.

    b(lam; rho) = sum_{j=0}^m lam_j log(lam_j / p) - <rho, lam>
                  + p log(1 + sum e^rho),   lam_0 = p - |lam|,

    with 0 log 0 = 0 on the boundary.  Nonnegative, and zero exactly at the
    moment-map image lam = p e^rho / (1 + sum e^rho).  `lam` may have shape
    (..., m); `rho` is a single point (m,).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        lam = lam[None]
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    m = rho.shape[0]
    if lam.shape[-1] != m:
        raise ValueError("lam and rho dimensions differ")
    tol = 1e-9 * max(1.0, p)
    tail = p - lam.sum(axis=-1)
    if np.any(lam < -tol) or np.any(tail < -tol):
        raise ValueError("lam outside the scaled closed simplex")
    lam = np.clip(lam, 0.0, None)
    tail = np.clip(tail, 0.0, None)
    logp = math.log(p)
    entropy = (
        xlogx(lam).sum(axis=-1)
        + xlogx(tail)
        - (lam.sum(axis=-1) + tail) * logp
    )
    val = entropy - lam @ rho + p * float(log1p_exp_sum(rho))
    return np.maximum(val, 0.0)


def _decay_rate_1d(lam, rho: float, u: SymplecticPotential | None):
    """b(lam; rho) on [0, 1] for m = 1, with an optional general potential."""
    lam = np.asarray(lam, dtype=float)
    if u is None:
        ent = xlogx(lam) + xlogx(1.0 - lam)
        phi = float(log1p_exp_sum([rho]))
    else:
        ent = u.value(lam[..., None])
        phi, _ = legendre_dual(u, rho)
    return ent - rho * lam + phi


def legendre_dual(u: SymplecticPotential, rho: float) -> tuple[float, float]:
    """sup over [0,1] of (rho*lam - u(lam)) and its maximizer, m = 1.

    The objective is concave, so golden-section search is safe; the standard
    entropy short-circuits to the closed form log(1 + e^rho) with maximizer
    e^rho / (1 + e^rho).
    """
    if u.name == "fubini_study":
        phi = float(log1p_exp_sum([rho]))
        return phi, 1.0 / (1.0 + math.exp(-rho))
    lam_star, val = maximize_concave(
        lambda lam: rho * lam - float(u.value(np.array([lam]))), 0.0, 1.0
    )
    return val, lam_star


def db_distribution(
    t,
    rho: float,
    method: str = "invert1d",
    u: SymplecticPotential | None = None,
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
    m: int = 1,
):
    """Distribution function D_b(t; rho) of the decay rate on the simplex.

    invert1d (m = 1): the decay rate is strictly convex in lam with minimum
    zero, so each sublevel set is an interval whose endpoints are found by
    bisection on the two monotone branches; D_b is the interval length.
    With the standard entropy this reduces to 1 - g(t, rho) - g(t, -rho)
    where g is the lower branch (by the lam -> 1 - lam, rho -> -rho symmetry).

    mc: hit-or-miss Monte Carlo over the simplex (any m).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if method == "mc":
        if rng is None:
            raise ValueError("mc requires a seeded generator")
        lam = sample_simplex(n_samples, m, rng)
        b = decay_rate(lam, np.atleast_1d(rho), p=1.0) if u is None else _decay_rate_1d(
            lam[:, 0], float(np.atleast_1d(rho)[0]), u
        )
        return (b[None, ...] <= t.reshape(t.shape + (1,))).mean(axis=-1)
    if method != "invert1d":
        raise ValueError(f"unknown method {method!r}")
    if m != 1:
        raise ValueError("invert1d supports m = 1 only")
    rho = float(np.atleast_1d(rho)[0])
    if u is None:
        lo = _lower_branch_fs(t, rho)
        hi = 1.0 - _lower_branch_fs(t, -rho)
    else:
        lo, hi = _branches_general(t, rho, u)
    # the t = 0 sublevel set is the single minimum point (measure zero);
    # bisection cannot resolve the flat minimum below sqrt(eps), so pin it
    return np.where(t == 0.0, 0.0, np.clip(hi - lo, 0.0, 1.0))


def _lower_branch_fs(t, rho: float):
    """g(t, rho): solve b(g) = t on the decreasing branch [0, lam*], else 0."""
    t = np.asarray(t, dtype=float)
    lam_star = 1.0 / (1.0 + math.exp(-rho))
    b0 = float(log1p_exp_sum([rho]))  # b at lam = 0

    def b(lam):
        return _b_fs(lam, rho)

    g = bisect_decreasing(b, np.zeros_like(t), np.full_like(t, lam_star), t)
    return np.where(t >= b0, 0.0, g)


def _b_fs(lam, rho: float):
    return xlogx(lam) + xlogx(1.0 - lam) - rho * lam + float(log1p_exp_sum([rho]))


def _branches_general(t, rho: float, u: SymplecticPotential):
    t = np.asarray(t, dtype=float)
    phi, lam_star = legendre_dual(u, rho)

    def b(lam):
        return u.value(np.asarray(lam)[..., None]) - rho * np.asarray(lam) + phi

    b0 = float(b(0.0))
    b1 = float(b(1.0))
    lo = bisect_decreasing(b, np.zeros_like(t), np.full_like(t, lam_star), t)
    lo = np.where(t >= b0, 0.0, lo)
    # the upper branch is increasing; reflect to reuse the decreasing solver
    hi = bisect_decreasing(
        lambda s: b(1.0 - s), np.zeros_like(t), np.full_like(t, 1.0 - lam_star), t
    )
    hi = np.where(t >= b1, 0.0, hi)
    return lo, 1.0 - hi


# ---------------------------------------------------------------------------
# averaged potentials: Monte Carlo route and distribution-function route
# ---------------------------------------------------------------------------


def sample_simplex(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform points on the open m-simplex (normalized measure m! dlam).

    Standard exponential-spacings construction: draw m+1 unit exponentials
    and normalize; dropping the last coordinate is uniform on the simplex.
    """
    g = rng.exponential(scale=1.0, size=(n, m + 1))
    return g[:, :m] / g.sum(axis=1, keepdims=True)


def averaged_potential_mc(
    f: int,
    u: SymplecticPotential | None,
    rho,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo mean of max_j [<rho, lam^j> - u(lam^j)] over f-tuples.

    Returns (mean, standard error).  `u=None` means the standard entropy.
    """
    if f < 1:
        raise ValueError("f must be >= 1")
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    m = rho.shape[0]
    pot = u if u is not None else fubini_study_potential(m)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = max(1, min(n_samples, int(2_000_000 // max(f * m, 1))))
    while done < n_samples:
        n = min(chunk, n_samples - done)
        lam = sample_simplex(n * f, m, rng).reshape(n, f, m)
        vals = (lam @ rho - pot.value(lam)).max(axis=1)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        done += n
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0)
    return mean, math.sqrt(var / n_samples)


def averaged_potential_db(
    f: int,
    rho: float,
    u: SymplecticPotential | None = None,
    tol: float = 1e-8,
) -> float:
    """Averaged potential via the decay-rate distribution function (m = 1).

    Uses E[min of f i.i.d. copies] = integral of (1 - D_b)^f and the exact
    identity  avg potential = phi(rho) - E[min_j b(lam^j; rho)], where phi is
    the Legendre dual of u.  The t-integral is truncated at the larger vertex
    value of b (the integrand vanishes beyond) and split at the smaller one,
    where the integrand has a kink.
    """
    return float(averaged_db_values(f, np.array([rho]), u=u, tol=tol)[0])


def averaged_db_values(
    f: int,
    rhos,
    u: SymplecticPotential | None = None,
    tol: float = 1e-8,
    nodes: int = 48,
) -> np.ndarray:
    """Vectorized db-route averaged potential over an array of rho values.

    The sublevel-set width D_b grows like sqrt(t) off the decay-rate minimum,
    so the first quadrature piece substitutes t = t_kink s^2 to keep the
    integrand smooth; a node-doubling check guards the tolerance.
    """
    if f < 1:
        raise ValueError("f must be >= 1")
    rho = np.asarray(rhos, dtype=float).reshape(-1)
    if u is None:
        phi = np.logaddexp(0.0, rho)
        lam_star = 1.0 / (1.0 + np.exp(-rho))
        b0 = phi  # decay rate at lam = 0
        b1 = np.logaddexp(0.0, -rho)  # decay rate at lam = 1
        u0 = np.zeros_like(rho)
        u1 = np.zeros_like(rho)
    else:
        phi, lam_star = _legendre_dual_batch(u, rho)
        u0 = float(u.value(np.array([0.0]))) + np.zeros_like(rho)
        u1 = float(u.value(np.array([1.0]))) + np.zeros_like(rho)
        b0 = u0 + phi
        b1 = u1 - rho + phi
    t_kink = np.minimum(b0, b1)
    t_max = np.maximum(b0, b1)

    def tail(n):
        x, w = np.polynomial.legendre.leggauss(n)
        x01 = 0.5 * (x + 1.0)
        w01 = 0.5 * w
        # piece 1: [0, t_kink] with the sqrt substitution
        t1 = t_kink[None, :] * x01[:, None] ** 2
        w1 = 2.0 * t_kink[None, :] * (x01 * w01)[:, None]
        # piece 2: [t_kink, t_max], plain nodes
        t2 = t_kink[None, :] + (t_max - t_kink)[None, :] * x01[:, None]
        w2 = (t_max - t_kink)[None, :] * w01[:, None]
        d1 = _db_batch(t1, rho, lam_star, phi, b0, b1, u)
        d2 = _db_batch(t2, rho, lam_star, phi, b0, b1, u)
        return (w1 * (1.0 - d1) ** f).sum(axis=0) + (w2 * (1.0 - d2) ** f).sum(axis=0)

    i1 = tail(nodes)
    i2 = tail(2 * nodes)
    if np.max(np.abs(i1 - i2)) > tol:
        i2 = tail(4 * nodes)
    return phi - i2


def _xlogx_fast(x):
    return x * np.log(np.maximum(x, 1e-300))


def _db_batch(t, rho, lam_star, phi, b0, b1, u: SymplecticPotential | None):
    """D_b for an array of thresholds t (n, R) against per-column rho (R,)."""
    if u is None:
        b = lambda lam: _xlogx_fast(lam) + _xlogx_fast(1.0 - lam) - rho * lam + phi
    else:
        b = lambda lam: np.asarray(u.value(lam[..., None]), dtype=float) - rho * lam + phi
    lo = _bisect_cols(b, np.zeros_like(t), np.broadcast_to(lam_star, t.shape), t)
    lo = np.where(t >= b0, 0.0, lo)
    hi = _bisect_cols(
        lambda s: b(1.0 - s), np.zeros_like(t), np.broadcast_to(1.0 - lam_star, t.shape), t
    )
    hi = np.where(t >= b1, 0.0, hi)
    return np.where(t <= 0.0, 0.0, np.clip(1.0 - lo - hi, 0.0, 1.0))


def _bisect_cols(fun, lo, hi, target, iters: int = 60):
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = fun(mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def _legendre_dual_batch(u: SymplecticPotential, rho: np.ndarray):
    """Column-wise golden-section Legendre dual of u over [0, 1]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a = np.zeros_like(rho)
    b = np.ones_like(rho)

    def obj(lam):
        return rho * lam - np.asarray(u.value(lam[..., None]), dtype=float)

    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(90):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = obj(c)
        fd = obj(d)
    lam_star = 0.5 * (a + b)
    return obj(lam_star), lam_star


def kac_potential(
    f: int,
    rho,
    method: str = "closed1d",
    n_samples: int = 200_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Flat-weight averaged potential: E over f-tuples of max_j <x^j, rho>.

    closed1d (m = 1): order statistics of uniforms give
    rho * f/(f+1) for rho >= 0 and rho * 1/(f+1) for rho <= 0.
    """
    if f < 1:
        raise ValueError("f must be >= 1")
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if method == "closed1d":
        if rho.shape[0] != 1:
            raise ValueError("closed1d supports m = 1 only")
        r = float(rho[0])
        return r * f / (f + 1) if r >= 0 else r / (f + 1)
    if method == "mc":
        if rng is None:
            raise ValueError("mc requires a seeded generator")
        m = rho.shape[0]
        lam = sample_simplex(n_samples * f, m, rng).reshape(n_samples, f, m)
        return float((lam @ rho).max(axis=1).mean())
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# potential fields
# ---------------------------------------------------------------------------


@dataclass
class PotentialField:
    """An evaluable convex potential of rho, tagged with its construction.

    The evaluator maps arrays of shape (..., m) to (...).  Fields are pure
    and reentrant; Monte Carlo fields freeze their sample set at build time
    so that evaluation is deterministic and smooth across a grid.
    """

    fn: object
    kind: str
    m: int
    metadata: dict = field(default_factory=dict)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if rho.ndim == 0:
            rho = rho[None]
        if rho.shape[-1] != self.m:
            raise ValueError("dimension mismatch")
        return self.fn(rho)


def fubini_study_field(m: int = 1) -> PotentialField:
    """log(1 + sum e^rho): the full-spectrum limit potential."""
    return PotentialField(fn=lambda r: log1p_exp_sum(r), kind="fubini_study", m=m)


def discrete_legendre(points, p: float, rho, u: SymplecticPotential | None = None):
    """max over lam in S of [<rho, lam> - entropy_p(lam)].

    `points` is a Spectrum or an (f, m) array of (possibly non-integer)
    points of the p-scaled simplex; entropy_p(lam) = sum_{j=0}^m hat-lam_j
    log hat-lam_j with hat-lam = (p - |lam|, lam), or p * u(lam / p) for a
    supplied u.  Exact maximum of finitely many affine functions of rho.
    """
    if hasattr(points, "as_array"):
        points = points.as_array()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    rho = np.asarray(rho, dtype=float)
    if rho.ndim == 0:
        rho = rho[None]
    intercepts = -_entropy_p(pts, p, u)
    vals = rho @ pts.T + intercepts
    return vals.max(axis=-1)


def _entropy_p(pts: np.ndarray, p: float, u: SymplecticPotential | None) -> np.ndarray:
    if u is not None:
        return p * np.asarray(u.value(pts / p), dtype=float)
    tail = p - pts.sum(axis=-1)
    if np.any(pts < -1e-12) or np.any(tail < -1e-12):
        raise ValueError("points outside the scaled simplex")
    return xlogx(pts).sum(axis=-1) + xlogx(np.clip(tail, 0.0, None))


def discrete_legendre_field(points, p: float, u: SymplecticPotential | None = None) -> PotentialField:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return PotentialField(
        fn=lambda r: discrete_legendre(pts, p, r, u),
        kind="discrete_legendre",
        m=pts.shape[1],
        metadata={"p": p, "f": pts.shape[0]},
    )


def averaged_field_db(f: int, u: SymplecticPotential | None = None) -> PotentialField:
    """Averaged potential as a field, via the deterministic 1-D route."""

    def fn(rho):
        flat = rho.reshape(-1)
        return averaged_db_values(f, flat, u=u).reshape(rho.shape[:-1])

    return PotentialField(fn=fn, kind="averaged_db", m=1, metadata={"f": f, "u": getattr(u, "name", "fubini_study")})


def averaged_field_mc(
    f: int,
    m: int,
    n_samples: int,
    rng: np.random.Generator,
    u: SymplecticPotential | None = None,
) -> PotentialField:
    """Averaged potential with a frozen tuple sample (common random numbers).

    Evaluation at every rho reuses the same n_samples f-tuples, so the field
    is an exactly convex piecewise-linear function and grids are smooth in
    the sample noise.
    """
    pot = u if u is not None else fubini_study_potential(m)
    lam = sample_simplex(n_samples * f, m, rng).reshape(n_samples, f, m)
    uvals = np.asarray(pot.value(lam), dtype=float)  # (n, f)

    def fn(rho):
        flat = rho.reshape(-1, m)
        nR = flat.shape[0]
        acc = np.zeros(nR)
        chunk = max(1, int(20_000_000 // max(nR, 1)))
        for start in range(0, n_samples, chunk):
            lam_c = lam[start : start + chunk]
            u_c = uvals[start : start + chunk]
            best = None
            for j in range(f):
                scores = flat @ lam_c[:, j, :].T - u_c[None, :, j]
                best = scores if best is None else np.maximum(best, scores)
            acc += best.sum(axis=1)
        return (acc / n_samples).reshape(rho.shape[:-1])

    return PotentialField(
        fn=fn,
        kind="averaged_mc",
        m=m,
        metadata={"f": f, "n_samples": n_samples, "u": getattr(u, "name", "fubini_study")},
    )


def kac_field(f: int, m: int = 1, n_samples: int = 200_000, rng: np.random.Generator | None = None) -> PotentialField:
    if m == 1:
        fn = lambda rho: np.where(
            rho[..., 0] >= 0, rho[..., 0] * f / (f + 1), rho[..., 0] / (f + 1)
        )
        return PotentialField(fn=fn, kind="kac", m=1, metadata={"f": f})
    if rng is None:
        raise ValueError("kac field in m > 1 needs a generator for its sample")
    lam = sample_simplex(n_samples * f, m, rng).reshape(n_samples, f, m)

    def fn(rho):
        flat = rho.reshape(-1, m)
        best = None
        for j in range(f):
            scores = flat @ lam[:, j, :].T
            best = scores if best is None else np.maximum(best, scores)
        return best.mean(axis=1).reshape(rho.shape[:-1])

    return PotentialField(fn=fn, kind="kac", m=m, metadata={"f": f, "n_samples": n_samples})


def mean_legendre_field(point_sets: np.ndarray, p: float) -> PotentialField:
    """Mean of discrete Legendre transforms over many f-point sets.

    `point_sets` has shape (K, f, m): K spectra of f points each inside the
    p-scaled simplex.  This is the limit potential when the spectrum itself
    is random with finitely many outcomes.
    """
    sets = np.asarray(point_sets, dtype=float)
    K, f, m = sets.shape
    intercepts = -_entropy_p(sets.reshape(-1, m), p, None).reshape(K, f)

    def fn(rho):
        flat = rho.reshape(-1, m)
        nR = flat.shape[0]
        acc = np.zeros(nR)
        chunk = max(1, int(20_000_000 // max(nR * f, 1)))
        for start in range(0, K, chunk):
            s = sets[start : start + chunk]
            b = intercepts[start : start + chunk]
            vals = np.einsum("rm,kfm->rkf", flat, s) + b[None, :, :]
            acc += vals.max(axis=2).sum(axis=1)
        return (acc / K).reshape(rho.shape[:-1])

    return PotentialField(fn=fn, kind="mean_legendre", m=m, metadata={"p": p, "K": K, "f": f})


# ---------------------------------------------------------------------------
# grids and Monge-Ampere densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform box grid: per-axis (lo, hi, nbins); nodes are cell centers."""

    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        for lo, hi, n in self.axes:
            if hi <= lo or n < 1:
                raise ValueError("bad grid axis")

    @property
    def m(self) -> int:
        return len(self.axes)

    def centers(self, axis: int) -> np.ndarray:
        lo, hi, n = self.axes[axis]
        step = (hi - lo) / n
        return lo + step * (np.arange(n) + 0.5)

    def steps(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps()))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n for _, _, n in self.axes)

    def node_mesh(self) -> np.ndarray:
        """(n1, ..., nm, m) array of node coordinates."""
        grids = np.meshgrid(*(self.centers(i) for i in range(self.m)), indexing="ij")
        return np.stack(grids, axis=-1)


@dataclass
class DensityGrid:
    """Gridded Monge-Ampere density with its Riemann-sum total mass.

    Values are densities per unit rho-volume (angular part marginalized;
    includes the m! calibration making the full-spectrum total equal one).
    Non-finite potential values or FD determinants below -1e-6 appear as NaN
    (masked) cells and are excluded from the total.
    """

    grid: GridSpec
    values: np.ndarray
    total_mass: float
    metadata: dict = field(default_factory=dict)

    def cell_masses(self) -> np.ndarray:
        return np.nan_to_num(self.values, nan=0.0) * self.grid.cell_volume


def ma_density(
    potential: PotentialField,
    grid: GridSpec,
    fd_step: float = 1e-3,
    clamp_tol: float = 1e-6,
    richardson: bool = False,
) -> DensityGrid:
    """Central-difference Monge-Ampere density of a convex potential.

    Density = m! det D^2_rho phi at every node.  Small negative FD noise
    (above -clamp_tol) is kept as-is; anything below is masked as a failed
    cell.  When fd_step coincides with the grid spacing, the potential is
    evaluated once on a padded node lattice (totals then telescope to the
    exact gradient range in m = 1).
    """
    m = grid.m
    if potential.m != m:
        raise ValueError("grid and potential dimensions differ")
    h = float(fd_step)
    raw = _hessian_det_grid(potential, grid, h)
    if richardson:
        raw_half = _hessian_det_grid(potential, grid, h / 2)
        dev = float(np.nanmax(np.abs(raw - raw_half))) if raw.size else 0.0
    vals = math.factorial(m) * raw
    bad = vals < -clamp_tol
    vals = np.where(bad, np.nan, vals)
    total = float(np.nansum(vals) * grid.cell_volume)
    meta = {"fd_step": h, "masked_cells": int(np.count_nonzero(~np.isfinite(vals)))}
    if richardson:
        meta["richardson_max_dev"] = math.factorial(m) * dev
    return DensityGrid(grid=grid, values=vals, total_mass=total, metadata=meta)


def _hessian_det_grid(potential: PotentialField, grid: GridSpec, h: float) -> np.ndarray:
    m = grid.m
    if m == 1:
        x = grid.centers(0)
        stencil = np.stack([x - h, x, x + h], axis=0)[..., None]
        v = potential(stencil)
        return (v[0] - 2.0 * v[1] + v[2]) / (h * h)
    if m == 2:
        vxx, vyy, vxy = _hessian_parts_grid(potential, grid, h)
        return vxx * vyy - vxy * vxy
    raise ValueError("densities are computed for m <= 2")


def ma_density_mixed(
    pot_a: PotentialField,
    pot_b: PotentialField,
    grid: GridSpec,
    fd_step: float = 1e-3,
    clamp_tol: float = 1e-6,
) -> DensityGrid:
    """Mixed Monge-Ampere density of two convex potentials (m = 2).

    Uses the polarization of the determinant: D(A, B) with D(A, A) = 2 det A,
    normalized so that equal potentials reproduce ma_density.  This is the
    limiting density for a pair of equations with different fewnomial
    numbers.
    """
    if grid.m != 2 or pot_a.m != 2 or pot_b.m != 2:
        raise ValueError("mixed densities are defined for m = 2")
    h = float(fd_step)
    ha = _hessian_parts_grid(pot_a, grid, h)
    hb = _hessian_parts_grid(pot_b, grid, h)
    raw = ha[0] * hb[1] + hb[0] * ha[1] - 2.0 * ha[2] * hb[2]
    bad = raw < -clamp_tol
    vals = np.where(bad, np.nan, raw)
    total = float(np.nansum(vals) * grid.cell_volume)
    return DensityGrid(
        grid=grid,
        values=vals,
        total_mass=total,
        metadata={"fd_step": h, "masked_cells": int(np.count_nonzero(~np.isfinite(vals))), "mixed": True},
    )


def _hessian_parts_grid(potential: PotentialField, grid: GridSpec, h: float):
    """(vxx, vyy, vxy) arrays on the grid nodes."""
    steps = grid.steps()
    aligned = all(abs(s - h) < 1e-12 * max(1.0, h) for s in steps)
    if aligned:
        xs = np.concatenate(([grid.centers(0)[0] - h], grid.centers(0), [grid.centers(0)[-1] + h]))
        ys = np.concatenate(([grid.centers(1)[0] - h], grid.centers(1), [grid.centers(1)[-1] + h]))
        mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        V = potential(mesh)
        vxx = (V[2:, 1:-1] - 2 * V[1:-1, 1:-1] + V[:-2, 1:-1]) / (h * h)
        vyy = (V[1:-1, 2:] - 2 * V[1:-1, 1:-1] + V[1:-1, :-2]) / (h * h)
        vxy = (V[2:, 2:] - V[2:, :-2] - V[:-2, 2:] + V[:-2, :-2]) / (4 * h * h)
        return vxx, vyy, vxy
    mesh = grid.node_mesh()

    def at(dx, dy):
        return potential(mesh + np.array([dx * h, dy * h]))

    c = at(0, 0)
    vxx = (at(1, 0) - 2 * c + at(-1, 0)) / (h * h)
    vyy = (at(0, 1) - 2 * c + at(0, -1)) / (h * h)
    vxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h)
    return vxx, vyy, vxy


def ma_corner_measure(points, p: float = 1.0) -> list[tuple[float, float]]:
    """Atoms of the Monge-Ampere measure of a 1-D piecewise-linear envelope.

    Input is a set of slopes lam in [0, p] (the spectrum points); each line
    is lam * rho - entropy_p(lam).  Dominated lines are discarded by the
    upper-envelope construction; each surviving breakpoint rho* carries mass
    equal to its slope jump, so the masses sum to (max slope - min slope).
    Fewer than two distinct slopes produce no corners.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if pts.ndim == 2:
        if pts.shape[1] != 1:
            raise ValueError("corner measures are one-dimensional")
        pts = pts[:, 0]
    intercepts = -_entropy_p(pts[:, None], p, None)
    # keep the best intercept per distinct slope
    lines: dict[float, float] = {}
    for s, b in zip(pts, intercepts):
        s = float(s)
        if s not in lines or b > lines[s]:
            lines[s] = float(b)
    slopes = sorted(lines)
    if len(slopes) < 2:
        return []
    kept: list[tuple[float, float]] = []  # (slope, intercept) on the envelope
    for s in slopes:
        b = lines[s]
        while kept:
            if len(kept) >= 2:
                s1, b1 = kept[-2]
                s2, b2 = kept[-1]
                # drop the middle line if the outer pair meets left of it
                if (b - b2) * (s2 - s1) >= (b2 - b1) * (s - s2):
                    kept.pop()
                    continue
            if kept[-1][0] == s:
                kept.pop()
                continue
            break
        kept.append((s, b))
    corners = []
    for (s1, b1), (s2, b2) in zip(kept, kept[1:]):
        rho_star = (b1 - b2) / (s2 - s1)
        corners.append((float(rho_star), float(s2 - s1)))
    return corners


def fs_density_1d(rho) -> np.ndarray:
    """Closed-form full-spectrum density e^rho / (1 + e^rho)^2."""
    rho = np.asarray(rho, dtype=float)
    return 0.25 / np.cosh(0.5 * rho) ** 2


def density_to_csv(density: DensityGrid, path) -> None:
    """Write "rho_1,...,rho_m,density" rows, 17 significant digits."""
    mesh = density.grid.node_mesh().reshape(-1, density.grid.m)
    vals = density.values.reshape(-1)
    with open(path, "w") as fh:
        cols = ",".join(f"rho_{i+1}" for i in range(density.grid.m))
        fh.write(f"{cols},density\n")
        for row, v in zip(mesh, vals):
            coords = ",".join(f"{c:.17g}" for c in row)
            fh.write(f"{coords},{v:.17g}\n")


def corners_to_csv(corners: list[tuple[float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("rho_star,mass\n")
        for rho_star, mass in corners:
            fh.write(f"{rho_star:.17g},{mass:.17g}\n")
