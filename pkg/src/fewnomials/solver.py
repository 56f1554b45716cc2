"""Complex zero location for sparse polynomial systems.

Univariate polynomials are solved with a simultaneous Aberth-Ehrlich
iteration that evaluates the polynomial in log-polar form directly from the
sparse term list.  This sidesteps the enormous dynamic range of the
orthonormal-basis coefficients (hundreds of decades at degree 500) and never
forms z^N explicitly, so there is no overflow at any root modulus.  Initial
guesses sit on concentric circles with radii read off the Newton polygon of
(exponent, log|coefficient|), where sparse root moduli cluster.

Bivariate systems are eliminated through the Sylvester resultant in the
second variable.  The resultant's dense coefficients are recovered by
evaluate-and-interpolate: the determinant is sampled on several circles
|z_1| = r (log-radius ladder), each FFT recovers the coefficient bands near
that circle's envelope reliably, and the bands are merged in log scale.
Candidate first coordinates then back-substitute through a univariate solve
and a full 2x2 Newton polish; everything is residual-verified against the
original sparse system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import FewnomialSystem, NormingTable
from .lattice import Spectrum
from .potentials import GridSpec


class SolverFailure(RuntimeError):
    """A system whose roots could not be verified to tolerance."""


class DegenerateSystemError(SolverFailure):
    """The system has no isolated torus zeros (e.g. vanishing resultant)."""


class SolverFailureRateError(RuntimeError):
    """Raised when more than the allowed fraction of systems fail."""


@dataclass
class ZeroSet:
    """Verified common zeros of one system, with multiplicities.

    `zs` has shape (n, m) complex; `multiplicity` (n,) int; `residual` is the
    largest normalized residual max_j |P_j(z)| / sum of term moduli over all
    reported points.
    """

    zs: np.ndarray
    multiplicity: np.ndarray
    residual: float
    system_id: int = 0

    @property
    def m(self) -> int:
        return self.zs.shape[1] if self.zs.ndim == 2 else 1

    @property
    def total_count(self) -> int:
        return int(self.multiplicity.sum())

    def rho(self) -> np.ndarray:
        return np.log(np.abs(self.zs) ** 2)

    def theta(self) -> np.ndarray:
        return np.mod(np.angle(self.zs), 2.0 * math.pi)

    def to_csv(self, path) -> None:
        m = self.m
        with open(path, "a") as fh:
            if fh.tell() == 0:
                if m == 1:
                    head = "re,im,rho,theta"
                else:
                    head = ",".join(
                        [f"re_{i+1},im_{i+1}" for i in range(m)]
                        + [f"rho_{i+1}" for i in range(m)]
                        + [f"theta_{i+1}" for i in range(m)]
                    )
                fh.write(f"system,{head},multiplicity,residual\n")
            rho = self.rho()
            theta = self.theta()
            for i in range(self.zs.shape[0]):
                z = self.zs[i]
                parts = []
                for j in range(m):
                    parts += [f"{z[j].real:.17g}", f"{z[j].imag:.17g}"]
                parts += [f"{rho[i, j]:.17g}" for j in range(m)]
                parts += [f"{theta[i, j]:.17g}" for j in range(m)]
                fh.write(
                    f"{self.system_id},"
                    + ",".join(parts)
                    + f",{int(self.multiplicity[i])},{self.residual:.17g}\n"
                )


# ---------------------------------------------------------------------------
# sparse log-polar evaluation
# ---------------------------------------------------------------------------


def _log_terms(spectrum: Spectrum, coeffs: np.ndarray, tag: str, N: int, u=None):
    """Sparse term list (exponents, log|a|, arg a) with a = c / ||chi||.

    The log magnitudes are centered (max = 0); a common rescaling does not
    move roots and keeps exp() in range.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    table = NormingTable.build(spectrum, N, tag=tag, u=u)
    mag = np.abs(coeffs)
    if np.any(mag == 0.0):
        keep = mag > 0.0
        exps = table.exponents[keep]
        logmag = np.log(mag[keep]) - 0.5 * table.log_q[keep]
        phase = np.angle(coeffs[keep])
    else:
        exps = table.exponents
        logmag = np.log(mag) - 0.5 * table.log_q
        phase = np.angle(coeffs)
    if len(logmag) == 0:
        raise DegenerateSystemError("identically zero polynomial")
    logmag = logmag - logmag.max()
    return exps, logmag, phase


def _eval_sparse(z: np.ndarray, exps: np.ndarray, logmag: np.ndarray, phase: np.ndarray):
    """Evaluate P and z P' at points z, scale-free.

    Returns (s0, s1, absum, M): P(z) = s0 * e^M, z P'(z) = s1 * e^M, and
    absum * e^M is the sum of term moduli (for normalized residuals).
    """
    z = np.asarray(z, dtype=complex)
    az = np.abs(z)
    az = np.where(az < 1e-300, 1e-300, az)
    logz = np.log(az)
    argz = np.angle(z)
    T = logmag[None, :] + np.outer(logz, exps)
    M = T.max(axis=1)
    W = np.exp(T - M[:, None] + 1j * (phase[None, :] + np.outer(argz, exps)))
    s0 = W.sum(axis=1)
    s1 = W @ exps
    absum = np.exp(T - M[:, None]).sum(axis=1)
    return s0, s1, absum, M


def _newton_polygon_guesses(exps: np.ndarray, logmag: np.ndarray) -> np.ndarray:
    """Initial Aberth guesses from the exponent/log-magnitude upper envelope.

    Each envelope segment between exponents e_i < e_{i+1} predicts
    e_{i+1} - e_i roots of log-modulus (l_i - l_{i+1}) / (e_{i+1} - e_i);
    guesses are spread over three concentric circles at that radius.
    """
    order = np.argsort(exps)
    e = np.asarray(exps, dtype=float)[order]
    l = np.asarray(logmag, dtype=float)[order]
    hull = []  # indices of the upper concave envelope of (e, l)
    for i in range(len(e)):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            # keep the envelope concave: slope must be decreasing
            if (l[i2] - l[i1]) * (e[i] - e[i2]) <= (l[i] - l[i2]) * (e[i2] - e[i1]):
                hull.pop()
            else:
                break
        hull.append(i)
    guesses = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    seg_id = 0
    for i1, i2 in zip(hull, hull[1:]):
        count = int(round(e[i2] - e[i1]))
        logr = (l[i1] - l[i2]) / (e[i2] - e[i1])
        r = math.exp(max(min(logr, 600.0), -600.0))
        for j in range(count):
            radius = r * (0.94, 1.0, 1.065)[j % 3]
            ang = 2.0 * math.pi * j / count + golden * (seg_id + 1)
            guesses.append(radius * complex(math.cos(ang), math.sin(ang)))
        seg_id += 1
    return np.array(guesses, dtype=complex)


def _aberth(
    exps: np.ndarray,
    logmag: np.ndarray,
    phase: np.ndarray,
    max_iter: int = 160,
    rel_tol: float = 5e-14,
):
    """All torus roots of sum a_i z^{e_i} by Aberth-Ehrlich iteration.

    Exponents are shifted so the lowest is zero (dropping the monomial factor
    that carries no torus roots); the number of roots is then exactly the
    exponent spread.  Returns (roots, converged_mask, iterations).
    """
    exps = np.asarray(exps, dtype=float).reshape(-1)
    shift = exps.min()
    e = exps - shift
    degree = int(round(e.max()))
    if degree == 0:
        return np.empty(0, dtype=complex), np.ones(0, dtype=bool), 0
    z = _newton_polygon_guesses(e, logmag)
    if len(z) != degree:  # guard: envelope rounding mismatch
        extra = degree - len(z)
        if extra > 0:
            ang = 2.0 * math.pi * np.arange(extra) / max(extra, 1) + 0.37
            z = np.concatenate([z, np.exp(1j * ang)])
        else:
            z = z[:degree]
    converged = np.zeros(degree, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        s0, s1, absum, _ = _eval_sparse(z, e, logmag, phase)
        # Newton ratio of the reduced polynomial; s1 ~ z P', so ratio = z s0 / s1
        bad = np.abs(s1) < 1e-300
        s1 = np.where(bad, 1.0, s1)
        nr = z * s0 / s1
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        coll = np.abs(diff) < 1e-14 * (np.abs(z)[:, None] + 1e-300)
        if coll.any():
            bump = 1e-8 * (np.abs(z) + 1e-30)
            kick = bump * np.exp(1j * 0.7 * np.arange(degree))
            z = np.where(coll.any(axis=1), z + kick, z)
            continue
        S = (1.0 / diff).sum(axis=1)
        denom = 1.0 - nr * S
        denom = np.where(np.abs(denom) < 1e-300, 1.0, denom)
        w = nr / denom
        step_ok = ~converged
        z = np.where(step_ok, z - w, z)
        converged = converged | (np.abs(w) <= rel_tol * (np.abs(z) + 1e-300))
        if converged.all():
            break
    return z, converged, it


def _newton_polish(z, exps, logmag, phase, steps: int = 3):
    e = np.asarray(exps, dtype=float).reshape(-1)
    shift = e.min()
    e = e - shift
    z = np.asarray(z, dtype=complex).copy()
    for _ in range(steps):
        s0, s1, _, _ = _eval_sparse(z, e, logmag, phase)
        s1 = np.where(np.abs(s1) < 1e-300, 1.0, s1)
        z = z - z * s0 / s1
    return z


def _residuals(z, exps, logmag, phase) -> np.ndarray:
    e = np.asarray(exps, dtype=float).reshape(-1)
    s0, _, absum, _ = _eval_sparse(z, e - e.min(), logmag, phase)
    return np.abs(s0) / np.where(absum < 1e-300, 1.0, absum)


def _merge_multiplicities(zs: np.ndarray, rel_tol: float = 1e-7):
    """Cluster near-coincident roots; greedy connected components.

    True multiple roots have probability zero under Gaussian coefficients;
    merging only guards finite-difference noise.  Large duplicate-heavy
    inputs are first collapsed by a rounding hash (Newton-converged copies
    of one root agree to far better than the hash resolution) so the exact
    pairwise stage runs on a small set.
    """
    n = zs.shape[0]
    if n == 0:
        return zs, np.zeros(0, dtype=np.int64)
    flat = zs.reshape(n, -1)
    counts = np.ones(n, dtype=np.int64)
    if n > 512:
        scale = 1.0 + np.abs(flat).max(axis=1, keepdims=True)
        key = np.round(np.concatenate([flat.real, flat.imag], axis=1) / scale, 8)
        _, first, cnts = np.unique(key, axis=0, return_index=True, return_counts=True)
        flat = flat[first]
        counts = cnts
        n = len(flat)
    scale = np.maximum(np.abs(flat)[:, None, :], np.abs(flat)[None, :, :]).max(axis=2)
    dist = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=2)
    close = dist <= rel_tol * np.maximum(scale, 1e-30)
    seen = np.zeros(n, dtype=bool)
    reps = []
    mult = []
    for i in range(n):
        if seen[i]:
            continue
        stack = [i]
        comp = []
        seen[i] = True
        while stack:
            j = stack.pop()
            comp.append(j)
            nxt = np.nonzero(close[j] & ~seen)[0]
            seen[nxt] = True
            stack.extend(nxt.tolist())
        reps.append(flat[comp].mean(axis=0))
        mult.append(int(counts[comp].sum()))
    out = np.array(reps, dtype=complex).reshape(len(reps), *zs.shape[1:])
    return out, np.array(mult, dtype=np.int64)


# ---------------------------------------------------------------------------
# univariate solve
# ---------------------------------------------------------------------------


def roots_univariate(
    spectrum: Spectrum,
    coeffs: np.ndarray,
    ensemble_tag: str = "su",
    degree: int | None = None,
    u=None,
    residual_tol: float = 1e-8,
    max_iter: int = 160,
    system_id: int = 0,
) -> ZeroSet:
    """All roots in C* of a sparse univariate polynomial, residual-verified.

    Generic systems have exactly (max exponent - min exponent) roots; the
    Aberth iteration finds them simultaneously, with a companion-matrix
    eigenvalue fallback if it stalls.
    """
    if spectrum.m != 1:
        raise ValueError("roots_univariate needs m = 1")
    N = degree if degree is not None else spectrum.degree
    exps2, logmag, phase = _log_terms(spectrum, coeffs, ensemble_tag, N, u=u)
    exps = exps2[:, 0].astype(float)
    if len(exps) < 2:
        return ZeroSet(
            zs=np.empty((0, 1), dtype=complex),
            multiplicity=np.zeros(0, dtype=np.int64),
            residual=0.0,
            system_id=system_id,
        )
    z, converged, _ = _aberth(exps, logmag, phase, max_iter=max_iter)
    z = _newton_polish(z, exps, logmag, phase)
    res = _residuals(z, exps, logmag, phase)
    if (not converged.all()) or res.max() > residual_tol:
        z2 = _companion_fallback(exps, logmag, phase)
        if z2 is not None:
            z2 = _newton_polish(z2, exps, logmag, phase, steps=8)
            res2 = _residuals(z2, exps, logmag, phase)
            if res2.max() < max(res.max(), residual_tol):
                z, res = z2, res2
    if res.max() > residual_tol:
        raise SolverFailure(f"max normalized residual {res.max():.3e}")
    zs, mult = _merge_multiplicities(z[:, None])
    return ZeroSet(zs=zs, multiplicity=mult, residual=float(res.max()), system_id=system_id)


def _companion_fallback(exps, logmag, phase, max_degree: int = 600):
    e = np.asarray(exps, dtype=np.int64)
    e = e - e.min()
    degree = int(e.max())
    if degree > max_degree:
        return None
    dense = np.zeros(degree + 1, dtype=complex)
    dense[degree - e] = np.exp(logmag + 1j * phase)  # np.roots wants descending
    try:
        return np.roots(dense)
    except np.linalg.LinAlgError:
        return None


# ---------------------------------------------------------------------------
# bivariate solve through the Sylvester resultant
# ---------------------------------------------------------------------------


def roots_bivariate_resultant(
    poly1: tuple[Spectrum, np.ndarray],
    poly2: tuple[Spectrum, np.ndarray],
    ensemble_tag: str = "su",
    degree: int | None = None,
    u=None,
    window: float = 6.5,
    residual_tol: float = 1e-8,
    system_id: int = 0,
) -> ZeroSet:
    """Common torus zeros of two sparse bivariate polynomials.

    Eliminates z_2 (Sylvester determinant sampled on a ladder of circles,
    coefficients recovered per-band by FFT in log scale), solves the dense
    univariate resultant, then back-substitutes each first coordinate through
    a univariate solve in z_2 and polishes with full 2x2 Newton steps.  Roots
    are reported within |log|z_i|| <= window (the torus zeros relevant to the
    histogram box); every reported point is residual-verified on both
    equations.
    """
    spec1, c1 = poly1
    spec2, c2 = poly2
    if spec1.m != 2 or spec2.m != 2:
        raise ValueError("roots_bivariate_resultant needs m = 2")
    N = degree if degree is not None else spec1.degree
    t1 = _BivariateTerms(*_log_terms(spec1, c1, ensemble_tag, N, u=u))
    t2 = _BivariateTerms(*_log_terms(spec2, c2, ensemble_tag, N, u=u))

    d1, d2 = t1.span(1), t2.span(1)
    g1, g2 = t1.span(0), t2.span(0)
    if (d1 == 0 and d2 == 0) or (g1 == 0 and g2 == 0):
        raise DegenerateSystemError("both polynomials univariate in the same variable")

    if d1 == 0 or d2 == 0:
        first, second = (t1, t2) if d1 == 0 else (t2, t1)
        x_candidates = _univariate_roots_of_terms(first, axis=0, window=window)
        pairs = _backsub_candidates(x_candidates, t1, t2, window)
    elif g1 == 0 or g2 == 0:
        first = t1 if g1 == 0 else t2
        y_candidates = _univariate_roots_of_terms(first, axis=1, window=window)
        pairs = [
            (x, y)
            for y in y_candidates
            for x in _backsub_second(y, t1, t2, axis=1, window=window)
        ]
    else:
        x_candidates = _resultant_roots(t1, t2, window=window)
        pairs = _backsub_candidates(x_candidates, t1, t2, window)

    if not pairs:
        return ZeroSet(
            zs=np.empty((0, 2), dtype=complex),
            multiplicity=np.zeros(0, dtype=np.int64),
            residual=0.0,
            system_id=system_id,
        )
    zs = np.array(pairs, dtype=complex)
    # cheap pre-filter: combinations pairing unrelated branch roots carry
    # O(1) residuals; genuine seeds can reach ~1e-1 when the first
    # coordinate sits in a dense resultant root cluster, so keep those.
    # every surviving candidate is Newton-polished on the true system and
    # then residual-verified, so completeness is all that is at stake here
    seed_res = np.maximum(_residual_2d(zs, t1), _residual_2d(zs, t2))
    zs = zs[seed_res < 0.9]
    zs, ok_res = _polish_2d(zs, t1, t2, residual_tol)
    zs = zs[ok_res & np.all(np.isfinite(zs) & (zs != 0), axis=1)]
    if zs.shape[0] == 0:
        return ZeroSet(
            zs=np.empty((0, 2), dtype=complex),
            multiplicity=np.zeros(0, dtype=np.int64),
            residual=0.0,
            system_id=system_id,
        )
    inside = np.all(np.abs(np.log(np.abs(zs))) <= window + 0.2, axis=1)
    zs = zs[inside]
    # several seeds may land on one root; Gaussian coefficients make true
    # multiple roots probability-zero, so clusters collapse to simple roots
    zs, mult = _merge_multiplicities(zs)
    mult = np.ones_like(mult)
    res = max(_residual_2d(zs, t1).max(), _residual_2d(zs, t2).max()) if len(zs) else 0.0
    if len(zs) and res > residual_tol:
        raise SolverFailure(f"max normalized residual {res:.3e}")
    return ZeroSet(zs=zs, multiplicity=mult, residual=float(res), system_id=system_id)


class _BivariateTerms:
    """Sparse bivariate term list with the common monomial factored out."""

    def __init__(self, exps, logmag, phase):
        exps = np.asarray(exps, dtype=np.int64)
        self.exps = exps - exps.min(axis=0, keepdims=True)
        self.logmag = np.asarray(logmag, dtype=float)
        self.phase = np.asarray(phase, dtype=float)
        self.amp = np.exp(self.logmag + 1j * self.phase)

    def span(self, axis: int) -> int:
        return int(self.exps[:, axis].max())

    def eval(self, z1, z2):
        z1 = np.asarray(z1, dtype=complex)
        z2 = np.asarray(z2, dtype=complex)
        return sum(
            self.amp[i] * z1 ** int(self.exps[i, 0]) * z2 ** int(self.exps[i, 1])
            for i in range(len(self.amp))
        )

    def term_moduli_sum(self, z1, z2):
        a1, a2 = np.abs(z1), np.abs(z2)
        return sum(
            abs(self.amp[i]) * a1 ** int(self.exps[i, 0]) * a2 ** int(self.exps[i, 1])
            for i in range(len(self.amp))
        )

    def deriv(self, z1, z2, axis: int):
        out = 0.0
        for i in range(len(self.amp)):
            e = int(self.exps[i, axis])
            if e == 0:
                continue
            if axis == 0:
                out = out + self.amp[i] * e * z1 ** (e - 1) * z2 ** int(self.exps[i, 1])
            else:
                out = out + self.amp[i] * e * z2 ** (e - 1) * z1 ** int(self.exps[i, 0])
        return out

    def coeffs_in(self, axis: int, x):
        """Coefficient vectors of the polynomial in the `axis` variable.

        x: (B,) samples of the other variable; returns (B, span+1), ascending.
        """
        x = np.asarray(x, dtype=complex)
        other = 1 - axis
        out = np.zeros((x.shape[0], self.span(axis) + 1), dtype=complex)
        for i in range(len(self.amp)):
            out[:, self.exps[i, axis]] += self.amp[i] * x ** int(self.exps[i, other])
        return out


def _univariate_roots_of_terms(t: _BivariateTerms, axis: int, window: float):
    exps = t.exps[:, axis].astype(float)
    if t.span(axis) == 0:
        return []
    z, _, _ = _aberth(exps, t.logmag, t.phase)
    z = _newton_polish(z, exps, t.logmag, t.phase)
    return [zz for zz in z if abs(math.log(abs(zz))) <= window + 0.2]


def _backsub_candidates(x_candidates, t1: _BivariateTerms, t2: _BivariateTerms, window: float):
    pairs = []
    for x in x_candidates:
        ys = _backsub_second(x, t1, t2, axis=0, window=window)
        pairs.extend((x, y) for y in ys)
    return pairs


def _backsub_second(val, t1: _BivariateTerms, t2: _BivariateTerms, axis: int, window: float):
    """Candidate second coordinates: substituted roots of both polynomials.

    Using both branches doubles the seed coverage; when the first coordinate
    is only cluster-accurate, one polynomial's substituted roots may seed a
    root that the other misses.
    """
    other = 1 - axis
    log_abs = math.log(abs(val))
    arg = math.atan2(val.imag, val.real)
    out = []
    for t in (t1, t2):
        if t.span(other) == 0:
            continue
        # substitute the known coordinate into the term list
        logmag = t.logmag + t.exps[:, axis] * log_abs
        phase = t.phase + t.exps[:, axis] * arg
        exps = t.exps[:, other].astype(float)
        # collapse duplicate exponents by complex addition
        uniq, inv = np.unique(exps, return_inverse=True)
        acc = np.zeros(len(uniq), dtype=complex)
        top = logmag.max()
        np.add.at(acc, inv, np.exp(logmag - top + 1j * phase))
        nz = np.abs(acc) > 1e-250
        if np.count_nonzero(nz) < 2:
            continue
        z, _, _ = _aberth(uniq[nz], np.log(np.abs(acc[nz])), np.angle(acc[nz]))
        out.extend(z.tolist())
    return [y for y in out if abs(math.log(abs(y))) <= window + 0.2]


def _resultant_roots(t1: _BivariateTerms, t2: _BivariateTerms, window: float):
    """First coordinates of common zeros via the sampled Sylvester resultant.

    A fixed circle can only recover coefficient bands within ~30 nats of its
    own envelope peak, and the envelope drops quadratically between circles
    at a rate set by the local root density (the active-index jump).  The
    ladder is therefore refined adaptively: whenever two adjacent circles'
    active indices differ enough that the midpoint envelope would sag more
    than a few nats, a circle is inserted between them.
    """
    d1, d2 = t1.span(1), t2.span(1)
    bound = d1 * t2.span(0) + d2 * t1.span(0)
    M = 1 << max(6, (bound + 1).bit_length())
    span = min(window, 6.0)
    logA = np.full(bound + 1, -np.inf)
    phA = np.zeros(bound + 1)
    margin = np.full(bound + 1, -np.inf)
    active: dict[float, int] = {}

    def visit(logr: float):
        rec = _sample_circle(t1, t2, d1, d2, M, logr)
        if rec is None:
            active[logr] = -1
            return
        la, ph, mg = rec
        upto = min(bound + 1, M)
        active[logr] = int(np.argmax(mg[:upto]))
        better = mg[:upto] > margin[:upto]
        sel = np.nonzero(better)[0]
        logA[sel] = la[sel]
        phA[sel] = ph[sel]
        margin[sel] = mg[sel]

    ladder = list(np.linspace(-span, span, int(2 * span) + 1))
    for logr in ladder:
        visit(logr)
    stack = list(zip(ladder, ladder[1:]))
    while stack:
        l1, l2 = stack.pop()
        k1, k2 = active.get(l1, -1), active.get(l2, -1)
        if k1 < 0 or k2 < 0:
            continue
        gap = l2 - l1
        # quadratic envelope sag at the midpoint, in nats
        if abs(k2 - k1) * gap / 8.0 <= 2.5 or gap <= 0.04:
            continue
        mid = 0.5 * (l1 + l2)
        visit(mid)
        stack.append((l1, mid))
        stack.append((mid, l2))
    keep = np.isfinite(logA) & (margin > 0.0)
    if np.count_nonzero(keep) < 2:
        raise DegenerateSystemError("resultant vanished on every sampling circle")
    exps = np.nonzero(keep)[0].astype(float)
    lm = logA[keep]
    z, converged, _ = _aberth(exps, lm - lm.max(), phA[keep], max_iter=300)
    z = _newton_polish(z, exps, lm - lm.max(), phA[keep], steps=2)
    return [zz for zz in z if abs(math.log(abs(zz))) <= window + 0.2]


def _sample_circle(t1, t2, d1, d2, M, logr, _retry=True):
    r = math.exp(logr)
    offset = 0.5 * (2.0 * math.pi / M) if _retry else 0.31 * (2.0 * math.pi / M)
    theta = 2.0 * math.pi * np.arange(M) / M + offset
    x = r * np.exp(1j * theta)
    s = d1 + d2
    vals_log = np.empty(M)
    vals_sign = np.empty(M, dtype=complex)
    chunk = max(1, int(4_000_000 // (s * s)))
    for start in range(0, M, chunk):
        xs = x[start : start + chunk]
        c1 = t1.coeffs_in(axis=1, x=xs)[:, ::-1]  # descending in z2
        c2 = t2.coeffs_in(axis=1, x=xs)[:, ::-1]
        B = xs.shape[0]
        S = np.zeros((B, s, s), dtype=complex)
        for i in range(d2):
            S[:, i, i : i + d1 + 1] = c1
        for i in range(d1):
            S[:, d2 + i, i : i + d2 + 1] = c2
        sign, logabs = np.linalg.slogdet(S)
        vals_sign[start : start + chunk] = sign
        vals_log[start : start + chunk] = logabs
    finite = np.isfinite(vals_log)
    if not finite.all():
        if _retry and finite.sum() > 0:
            return _sample_circle(t1, t2, d1, d2, M, logr, _retry=False)
        return None
    shift = vals_log.max()
    if not math.isfinite(shift):
        return None
    dvals = vals_sign * np.exp(vals_log - shift)
    F = np.fft.fft(dvals) / M
    mag = np.abs(F)
    floor = math.log(max(mag.max(), 1e-300)) - 30.0
    with np.errstate(divide="ignore"):
        logF = np.log(mag)
    j = np.arange(M)
    la = logF + shift - j * logr
    ph = np.angle(F) - j * offset
    mg = logF - floor
    return la, ph, mg


def _polish_2d(zs: np.ndarray, t1: _BivariateTerms, t2: _BivariateTerms, residual_tol: float):
    """Newton-polish candidate pairs on the full 2x2 system.

    Seeds outside any basin diverge to inf/nan and are rejected by the
    residual check, so the overflow they cause is expected and silenced.
    """
    zs = zs.copy()
    with np.errstate(all="ignore"):
        for _ in range(25):
            z1, z2 = zs[:, 0], zs[:, 1]
            f1 = t1.eval(z1, z2)
            f2 = t2.eval(z1, z2)
            j11 = t1.deriv(z1, z2, 0)
            j12 = t1.deriv(z1, z2, 1)
            j21 = t2.deriv(z1, z2, 0)
            j22 = t2.deriv(z1, z2, 1)
            det = j11 * j22 - j12 * j21
            det = np.where(np.abs(det) < 1e-280, 1e-280, det)
            dz1 = (f1 * j22 - f2 * j12) / det
            dz2 = (f2 * j11 - f1 * j21) / det
            bad = ~(np.isfinite(dz1) & np.isfinite(dz2))
            dz1 = np.where(bad, 0.0, dz1)
            dz2 = np.where(bad, 0.0, dz2)
            zs[:, 0] -= dz1
            zs[:, 1] -= dz2
            if max(np.abs(dz1).max(initial=0), np.abs(dz2).max(initial=0)) < 1e-14:
                break
        r = np.maximum(_residual_2d(zs, t1), _residual_2d(zs, t2))
        r = np.where(np.isfinite(r), r, 1.0)
    return zs, r <= residual_tol


def _residual_2d(zs: np.ndarray, t: _BivariateTerms) -> np.ndarray:
    if zs.shape[0] == 0:
        return np.zeros(0)
    z1, z2 = zs[:, 0], zs[:, 1]
    num = np.abs(t.eval(z1, z2))
    den = t.term_moduli_sum(z1, z2)
    return num / np.where(den < 1e-300, 1.0, den)


# ---------------------------------------------------------------------------
# system-level dispatch and empirical measures
# ---------------------------------------------------------------------------


def solve_system(
    system: FewnomialSystem,
    window: float = 6.5,
    system_id: int = 0,
    residual_tol: float = 1e-8,
) -> ZeroSet:
    """All isolated torus zeros of a full (k = m) system."""
    if system.k != system.m:
        raise ValueError("point zeros need a full system (k = m)")
    if system.m == 1:
        spec, coeffs = system.polys[0]
        return roots_univariate(
            spec,
            coeffs,
            ensemble_tag=system.ensemble_tag,
            degree=system.degree,
            u=system.toric_u,
            residual_tol=residual_tol,
            system_id=system_id,
        )
    if system.m == 2:
        return roots_bivariate_resultant(
            system.polys[0],
            system.polys[1],
            ensemble_tag=system.ensemble_tag,
            degree=system.degree,
            u=system.toric_u,
            window=window,
            residual_tol=residual_tol,
            system_id=system_id,
        )
    raise ValueError("solving is implemented for m <= 2")


@dataclass
class EmpiricalMeasure:
    """rho-histogram of zeros, scaled per system by 1 / scale^m.

    `masses` sums to the mean normalized in-grid zero count; roots falling
    outside the grid still contribute to the count statistics.
    """

    grid: GridSpec
    masses: np.ndarray
    sample_count: int
    mean_normalized_count: float
    se_normalized_count: float
    failures: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def to_csv(self, path) -> None:
        mesh = self.grid.node_mesh().reshape(-1, self.grid.m)
        dens = (self.masses / self.grid.cell_volume).reshape(-1)
        with open(path, "w") as fh:
            cols = ",".join(f"rho_{i+1}" for i in range(self.grid.m))
            fh.write(f"{cols},density\n")
            for row, v in zip(mesh, dens):
                coords = ",".join(f"{c:.17g}" for c in row)
                fh.write(f"{coords},{v:.17g}\n")


def empirical_zero_measure(
    systems,
    solver,
    grid: GridSpec,
    norm_scale: float | None = None,
    max_failure_rate: float = 0.01,
) -> EmpiricalMeasure:
    """Accumulate the normalized zero histogram over many solved systems.

    `solver` maps (system, system_id) -> ZeroSet.  `norm_scale` is the count
    normalization degree (defaults to the system degree); each system's zero
    count is divided by norm_scale^m.  Failed systems are excluded and
    counted; the run aborts if the failure fraction exceeds 1%.
    """
    edges = None
    hist = None
    counts = []
    failures = 0
    total = 0
    m = grid.m
    for idx, system in enumerate(systems):
        total += 1
        scale = float(norm_scale if norm_scale is not None else system.degree)
        try:
            zeros = solver(system, idx)
        except SolverFailure:
            failures += 1
            continue
        if edges is None:
            edges = [
                np.linspace(lo, hi, n + 1) for lo, hi, n in grid.axes
            ]
            hist = np.zeros(grid.shape)
        rho = zeros.rho()
        w = zeros.multiplicity.astype(float)
        h, _ = np.histogramdd(rho.reshape(-1, m), bins=edges, weights=w)
        hist += h / scale**m
        counts.append(zeros.total_count / scale**m)
    if total == 0:
        raise ValueError("no systems supplied")
    if failures > max_failure_rate * total:
        raise SolverFailureRateError(
            f"{failures}/{total} systems failed verification"
        )
    n_ok = len(counts)
    counts = np.asarray(counts)
    mean = float(counts.mean()) if n_ok else 0.0
    se = float(counts.std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
    return EmpiricalMeasure(
        grid=grid,
        masses=hist / max(n_ok, 1) if hist is not None else np.zeros(grid.shape),
        sample_count=n_ok,
        mean_normalized_count=mean,
        se_normalized_count=se,
        failures=failures,
    )
