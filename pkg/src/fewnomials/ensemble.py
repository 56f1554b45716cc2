"""Gaussian coefficient ensembles and diagonal projection kernels.

All monomial masses and kernels are computed and returned on the natural-log
scale and combined with log-sum-exp: the norming constants span hundreds of
decades at high degree, and every downstream consumer wants (1/N) log values
anyway.

Conventions.  A point of the complex torus is written z = e^{rho/2 + i theta}
with rho_j = log |z_j|^2.  Coefficients are standard complex normals with
E|c|^2 = 1 (real and imaginary parts of variance 1/2 each), so the expected
weighted mass E |P(z)|^2 e^{-N phi} equals the diagonal kernel exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Spectrum
from .numerics import log1p_exp_sum, log_factorial, log_multinomial, logsumexp


class BoundaryError(ValueError):
    """Raised when a norming constant is requested on a singular boundary."""


@dataclass(frozen=True)
class LogPolarPoint:
    """A point of the complex torus in log-polar coordinates.

    rho_j = log|z_j|^2, theta_j = arg z_j; z_j = e^{rho_j/2 + i theta_j}.
    """

    rho: tuple[float, ...]
    theta: tuple[float, ...]

    def __post_init__(self):
        if len(self.rho) != len(self.theta):
            raise ValueError("rho and theta must have equal length")
        if not all(math.isfinite(r) for r in self.rho):
            raise ValueError("rho must be finite")
        object.__setattr__(self, "theta", tuple(t % (2.0 * math.pi) for t in self.theta))

    @classmethod
    def from_z(cls, z) -> "LogPolarPoint":
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(z == 0):
            raise ValueError("points must lie in the punctured torus")
        return cls(
            rho=tuple(np.log(np.abs(z) ** 2)),
            theta=tuple(np.angle(z)),
        )

    @property
    def m(self) -> int:
        return len(self.rho)

    @property
    def z(self) -> np.ndarray:
        r = np.asarray(self.rho)
        t = np.asarray(self.theta)
        return np.exp(0.5 * r + 1j * t)


def _rho_of(point) -> np.ndarray:
    if isinstance(point, LogPolarPoint):
        return np.asarray(point.rho, dtype=float)
    return np.atleast_1d(np.asarray(point, dtype=float))


def _alpha_array(alpha, m: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    if a.shape[-1] != m:
        raise ValueError(f"expected a multi-index of length {m}")
    return a


def log_norming_constant_su(alpha, N: int, m: int) -> float:
    """log ||z^alpha||^2 under the degree-N SU(m+1) inner product.

    Equals log N! - log (N+m)! - log binom(N, alpha) with the multinomial
    binom(N, alpha) = N! / ((N-|alpha|)! alpha_1! ... alpha_m!).  Computed
    through log-gamma; relative error below 1e-12.
    """
    a = _alpha_array(alpha, m)
    if a.sum() > N:
        raise ValueError("|alpha| exceeds the degree")
    val = log_factorial(N) - log_factorial(N + m) - log_multinomial(N, a)
    return float(val)


def log_norming_su_array(alphas: np.ndarray, N: int) -> np.ndarray:
    """Vectorized log norming constants for exponents of shape (n, m)."""
    alphas = np.asarray(alphas, dtype=np.int64)
    return log_factorial(N) - log_factorial(N + alphas.shape[-1]) - log_multinomial(N, alphas)


def eval_log_monomial_mass(alpha, N: int, m: int, point) -> float:
    """log |normalized monomial|^2 at z, in log space (no overflow).

    Returns -log Q(alpha) + <rho, alpha> - N log(1 + sum e^rho).
    """
    a = _alpha_array(alpha, m)
    rho = _rho_of(point)
    val = (
        -log_norming_constant_su(a, N, m)
        + float(rho @ a)
        - N * float(log1p_exp_sum(rho))
    )
    return val


def log_monomial_mass_array(alphas: np.ndarray, N: int, rho) -> np.ndarray:
    """Vectorized masses: exponents (n, m) against a single rho (m,)."""
    alphas = np.asarray(alphas, dtype=np.int64)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    return (
        -log_norming_su_array(alphas, N)
        + alphas @ rho
        - N * float(log1p_exp_sum(rho))
    )


@dataclass(frozen=True)
class NormingTable:
    """Per-exponent log Q for one spectrum, built once and shared read-only."""

    exponents: np.ndarray  # (f, m) int64
    log_q: np.ndarray  # (f,) float
    degree: int
    tag: str

    @classmethod
    def build(cls, spectrum: Spectrum, N: int, tag: str = "su", u=None) -> "NormingTable":
        exps = spectrum.as_array()
        if exps.sum(axis=1).max() > N:
            raise ValueError("spectrum does not fit inside the degree-N simplex")
        if tag == "su":
            logq = log_norming_su_array(exps, N)
        elif tag == "kac":
            logq = np.zeros(len(exps))
        elif tag == "toric":
            if u is None:
                raise ValueError("toric norming needs a symplectic potential")
            if exps.shape[1] != 1:
                raise ValueError("toric norming tables are implemented for m = 1")
            # Laplace needs an interior critical point; boundary exponents go
            # through the direct quadrature (the integrand stays integrable)
            logq = np.array(
                [
                    N
                    * toric_log_norming(
                        tuple(a),
                        N,
                        u,
                        method="laplace" if 0 < a[0] < N else "quadrature",
                    )
                    for a in exps
                ],
                dtype=float,
            )
        else:
            raise ValueError(f"unknown ensemble tag {tag!r}")
        if not np.all(np.isfinite(logq)):
            raise ValueError("non-finite norming constant")
        return cls(exponents=exps, log_q=np.asarray(logq, dtype=float), degree=N, tag=tag)


def sample_coefficients(spectrum: Spectrum, rng: np.random.Generator) -> np.ndarray:
    """f i.i.d. standard complex normals (mean 0, E|c|^2 = 1)."""
    f = spectrum.fewnomial_number
    return (rng.standard_normal(f) + 1j * rng.standard_normal(f)) / math.sqrt(2.0)


@dataclass(frozen=True)
class FewnomialSystem:
    """k sparse polynomials: spectra plus orthonormal-basis coefficients."""

    polys: tuple[tuple[Spectrum, np.ndarray], ...]
    ensemble_tag: str
    degree: int
    toric_u: object = None

    def __post_init__(self):
        if not self.polys:
            raise ValueError("a system needs at least one polynomial")
        m = self.polys[0][0].m
        if not 1 <= len(self.polys) <= m:
            raise ValueError("need 1 <= k <= m polynomials")
        for spec, coeffs in self.polys:
            if spec.m != m:
                raise ValueError("mixed dimensions in one system")
            if len(coeffs) != spec.fewnomial_number:
                raise ValueError("coefficient vector length must match the spectrum")
            if spec.degree != self.degree:
                raise ValueError("spectrum degree must match the system degree")

    @property
    def k(self) -> int:
        return len(self.polys)

    @property
    def m(self) -> int:
        return self.polys[0][0].m


def sample_system(
    spectra: list[Spectrum],
    rng: np.random.Generator,
    ensemble_tag: str = "su",
    toric_u=None,
) -> FewnomialSystem:
    """Draw independent coefficient vectors for the given spectra."""
    degree = spectra[0].degree
    polys = tuple((s, sample_coefficients(s, rng)) for s in spectra)
    return FewnomialSystem(polys=polys, ensemble_tag=ensemble_tag, degree=degree, toric_u=toric_u)


def conditional_szego_kernel(spectrum: Spectrum, N: int, m: int, point) -> float:
    """log of the diagonal conditional kernel: logsumexp of monomial masses.

    For the full degree-N lattice this collapses to log((N+m)!/N!) at every
    point; for a singleton it is the single monomial mass.
    """
    if spectrum.m != m:
        raise ValueError("dimension mismatch")
    exps = spectrum.as_array()
    if exps.sum(axis=1).max() > N:
        raise ValueError("spectrum does not fit inside the degree-N simplex")
    rho = _rho_of(point)
    return float(logsumexp(log_monomial_mass_array(exps, N, rho)))


def kac_kernel(spectrum: Spectrum, point) -> float:
    """log of the flat-weight diagonal kernel: logsumexp of <rho, alpha>."""
    rho = _rho_of(point)
    exps = spectrum.as_array()
    return float(logsumexp(exps @ rho))


def toric_log_norming(
    alpha,
    N: int,
    u,
    method: str = "laplace",
    nodes: int = 200,
    inset: float = 1e-8,
) -> float:
    """(1/N) log Q(alpha) for a general convex symplectic potential u.

    The norming integral concentrates at x = alpha/N, where the exponent
    N [u(x) + <alpha/N - x, grad u(x)>] attains its maximum u(alpha/N);
    the Laplace approximation supplies the explicit Hessian correction

        (1/N) log Q = u(a) + (1/N) [ (m/2) log(2 pi / N) - (1/2) log det D^2 u(a) ].

    method="quadrature" (m = 1 only) evaluates the integral directly with
    Gauss-Legendre on the inset interval, for validation against the
    closed-form constants.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float)) / float(N)
    m = a.shape[0]
    if np.any(a < 0.0) or a.sum() > 1.0:
        raise BoundaryError("alpha/N must lie in the closed simplex")
    if method == "laplace" and (np.any(a <= 0.0) or a.sum() >= 1.0):
        raise BoundaryError("alpha/N must lie in the open simplex for the Laplace route")
    if method == "laplace":
        hess = _potential_hessian(u, a)
        sign, logdet = np.linalg.slogdet(hess)
        if sign <= 0:
            raise ValueError("symplectic potential is not convex at alpha/N")
        corr = 0.5 * m * math.log(2.0 * math.pi / N) - 0.5 * logdet
        return float(u.value(a)) + corr / N
    if method == "quadrature":
        if m != 1:
            raise ValueError("direct quadrature is implemented for m = 1 only")
        from .numerics import gauss_legendre

        x, w = gauss_legendre(nodes, inset, 1.0 - inset)
        grad = np.array([_potential_grad(u, np.array([xi]))[0] for xi in x])
        uval = np.array([float(u.value(np.array([xi]))) for xi in x])
        expo = N * (uval + (a[0] - x) * grad)
        top = expo.max()
        log_q = top + math.log(float(np.sum(w * np.exp(expo - top))))
        return log_q / N
    raise ValueError(f"unknown method {method!r}")


def _potential_grad(u, x: np.ndarray) -> np.ndarray:
    g = getattr(u, "grad", None)
    if g is not None:
        return np.atleast_1d(np.asarray(g(x), dtype=float))
    h = 1e-6
    out = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (float(u.value(x + e)) - float(u.value(x - e))) / (2 * h)
    return out


def _potential_hessian(u, x: np.ndarray) -> np.ndarray:
    hfun = getattr(u, "hess", None)
    if hfun is not None:
        return np.atleast_2d(np.asarray(hfun(x), dtype=float))
    h = 1e-5
    m = x.shape[0]
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            ei = np.zeros(m)
            ej = np.zeros(m)
            ei[i] = h
            ej[j] = h
            out[i, j] = (
                float(u.value(x + ei + ej))
                - float(u.value(x + ei - ej))
                - float(u.value(x - ei + ej))
                + float(u.value(x - ei - ej))
            ) / (4 * h * h)
    return 0.5 * (out + out.T)
