import math
from fractions import Fraction

import numpy as np
import pytest

from fewnomials.lattice import (
    EmptySpectrumError,
    NewtonPolytope,
    Spectrum,
    count_spectra,
    dilate_spectrum,
    enumerate_lattice,
    lattice_size,
    sample_spectrum_uniform,
    spectrum_from_record,
    spectrum_to_record,
)


def test_enumerate_small_examples():
    assert [q.coords for q in enumerate_lattice(2, 1)] == [(0,), (1,), (2,)]
    assert len(enumerate_lattice(2, 2)) == 6
    assert [q.coords for q in enumerate_lattice(0, 3)] == [(0, 0, 0)]


def test_enumerate_counts_match_binomials():
    for m in (1, 2):
        for N in range(0, 61):
            assert len(enumerate_lattice(N, m)) == math.comb(N + m, m)
    for N in (0, 1, 5, 20, 60):
        assert len(enumerate_lattice(N, 3)) == math.comb(N + 3, 3)


def test_count_spectra_examples():
    assert count_spectra(2, 1, 2) == 3
    assert count_spectra(1, 1, 3) == 0
    assert count_spectra(3, 2, 1) == 10
    # big-integer regime
    assert count_spectra(100, 2, 7) == math.comb(math.comb(102, 2), 7)


def test_sample_uniform_determinism_and_distinctness():
    s1 = sample_spectrum_uniform(10, 2, 5, rng=np.random.default_rng(77))
    s2 = sample_spectrum_uniform(10, 2, 5, rng=np.random.default_rng(77))
    assert s1 == s2
    assert len(set(s1.points)) == 5
    # only one 2-subset of a 2-point lattice
    s = sample_spectrum_uniform(1, 1, 2, rng=np.random.default_rng(0))
    assert s.points == ((0,), (1,))


def test_sample_uniform_rejects_oversized_f():
    with pytest.raises(ValueError):
        sample_spectrum_uniform(1, 1, 3, rng=np.random.default_rng(0))


def test_uniform_law_chi_square():
    # all 2-subsets of {0,1,2}: frequencies 1/3 each; chi-square at 1e-3
    draws = 300_000
    rng = np.random.default_rng(2024)
    counts = {((0,), (1,)): 0, ((0,), (2,)): 0, ((1,), (2,)): 0}
    for _ in range(draws):
        counts[sample_spectrum_uniform(2, 1, 2, rng=rng).points] += 1
    expected = draws / 3
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 13.8155  # chi-square(2 dof) critical value at significance 1e-3
    sigma = math.sqrt(draws * (1 / 3) * (2 / 3))
    for c in counts.values():
        assert abs(c - expected) < 3 * sigma


def test_dilate_examples_and_laws():
    s = Spectrum(points=((1,), (3,)), degree=3)
    d = dilate_spectrum(s, 2)
    assert d.points == ((2,), (6,)) and d.degree == 6
    s2 = Spectrum(points=((1, 0), (0, 2)), degree=2)
    d2 = dilate_spectrum(s2, 5)
    assert d2.points == ((0, 10), (5, 0)) and d2.degree == 10
    assert dilate_spectrum(dilate_spectrum(s, 2), 3) == dilate_spectrum(s, 6)
    assert d.fewnomial_number == s.fewnomial_number


def test_polytope_membership_is_exact_on_boundaries():
    third = NewtonPolytope(vertices=((Fraction(0),), (Fraction(1, 3),)), scale=1)
    pts = [q.coords for q in enumerate_lattice(3, 1, third)]
    assert pts == [(0,), (1,)]  # 1/3 is included: closed polytope
    pts = [q.coords for q in enumerate_lattice(2, 1, third)]
    assert pts == [(0,)]  # 1/2 > 1/3 excluded exactly


def test_polytope_empty_intersection_raises():
    thin = NewtonPolytope(vertices=((Fraction(1, 4),), (Fraction(1, 3),)), scale=1)
    with pytest.raises(EmptySpectrumError):
        enumerate_lattice(2, 1, thin)


def test_polytope_2d_triangle():
    tri = NewtonPolytope(
        vertices=((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1))),
        scale=1,
    )
    assert tri.contains((Fraction(1, 4), Fraction(1, 4)))
    assert tri.contains((Fraction(1, 2), Fraction(1, 2)))  # boundary edge
    assert not tri.contains((Fraction(3, 4), Fraction(1, 2)))
    pts = enumerate_lattice(2, 2, tri)
    assert len(pts) == 6  # whole simplex at scale 1


def test_spectrum_canonical_form_and_validation():
    s = Spectrum(points=((3,), (1,)), degree=5)
    assert s.points == ((1,), (3,))  # sorted
    with pytest.raises(ValueError):
        Spectrum(points=((1,), (1,)), degree=5)
    with pytest.raises(ValueError):
        Spectrum(points=((6,),), degree=5)
    with pytest.raises(EmptySpectrumError):
        Spectrum(points=(), degree=5)


def test_record_round_trip():
    s = sample_spectrum_uniform(12, 2, 4, rng=np.random.default_rng(5))
    rec = spectrum_to_record(s)
    assert spectrum_from_record(rec) == s
    assert rec.startswith(f"{s.degree} 2 4;")


def test_lattice_size_helper():
    assert lattice_size(10, 1) == 11
    assert lattice_size(3, 2) == 10
