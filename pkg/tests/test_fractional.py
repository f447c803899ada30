import math

import numpy as np
import pytest

from conftest import cube
from fracperiod.fractional import (SpectrumError, apply_inverse, apply_operator, brute_force_eigenvalues,
                                   eigenspace_split, enumerate_spectrum, hs_norm, is_resonant, project,
                                   rayleigh_quotient, real_eigenbasis)
from fracperiod.torus import FourierField, ModeLattice, TorusConfig, analyze, inner, l2_norm, synthesize


def r2(n):
    """Representations of n as an ordered sum of two squares: 4 (d_1(n) - d_3(n))."""
    if n == 0:
        return 1
    return 4 * sum((1 if d % 4 == 1 else -1 if d % 4 == 3 else 0) for d in range(1, n + 1) if n % d == 0)


def dense_operator_oracle(samples, cfg):
    """Build the full DFT matrix, multiply by the symbol, invert, all in real space."""
    n = samples.shape
    N = len(n)
    size = math.prod(n)
    # per-axis integer frequencies in DFT order
    idx = np.array(np.unravel_index(np.arange(size), n)).T
    freqs = [np.fft.fftfreq(ni, 1.0 / ni) for ni in n]
    kvec = np.array([[freqs[a][j[a]] for a in range(N)] for j in idx])
    x = np.array([[j[a] * cfg.T / n[a] for a in range(N)] for j in idx])
    F = np.exp(-1j * cfg.omega * kvec @ x.T)  # rows: k, cols: x
    symbol = (cfg.omega**2 * np.sum(kvec**2, axis=1) + cfg.m**2) ** cfg.s
    A = np.conj(F.T) @ np.diag(symbol) @ F / size
    return (A @ samples.ravel()).real.reshape(n)


class TestOperator:
    def test_constant(self):
        cfg = TorusConfig(2 * math.pi, 2, 1.7, 0.3)
        lat = cube(cfg, 3)
        u = FourierField.mode(lat, (0, 0), 5.0)
        assert apply_operator(u, cfg).coefficient((0, 0)) == pytest.approx(1.7**0.6 * 5.0, rel=1e-15)

    def test_cosine(self, cfg_a):
        lat = cube(cfg_a, 3)
        x1, _ = np.meshgrid(*lat.grid_coordinates(), indexing="ij")
        out = synthesize(apply_operator(analyze(np.cos(x1), lat), cfg_a))
        assert np.max(np.abs(out - math.sqrt(2) * np.cos(x1))) < 1e-13

    def test_dense_dft_oracle(self, rng):
        cfg = TorusConfig(3.0, 2, 0.8, 0.35)
        lat = ModeLattice((2, 2), 3.0)  # 5 x 5 grid
        for _ in range(5):
            u = FourierField.random(lat, rng)
            ref = dense_operator_oracle(synthesize(u), cfg)
            got = synthesize(apply_operator(u, cfg))
            assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_inverse(self, rng, cfg_a):
        lat = cube(cfg_a, 4)
        g = FourierField.random(lat, rng)
        back = apply_operator(apply_inverse(g, cfg_a), cfg_a)
        assert np.max(np.abs(back.coeffs - g.coeffs)) < 1e-14 * np.max(np.abs(g.coeffs))
        one = FourierField.mode(lat, (0, 0), 2 * math.pi)
        assert np.allclose(synthesize(apply_inverse(one, cfg_a)), 1.0)

    def test_self_adjoint(self, rng):
        cfg = TorusConfig(2.0, 2, 1.3, 0.7)
        lat = cube(cfg, 4)
        u, v = FourierField.random(lat, rng), FourierField.random(lat, rng)
        assert inner(apply_inverse(u, cfg), v) == pytest.approx(inner(u, apply_inverse(v, cfg)), rel=1e-12)
        assert inner(apply_operator(u, cfg), v) == pytest.approx(inner(u, apply_operator(v, cfg)), rel=1e-12)
        assert inner(apply_operator(u, cfg), u) > 0

    def test_lattice_mismatch(self, cfg_a):
        with pytest.raises(ValueError):
            apply_operator(FourierField.zeros(ModeLattice((2, 2), period=1.0)), cfg_a)


class TestNorms:
    def test_single_mode(self, cfg_a):
        lat = cube(cfg_a, 3)
        u = FourierField.mode(lat, (1, 1))
        assert hs_norm(u, cfg_a) == pytest.approx(3 ** 0.25, rel=1e-15)

    def test_constant(self):
        cfg = TorusConfig(2 * math.pi, 2, 2.0, 0.4)
        lat = cube(cfg, 2)
        u = FourierField.mode(lat, (0, 0), 1.0)
        assert hs_norm(u, cfg) == pytest.approx(2.0**0.4, rel=1e-15)

    def test_duality(self, rng, cfg_a):
        lat = cube(cfg_a, 5)
        u = FourierField.random(lat, rng)
        assert hs_norm(apply_operator(u, cfg_a), cfg_a, sign=-1) == pytest.approx(hs_norm(u, cfg_a), rel=1e-13)

    def test_bad_sign(self, cfg_a):
        with pytest.raises(ValueError):
            hs_norm(FourierField.zeros(cube(cfg_a, 1)), cfg_a, sign=2)


class TestSpectrum:
    def test_fixture_values(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 16), count=9)
        lams = table.eigenvalues()
        assert lams[0] == 1.0
        assert np.allclose(lams[1:5], math.sqrt(2), rtol=0, atol=1e-15)
        assert np.allclose(lams[5:9], math.sqrt(3), rtol=0, atol=1e-15)
        assert [e.multiplicity for e in table.entries[:3]] == [1, 4, 4]
        assert table.entries[2].index_range == (6, 9)

    def test_sum_of_two_squares(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 16), count=120)
        for e in table.entries:
            assert e.multiplicity == r2(e.k_squared)
            assert e.lam == pytest.approx(math.sqrt(e.k_squared + 1), rel=1e-15)
        assert 3 not in [e.k_squared for e in table.entries]

    def test_one_dimension(self):
        cfg = TorusConfig(2 * math.pi, 1, 2.0, 0.5)
        table = enumerate_spectrum(cfg, ModeLattice((4,)), count=3)
        assert table.eigenvalues()[:3] == pytest.approx([2.0, math.sqrt(5), math.sqrt(5)])

    def test_brute_force(self):
        cfg = TorusConfig(1.3, 3, 0.6, 0.8)
        lat = cube(cfg, 5)
        table = enumerate_spectrum(cfg, lat, count=60)
        assert np.array_equal(table.eigenvalues()[:60], np.array(brute_force_eigenvalues(cfg, lat, 60)))

    def test_ground_state_simple(self):
        cfg = TorusConfig(4.0, 3, 1.5, 0.25)
        e = enumerate_spectrum(cfg, cube(cfg, 3), count=1).entries[0]
        assert e.multiplicity == 1 and e.lam == pytest.approx(1.5**0.5)

    def test_certified_radius(self, cfg_a):
        with pytest.raises(SpectrumError):
            enumerate_spectrum(cfg_a, cube(cfg_a, 2), count=30)

    def test_json(self, cfg_a):
        row = enumerate_spectrum(cfg_a, cube(cfg_a, 4), count=5).to_json()[1]
        assert set(row) == {"lambda", "mu", "k_squared", "multiplicity", "representatives", "index_range"}
        assert row["mu"] == pytest.approx(2.0)


class TestResonance:
    def test_fixture(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 8), count=1, lambda_max=2.0)
        r = is_resonant(2.0, table)
        assert not r.resonant
        assert r.below == pytest.approx(math.sqrt(3)) and r.above == pytest.approx(math.sqrt(5))

    def test_ground(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 8), count=1, lambda_max=1.0)
        r = is_resonant(1.0, table)
        assert r.resonant and r.nearest_index == 1

    def test_below(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 8), count=1, lambda_max=0.5)
        r = is_resonant(0.5, table)
        assert not r.resonant and r.below is None

    def test_unbracketed(self, cfg_a):
        table = enumerate_spectrum(cfg_a, cube(cfg_a, 8), count=1)
        with pytest.raises(SpectrumError):
            is_resonant(5.0, table)


class TestEigenbasis:
    def test_orthonormal(self, cfg_a):
        basis = real_eigenbasis(cfg_a, cube(cfg_a, 4), 21)
        G = np.array([[inner(a.field, b.field) for b in basis] for a in basis])
        assert np.max(np.abs(G - np.eye(len(basis)))) < 1e-14
        for e in basis:
            assert rayleigh_quotient(e.field, cfg_a) == pytest.approx(e.lam, rel=1e-14)
            assert e.field.hermitian_defect() == 0.0

    def test_rayleigh_constant_and_zero(self, cfg_a):
        lat = cube(cfg_a, 3)
        assert rayleigh_quotient(FourierField.mode(lat, (0, 0), 3.0), cfg_a) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            rayleigh_quotient(FourierField.zeros(lat), cfg_a)

    def test_rayleigh_min_on_tail(self, rng, cfg_a):
        lat = cube(cfg_a, 6)
        for ell in (2, 6, 10):
            split = eigenspace_split(cfg_a, lat, ell - 1)
            lam_ell = real_eigenbasis(cfg_a, lat, ell)[-1].lam
            for _ in range(10):
                w = project(FourierField.random(lat, rng), split, "Vh_perp")
                assert rayleigh_quotient(w, cfg_a) >= lam_ell - 1e-10

    def test_projection(self, rng, cfg_a):
        lat = cube(cfg_a, 5)
        split = eigenspace_split(cfg_a, lat, 5)
        v1 = split.basis[0].field
        assert np.allclose(project(v1, split).coeffs, v1.coeffs)
        assert np.max(np.abs(project(v1, split, "Vh_perp").coeffs)) < 1e-15
        u = FourierField.random(lat, rng)
        p, q = project(u, split), project(u, split, "Vh_perp")
        assert l2_norm(p) ** 2 + l2_norm(q) ** 2 == pytest.approx(l2_norm(u) ** 2, rel=1e-12)
        assert np.allclose(project(p, split).coeffs, p.coeffs, atol=1e-13)
        assert all(abs(inner(q, e.field)) < 1e-12 for e in split.basis)
        assert split.dim == 5 and split.lambda_h == pytest.approx(math.sqrt(2))

    def test_bad_which(self, cfg_a):
        split = eigenspace_split(cfg_a, cube(cfg_a, 2), 1)
        with pytest.raises(ValueError):
            project(split.basis[0].field, split, "other")
