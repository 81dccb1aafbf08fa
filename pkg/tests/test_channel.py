import math

import numpy as np
import pytest

from rmsmec.channel import (assemble, build_channel_set, dump_channels, element_offsets, load_channel_dump,
                            nearfield_distances, relay_rms_channel, rms_feed_channel, scenario, tn_relay_channel,
                            upa_los_steering)
from rmsmec.scenario import SPEED_OF_LIGHT, SystemParams, Topology, generate_topology

PAPER = SystemParams()


def _topo(d_k=10.0, d=35.0, phi=math.pi / 2, psi=math.pi / 4, K=1):
    return Topology(np.zeros((K, 3)), np.full(K, d_k), d, 0.5, phi, psi)


def test_pure_los_relay_gain_magnitude():
    topo = _topo(d_k=10.0)
    for n in range(4):
        h = tn_relay_channel(PAPER, topo, 0, n, kappa=np.inf)
        assert abs(h) == pytest.approx(math.sqrt(1e-3 / 10.0 ** 3), rel=1e-12)


def test_relay_gain_second_moment_monte_carlo():
    topo = _topo(d_k=10.0)
    rng = np.random.default_rng(2024)
    draws = np.array([tn_relay_channel(PAPER, topo, 0, 3, rng=rng) for _ in range(100_000)])
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(1e-6, rel=0.02)


def test_relay_gain_deterministic():
    _, a = scenario(PAPER.replace(seed=4))
    _, b = scenario(PAPER.replace(seed=4))
    assert np.array_equal(a.h_r, b.h_r)
    assert np.array_equal(a.g, b.g)
    assert np.array_equal(a.V, b.V)


def test_steering_zero_angle_is_ones():
    s = upa_los_steering(PAPER, 0.0, 1.234)
    assert np.allclose(s, np.ones(PAPER.M), atol=0, rtol=0)


@pytest.mark.parametrize("phi,psi", [(0.3, 1.1), (1.2, -2.0), (math.pi / 2, math.pi / 4)])
def test_steering_unit_modulus(phi, psi):
    s = upa_los_steering(PAPER, phi, psi)
    assert np.allclose(np.abs(s), 1.0, atol=1e-15)
    assert np.sum(np.abs(s) ** 2) == pytest.approx(PAPER.M, rel=1e-14)


def test_steering_half_wavelength_row_flip():
    lam = SPEED_OF_LIGHT / PAPER.f_c
    p = PAPER.replace(Mc=2, Mr=2, dr=lam / 2, dc=lam / 2)
    s = upa_los_steering(p, math.pi / 2, 0.0)
    # flat index mr * Mc + mc: the row dimension flips sign, the column factor is flat
    assert np.allclose(s, [1, 1, -1, -1], atol=1e-12)


def test_pure_los_surface_channel():
    topo = generate_topology(PAPER)
    n = 6
    g = relay_rms_channel(PAPER, topo, n, kappa=np.inf)
    d = topo.d_relay_rms
    expect = (math.sqrt(1e-3 / d ** 3) * np.exp(-2j * np.pi * (n + 1) * PAPER.W * d / SPEED_OF_LIGHT)
              * upa_los_steering(PAPER, topo.aoa_phi, topo.aoa_psi))
    assert np.allclose(g, expect, rtol=1e-12, atol=0)


def test_surface_channel_second_moment_monte_carlo():
    topo = _topo(d=35.0)
    rng = np.random.default_rng(7)
    draws = np.array([relay_rms_channel(PAPER, topo, 0, rng=rng) for _ in range(100_000)])
    mean = np.mean(np.sum(np.abs(draws) ** 2, axis=1))
    assert mean == pytest.approx(PAPER.M * 1e-3 / 35.0 ** 3, rel=0.02)


def test_subcarriers_share_los_direction():
    topo = generate_topology(PAPER)
    g0 = relay_rms_channel(PAPER, topo, 0, kappa=np.inf)
    g5 = relay_rms_channel(PAPER, topo, 5, kappa=np.inf)
    ratio = g5 / g0
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
    assert abs(ratio[0]) == pytest.approx(1.0)


def test_nearfield_center_and_offsets():
    p = PAPER.replace(Mc=5, Mr=5, dc=0.05, dr=0.05)
    r = nearfield_distances(p, r_hat=1.0)
    assert r[12] == pytest.approx(1.0, abs=1e-15)
    assert element_offsets(3)[0] == -1.0
    # corner element: offsets of +-2 on both axes
    assert r[0] == pytest.approx(1.0099504938362078, rel=1e-14)
    assert r[-1] == pytest.approx(1.0099504938362078, rel=1e-14)


def test_feed_channel_structure():
    p = PAPER.replace(rho=0.7)
    h3 = rms_feed_channel(p, 3)
    h8 = rms_feed_channel(p, 8)
    assert np.allclose(np.abs(h3), 0.7, rtol=1e-14)
    assert np.sum(np.abs(h3) ** 2) == pytest.approx(0.49 * p.M, rel=1e-13)
    center = rms_feed_channel(p, 3)[12]
    assert np.angle(center) == pytest.approx(
        np.angle(np.exp(-2j * np.pi * 4 * p.W * p.r_hat / SPEED_OF_LIGHT)), abs=1e-12)
    shift = np.exp(-2j * np.pi * (8 - 3) * p.W * p.r_hat / SPEED_OF_LIGHT)
    assert np.allclose(h8, h3 * shift, rtol=1e-12, atol=0)


def test_cascade_matrices_rank_one_with_trace_identity():
    _, ch = scenario(PAPER.replace(seed=2))
    for n in range(PAPER.N):
        V = ch.V[n]
        assert np.allclose(V, V.conj().T)
        w = np.linalg.eigvalsh(V)
        assert w[-1] == pytest.approx(np.sum(np.abs(ch.v[n]) ** 2), rel=1e-12)
        assert np.all(np.abs(w[:-1]) <= 1e-12 * w[-1])
        assert np.real(np.trace(V)) == pytest.approx(np.sum(np.abs(ch.v[n]) ** 2), rel=1e-12)


def test_cascade_with_all_ones_matches_scalar_loop():
    _, ch = scenario(PAPER.replace(seed=9))
    s = np.ones(PAPER.M, dtype=complex)
    for n in range(PAPER.N):
        acc = 0j
        for m in range(PAPER.M):
            acc += ch.h_f[n, m].conjugate() * ch.g[n, m] * s[m]
        assert np.vdot(ch.v[n], s) == pytest.approx(acc, rel=1e-13)
        assert ch.cascade_gain(s)[n] == pytest.approx(abs(acc) ** 2, rel=1e-12)


def test_single_element_cascade():
    h_f = np.array([[0.6 - 0.2j]])
    g = np.array([[1.5 + 0.5j]])
    ch = assemble(np.ones((1, 1)), g, h_f)
    s = np.array([0.8j])
    assert ch.cascade_gain(s)[0] == pytest.approx(abs(h_f[0, 0]) ** 2 * abs(g[0, 0]) ** 2 * 0.64, rel=1e-14)


def test_quadratic_form_equals_trace_form():
    _, ch = scenario(PAPER.replace(seed=1))
    rng = np.random.default_rng(0)
    s = rng.standard_normal(PAPER.M) + 1j * rng.standard_normal(PAPER.M)
    S = np.outer(s, s.conj())
    assert np.allclose(ch.cascade_gain(s), ch.cascade_gain_cov(S), rtol=1e-10, atol=0)


def test_relay_link_independent_of_surface_size():
    _, a = scenario(PAPER.replace(seed=3, M=16))
    _, b = scenario(PAPER.replace(seed=3, M=49))
    assert np.array_equal(a.h_r, b.h_r)


def test_channel_dump_round_trip():
    p = PAPER.replace(seed=5, K=2, N=3, M=4)
    _, ch = scenario(p)
    text = dump_channels(ch)
    assert text.splitlines()[0] == "group,n,index,re,im"
    back = load_channel_dump(text)
    for name in ("h_r", "g", "h_f", "v", "V"):
        assert np.array_equal(getattr(back, name), getattr(ch, name)), name


def test_shared_generator_mode_is_reproducible():
    topo = generate_topology(PAPER)
    a = build_channel_set(PAPER, topo, np.random.default_rng(1))
    b = build_channel_set(PAPER, topo, np.random.default_rng(1))
    assert np.array_equal(a.h_r, b.h_r) and np.all(np.isfinite(a.V))
