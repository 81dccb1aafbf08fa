"""Channel realizations: TN to relay, relay to RMS, RMS to feed antenna, and the cascade."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .scenario import (SPEED_OF_LIGHT, STREAM_RELAY_RMS, STREAM_TN_RELAY, generate_topology,
                       rng_for)


def _cn(rng, size=None):
    """Circularly symmetric complex normal with unit variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def _subcarrier_phase(params, n, distance):
    # n is zero-based; the phase uses the subcarrier number n + 1
    return np.exp(-2j * np.pi * (n + 1) * params.W * distance / SPEED_OF_LIGHT)


def tn_relay_channel(params, topo, k, n, rng=None, kappa=None):
    """Rician gain from TN ``k`` to the relay on subcarrier ``n`` (both zero-based)."""
    if rng is None:
        rng = rng_for(params.seed, STREAM_TN_RELAY, k, n)
    kappa = params.kappa1 if kappa is None else kappa
    d = topo.d_k[k]
    scale = np.sqrt(params.C0 / d ** params.nu)
    nlos = _cn(rng)
    if np.isinf(kappa):
        return complex(scale * _subcarrier_phase(params, n, d))
    return complex(scale * (np.sqrt(kappa / (1 + kappa)) * _subcarrier_phase(params, n, d)
                            + np.sqrt(1 / (1 + kappa)) * nlos))


def upa_los_steering(params, phi, psi):
    """Planar-array steering vector, row factor (Mr) kron column factor (Mc).

    Flat index is ``mr * Mc + mc``; every entry has unit modulus.
    """
    lam = params.wavelength
    mr = np.arange(params.Mr)
    mc = np.arange(params.Mc)
    row = np.exp(-2j * np.pi * mr * params.dr * np.sin(phi) * np.cos(psi) / lam)
    col = np.exp(-2j * np.pi * mc * params.dc * np.sin(phi) * np.sin(psi) / lam)
    return np.kron(row, col)


def relay_rms_channel(params, topo, n, rng=None, kappa=None):
    if rng is None:
        rng = rng_for(params.seed, STREAM_RELAY_RMS, n)
    kappa = params.kappa2 if kappa is None else kappa
    d = topo.d_relay_rms
    scale = np.sqrt(params.C0 / d ** params.alpha_pl)
    los = _subcarrier_phase(params, n, d) * upa_los_steering(params, topo.aoa_phi, topo.aoa_psi)
    nlos = _cn(rng, params.M)
    if np.isinf(kappa):
        return scale * los
    return scale * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)


def element_offsets(count):
    """Centered grid offsets (2m - count - 1)/2 for m = 1..count."""
    m = np.arange(1, count + 1)
    return (2 * m - count - 1) / 2.0


def nearfield_distances(params, r_hat=None):
    r_hat = params.r_hat if r_hat is None else r_hat
    off_r = element_offsets(params.Mr) * params.dr
    off_c = element_offsets(params.Mc) * params.dc
    # same flat layout as the steering vector: mr outer, mc inner
    return np.sqrt(r_hat ** 2 + off_r[:, None] ** 2 + off_c[None, :] ** 2).ravel()


def rms_feed_channel(params, n, r_hat=None):
    r_hat = params.r_hat if r_hat is None else r_hat
    r = nearfield_distances(params, r_hat)
    h_los = np.exp(2j * np.pi * params.f_c * (r - r_hat) / SPEED_OF_LIGHT)
    return params.rho * _subcarrier_phase(params, n, r_hat) * h_los


@dataclass(frozen=True)
class ChannelSet:
    """One frozen channel realization.

    ``v[n]`` satisfies ``v[n].conj() @ s == h_f[n].conj() @ (g[n] * s)``, so the
    effective gain of a transmissive vector ``s`` is ``|v[n]^H s|^2``.
    """

    h_r: np.ndarray  # (K, N)
    g: np.ndarray  # (N, M)
    h_f: np.ndarray  # (N, M)
    v: np.ndarray  # (N, M)
    V: np.ndarray  # (N, M, M)

    @property
    def gain_relay(self):
        """|h_{k,n}|^2, shape (K, N)."""
        return np.abs(self.h_r) ** 2

    def cascade_gain(self, s):
        """|v_n^H s|^2 for every subcarrier."""
        return np.abs(self.v.conj() @ s) ** 2

    def cascade_gain_cov(self, S):
        """tr(S V_n) for every subcarrier."""
        return np.real(np.einsum("nm,mk,nk->n", self.v.conj(), S, self.v))

    def with_relay(self, h_r):
        return ChannelSet(np.asarray(h_r, dtype=complex), self.g, self.h_f, self.v, self.V)

    def with_cascade(self, g=None, h_f=None):
        g = self.g if g is None else np.asarray(g, dtype=complex)
        h_f = self.h_f if h_f is None else np.asarray(h_f, dtype=complex)
        return assemble(self.h_r, g, h_f)


def assemble(h_r, g, h_f):
    v = h_f * np.conj(g)
    V = np.einsum("nm,nk->nmk", v, v.conj())
    return ChannelSet(np.asarray(h_r, dtype=complex), g, h_f, v, V)


def build_channel_set(params, topo=None, rng=None):
    """Draw every channel of a scenario.

    With ``rng=None`` each (stream, k, n) site gets its own counter-based
    generator, so users and subcarriers are prefix-consistent when K or N change
    and the relay link does not depend on M. Passing one ``rng`` draws all
    entries from it sequentially instead.
    """
    topo = generate_topology(params) if topo is None else topo
    K, N = params.K, params.N
    h_r = np.array([[tn_relay_channel(params, topo, k, n, rng) for n in range(N)] for k in range(K)])
    g = np.array([relay_rms_channel(params, topo, n, rng) for n in range(N)])
    h_f = np.array([rms_feed_channel(params, n) for n in range(N)])
    return assemble(h_r, g, h_f)


def scenario(params):
    """Topology and channels for ``params.seed``."""
    topo = generate_topology(params)
    return topo, build_channel_set(params, topo)


def dump_channels(channels):
    """Columnar text dump: ``group,n,index,re,im`` with one row per complex entry."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "n", "index", "re", "im"])
    K, N = channels.h_r.shape
    for n in range(N):
        for k in range(K):
            z = channels.h_r[k, n]
            w.writerow(["h_r", n, k, repr(float(z.real)), repr(float(z.imag))])
    for name in ("g", "h_f", "v"):
        arr = getattr(channels, name)
        for n in range(arr.shape[0]):
            for m in range(arr.shape[1]):
                z = arr[n, m]
                w.writerow([name, n, m, repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


def load_channel_dump(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    groups = {}
    for r in rows:
        z = complex(float(r["re"]), float(r["im"]))
        groups.setdefault(r["group"], []).append((int(r["n"]), int(r["index"]), z))

    def to_array(entries, n_first):
        n_max = max(e[0] for e in entries) + 1
        i_max = max(e[1] for e in entries) + 1
        arr = np.zeros((n_max, i_max), dtype=complex)
        for n, i, z in entries:
            arr[n, i] = z
        return arr if n_first else arr.T

    h_r = to_array(groups["h_r"], n_first=False)
    return assemble(h_r, to_array(groups["g"], True), to_array(groups["h_f"], True))
