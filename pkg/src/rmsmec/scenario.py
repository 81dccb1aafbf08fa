"""Scenario configuration, node geometry and seeded randomness."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SPEED_OF_LIGHT = 299_792_458.0

# RNG stream identifiers; each draw site owns one so draws do not depend on call order.
STREAM_TOPOLOGY = 1
STREAM_TN_RELAY = 2
STREAM_RELAY_RMS = 3
STREAM_INIT_PHASE = 4
STREAM_RANDOM_PHASE = 5
STREAM_SDR = 6


class ConfigError(ValueError):
    """Bad scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ScenarioInfeasible(RuntimeError):
    """The demanded task bits cannot be served with the available resources."""


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return 10.0 ** (np.asarray(x_dbm, dtype=float) / 10.0) * 1e-3


def linear_to_db(x):
    return 10.0 * np.log10(x)


def watt_to_dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float) / 1e-3)


def rng_for(seed, stream, *index):
    """Counter-style generator for one (seed, stream, index...) draw site."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),) + tuple(int(i) for i in index))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SystemParams:
    """Scalar constants of one scenario, all in linear SI units."""

    K: int = 5
    N: int = 20
    Mc: int = 5
    Mr: int = 5
    W: float = 1e6
    T: float = 1.0
    sigma2: float = 1e-10
    delta2: float = 1e-10
    c_t: float = 1e3
    c_r: float = 1e3
    c_m: float = 1e3
    alpha_t: float = 1e-27
    alpha_r: float = 0.3e-27
    P_t_max: float = 10.0
    P_r_max: float = 10.0
    f_t_max: float = 2e9
    f_r_max: float = 3e9
    f_m_max: float = 5e9
    f_c: float = 3e9
    nu: float = 3.0
    alpha_pl: float = 3.0
    C0: float = 1e-3
    kappa1: float = 10 ** 0.3
    kappa2: float = 10 ** 0.3
    rms_pos: tuple = (0.0, 0.0, 10.0)
    relay_pos: tuple = (25.0, 25.0, 10.0)
    user_center: tuple = (0.0, 0.0, 0.0)
    user_radius: float = 50.0
    r_hat: float = 0.5
    dc: float = SPEED_OF_LIGHT / (2 * 3e9)
    dr: float = SPEED_OF_LIGHT / (2 * 3e9)
    rho: float = 1.0
    D: tuple = field(default_factory=lambda: (1e6,) * 5)
    epsilon: float = 1e-3
    epsilon_rank: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        D = tuple(float(x) for x in np.atleast_1d(np.asarray(self.D, dtype=float)))
        if len(D) == 1 and self.K > 1:
            D = D * self.K
        object.__setattr__(self, "D", D)
        for name in ("rms_pos", "relay_pos", "user_center"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        self.validate()

    @property
    def M(self):
        return self.Mc * self.Mr

    @property
    def D_arr(self):
        return np.asarray(self.D, dtype=float)

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.f_c

    def validate(self):
        for name in ("K", "N", "Mc", "Mr"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be >= 1")
        positive = ("W", "T", "sigma2", "delta2", "c_t", "c_r", "c_m", "alpha_t", "alpha_r",
                    "P_t_max", "P_r_max", "f_t_max", "f_r_max", "f_m_max", "f_c", "nu",
                    "alpha_pl", "C0", "kappa1", "kappa2", "user_radius", "r_hat", "dc", "dr",
                    "rho", "epsilon", "epsilon_rank")
        for name in positive:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be finite and > 0, got {v!r}")
        if len(self.D) != self.K:
            raise ConfigError("D", f"expected {self.K} entries, got {len(self.D)}")
        if any(not (np.isfinite(x) and x > 0) for x in self.D):
            raise ConfigError("D", "all demands must be > 0")
        for name in ("rms_pos", "relay_pos", "user_center"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(name, "expected 3 coordinates")

    def replace(self, **changes):
        """Copy with fields changed; a scalar ``D`` or a new ``K`` re-broadcasts demands."""
        if "M" in changes:
            Mc, Mr = split_elements(changes.pop("M"))
            changes.setdefault("Mc", Mc)
            changes.setdefault("Mr", Mr)
        if "K" in changes and "D" not in changes:
            # users keep their demand; new users take the first user's
            K = int(changes["K"])
            changes["D"] = tuple(self.D[i] if i < len(self.D) else self.D[0] for i in range(K))
        if "D" in changes and np.ndim(changes["D"]) == 0:
            changes["D"] = (float(changes["D"]),) * int(changes.get("K", self.K))
        return dataclasses.replace(self, **changes)


def split_elements(M):
    """Square grid for an element count; rejects counts without an integer square root."""
    M = int(M)
    side = math.ceil(math.sqrt(M))
    if side * side != M:
        raise ConfigError("M", f"{M} is not a perfect square; give Mc and Mr explicitly")
    return side, side


def default_paper_params(**overrides):
    return SystemParams().replace(**overrides) if overrides else SystemParams()


_DB_KEYS = {
    # key: (target fields, converter)
    "sigma2_dbm": (("sigma2",), dbm_to_watt),
    "delta2_dbm": (("delta2",), dbm_to_watt),
    "c0_db": (("C0",), db_to_linear),
    "kappa_db": (("kappa1", "kappa2"), db_to_linear),
    "kappa1_db": (("kappa1",), db_to_linear),
    "kappa2_db": (("kappa2",), db_to_linear),
    "p_max_dbm": (("P_t_max", "P_r_max"), dbm_to_watt),
    "p_t_max_dbm": (("P_t_max",), dbm_to_watt),
    "p_r_max_dbm": (("P_r_max",), dbm_to_watt),
}

_INT_FIELDS = {"K", "N", "Mc", "Mr", "seed"}
_TUPLE_FIELDS = {"rms_pos", "relay_pos", "user_center", "D"}


def params_from_mapping(doc, base=None):
    """Build params from a flat mapping; unspecified fields keep the ``base`` values."""
    base = base or SystemParams()
    fields = {f.name for f in dataclasses.fields(SystemParams)}
    values = {}
    delta2_given = False
    for key, raw in doc.items():
        if key == "settings" and isinstance(raw, dict):
            continue
        if key in _DB_KEYS:
            targets, conv = _DB_KEYS[key]
            try:
                val = float(conv(float(raw)))
            except (TypeError, ValueError):
                raise ConfigError(key, f"not a number: {raw!r}") from None
            for t in targets:
                values[t] = val
            delta2_given |= "delta2" in targets
            continue
        if key == "M":
            try:
                values["Mc"], values["Mr"] = split_elements(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError("M", str(exc)) from None
            continue
        if key not in fields:
            raise ConfigError(key, "unknown key")
        try:
            if key in _INT_FIELDS:
                if float(raw) != int(raw):
                    raise ValueError
                values[key] = int(raw)
            elif key in _TUPLE_FIELDS:
                values[key] = tuple(float(x) for x in np.atleast_1d(raw))
            else:
                values[key] = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"bad value {raw!r}") from None
        delta2_given |= key == "delta2"
    if "sigma2" in values and not delta2_given:
        values["delta2"] = values["sigma2"]
    if "K" in values and "D" not in values:
        values["D"] = (base.D[0],) * values["K"]
    try:
        return dataclasses.replace(base, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from None


def parse_config(config_text):
    try:
        return tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"parse failure: {exc}") from None


def load_params(config_text):
    """Parse a TOML scenario document into validated :class:`SystemParams`.

    Keys mirror the field names. ``*_db``/``*_dbm`` keys are converted to linear
    units here and nowhere else. A ``[settings]`` table is ignored (see
    :func:`rmsmec.solvers.bcd.load_settings`).
    """
    return params_from_mapping(parse_config(config_text))


@dataclass(frozen=True)
class Topology:
    user_positions: np.ndarray
    d_k: np.ndarray
    d_relay_rms: float
    r_hat: float
    aoa_phi: float
    aoa_psi: float


def draw_user_position(params, k):
    rng = rng_for(params.seed, STREAM_TOPOLOGY, k)
    radius = params.user_radius * math.sqrt(rng.random())
    theta = 2 * math.pi * rng.random()
    cx, cy, cz = params.user_center
    return np.array([cx + radius * math.cos(theta), cy + radius * math.sin(theta), cz])


def generate_topology(params):
    users = np.array([draw_user_position(params, k) for k in range(params.K)])
    relay = np.asarray(params.relay_pos)
    rms = np.asarray(params.rms_pos)
    d_k = np.linalg.norm(users - relay, axis=1)
    delta = relay - rms
    d = float(np.linalg.norm(delta))
    # elevation from the surface normal (z) and azimuth in the surface plane
    phi = float(math.acos(delta[2] / d))
    psi = float(math.atan2(delta[1], delta[0]))
    return Topology(users, d_k, d, float(params.r_hat), phi, psi)
