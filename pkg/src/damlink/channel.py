"""Discrete-time sparse multipath MISO channel model and generator.

The channel is a set of temporal-resolvable paths, each with an integer delay
(at resolution 1/B) and a complex gain vector across the transmit array. Each
path may bundle several sub-paths sharing the delay but departing at different
angles from the half-wavelength ULA.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SubPath",
    "MultipathPath",
    "MultipathChannel",
    "ChannelGenConfig",
    "array_response",
    "discretize_delay",
    "generate_channel",
    "path_correlation",
    "broadside_correlation_closed_form",
    "raw_effective_taps",
    "save_channel",
    "load_channel",
]


def array_response(theta: float, m_t: int) -> np.ndarray:
    """Steering vector of a half-wavelength ULA toward AoD ``theta`` (radians).

    Entry m is exp(-j pi (m - 1) cos(theta)), m = 1..m_t.
    """
    if m_t < 1:
        raise ValueError("m_t must be >= 1")
    return np.exp(-1j * np.pi * np.arange(m_t) * np.cos(theta))


def discretize_delay(tau: float, bandwidth: float) -> int:
    """Nearest sample index of a delay ``tau`` seconds at bandwidth ``bandwidth`` Hz."""
    if tau < 0:
        raise ValueError("delay must be nonnegative")
    return int(round(tau * bandwidth))


@dataclass(frozen=True)
class SubPath:
    coefficient: complex
    aod: float  # radians


@dataclass(frozen=True)
class MultipathPath:
    gain: np.ndarray  # (m_t,) complex
    delay: int  # samples, >= 0
    path_gain: complex = 1.0 + 0j
    subpaths: tuple[SubPath, ...] = ()

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=complex)
        object.__setattr__(self, "gain", g)
        if self.delay < 0:
            raise ValueError("path delay must be nonnegative")
        if not np.all(np.isfinite(g)) or not np.any(g):
            raise ValueError("path gain must be finite and nonzero")


@dataclass(frozen=True)
class MultipathChannel:
    """Multipath MISO channel: paths sorted by strictly increasing delay."""

    m_t: int
    paths: tuple[MultipathPath, ...]
    bandwidth: float

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one path")
        delays = [p.delay for p in self.paths]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("path delays must be strictly increasing")
        if any(p.gain.shape != (self.m_t,) for p in self.paths):
            raise ValueError("every path gain must have length m_t")

    @classmethod
    def from_arrays(
        cls,
        gains: np.ndarray,
        delays: np.ndarray,
        bandwidth: float,
        merge_duplicates: bool = False,
    ) -> "MultipathChannel":
        """Build a channel from an (L, m_t) gain array and integer delays.

        With ``merge_duplicates`` gains at a shared delay are summed (for
        user-supplied channels); otherwise duplicate delays are an error.
        """
        gains = np.atleast_2d(np.asarray(gains, dtype=complex))
        delays = np.asarray(delays, dtype=int)
        if merge_duplicates:
            uniq = np.unique(delays)
            merged = np.stack([gains[delays == d].sum(axis=0) for d in uniq])
            gains, delays = merged, uniq
        order = np.argsort(delays)
        paths = tuple(
            MultipathPath(gain=gains[i], delay=int(delays[i])) for i in order
        )
        return cls(m_t=gains.shape[1], paths=paths, bandwidth=bandwidth)

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        """(L, m_t) array of path gain vectors, delay-ascending."""
        return np.stack([p.gain for p in self.paths])

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=int)

    @property
    def n_min(self) -> int:
        return self.paths[0].delay

    @property
    def n_max(self) -> int:
        return self.paths[-1].delay

    @property
    def n_span(self) -> int:
        return self.n_max - self.n_min

    @property
    def sample_time(self) -> float:
        return 1.0 / self.bandwidth

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Propagate a transmit stream through the channel (noiseless).

        ``x`` has shape (m_t, N); the received scalar stream has length
        N + n_max: y[i] = sum_l h_l^H x[:, i - n_l].
        """
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        n = x.shape[1]
        y = np.zeros(n + self.n_max, dtype=complex)
        for p in self.paths:
            y[p.delay : p.delay + n] += p.gain.conj() @ x
        return y


@dataclass(frozen=True)
class ChannelGenConfig:
    """Random channel draw parameters (defaults follow the simulation setup).

    ``pdp`` selects how average path powers decay over delay: "uniform" or
    "exponential" with time constant ``pdp_decay`` in delay samples. Total
    average path power is normalized to one. Sub-path coefficients default to
    unit magnitude with uniform phase; the distribution is configurable
    because no standard choice exists.
    """

    m_t: int = 128
    num_paths: int = 5
    tau_max: float = 312.5e-9
    bandwidth: float = 128e6
    max_subpaths: int = 3
    aod_range: tuple[float, float] = (-np.pi / 3, np.pi / 3)
    pdp: str = "uniform"
    pdp_decay: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.max_subpaths < 1:
            raise ValueError("max_subpaths must be >= 1")
        if self.tau_max * self.bandwidth < self.num_paths - 1:
            raise ValueError("not enough resolvable delay bins for num_paths")
        if self.pdp not in ("uniform", "exponential"):
            raise ValueError(f"unknown pdp {self.pdp!r}")


def generate_channel(cfg: ChannelGenConfig, trial: int = 0) -> MultipathChannel:
    """Draw a random channel, deterministically in (cfg.seed, trial).

    Delays are distinct samples uniform over [0, round(tau_max * B)]; per-path
    sub-path counts are uniform on [1, max_subpaths]; AoDs uniform over the
    configured interval. RNG is numpy PCG64 seeded with (seed, trial), stable
    across releases.
    """
    rng = np.random.default_rng([cfg.seed, trial])
    max_bin = discretize_delay(cfg.tau_max, cfg.bandwidth)
    if cfg.num_paths > max_bin + 1:
        raise ValueError(
            f"cannot place {cfg.num_paths} distinct delays in [0, {max_bin}]"
        )
    delays = np.sort(rng.choice(max_bin + 1, size=cfg.num_paths, replace=False))

    if cfg.pdp == "uniform":
        powers = np.full(cfg.num_paths, 1.0 / cfg.num_paths)
    else:
        w = np.exp(-delays / cfg.pdp_decay)
        powers = w / w.sum()

    lo, hi = cfg.aod_range
    paths = []
    for l in range(cfg.num_paths):
        alpha = np.sqrt(powers[l]) * np.exp(2j * np.pi * rng.uniform())
        mu = int(rng.integers(1, cfg.max_subpaths + 1))
        subs = tuple(
            SubPath(
                coefficient=np.exp(2j * np.pi * rng.uniform()),
                aod=rng.uniform(lo, hi),
            )
            for _ in range(mu)
        )
        gain = alpha * sum(
            sp.coefficient * array_response(sp.aod, cfg.m_t) for sp in subs
        )
        paths.append(
            MultipathPath(
                gain=gain, delay=int(delays[l]), path_gain=alpha, subpaths=subs
            )
        )
    return MultipathChannel(m_t=cfg.m_t, paths=tuple(paths), bandwidth=cfg.bandwidth)


def path_correlation(h_a: np.ndarray, h_b: np.ndarray) -> float:
    """Absolute square of the normalized inner product of two gain vectors."""
    h_a = np.asarray(h_a, dtype=complex)
    h_b = np.asarray(h_b, dtype=complex)
    na, nb = np.linalg.norm(h_a), np.linalg.norm(h_b)
    if na == 0 or nb == 0:
        raise ValueError("path correlation is undefined for a zero vector")
    return float(np.abs(h_a.conj() @ h_b) ** 2 / (na**2 * nb**2))


def broadside_correlation_closed_form(
    theta_a: float, theta_b: float, m_t: int
) -> float:
    """Dirichlet-kernel closed form of the single-AoD path correlation."""
    d = np.cos(theta_a) - np.cos(theta_b)
    if np.isclose(np.sin(np.pi * d / 2), 0.0):
        return 1.0
    num = np.sin(np.pi * m_t * d / 2)
    den = np.sin(np.pi * d / 2)
    return float((num / den) ** 2 / m_t**2)


def raw_effective_taps(ch: MultipathChannel) -> np.ndarray:
    """(n_span + 1, m_t) tap array: tap t is h_l where t + n_min == n_l, else 0."""
    taps = np.zeros((ch.n_span + 1, ch.m_t), dtype=complex)
    for p in ch.paths:
        taps[p.delay - ch.n_min] = p.gain
    return taps


def channel_to_dict(ch: MultipathChannel) -> dict:
    return {
        "m_t": ch.m_t,
        "bandwidth": ch.bandwidth,
        "paths": [
            {
                "delay_samples": int(p.delay),
                "gain_real": p.gain.real.tolist(),
                "gain_imag": p.gain.imag.tolist(),
            }
            for p in ch.paths
        ],
    }


def channel_from_dict(d: dict) -> MultipathChannel:
    gains = np.array(
        [np.array(p["gain_real"]) + 1j * np.array(p["gain_imag"]) for p in d["paths"]]
    )
    delays = np.array([p["delay_samples"] for p in d["paths"]], dtype=int)
    return MultipathChannel.from_arrays(gains, delays, bandwidth=d["bandwidth"])


def save_channel(ch: MultipathChannel, path: str) -> None:
    """Write the channel as JSON; floats round-trip exactly (repr serialization)."""
    with open(path, "w") as f:
        json.dump(channel_to_dict(ch), f)


def load_channel(path: str) -> MultipathChannel:
    with open(path) as f:
        return channel_from_dict(json.load(f))
