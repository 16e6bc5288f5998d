"""Clustered-delay-line channel (parameterized "lite" profiles) and link capacity.

A channel is a superposition of rays grouped into clusters; ray power
decays exponentially with delay inside a cluster.  Profiles A-D differ
in cluster/ray counts, delay spread, and LOS flag; the 3GPP tap tables
are deliberately not reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ChannelDomainError(ValueError):
    pass


@dataclass
class Ray:
    delay_s: float
    phase_rad: float
    amp: complex          # per-subcarrier base amplitude


@dataclass
class Cluster:
    initial_power: float      # linear
    delay_spread_s: float
    rays: list[Ray]


@dataclass
class ChannelModel:
    clusters: list[Cluster]
    profile_kind: str = "A"
    los: bool = False

    def validate(self):
        if not self.clusters:
            raise ChannelDomainError("need at least one cluster")
        for c in self.clusters:
            if not c.rays:
                raise ChannelDomainError("need at least one ray per cluster")
            for r in c.rays:
                if r.delay_s < 0:
                    raise ChannelDomainError("negative ray delay")


# profile letter -> (clusters, rays per cluster, delay spread ns, los)
PROFILE_PARAMS = {
    "A": (5, 4, 100.0, False),
    "B": (4, 4, 60.0, False),
    "C": (6, 3, 300.0, False),
    "D": (3, 3, 40.0, True),
}


def make_cdl_lite(profile: str, rng: np.random.Generator) -> ChannelModel:
    """Draw a seeded channel realization for one link."""
    if profile not in PROFILE_PARAMS:
        raise ChannelDomainError(f"unknown profile {profile!r}")
    n_clusters, n_rays, ds_ns, los = PROFILE_PARAMS[profile]
    sigma = ds_ns * 1e-9
    clusters = []
    for lc in range(n_clusters):
        p0 = float(rng.uniform(0.5, 1.0)) / (lc + 1)
        rays = []
        for _ in range(n_rays):
            delay = float(rng.exponential(sigma)) + lc * sigma
            power = ray_power(p0, delay - lc * sigma, sigma)
            rays.append(Ray(delay_s=delay,
                            phase_rad=float(rng.uniform(0, 2 * np.pi)),
                            amp=complex(np.sqrt(power / n_rays), 0.0)))
        clusters.append(Cluster(initial_power=p0, delay_spread_s=sigma, rays=rays))
    model = ChannelModel(clusters=clusters, profile_kind=profile, los=los)
    model.validate()
    return model


def ray_power(cluster_power: float, delay_s: float, delay_spread_s: float) -> float:
    """Exponential power-delay profile within a cluster."""
    return cluster_power * np.exp(-delay_s / delay_spread_s)


def channel_gain(model: ChannelModel, subcarrier_freq_hz: float, t_s: float = 0.0) -> complex:
    """Complex narrowband gain at one subcarrier: sum over all rays.

    Each ray contributes amp * e^{j(theta - 2*pi*f*delay)}; the delta in
    the tapped-delay-line model becomes a frequency-domain phase ramp.
    """
    model.validate()
    h = 0j
    for cluster in model.clusters:
        for ray in cluster.rays:
            h += ray.amp * np.exp(1j * (ray.phase_rad - 2 * np.pi * subcarrier_freq_hz * ray.delay_s))
    return h


@dataclass
class LinkBudget:
    subcarrier_bandwidth_hz: float
    subcarrier_power_w: float
    noise_density_w_per_hz: float
    total_bandwidth_hz: float
    channel_gain_sq: float   # |h|^2

    def validate(self):
        for name in ("subcarrier_bandwidth_hz", "subcarrier_power_w",
                     "noise_density_w_per_hz", "total_bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ChannelDomainError(f"{name} must be > 0")
        if self.channel_gain_sq < 0:
            raise ChannelDomainError("channel gain must be >= 0")


def capacity(lb: LinkBudget) -> float:
    """Shannon capacity of one subcarrier in bits/s."""
    lb.validate()
    snr = lb.subcarrier_power_w / (lb.noise_density_w_per_hz * lb.total_bandwidth_hz)
    return lb.subcarrier_bandwidth_hz * np.log2(1.0 + snr * lb.channel_gain_sq)


def path_loss_db(distance_m: float, carrier_hz: float, exponent: float = 3.5) -> float:
    """Log-distance path loss with a free-space 1 m intercept."""
    d = max(distance_m, 1.0)
    fspl_1m = 20 * np.log10(carrier_hz) - 147.55
    return fspl_1m + 10 * exponent * np.log10(d)
