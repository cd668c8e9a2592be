"""Poisson samplers: homogeneous, dominated strip, and finite-density.

The strip sampler keeps its full dominating pattern (rejected points and
heights included) because downstream constructions couple against it; the
finite-density sampler draws positions by inverse CDF on a monotone grid
whose step is a documented bias knob.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import PointPattern, SamplerError, Window

__all__ = [
    "sample_homogeneous",
    "DominatedIntensity",
    "StripSample",
    "sample_inhomogeneous_strip",
    "FiniteDensitySampler",
    "sample_poisson_finite_density",
]


def sample_homogeneous(window, rate, rng):
    """Homogeneous Poisson(rate) restricted to the window."""
    if rate < 0:
        raise SamplerError("rate must be nonnegative")
    n = rng.poisson(rate * window.volume())
    return PointPattern(window.sample_uniform(n, rng), dim=window.dim)


@dataclass(frozen=True)
class DominatedIntensity:
    """Conditional intensity t -> rate(t, history) with a declared bound.

    history is the array of already-accepted points below t; the bound is a
    hard contract and any evaluation above it aborts the draw.
    """

    bound: float
    rate: object

    def __post_init__(self):
        if not self.bound > 0:
            raise SamplerError("dominating bound must be positive")

    def evaluate(self, t, history):
        lam = float(self.rate(t, history))
        if lam < 0:
            raise SamplerError("conditional intensity returned a negative value")
        if lam > self.bound * (1 + 1e-12):
            raise SamplerError(
                f"conditional intensity {lam:.6g} exceeds declared bound {self.bound:.6g}"
            )
        return lam


@dataclass(frozen=True)
class StripSample:
    """A dominating strip draw on (0, horizon] x (0, bound).

    times/heights hold every dominating point; accepted marks the thinned
    subset. The rejected points are retained on purpose: couplings against
    the same strip need them.
    """

    times: np.ndarray
    heights: np.ndarray
    accepted: np.ndarray
    bound: float
    horizon: float

    @property
    def accepted_times(self):
        return self.times[self.accepted]

    def pattern(self):
        return PointPattern(self.accepted_times[:, None], dim=1)


def sample_inhomogeneous_strip(horizon, intensity, rng):
    """Thin a rate-`bound` stream on (0, horizon] by a causal intensity.

    Each dominating point (t, v) with v uniform on (0, bound) is accepted
    iff v < rate(t, accepted-so-far), evaluated in time order so the
    intensity may depend on the accepted history.
    """
    horizon = float(horizon)
    if horizon <= 0:
        raise SamplerError("horizon must be positive")
    n = rng.poisson(intensity.bound * horizon)
    times = np.sort(rng.random(n)) * horizon
    heights = rng.random(n) * intensity.bound
    accepted = np.zeros(n, dtype=bool)
    history = []
    for i in range(n):
        lam = intensity.evaluate(times[i], np.asarray(history))
        if heights[i] < lam:
            accepted[i] = True
            history.append(times[i])
    return StripSample(times, heights, accepted, intensity.bound, horizon)


class FiniteDensitySampler:
    """Poisson process on [0, inf) with integrable density r(t).

    Positions are drawn by inverting a piecewise-linear CDF tabulated on a
    monotone grid over [0, upper]; the grid step (default 1e-3 of the support
    diameter) bounds the interpolation bias at O(step^2 * |r'|) in the CDF.
    The truncation point must carry a certified tail: either `tail_mass(t)`
    is supplied and `upper` is grown until the tail is below tail_tol of the
    total mass, or `upper` is taken as the exact support endpoint.

    The table is built once so replicate loops can reuse the sampler.
    """

    def __init__(
        self,
        density,
        upper=None,
        total_mass=None,
        tail_mass=None,
        grid_step=None,
        tail_tol=1e-12,
    ):
        self.density = density
        if upper is None and tail_mass is None:
            raise SamplerError("need a support endpoint or a computable tail mass")
        if total_mass is None:
            hi = upper if upper is not None else np.inf
            total_mass, _ = integrate.quad(density, 0.0, hi, limit=200)
        total_mass = float(total_mass)
        if not np.isfinite(total_mass):
            raise SamplerError("density mass diverges: exact sampling impossible")
        if total_mass < 0:
            raise SamplerError("density mass must be nonnegative")
        self.total_mass = total_mass

        if upper is None:
            upper = 1.0
            while tail_mass(upper) > tail_tol * max(total_mass, 1e-300):
                upper *= 2.0
                if upper > 1e12:
                    raise SamplerError("tail mass does not reach the truncation tolerance")
        self.upper = float(upper)

        if grid_step is None:
            grid_step = 1e-3 * self.upper
        n_grid = max(int(np.ceil(self.upper / grid_step)) + 1, 8)
        grid = np.linspace(0.0, self.upper, n_grid)
        dens = np.asarray(density(grid), dtype=float)
        if np.any(dens < 0):
            raise SamplerError("density returned a negative value")
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * np.diff(grid) / 2.0)])
        if cdf[-1] <= 0:
            self._grid, self._cdf = grid, None
        else:
            self._grid = grid
            self._cdf = cdf / cdf[-1]

    def positions(self, n, rng):
        if n == 0 or self._cdf is None:
            return np.empty(0)
        u = rng.random(int(n))
        return np.interp(u, self._cdf, self._grid)

    def sample(self, rng):
        n = rng.poisson(self.total_mass)
        pts = self.positions(n, rng)
        return PointPattern(np.sort(pts)[:, None], dim=1)


def sample_poisson_finite_density(
    density, rng, upper=None, total_mass=None, tail_mass=None, grid_step=None
):
    """One-shot draw from FiniteDensitySampler (see that class for contracts)."""
    sampler = FiniteDensitySampler(
        density, upper=upper, total_mass=total_mass, tail_mass=tail_mass, grid_step=grid_step
    )
    return sampler.sample(rng)
