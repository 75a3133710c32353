"""Benchmark SDE systems and the flow map used to generate transition data.

Dynamics are overdamped Langevin equations dx = -grad V(x) dt + sigma dW,
integrated with Euler-Maruyama. All randomness flows through counter-based
Philox streams so trajectories are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .errors import DivergenceError

# stream purposes, used as the leading stream index
STREAM_NOISE = 1
STREAM_TEST_POINTS = 2
STREAM_SAMPLES = 3
STREAM_SOLVER_INIT = 4


class SeededRng:
    """Splittable counter-based random stream family (Philox)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def stream(self, *ids: int) -> np.random.Generator:
        """Independent generator for a stream index tuple (up to 3 components)."""
        if len(ids) > 3:
            raise ValueError("at most 3 stream index components are supported")
        padded = list(ids) + [0] * (3 - len(ids))
        counter = [0, padded[2], padded[1], padded[0]]
        bitgen = np.random.Philox(
            counter=counter, key=[self.seed, 0x9E3779B97F4A7C15]
        )
        return np.random.Generator(bitgen)

    def uniform(self, shape, *ids) -> np.ndarray:
        return self.stream(*ids).random(shape)

    def normal(self, shape, *ids) -> np.ndarray:
        return normals(self.stream(*ids), shape)


def normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via inverse CDF on the uniform stream."""
    u = gen.random(shape)
    # random() can return exactly 0, which maps to -inf
    np.clip(u, 2.0**-53, None, out=u)
    return ndtri(u)


@dataclass
class Potential:
    """Energy landscape with analytic gradient.

    value/gradient accept an (n, d) batch (or a single point of shape (d,));
    noise_transform, when set, is applied to each noise increment.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    noise_transform: np.ndarray | None = None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=np.float64))


def zero_potential(dim: int) -> Potential:
    return Potential(
        name="zero",
        dim=dim,
        value=lambda x: np.zeros(x.shape[:-1]),
        gradient=np.zeros_like,
    )


def quadratic_potential(dim: int) -> Potential:
    """V(x) = ||x||^2 / 2, so the deterministic drift is -x."""
    return Potential(
        name="quadratic",
        dim=dim,
        value=lambda x: 0.5 * np.sum(x**2, axis=-1),
        gradient=lambda x: x.copy(),
    )


def rotated_double_well(alpha: float = 0.0) -> Potential:
    """Double-well ((x1^2 - 1)^2 + x2^2) rotated by the angle alpha."""
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, -s], [s, c]])

    def value(x):
        u = c * x[..., 0] - s * x[..., 1]
        w = s * x[..., 0] + c * x[..., 1]
        return (u**2 - 1) ** 2 + w**2

    def gradient(x):
        u = c * x[..., 0] - s * x[..., 1]
        w = s * x[..., 0] + c * x[..., 1]
        du = 4.0 * u * (u**2 - 1)
        dw = 2.0 * w
        out = np.empty_like(x)
        out[..., 0] = du * c + dw * s
        out[..., 1] = -du * s + dw * c
        return out

    return Potential(
        name="double_well",
        dim=2,
        value=value,
        gradient=gradient,
        params={"alpha": float(alpha)},
        noise_transform=rot if alpha != 0.0 else None,
    )


def triple_well_3d() -> Potential:
    """Three-well landscape in (x1, x2) augmented by a quadratic x3 direction."""

    def _gaussians(x):
        x1, x2 = x[..., 0], x[..., 1]
        e1 = np.exp(-(x1**2) - (x2 - 1.0 / 3.0) ** 2)
        e2 = np.exp(-(x1**2) - (x2 - 5.0 / 3.0) ** 2)
        e3 = np.exp(-((x1 - 1.0) ** 2) - x2**2)
        e4 = np.exp(-((x1 + 1.0) ** 2) - x2**2)
        return e1, e2, e3, e4

    def value(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        e1, e2, e3, e4 = _gaussians(x)
        return (
            3.0 * e1
            - 3.0 * e2
            - 5.0 * e3
            - 5.0 * e4
            + 0.2 * x1**4
            + 0.2 * (x2 - 1.0 / 3.0) ** 4
            + x3**2
        )

    def gradient(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        e1, e2, e3, e4 = _gaussians(x)
        out = np.empty_like(x)
        out[..., 0] = (
            -6.0 * x1 * e1
            + 6.0 * x1 * e2
            + 10.0 * (x1 - 1.0) * e3
            + 10.0 * (x1 + 1.0) * e4
            + 0.8 * x1**3
        )
        out[..., 1] = (
            -6.0 * (x2 - 1.0 / 3.0) * e1
            + 6.0 * (x2 - 5.0 / 3.0) * e2
            + 10.0 * x2 * e3
            + 10.0 * x2 * e4
            + 0.8 * (x2 - 1.0 / 3.0) ** 3
        )
        out[..., 2] = 2.0 * x3
        return out

    return Potential(name="triple_well3d", dim=3, value=value, gradient=gradient)


_POTENTIALS = {
    "double_well": rotated_double_well,
    "triple_well3d": triple_well_3d,
}


def potential_by_name(name: str, **params) -> Potential:
    if name not in _POTENTIALS:
        raise KeyError(
            f"unknown potential {name!r}; available: {sorted(_POTENTIALS)}"
        )
    return _POTENTIALS[name](**params)


@dataclass
class SdeSystem:
    """Overdamped Langevin system plus its Euler-Maruyama discretization."""

    potential: Potential
    sigma: float
    h: float = 1e-3
    n_steps: int = 10_000

    @property
    def dim(self) -> int:
        return self.potential.dim

    @property
    def interval_length(self) -> float:
        return self.n_steps * self.h


def _check_finite(x, context):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite state after {context}", state=x)


def em_step(sys: SdeSystem, x: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama step x' = x - grad V(x) h + sigma sqrt(h) xi."""
    x = np.asarray(x, dtype=np.float64)
    xi = normals(gen, x.shape)
    if sys.potential.noise_transform is not None:
        xi = xi @ sys.potential.noise_transform.T
    out = x - sys.potential.gradient(x) * sys.h + sys.sigma * np.sqrt(sys.h) * xi
    _check_finite(out, "em_step")
    return out


def flow_map(sys: SdeSystem, x: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """The time-(N h) flow: N composed Euler-Maruyama steps."""
    out = np.asarray(x, dtype=np.float64)
    for _ in range(sys.n_steps):
        out = em_step(sys, out, gen)
    return out


def flow_map_batch(
    sys: SdeSystem, points: np.ndarray, rng: SeededRng, batch_tag: int = 0
) -> np.ndarray:
    """Flow map for an (n, d) batch of start points.

    Noise for step t comes from the stream (STREAM_NOISE, batch_tag, t) with
    one row per point, so the result is a pure function of (sys, points,
    seed, batch_tag) regardless of how the caller schedules the batch.
    """
    x = np.array(points, dtype=np.float64)
    sqrth = np.sqrt(sys.h)
    rot = sys.potential.noise_transform
    for t in range(sys.n_steps):
        xi = rng.normal(x.shape, STREAM_NOISE, batch_tag, t)
        if rot is not None:
            xi = xi @ rot.T
        x -= sys.potential.gradient(x) * sys.h
        x += sys.sigma * sqrth * xi
        if t % 1000 == 0:
            _check_finite(x, f"flow_map_batch step {t}")
    _check_finite(x, "flow_map_batch")
    return x


def analytic_invariant_density(pot: Potential, sigma: float) -> Callable:
    """Unnormalized stationary density exp(-beta V) with beta = 2 / sigma^2."""
    beta = 2.0 / sigma**2

    def density(x):
        return np.exp(-beta * pot(np.asarray(x, dtype=np.float64)))

    return density
