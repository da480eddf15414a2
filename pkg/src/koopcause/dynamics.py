"""Benchmark continuous-time systems and a fixed-step RK4 integrator.

Two systems are provided: a pair of Rössler oscillators coupled through
their ``y`` coordinates, and the Lorenz 96 ring. Everything here is a pure
function of its inputs; randomness only enters through explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .errors import ContractViolation, IntegrationDiverged

__all__ = [
    "Trajectory",
    "CoupledRosslerParams",
    "Lorenz96Params",
    "rossler_deriv",
    "coupled_rossler_deriv",
    "lorenz96_deriv",
    "integrate",
    "random_initial_state",
    "simulate_rossler",
    "simulate_lorenz96",
    "perturbation_experiment",
    "front_arrival_times",
    "max_lyapunov_exponent",
    "lyapunov_time_steps",
]


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered states sampled every ``dt`` starting at ``t0``.

    ``states`` has shape ``(T, N)``; row ``n`` is the state at ``t0 + n * dt``.
    The array is made read-only on construction.
    """

    states: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 1 or states.shape[1] < 1:
            raise ContractViolation(f"states must be a non-empty (T, N) array, got shape {states.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ContractViolation(f"dt must be positive, got {self.dt}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1].copy()


@dataclass(frozen=True)
class CoupledRosslerParams:
    """Constants of the coupled Rössler pair.

    ``d=5.7``, ``c1=0.5``, ``c2=0.0`` are the published demonstration
    values. ``a``, ``b``, ``phi1`` and ``phi2`` have no published values; the
    defaults below are the standard chaotic Rössler regime and are
    implementation defaults only. With identical oscillators, ``c1`` of about
    0.3 or more synchronizes the pair completely.
    """

    a: float = 0.2
    b: float = 0.2
    d: float = 5.7
    c1: float = 0.5
    c2: float = 0.0
    phi1: float = 1.0
    phi2: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "d", "c1", "c2", "phi1", "phi2"):
            if not np.isfinite(getattr(self, name)):
                raise ContractViolation(f"Rössler parameter {name} must be finite")


@dataclass(frozen=True)
class Lorenz96Params:
    n_sites: int = 101
    forcing: float = 4.0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 4:
            raise ContractViolation(f"n_sites must be an integer >= 4, got {self.n_sites}")
        if not (np.isfinite(self.forcing) and self.forcing >= 0):
            raise ContractViolation(f"forcing must be finite and >= 0, got {self.forcing}")


def _check_dim(state, n):
    state = np.asarray(state, dtype=float)
    if state.shape != (n,):
        raise ContractViolation(f"expected a state of shape ({n},), got {state.shape}")
    return state


def rossler_deriv(state, a=0.2, b=0.2, d=5.7, phi=1.0):
    """Right-hand side of a single uncoupled Rössler oscillator ``[x, y, z]``."""
    x, y, z = _check_dim(state, 3)
    return np.array([-phi * y - z, phi * x + a * y, b + z * (x - d)])


def coupled_rossler_deriv(state, params: CoupledRosslerParams):
    """Right-hand side of the coupled pair, state ordered ``[x1 y1 z1 x2 y2 z2]``."""
    x1, y1, z1, x2, y2, z2 = _check_dim(state, 6)
    p = params
    return np.array([
        -p.phi1 * y1 - z1,
        p.phi1 * x1 + p.a * y1 + p.c1 * (y2 - y1),
        p.b + z1 * (x1 - p.d),
        -p.phi2 * y2 - z2,
        p.phi2 * x2 + p.a * y2 + p.c2 * (y1 - y2),
        p.b + z2 * (x2 - p.d),
    ])


def lorenz96_deriv(state, params: Lorenz96Params):
    """Lorenz 96 tendency ``(w[n+1] - w[n-2]) * w[n-1] - w[n] + F`` on a ring."""
    w = _check_dim(state, params.n_sites)
    return (np.roll(w, -1) - np.roll(w, 2)) * np.roll(w, 1) - w + params.forcing


def integrate(system: Callable[[np.ndarray], np.ndarray], initial, dt: float, n_steps: int,
              t0: float = 0.0) -> Trajectory:
    """Integrate ``dx/dt = system(x)`` with classical fixed-step RK4.

    Parameters
    ----------
    system : callable
        Maps a state vector to its time derivative.
    initial : array_like
        Finite initial state.
    dt : float
        Step size, > 0.
    n_steps : int
        Number of steps; the returned trajectory has ``n_steps + 1`` rows.

    Raises
    ------
    IntegrationDiverged
        If any component becomes non-finite; ``err.step`` is the 1-based
        index of the offending step.
    """
    x = np.array(initial, dtype=float)
    if x.ndim != 1:
        raise ContractViolation("initial state must be a vector")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("initial state must be finite")
    if not (np.isfinite(dt) and dt > 0):
        raise ContractViolation(f"dt must be positive, got {dt}")
    if int(n_steps) != n_steps or n_steps < 0:
        raise ContractViolation(f"n_steps must be a non-negative integer, got {n_steps}")
    n_steps = int(n_steps)

    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    half = 0.5 * dt
    sixth = dt / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_steps + 1):
            k1 = system(x)
            k2 = system(x + half * k1)
            k3 = system(x + half * k2)
            k4 = system(x + dt * k3)
            x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(x).all():
                raise IntegrationDiverged(n)
            out[n] = x
    return Trajectory(out, dt, t0)


def random_initial_state(dim, seed, low=-1.0, high=1.0):
    """Uniform draw from the box ``[low, high]`` (scalars or per-dimension arrays)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=dim)


def simulate_rossler(params: CoupledRosslerParams, dt=0.01, n_steps=10_000, burn_in=10_000,
                     seed=0, ic_box=(-5.0, 5.0), initial=None) -> Trajectory:
    """Orbit of the coupled pair after discarding ``burn_in`` transient steps."""
    if initial is None:
        initial = random_initial_state(6, seed, *ic_box)
    f = partial(coupled_rossler_deriv, params=params)
    if burn_in:
        initial = integrate(f, initial, dt, burn_in).final
    return integrate(f, initial, dt, n_steps, t0=burn_in * dt)


def simulate_lorenz96(params: Lorenz96Params, dt=0.01, n_steps=10_000, burn_in=10_000,
                      seed=0, ic_box=(-1.0, 1.0), initial=None) -> Trajectory:
    """Lorenz 96 orbit from a seeded random start, transient removed."""
    if initial is None:
        initial = random_initial_state(params.n_sites, seed, *ic_box)
    f = partial(lorenz96_deriv, params=params)
    if burn_in:
        initial = integrate(f, initial, dt, burn_in).final
    return integrate(f, initial, dt, n_steps, t0=burn_in * dt)


def perturbation_experiment(params: Lorenz96Params, dt: float, n_steps: int, burn_in: int,
                            site: int, epsilon: float, seed: int,
                            ic_box=(-1.0, 1.0)) -> np.ndarray:
    """Spacetime field of ``|difference|`` between a reference and a perturbed orbit.

    Both copies start from the same post-burn-in state; the second one has
    ``epsilon`` added at ``site``. Returns an ``(n_steps, n_sites)`` array whose
    row 0 is the initial difference.
    """
    if not 0 <= site < params.n_sites:
        raise ContractViolation(f"site must lie in [0, {params.n_sites}), got {site}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ContractViolation("n_steps must be a positive integer")
    if burn_in < 0:
        raise ContractViolation("burn_in must be >= 0")
    start = simulate_lorenz96(params, dt, 0, burn_in, seed, ic_box).final
    kicked = start.copy()
    kicked[site] += epsilon
    f = partial(lorenz96_deriv, params=params)
    ref = integrate(f, start, dt, n_steps - 1).states
    pert = integrate(f, kicked, dt, n_steps - 1).states
    return np.abs(pert - ref)


def front_arrival_times(field: np.ndarray, site: int, offsets, threshold: float) -> dict:
    """First row index at which ``field[:, site + k]`` exceeds ``threshold``.

    Offsets wrap around the ring. Sites never crossing map to ``np.inf``.
    """
    n_sites = field.shape[1]
    times = {}
    for k in offsets:
        col = field[:, (site + k) % n_sites]
        hit = np.flatnonzero(col > threshold)
        times[k] = int(hit[0]) if hit.size else np.inf
    return times


def max_lyapunov_exponent(system: Callable[[np.ndarray], np.ndarray], initial, dt: float, n_steps: int,
                          renorm_every: int = 10, d0: float = 1e-8, seed: int = 0) -> float:
    """Largest Lyapunov exponent (per unit time) by two-orbit renormalization.

    A companion orbit starts ``d0`` away from ``initial`` in a seeded random
    direction; every ``renorm_every`` steps the separation is measured, its
    log growth accumulated, and the companion pulled back to distance ``d0``.
    ``initial`` should already lie on the attractor.
    """
    if n_steps < renorm_every or renorm_every < 1:
        raise ContractViolation("need n_steps >= renorm_every >= 1")
    x = np.array(initial, dtype=float)
    direction = np.random.default_rng(seed).standard_normal(x.size)
    y = x + d0 * direction / np.linalg.norm(direction)
    total, blocks = 0.0, n_steps // renorm_every
    for _ in range(blocks):
        x = integrate(system, x, dt, renorm_every).final
        y = integrate(system, y, dt, renorm_every).final
        sep = np.linalg.norm(y - x)
        if sep == 0.0:
            raise ContractViolation("orbits coincided; increase d0")
        total += np.log(sep / d0)
        y = x + (d0 / sep) * (y - x)
    return total / (blocks * renorm_every * dt)


def lyapunov_time_steps(params: CoupledRosslerParams, dt: float = 0.01, n_steps: int = 200_000,
                        burn_in: int = 10_000, seed: int = 0) -> float:
    """Lyapunov time ``1 / lambda_max`` of the coupled Rössler system, in integration steps."""
    start = simulate_rossler(params, dt, 0, burn_in, seed).final
    lam = max_lyapunov_exponent(partial(coupled_rossler_deriv, params=params), start, dt, n_steps, seed=seed)
    if lam <= 0:
        raise ContractViolation(f"non-positive largest exponent {lam:.3g}: orbit is not chaotic")
    return 1.0 / (lam * dt)
