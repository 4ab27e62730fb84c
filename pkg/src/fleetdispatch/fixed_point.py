"""Auxiliary-energy fractions and their fixed point.

Each device ``i`` is granted fictitious extra time-to-discharge
``lam[i] * off_measure[i]``, where ``off_measure`` is the time it spends
outside its availability set. The map :func:`lambda_map` runs the
availability-aware policy from the inflated state and returns, per device,
the energy actually drawn outside the availability set as a fraction of
the maximum possible off-window energy. At a fixed point the fictitious
energy matches the off-window draw exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ggddf import Trajectory, simulate
from .model import DemandProfile, Fleet

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1000
MIN_DAMPING = 0.0625
STALL_WINDOW = 10
MAX_EXTRAPOLATION = 2.0**20


class FixedPointNotConverged(RuntimeError):
    """Picard iteration ran out of iterations; ``best`` holds the best iterate."""

    def __init__(self, message: str, best: FixedPointResult):
        super().__init__(message)
        self.best = best


@dataclass
class FixedPointResult:
    lambda_bar: np.ndarray
    x_tilde0: np.ndarray
    d_tilde: DemandProfile
    iterations: int
    residual: float
    trajectory: Trajectory
    converged: bool = True
    damping: float = 1.0

    def to_json(self) -> dict:
        return {
            "lambda_bar": [float(v) for v in self.lambda_bar],
            "x_tilde0": [float(v) for v in self.x_tilde0],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "damping": float(self.damping),
        }


def outside_energy(traj: Trajectory, fleet: Fleet) -> np.ndarray:
    """Energy (kWh) each device delivered outside its availability set."""
    if traj.n_devices != fleet.size:
        raise ValueError(f"trajectory has {traj.n_devices} devices, fleet has {fleet.size}")
    if traj.n_segments == 0:
        return np.zeros(fleet.size)
    return traj.off_window_rates().T @ traj.durations


def augmented_initial_state(lam, fleet: Fleet) -> np.ndarray:
    return fleet.x0 + np.asarray(lam, dtype=float) * fleet.off_measure


def _normalise(delta: np.ndarray, fleet: Fleet) -> np.ndarray:
    denom = fleet.rated_power * fleet.off_measure
    out = np.zeros(fleet.size)
    np.divide(delta, denom, out=out, where=denom > 0)
    return np.clip(out, 0.0, 1.0)


def _evaluate(lam: np.ndarray, fleet: Fleet, demand: DemandProfile) -> tuple[np.ndarray, Trajectory]:
    traj = simulate(fleet, augmented_initial_state(lam, fleet), demand, availability_aware=True, allow_negative=True)
    return _normalise(outside_energy(traj, fleet), fleet), traj


def lambda_map(lam, fleet: Fleet, demand: DemandProfile) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (fleet.size,):
        raise ValueError(f"expected {fleet.size} fractions, got shape {lam.shape}")
    if np.any(lam < 0) or np.any(lam > 1):
        raise ValueError("fractions must lie in [0, 1]")
    return _evaluate(lam, fleet, demand)[0]


def augmented_demand(traj: Trajectory) -> DemandProfile:
    """Demand plus off-window draw, piecewise constant on the trajectory's segments."""
    values = traj.demand + traj.off_window_rates().sum(axis=1)
    return DemandProfile(tuple(traj.event_times), tuple(np.maximum(values, 0.0)))


def _drifting(r: np.ndarray, r_prev: np.ndarray | None, tol: float) -> np.ndarray:
    """Fractions whose residual did not change over the last accepted step.

    On such a coordinate the map moves one-for-one with the fraction, so a
    plain step advances by the same small amount every iteration.
    """
    if r_prev is None:
        return np.zeros(r.size, dtype=bool)
    return (np.abs(r - r_prev) <= 1e-9 * np.abs(r) + 1e-15) & (np.abs(r) > tol)


def solve_fixed_point(
    fleet: Fleet,
    demand: DemandProfile,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
    warm_start=None,
) -> FixedPointResult:
    """Picard iteration ``lam <- lam + a (Lambda(lam) - lam)`` with drift extrapolation.

    Stops once ``||Lambda(lam) - lam||_inf <= tol`` and returns that ``lam``
    together with the trajectory it produced; ``iterations`` counts map
    evaluations. Fractions whose residual stays exactly constant are stepped
    ``beta`` times further, with ``beta`` doubling while the residual does not
    grow and shrinking fourfold on a rejected step. If the best residual has
    not improved for fifty evaluations the damping ``a`` is halved, down to
    1/16. Every accepted point is a plain evaluation of the map, so the
    returned ``lam`` is a fixed point to within ``tol`` whatever the step rule.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    pinned = fleet.off_measure <= 0
    lam = np.zeros(fleet.size) if warm_start is None else np.clip(np.asarray(warm_start, dtype=float), 0.0, 1.0)
    lam[pinned] = 0.0

    alpha = damping
    beta = 1.0
    mapped, traj = _evaluate(lam, fleet, demand)
    r = mapped - lam
    residual = float(np.max(np.abs(r))) if lam.size else 0.0
    r_prev = None
    evals = 1
    best = (residual, lam.copy(), traj)
    since_best = 0
    while residual > tol and evals < max_iter:
        drift = _drifting(r, r_prev, tol)
        step = alpha * r
        step[drift] *= beta
        cand = np.clip(lam + step, 0.0, 1.0)
        cand[pinned] = 0.0
        mapped_c, traj_c = _evaluate(cand, fleet, demand)
        evals += 1
        r_c = mapped_c - cand
        res_c = float(np.max(np.abs(r_c)))
        if drift.any() and beta > 1 and res_c > residual * (1 + 1e-9) + 1e-14:
            beta = max(1.0, beta / 4)
            continue
        r_prev = r
        lam, r, residual, traj = cand, r_c, res_c, traj_c
        beta = min(2 * beta, MAX_EXTRAPOLATION) if drift.any() else 1.0
        if residual < best[0]:
            best = (residual, lam.copy(), traj)
            since_best = 0
        else:
            since_best += 1
            if since_best >= 5 * STALL_WINDOW and alpha > MIN_DAMPING:
                alpha /= 2
                since_best = 0
                log.debug("no progress after %d evaluations; damping reduced to %g", evals, alpha)

    if residual <= tol:
        return _result(lam, traj, evals, residual, fleet, True, alpha)
    residual, lam_best, traj_best = best
    result = _result(lam_best, traj_best, evals, residual, fleet, False, alpha)
    raise FixedPointNotConverged(
        f"no fixed point within tol={tol:g} after {evals} evaluations (best residual {residual:.3g})",
        result,
    )


def _result(lam, traj, iterations, residual, fleet, converged, alpha) -> FixedPointResult:
    return FixedPointResult(
        lambda_bar=lam.copy(),
        x_tilde0=augmented_initial_state(lam, fleet),
        d_tilde=augmented_demand(traj),
        iterations=iterations,
        residual=residual,
        trajectory=traj,
        converged=converged,
        damping=alpha,
    )
