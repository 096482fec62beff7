"""Tabular curator on the alpha-floored simplex, updated by exponentiated gradient."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InfeasibleFloorError, NumericError

FLOOR_TOL = 1e-12


def floor_project(p: np.ndarray, alpha: float) -> np.ndarray:
    """KL projection of ``p`` onto {v : v >= alpha, sum(v) = 1}.

    Coordinates that would fall below ``alpha`` are pinned there and the
    remaining mass is shared among the others in proportion to ``p``.
    """
    p = np.asarray(p, dtype=float)
    dim = p.size
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    if alpha * dim > 1.0 + FLOOR_TOL:
        raise InfeasibleFloorError(f"alpha={alpha} infeasible for dimension {dim}")
    p = p / p.sum()
    if alpha == 0.0 or np.all(p >= alpha):
        return p
    clamped = np.zeros(dim, dtype=bool)
    while True:
        free = 1.0 - alpha * clamped.sum()
        mass = p[~clamped].sum()
        out = np.where(clamped, alpha, p * (free / mass) if mass > 0 else 0.0)
        newly = (~clamped) & (out < alpha)
        if not newly.any():
            return out
        clamped |= newly
        if clamped.all():
            return np.full(dim, 1.0 / dim)


def mirror_step(
    p: np.ndarray,
    signal: np.ndarray,
    eta: float,
    alpha: float,
    direction: float = 1.0,
    cap: float | None = 30.0,
) -> tuple[np.ndarray, int]:
    """Exponentiated-gradient step ``p * exp(direction * eta * signal)`` then floor projection.

    ``direction=+1`` treats the signal as gains, ``-1`` as losses. Exponents are
    clipped to ``[-cap, cap]``; the number of clipped entries is returned.
    """
    expo = direction * eta * np.asarray(signal, dtype=float)
    if not np.all(np.isfinite(expo)):
        raise NumericError("non-finite curator signal")
    n_capped = 0
    if cap is not None:
        over = np.abs(expo) > cap
        n_capped = int(over.sum())
        expo = np.clip(expo, -cap, cap)
    logw = np.log(p) + expo
    logw -= logw.max()
    w = np.exp(logw)
    return floor_project(w / w.sum(), alpha), n_capped


@dataclass
class CuratorDistribution:
    weights: np.ndarray
    alpha: float
    eta: float
    cap: float = 30.0
    capped_count: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights <= 0):
            raise ConfigurationError("curator weights must be strictly positive")
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")
        if self.alpha * self.weights.size > 1.0 + FLOOR_TOL:
            raise InfeasibleFloorError(f"alpha={self.alpha} infeasible for {self.weights.size} items")

    @classmethod
    def uniform(cls, size: int, eta: float, alpha: float | None = None, cap: float = 30.0):
        if alpha is None:
            alpha = 0.5 / size
        return cls(np.full(size, 1.0 / size), alpha, eta, cap)

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()


def conditional_distribution(
    curator: CuratorDistribution | np.ndarray,
    candidate_ids,
    floor: float | None = None,
) -> np.ndarray:
    """Restrict the curator's weights to the candidates and renormalize."""
    ids = np.asarray(candidate_ids, dtype=int)
    if ids.size == 0:
        raise ValueError("candidate set is empty")
    w = curator.weights if isinstance(curator, CuratorDistribution) else np.asarray(curator)
    if ids.min() < 0 or ids.max() >= w.size:
        raise IndexError("candidate id outside the bank")
    sub = w[ids] / w[ids].sum()
    if floor is not None:
        sub = floor_project(sub, floor)
    return sub


def osmd_step(curator: CuratorDistribution, utilities, eta_scale: float = 1.0) -> CuratorDistribution:
    """Gain-maximizing OSMD update with negative-entropy regularizer."""
    new_p, n_capped = mirror_step(
        curator.probabilities(),
        utilities,
        curator.eta * eta_scale,
        curator.alpha,
        direction=1.0,
        cap=curator.cap,
    )
    return CuratorDistribution(
        weights=new_p,
        alpha=curator.alpha,
        eta=curator.eta,
        cap=curator.cap,
        capped_count=curator.capped_count + n_capped,
    )


def save_curator(curator: CuratorDistribution, path: str | Path) -> None:
    state = {
        "weights": curator.weights.tolist(),
        "alpha": curator.alpha,
        "eta": curator.eta,
        "cap": curator.cap,
        "capped_count": curator.capped_count,
    }
    Path(path).write_text(json.dumps(state))


def load_curator(path: str | Path) -> CuratorDistribution:
    state = json.loads(Path(path).read_text())
    return CuratorDistribution(np.array(state["weights"]), state["alpha"], state["eta"],
                               state["cap"], state["capped_count"])
