"""Linear-in-features curator trained by the KL surrogate or the clipped proximal loss.

Scores are ``w(x) = exp(theta . [features(x), 1])`` so every problem keeps a
positive weight; conditionals over a candidate set are softmaxes of the
log-scores.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actor import log_softmax
from .errors import ConfigurationError, NumericError, StateError

LOSS_KINDS = ("surrogate", "clipped")


@dataclass
class CuratorParams:
    theta: np.ndarray
    eta: float = 1.0
    clip: tuple[float, float] = (0.8, 1.2)
    optimizer_lr: float = 0.05
    epochs_per_step: int = 20
    sampling_prior: bool = False
    kl_mode: str = "conditional"
    step: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        lo, hi = self.clip
        if not lo < 1.0 < hi:
            raise ConfigurationError("clip must satisfy rho_min < 1 < rho_max")
        self.clip = (float(lo), float(hi))
        if self.optimizer_lr <= 0:
            raise ConfigurationError("optimizer_lr must be positive")
        if self.epochs_per_step < 1:
            raise ConfigurationError("epochs_per_step must be >= 1")
        if self.kl_mode not in ("conditional", "global"):
            raise ConfigurationError("kl_mode must be 'conditional' or 'global'")

    @classmethod
    def zeros(cls, n_features: int, **kwargs) -> "CuratorParams":
        return cls(np.zeros(n_features + 1), **kwargs)

    def replace(self, **changes) -> "CuratorParams":
        return dataclasses.replace(self, **changes)


def design(features: np.ndarray) -> np.ndarray:
    """Append the bias column."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    return np.hstack([features, np.ones((features.shape[0], 1))])


def log_scores(theta: np.ndarray, features: np.ndarray) -> np.ndarray:
    return design(features) @ theta


def induced_conditional(
    params: CuratorParams | np.ndarray,
    features: np.ndarray,
    q: np.ndarray | None = None,
    sampling_prior: bool | None = None,
) -> np.ndarray:
    """p_phi(. | candidates) from the scores of the candidates' feature rows.

    With the sampling prior on, scores are multiplied by the proposal
    inclusion probabilities ``q`` before normalizing.
    """
    theta = params.theta if isinstance(params, CuratorParams) else np.asarray(params)
    if sampling_prior is None:
        sampling_prior = params.sampling_prior if isinstance(params, CuratorParams) else False
    if len(features) == 0:
        raise ValueError("candidate set is empty")
    z = log_scores(theta, features)
    if sampling_prior and q is not None:
        z = z + np.log(q)
    return np.exp(log_softmax(z))


@dataclass
class CuratorBatchFeedback:
    candidate_ids: np.ndarray
    features: np.ndarray
    old_cond_p: np.ndarray
    g: np.ndarray
    selected: np.ndarray
    log_q: np.ndarray | None = None
    # only read when kl_mode == "global"
    bank_features: np.ndarray | None = None
    theta_old: np.ndarray | None = None

    def __post_init__(self):
        self.candidate_ids = np.asarray(self.candidate_ids, dtype=int)
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.old_cond_p = np.asarray(self.old_cond_p, dtype=float)
        self.selected = np.asarray(self.selected, dtype=bool)
        self.g = np.where(self.selected, np.asarray(self.g, dtype=float), 0.0)
        n = len(self.candidate_ids)
        if not (len(self.features) == len(self.old_cond_p) == len(self.g) == len(self.selected) == n):
            raise ConfigurationError("feedback arrays must align with candidate_ids")
        if abs(self.old_cond_p.sum() - 1.0) > 1e-9:
            raise ConfigurationError("old_cond_p must sum to 1 over the candidates")

    def check(self) -> None:
        if np.any(self.old_cond_p <= 0):
            raise StateError("old conditional probability is zero for some candidate")


def _candidate_logits(theta: np.ndarray, fb: CuratorBatchFeedback, sampling_prior: bool):
    z = log_scores(theta, fb.features)
    if sampling_prior and fb.log_q is not None:
        z = z + fb.log_q
    return z


def _kl_and_grad(params: CuratorParams, fb: CuratorBatchFeedback, z: np.ndarray):
    """KL(p_phi || p_old) and its gradient w.r.t. theta."""
    if params.kl_mode == "global":
        if fb.bank_features is None or fb.theta_old is None:
            raise StateError("global KL needs bank_features and theta_old on the feedback")
        X = design(fb.bank_features)
        lp = log_softmax(X @ params.theta)
        lp_old = log_softmax(X @ fb.theta_old)
    else:
        X = design(fb.features)
        lp = log_softmax(z)
        lp_old = np.log(fb.old_cond_p)
    p = np.exp(lp)
    ell = lp - lp_old
    kl = float(p @ ell)
    dz = p * (ell - kl)
    return kl, X.T @ dz


def surrogate_loss(params: CuratorParams, fb: CuratorBatchFeedback, with_grad: bool = False):
    """KL(p_phi || p_old) - eta * sum_selected rho * g over the candidate set."""
    fb.check()
    z = _candidate_logits(params.theta, fb, params.sampling_prior)
    lp = log_softmax(z)
    p = np.exp(lp)
    rho = p / fb.old_cond_p
    kl, kl_grad = _kl_and_grad(params, fb, z)
    linear = float(rho @ fb.g)
    loss = kl - params.eta * linear
    if not np.isfinite(loss):
        raise NumericError("non-finite surrogate loss", kl=kl, linear=linear)
    if not with_grad:
        return loss
    rg = rho * fb.g
    # d rho_j / d z_i = rho_j (delta_ij - p_i)
    dz_linear = rg - p * rg.sum()
    grad = kl_grad - params.eta * (design(fb.features).T @ dz_linear)
    return loss, grad


def clipped_loss(params: CuratorParams, fb: CuratorBatchFeedback, with_grad: bool = False):
    """-eta * sum_x min(rho g, clip(rho) g); unselected candidates have g = 0."""
    fb.check()
    z = _candidate_logits(params.theta, fb, params.sampling_prior)
    lp = log_softmax(z)
    p = np.exp(lp)
    rho = p / fb.old_cond_p
    lo, hi = params.clip
    unclipped = rho * fb.g
    clipped = np.clip(rho, lo, hi) * fb.g
    terms = np.minimum(unclipped, clipped)
    loss = -params.eta * float(terms.sum())
    if not np.isfinite(loss):
        bad = np.flatnonzero(~np.isfinite(terms))
        raise NumericError("non-finite clipped loss", candidates=fb.candidate_ids[bad].tolist())
    if not with_grad:
        return loss
    active = unclipped <= clipped
    rg = np.where(active, unclipped, 0.0)
    dz = rg - p * rg.sum()
    grad = -params.eta * (design(fb.features).T @ dz)
    return loss, grad


def loss_terms(params: CuratorParams, fb: CuratorBatchFeedback) -> np.ndarray:
    """Per-candidate contributions to the clipped loss."""
    z = _candidate_logits(params.theta, fb, params.sampling_prior)
    rho = np.exp(log_softmax(z)) / fb.old_cond_p
    lo, hi = params.clip
    return -params.eta * np.minimum(rho * fb.g, np.clip(rho, lo, hi) * fb.g)


@dataclass
class CuratorUpdate:
    params: CuratorParams
    loss: float
    grad_norm: float
    losses: list[float]


def curator_update(
    params: CuratorParams,
    fb: CuratorBatchFeedback,
    loss_kind: str = "clipped",
    lr_scale: float = 1.0,
) -> CuratorUpdate:
    """Run ``epochs_per_step`` plain gradient-descent steps on the chosen loss."""
    if loss_kind not in LOSS_KINDS:
        raise ConfigurationError(f"loss_kind must be one of {LOSS_KINDS}")
    fn = surrogate_loss if loss_kind == "surrogate" else clipped_loss
    lr = params.optimizer_lr * lr_scale
    theta = params.theta.copy()
    losses = []
    grad_norm = 0.0
    for _ in range(params.epochs_per_step):
        loss, grad = fn(params.replace(theta=theta), fb, with_grad=True)
        losses.append(loss)
        grad_norm = float(np.linalg.norm(grad))
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite curator gradient", loss_kind=loss_kind)
        theta = theta - lr * grad
    final = fn(params.replace(theta=theta), fb)
    losses.append(final)
    return CuratorUpdate(params.replace(theta=theta, step=params.step + 1), final, grad_norm, losses)


def params_to_dict(params: CuratorParams) -> dict:
    return {
        "theta": params.theta.tolist(),
        "eta": params.eta,
        "clip": list(params.clip),
        "optimizer_lr": params.optimizer_lr,
        "epochs_per_step": params.epochs_per_step,
        "sampling_prior": params.sampling_prior,
        "kl_mode": params.kl_mode,
        "step": params.step,
    }


def params_from_dict(d: dict) -> CuratorParams:
    d = dict(d)
    d["theta"] = np.array(d["theta"], dtype=float)
    d["clip"] = tuple(d["clip"])
    return CuratorParams(**d)


def save_params(params: CuratorParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path: str | Path) -> CuratorParams:
    return params_from_dict(json.loads(Path(path).read_text()))
