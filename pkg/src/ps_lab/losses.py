"""Proxy-based loss family: forward values and exact analytic gradients.

Seven kinds are implemented over an (embeddings, labels, proxies) triple:

    softmax       cross-entropy over raw dot-product logits
    norm_softmax  cross-entropy over scaled cosine logits
    cosface       additive cosine margin on the target logit
    arcface       additive angular margin on the target logit
    sphereface    multiplicative angular margin (monotonic extension)
    proxy_nca     -log( exp(-d+^2) / sum_neg exp(-d^2) ) on unit vectors
    proxy_anchor  two-term log-sum-exp over proxies as anchors

Gradients are taken with respect to the *raw* (unnormalized) embeddings
and proxies, with the chain rule through any internal l2 normalization
carried out analytically. ``loss_value`` is the forward-only path used
by finite-difference oracles.

The module also exposes the closed-form similarity-space gradients of
the plain softmax loss and of its synthetic-class variant, which serve
as independent oracles for the backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidLabelError,
    InvalidPairError,
    InvalidParameterError,
)
from .numeric import as_matrix

KINDS = ("softmax", "norm_softmax", "cosface", "arcface", "sphereface",
         "proxy_nca", "proxy_anchor")

# Kinds whose logits depend on the inputs only through their directions.
NORMALIZED_KINDS = ("norm_softmax", "cosface", "arcface", "sphereface",
                    "proxy_nca", "proxy_anchor")

_DEFAULT_MARGINS = {"cosface": 0.35, "arcface": 0.5, "sphereface": 4.0}

_SIN_FLOOR = 1e-15  # keeps 1/sin(theta) finite at exact pole alignment


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingBatch:
    """N x d raw embeddings with one integer class id per row."""

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.embeddings = as_matrix(self.embeddings, "embeddings")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != self.embeddings.shape[0]:
            raise DegenerateInputError(
                f"labels must be 1-D with one entry per embedding row, "
                f"got shape {labels.shape} for {self.embeddings.shape[0]} rows")
        if labels.size == 0:
            raise DegenerateInputError("batch must contain at least one embedding")
        if not np.issubdtype(labels.dtype, np.integer):
            rounded = np.rint(np.asarray(labels, dtype=np.float64))
            if not np.array_equal(rounded, np.asarray(labels, dtype=np.float64)):
                raise InvalidLabelError("labels must be integers")
            labels = rounded.astype(np.int64)
        self.labels = labels.astype(np.int64)

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class ProxyBank:
    """C x d raw proxies, one row per class."""

    proxies: np.ndarray

    def __post_init__(self):
        self.proxies = as_matrix(self.proxies, "proxies")

    @property
    def num_classes(self) -> int:
        return self.proxies.shape[0]

    @property
    def dim(self) -> int:
        return self.proxies.shape[1]


@dataclass
class LossConfig:
    """Which loss to apply and its scalar knobs.

    margin defaults per kind when left at None: 0.35 (cosface, additive
    cosine), 0.5 (arcface, additive angle in radians), 4 (sphereface,
    integer angle multiplier). gamma scales the logits of the cosine
    kinds; pa_alpha / pa_delta are the proxy_anchor scale and margin.
    """

    kind: str = "norm_softmax"
    gamma: float = 16.0
    margin: float | None = None
    pa_alpha: float = 32.0
    pa_delta: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(
                f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma!r}")
        if self.margin is None:
            self.margin = _DEFAULT_MARGINS.get(self.kind, 0.0)
        if self.kind == "arcface" and not (0.0 <= self.margin < math.pi):
            raise InvalidParameterError(
                f"arcface margin must lie in [0, pi), got {self.margin!r}")
        if self.kind == "cosface" and not (0.0 <= self.margin < 2.0):
            raise InvalidParameterError(
                f"cosface margin must lie in [0, 2), got {self.margin!r}")
        if self.kind == "sphereface":
            if self.margin < 1 or self.margin != int(self.margin):
                raise InvalidParameterError(
                    f"sphereface margin must be a positive integer, got {self.margin!r}")
        if not (self.pa_alpha > 0 and math.isfinite(self.pa_alpha)):
            raise InvalidParameterError(f"pa_alpha must be positive, got {self.pa_alpha!r}")
        if not math.isfinite(self.pa_delta):
            raise InvalidParameterError(f"pa_delta must be finite, got {self.pa_delta!r}")


@dataclass
class LossGrad:
    """Scalar loss plus gradients over the raw inputs."""

    loss: float
    d_embeddings: np.ndarray
    d_proxies: np.ndarray


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _check_inputs(batch: EmbeddingBatch, bank: ProxyBank, cfg: LossConfig):
    if batch.dim != bank.dim:
        raise DegenerateInputError(
            f"embedding dim {batch.dim} != proxy dim {bank.dim}")
    if np.any(batch.labels < 0) or np.any(batch.labels >= bank.num_classes):
        bad = int(np.argmax((batch.labels < 0) | (batch.labels >= bank.num_classes)))
        raise InvalidLabelError(
            f"label {batch.labels[bad]} at row {bad} is outside [0, {bank.num_classes})")
    if cfg.kind in NORMALIZED_KINDS:
        if np.any(np.linalg.norm(batch.embeddings, axis=1) == 0.0):
            raise DegenerateInputError(
                f"{cfg.kind} requires nonzero embeddings")
        if np.any(np.linalg.norm(bank.proxies, axis=1) == 0.0):
            raise DegenerateInputError(f"{cfg.kind} requires nonzero proxies")


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy_rows(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row -log softmax(z)[label], computed stably."""
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - shifted[np.arange(z.shape[0]), labels]


def _norm_chain(raw: np.ndarray, unit: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    """Backpropagate through row-wise v -> v/||v||.

    d_raw[i] = (d_unit[i] - (d_unit[i] . unit[i]) unit[i]) / ||raw[i]||,
    i.e. the tangent projection scaled by the inverse norm.
    """
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    inner = np.sum(d_unit * unit, axis=1, keepdims=True)
    return (d_unit - inner * unit) / norms


def _target_transform(cfg: LossConfig, cos_t: np.ndarray):
    """Value and d/dcos of the positive-logit transform (before gamma).

    cos_t holds the target cosines only. Returns (psi, dpsi_dcos).
    """
    if cfg.kind in ("norm_softmax",):
        return cos_t, np.ones_like(cos_t)
    if cfg.kind == "cosface":
        return cos_t - cfg.margin, np.ones_like(cos_t)
    if cfg.kind == "arcface":
        m = cfg.margin
        sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
        psi = cos_t * math.cos(m) - sin_t * math.sin(m)
        dpsi = math.cos(m) + math.sin(m) * cos_t / np.maximum(sin_t, _SIN_FLOOR)
        return psi, dpsi
    if cfg.kind == "sphereface":
        m = int(cfg.margin)
        theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
        k = np.minimum(np.floor(theta * m / math.pi), m - 1)
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        psi = sign * np.cos(m * theta) - 2.0 * k
        sin_t = np.sin(theta)
        dpsi = sign * m * np.sin(m * theta) / np.maximum(sin_t, _SIN_FLOOR)
        return psi, dpsi
    raise InvalidParameterError(f"no target transform for kind {cfg.kind!r}")


# ---------------------------------------------------------------------------
# Kind-specific loss + cosine-space gradient
# ---------------------------------------------------------------------------

def _margin_family(cos: np.ndarray, labels: np.ndarray, cfg: LossConfig,
                   need_grad: bool):
    """norm_softmax / cosface / arcface / sphereface over the cosine matrix."""
    n = cos.shape[0]
    rows = np.arange(n)
    cos_t = cos[rows, labels]
    psi, dpsi = _target_transform(cfg, cos_t)
    z = cfg.gamma * cos
    z[rows, labels] = cfg.gamma * psi
    loss = float(np.mean(_cross_entropy_rows(z, labels)))
    if not need_grad:
        return loss, None
    dz = _softmax_rows(z)
    dz[rows, labels] -= 1.0
    dz /= n
    d_cos = dz * cfg.gamma
    d_cos[rows, labels] = dz[rows, labels] * cfg.gamma * dpsi
    return loss, d_cos


def _proxy_nca(cos: np.ndarray, labels: np.ndarray, need_grad: bool):
    """-log( exp(-||x-p+||^2) / sum_{q in P-} exp(-||x-q||^2) ) on unit rows.

    With unit vectors ||x-q||^2 = 2 - 2 cos, so the per-sample loss is
    (2 - 2 cos+) + logsumexp over negatives of (2 cos- - 2). The
    denominator excludes the positive, so the value can go negative;
    this is the canonical form, not a -log probability.
    """
    n, c = cos.shape
    if c < 2:
        raise DegenerateInputError("proxy_nca needs at least 2 classes")
    rows = np.arange(n)
    neg_logits = 2.0 * cos - 2.0
    neg_mask = np.ones_like(cos, dtype=bool)
    neg_mask[rows, labels] = False
    masked = np.where(neg_mask, neg_logits, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    sum_e = e.sum(axis=1)
    lse = m[:, 0] + np.log(sum_e)
    per_sample = (2.0 - 2.0 * cos[rows, labels]) + lse
    loss = float(np.mean(per_sample))
    if not need_grad:
        return loss, None
    d_cos = np.zeros_like(cos)
    d_cos[neg_mask] = (2.0 * e / sum_e[:, None])[neg_mask]
    d_cos[rows, labels] = -2.0
    d_cos /= n
    return loss, d_cos


def _proxy_anchor(cos: np.ndarray, labels: np.ndarray, cfg: LossConfig,
                  need_grad: bool):
    """Published two-term proxy-anchor loss over the cosine matrix.

    pos term: mean over proxies with positives of log1p(sum_pos e^{-a(s-d)})
    neg term: mean over all proxies of log1p(sum_neg e^{+a(s+d)})
    """
    n, c = cos.shape
    a, delta = cfg.pa_alpha, cfg.pa_delta
    pos_mask = np.zeros_like(cos, dtype=bool)
    pos_mask[np.arange(n), labels] = True
    neg_mask = ~pos_mask
    with_pos = np.unique(labels)
    if with_pos.size == 0:
        raise DegenerateInputError(
            "proxy_anchor needs at least one proxy with a positive sample")

    pos_exp = np.where(pos_mask, np.exp(-a * (cos - delta)), 0.0)
    neg_exp = np.where(neg_mask, np.exp(a * (cos + delta)), 0.0)
    pos_sums = pos_exp.sum(axis=0)   # per proxy
    neg_sums = neg_exp.sum(axis=0)
    pos_term = float(np.mean(np.log1p(pos_sums[with_pos])))
    neg_term = float(np.mean(np.log1p(neg_sums)))
    loss = pos_term + neg_term
    if not need_grad:
        return loss, None
    d_cos = np.zeros_like(cos)
    d_cos[:, with_pos] = \
        (-a * pos_exp[:, with_pos] / (1.0 + pos_sums[with_pos])) / with_pos.size
    d_cos += (a * neg_exp / (1.0 + neg_sums)) / c
    return loss, d_cos


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def _compute(batch: EmbeddingBatch, bank: ProxyBank, cfg: LossConfig,
             need_grad: bool):
    _check_inputs(batch, bank, cfg)
    x, p, labels = batch.embeddings, bank.proxies, batch.labels
    n = batch.n

    if cfg.kind == "softmax":
        z = x @ p.T
        loss = float(np.mean(_cross_entropy_rows(z, labels)))
        if not need_grad:
            return loss, None, None
        dz = _softmax_rows(z)
        dz[np.arange(n), labels] -= 1.0
        dz /= n
        return loss, dz @ p, dz.T @ x

    x_norms = np.linalg.norm(x, axis=1, keepdims=True)
    p_norms = np.linalg.norm(p, axis=1, keepdims=True)
    xn = x / x_norms
    pn = p / p_norms
    cos = np.clip(xn @ pn.T, -1.0, 1.0)

    if cfg.kind in ("norm_softmax", "cosface", "arcface", "sphereface"):
        loss, d_cos = _margin_family(cos, labels, cfg, need_grad)
    elif cfg.kind == "proxy_nca":
        loss, d_cos = _proxy_nca(cos, labels, need_grad)
    else:
        loss, d_cos = _proxy_anchor(cos, labels, cfg, need_grad)

    if not need_grad:
        return loss, None, None
    d_xn = d_cos @ pn
    d_pn = d_cos.T @ xn
    return loss, _norm_chain(x, xn, d_xn), _norm_chain(p, pn, d_pn)


def loss_forward_backward(batch: EmbeddingBatch, bank: ProxyBank,
                          cfg: LossConfig) -> LossGrad:
    """Loss plus exact gradients over raw embeddings and proxies.

    Args:
        batch: embeddings and labels; labels must index bank rows.
        bank: class proxies (raw; normalization happens inside the
            kinds that need it).
        cfg: loss kind and its knobs.

    Returns:
        LossGrad with d_embeddings (N x d) and d_proxies (C x d).
    """
    loss, dx, dp = _compute(batch, bank, cfg, need_grad=True)
    return LossGrad(loss=loss, d_embeddings=dx, d_proxies=dp)


def loss_value(batch: EmbeddingBatch, bank: ProxyBank, cfg: LossConfig) -> float:
    """Forward-only loss value (the cheap path for numeric oracles)."""
    loss, _, _ = _compute(batch, bank, cfg, need_grad=False)
    return loss


# ---------------------------------------------------------------------------
# Closed-form similarity-space gradients (oracles for the backward pass)
# ---------------------------------------------------------------------------

def softmax_grad_over_similarity(batch: EmbeddingBatch, bank: ProxyBank,
                                 anchor: int) -> float:
    """d L_anchor / d S(x, p+) for the plain softmax loss, in closed form.

    S(x, p) = x . p are the raw logits; the value is
    exp(S+)/sum_q exp(S_q) - 1 for the anchor's own row, i.e. the
    probability of the true class minus one.
    """
    _check_inputs(batch, bank, LossConfig(kind="softmax"))
    if not (0 <= anchor < batch.n):
        raise InvalidParameterError(f"anchor {anchor} outside batch of {batch.n}")
    s = batch.embeddings[anchor] @ bank.proxies.T
    shifted = np.exp(s - s.max())
    return float(shifted[batch.labels[anchor]] / shifted.sum() - 1.0)


def ps_grad_over_similarity(batch: EmbeddingBatch, bank: ProxyBank,
                            anchor: int, other_class: int,
                            lam: float) -> tuple[float, float]:
    """Closed-form (dL/dS(x,p_i), dL/dS(x,p_j)) with a synthetic class.

    The synthetic proxy lam * p_i + (1 - lam) * p_j joins the softmax
    denominator of the anchor's loss; because raw logits are linear in
    the proxy, S(x, p~) = lam S_i + (1 - lam) S_j and both similarity
    gradients pick up the synthetic term:

        dL/dS_i = (lam E~ + E_i) / (E~ + sum_q E_q) - 1
        dL/dS_j = ((1 - lam) E~ + E_j) / (E~ + sum_q E_q)
    """
    _check_inputs(batch, bank, LossConfig(kind="softmax"))
    if not (0 <= anchor < batch.n):
        raise InvalidParameterError(f"anchor {anchor} outside batch of {batch.n}")
    if not (0 <= other_class < bank.num_classes):
        raise InvalidParameterError(
            f"other_class {other_class} outside [0, {bank.num_classes})")
    if not (0.0 <= lam <= 1.0):
        raise InvalidParameterError(f"lambda must lie in [0, 1], got {lam!r}")
    pos_class = int(batch.labels[anchor])
    if other_class == pos_class:
        raise InvalidPairError(
            f"synthetic pair needs two distinct classes, got {pos_class} twice")
    s = batch.embeddings[anchor] @ bank.proxies.T
    s_syn = lam * s[pos_class] + (1.0 - lam) * s[other_class]
    shift = max(float(s.max()), float(s_syn))
    e = np.exp(s - shift)
    e_syn = math.exp(s_syn - shift)
    denom = e_syn + e.sum()
    g_pos = (lam * e_syn + e[pos_class]) / denom - 1.0
    g_other = ((1.0 - lam) * e_syn + e[other_class]) / denom
    return float(g_pos), float(g_other)
