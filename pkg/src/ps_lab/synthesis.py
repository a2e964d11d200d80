"""Synthetic-class generation and augmented-set assembly.

A synthetic pair is the linear interpolation of two cross-class
(embedding, proxy) pairs with one coefficient:

    x~ = lam * x_i + (1 - lam) * x_j
    p~ = lam * p_{y_i} + (1 - lam) * p_{y_j}

Interpolation always acts on raw vectors; normalization, when a loss
needs it, happens inside the loss. Synthetic classes get fresh ids, one
per generated pair, and the backmap records how gradients on augmented
rows flow back to their sources (the exact adjoint of the interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    InconsistentModeError,
    InvalidPairError,
    InvalidParameterError,
    NoValidPairError,
)
from .losses import EmbeddingBatch, LossGrad, ProxyBank
from .numeric import beta_sample


@dataclass
class SyntheticSet:
    """Interpolated embeddings/proxies plus their provenance."""

    syn_embeddings: np.ndarray  # M x d
    syn_proxies: np.ndarray     # M x d
    lambdas: np.ndarray         # M coefficients in [0, 1]
    source_pairs: np.ndarray    # M x 2 batch row indices (i, j)
    source_classes: np.ndarray  # M x 2 class ids (y_i, y_j)

    @property
    def count(self) -> int:
        return self.syn_embeddings.shape[0]


@dataclass(frozen=True)
class AugmentMode:
    """Which of the four row groups participate in the loss."""

    use_original_embeddings: bool = True
    use_synthetic_embeddings: bool = True
    use_original_proxies: bool = True
    use_synthetic_proxies: bool = True

    NAMES = ("m1", "m2", "m3", "m4", "full")

    @classmethod
    def from_name(cls, name: str) -> "AugmentMode":
        table = {
            "m1": cls(True, False, True, False),
            "m2": cls(False, True, False, True),
            "m3": cls(True, False, True, True),
            "m4": cls(False, True, True, True),
            "full": cls(True, True, True, True),
        }
        key = name.lower()
        if key not in table:
            raise InvalidParameterError(
                f"unknown augment mode {name!r}; expected one of {cls.NAMES}")
        return table[key]

    def validate(self):
        if not (self.use_original_embeddings or self.use_synthetic_embeddings):
            raise InconsistentModeError("mode uses no embeddings at all")
        if not (self.use_original_proxies or self.use_synthetic_proxies):
            raise InconsistentModeError("mode uses no proxies at all")
        if self.use_original_embeddings and not self.use_original_proxies:
            raise InconsistentModeError(
                "original embeddings need their original positive proxies")
        if self.use_synthetic_embeddings and not self.use_synthetic_proxies:
            raise InconsistentModeError(
                "synthetic embeddings need their synthetic positive proxies")

    @property
    def needs_synthetics(self) -> bool:
        return self.use_synthetic_embeddings or self.use_synthetic_proxies


@dataclass
class Backmap:
    """Routing table from augmented rows back to source rows."""

    n: int
    c: int
    dim: int
    orig_embeddings: bool
    orig_proxies: bool
    syn_embeddings: bool
    syn_proxies: bool
    pairs: np.ndarray          # M x 2 embedding sources
    proxy_classes: np.ndarray  # M x 2 proxy sources
    lambdas: np.ndarray


@dataclass
class AugmentedBatch:
    """Concatenated originals + synthetics with fresh synthetic labels."""

    embeddings: np.ndarray
    labels: np.ndarray
    proxies: np.ndarray
    backmap: Backmap

    def as_batch(self) -> EmbeddingBatch:
        return EmbeddingBatch(self.embeddings, self.labels)

    def as_bank(self) -> ProxyBank:
        return ProxyBank(self.proxies)


def sample_pairs(labels, mu: float, rng: np.random.Generator,
                 alpha: float = 0.4, static_lambda: float | None = None):
    """Draw floor(mu * N) cross-class (i, j, lambda) triples.

    Pairs are uniform over all ordered index pairs with differing
    labels, drawn with replacement. Each lambda comes from
    Beta(alpha, alpha) unless static_lambda pins it.

    Raises NoValidPairError when generations are requested but the
    batch holds a single class.
    """
    labels = np.asarray(labels)
    if not (mu >= 0 and math.isfinite(mu)):
        raise InvalidParameterError(f"mu must be a finite ratio >= 0, got {mu!r}")
    if static_lambda is not None and not (0.0 <= static_lambda <= 1.0):
        raise InvalidParameterError(
            f"static lambda must lie in [0, 1], got {static_lambda!r}")
    n = labels.shape[0]
    m = int(math.floor(mu * n))
    if m == 0:
        return []
    ii, jj = np.nonzero(labels[:, None] != labels[None, :])
    if ii.size == 0:
        raise NoValidPairError(
            f"{m} synthetic pairs requested but the batch has a single class")
    triples = []
    for _ in range(m):
        k = int(rng.integers(0, ii.size))
        lam = static_lambda if static_lambda is not None else beta_sample(alpha, rng)
        triples.append((int(ii[k]), int(jj[k]), float(lam)))
    return triples


def synthesize(batch: EmbeddingBatch, bank: ProxyBank, pairs) -> SyntheticSet:
    """Interpolate the given (i, j, lambda) triples into a SyntheticSet."""
    m = len(pairs)
    d = batch.dim
    syn_x = np.empty((m, d))
    syn_p = np.empty((m, d))
    lambdas = np.empty(m)
    source_pairs = np.empty((m, 2), dtype=np.int64)
    source_classes = np.empty((m, 2), dtype=np.int64)
    for k, (i, j, lam) in enumerate(pairs):
        if not (0 <= i < batch.n and 0 <= j < batch.n):
            raise InvalidPairError(f"pair ({i}, {j}) outside batch of {batch.n}")
        yi, yj = int(batch.labels[i]), int(batch.labels[j])
        if yi == yj:
            raise InvalidPairError(
                f"pair ({i}, {j}) shares class {yi}; sources must differ")
        if not (0.0 <= lam <= 1.0):
            raise InvalidParameterError(f"lambda must lie in [0, 1], got {lam!r}")
        syn_x[k] = lam * batch.embeddings[i] + (1.0 - lam) * batch.embeddings[j]
        syn_p[k] = lam * bank.proxies[yi] + (1.0 - lam) * bank.proxies[yj]
        lambdas[k] = lam
        source_pairs[k] = (i, j)
        source_classes[k] = (yi, yj)
    return SyntheticSet(syn_x, syn_p, lambdas, source_pairs, source_classes)


def assemble(batch: EmbeddingBatch, bank: ProxyBank, syn: SyntheticSet,
             mode: AugmentMode) -> AugmentedBatch:
    """Concatenate the mode's row groups into one labeled batch.

    Synthetic class k gets label base + k where base is the number of
    original proxy rows kept (C with originals, 0 without), so labels
    always index the assembled proxy matrix and never collide with
    original ids.
    """
    mode.validate()
    m = syn.count
    if not mode.use_original_embeddings and m == 0:
        raise InconsistentModeError(
            "mode drops original embeddings but no synthetics were generated")

    base = bank.num_classes if mode.use_original_proxies else 0
    emb_parts, label_parts, proxy_parts = [], [], []
    if mode.use_original_embeddings:
        emb_parts.append(batch.embeddings)
        label_parts.append(batch.labels)
    if mode.use_synthetic_embeddings:
        emb_parts.append(syn.syn_embeddings)
        label_parts.append(base + np.arange(m, dtype=np.int64))
    if mode.use_original_proxies:
        proxy_parts.append(bank.proxies)
    if mode.use_synthetic_proxies:
        proxy_parts.append(syn.syn_proxies)

    backmap = Backmap(
        n=batch.n, c=bank.num_classes, dim=batch.dim,
        orig_embeddings=mode.use_original_embeddings,
        orig_proxies=mode.use_original_proxies,
        syn_embeddings=mode.use_synthetic_embeddings,
        syn_proxies=mode.use_synthetic_proxies,
        pairs=syn.source_pairs, proxy_classes=syn.source_classes,
        lambdas=syn.lambdas)
    return AugmentedBatch(
        embeddings=np.vstack(emb_parts),
        labels=np.concatenate(label_parts),
        proxies=np.vstack(proxy_parts),
        backmap=backmap)


def scatter_gradients(aug_grads: LossGrad, backmap: Backmap) -> LossGrad:
    """Route augmented-row gradients back to the original rows.

    The adjoint of the interpolation: a synthetic row built as
    lam * a + (1 - lam) * b sends lam times its gradient to a and
    (1 - lam) times to b; direct rows pass through unchanged.
    """
    m = backmap.lambdas.shape[0]
    exp_emb_rows = (backmap.n if backmap.orig_embeddings else 0) + \
        (m if backmap.syn_embeddings else 0)
    exp_proxy_rows = (backmap.c if backmap.orig_proxies else 0) + \
        (m if backmap.syn_proxies else 0)
    if aug_grads.d_embeddings.shape != (exp_emb_rows, backmap.dim):
        raise ContractError(
            f"embedding gradient shape {aug_grads.d_embeddings.shape} does not "
            f"match backmap expectation ({exp_emb_rows}, {backmap.dim})")
    if aug_grads.d_proxies.shape != (exp_proxy_rows, backmap.dim):
        raise ContractError(
            f"proxy gradient shape {aug_grads.d_proxies.shape} does not "
            f"match backmap expectation ({exp_proxy_rows}, {backmap.dim})")

    d_emb = np.zeros((backmap.n, backmap.dim))
    d_prox = np.zeros((backmap.c, backmap.dim))
    offset = 0
    if backmap.orig_embeddings:
        d_emb += aug_grads.d_embeddings[:backmap.n]
        offset = backmap.n
    if backmap.syn_embeddings and m > 0:
        syn_grad = aug_grads.d_embeddings[offset:offset + m]
        lam = backmap.lambdas[:, None]
        np.add.at(d_emb, backmap.pairs[:, 0], lam * syn_grad)
        np.add.at(d_emb, backmap.pairs[:, 1], (1.0 - lam) * syn_grad)

    offset = 0
    if backmap.orig_proxies:
        d_prox += aug_grads.d_proxies[:backmap.c]
        offset = backmap.c
    if backmap.syn_proxies and m > 0:
        syn_grad = aug_grads.d_proxies[offset:offset + m]
        lam = backmap.lambdas[:, None]
        np.add.at(d_prox, backmap.proxy_classes[:, 0], lam * syn_grad)
        np.add.at(d_prox, backmap.proxy_classes[:, 1], (1.0 - lam) * syn_grad)

    return LossGrad(loss=aug_grads.loss, d_embeddings=d_emb, d_proxies=d_prox)


def augment(batch: EmbeddingBatch, bank: ProxyBank, mu: float,
            rng: np.random.Generator, alpha: float = 0.4,
            static_lambda: float | None = None,
            mode: AugmentMode | None = None) -> AugmentedBatch:
    """sample_pairs + synthesize + assemble in one step.

    Modes that use no synthetic rows skip pair sampling entirely, so
    they consume no randomness and reproduce the unaugmented loss path
    bit-exactly.
    """
    if mode is None:
        mode = AugmentMode()
    mode.validate()
    if mode.needs_synthetics:
        pairs = sample_pairs(batch.labels, mu, rng, alpha=alpha,
                             static_lambda=static_lambda)
    else:
        pairs = []
    syn = synthesize(batch, bank, pairs)
    return assemble(batch, bank, syn, mode)
