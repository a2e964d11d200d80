"""Seeded randomness, small vector/matrix primitives, and the
finite-difference gradient oracle used by the test suites.

All arithmetic is 64-bit. Every stochastic routine takes an explicit
``numpy.random.Generator``; there is no global randomness anywhere in
the package.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidParameterError

# Default central-difference step. Balances truncation against rounding
# for 64-bit arithmetic.
DEFAULT_FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Create the package-wide PRNG: PCG64 seeded through SeedSequence.

    Identical seeds produce bit-identical sample streams on every
    platform numpy supports.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    """Derive independent named streams from one root seed.

    Splitting rule: ``SeedSequence(seed).spawn(len(names))``, children
    assigned to ``names`` in order. Adding a stream at the end never
    perturbs existing ones.
    """
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(names, children)}


def beta_sample(alpha: float, rng: np.random.Generator) -> float:
    """Draw once from Beta(alpha, alpha).

    Uses Johnk's rejection method (in log space, so tiny alpha cannot
    underflow) when alpha < 1 -- the regime the synthesis defaults live
    in -- and the two-gamma ratio otherwise.
    """
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha)) or alpha <= 0:
        raise InvalidParameterError(f"alpha must be a finite positive real, got {alpha!r}")
    alpha = float(alpha)
    if alpha < 1.0:
        # Johnk: accept (u^(1/a), v^(1/a)) when the pair sums to <= 1.
        while True:
            u = rng.random()
            v = rng.random()
            if u == 0.0 or v == 0.0:
                continue
            log_x = math.log(u) / alpha
            log_y = math.log(v) / alpha
            log_sum = np.logaddexp(log_x, log_y)
            if log_sum <= 0.0:
                return float(math.exp(log_x - log_sum))
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    return float(g1 / (g1 + g2))


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------

def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DegenerateInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError(f"{name} contains non-finite entries")
    return arr


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array and reject non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DegenerateInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError(f"{name} contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# Vector primitives
# ---------------------------------------------------------------------------

def l2_normalize(v) -> np.ndarray:
    """Return v / ||v||. Zero or non-finite input is a degenerate-input error."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / norm


def l2_normalize_rows(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Row-wise l2 normalization; any zero row is a degenerate-input error."""
    m = as_matrix(m, name)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise DegenerateInputError(f"{name} row {bad} has zero norm")
    return m / norms[:, None]


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clamped into [-1, 1]."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    Args:
        f: scalar function; must be finite near x.
        x: evaluation point (any shape; perturbed entry by entry).
        h: step size, > 0.

    Returns:
        Array of f's partial derivatives, same shape as x.
    """
    if not (h > 0 and math.isfinite(h)):
        raise InvalidParameterError(f"step h must be a positive real, got {h!r}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for idx in range(flat_x.size):
        orig = flat_x[idx]
        flat_x[idx] = orig + h
        f_plus = float(f(x))
        flat_x[idx] = orig - h
        f_minus = float(f(x))
        flat_x[idx] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise FloatingPointError(
                f"finite_diff_grad: f returned non-finite value at entry {idx}")
        flat_g[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max relative disagreement between two gradients.

    Per-entry |a - n| / max(1, |a|, |n|), so near-zero entries are
    compared absolutely instead of blowing up the ratio.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise DegenerateInputError(
            f"gradient shapes differ: {analytic.shape} vs {numeric.shape}")
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
