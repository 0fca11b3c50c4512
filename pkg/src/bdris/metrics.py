"""Rate and determinant metrics plus the closed-form bounds used to audit designs.

All rates are in bits (log base 2) and are evaluated from singular values,
never from an explicit determinant of I + rho H H^H, so nothing overflows at
high SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class MetricsRecord:
    """All per-design figures of merit for one channel realization and SNR."""

    rate_bits: float
    abs_det: float
    sigma_h: np.ndarray
    d_max: float
    rate_gap_bound_bits: float
    error_term_bits: float

    def __post_init__(self):
        if self.rate_bits < 0 or self.abs_det < 0:
            raise ValueError("rate and |det| must be nonnegative")
        if np.any(np.diff(self.sigma_h) > 0):
            raise ValueError("sigma_h must be sorted descending")


def _theta_array(theta) -> np.ndarray:
    return np.asarray(getattr(theta, "theta", theta))


def _svdvals(h) -> np.ndarray:
    return np.linalg.svd(np.asarray(h), compute_uv=False)


def equivalent_channel(channels, theta, phase: float = 0.0) -> np.ndarray:
    """H = H_d + e^{j phase} F Theta G^H (the H_d term is absent when blocked)."""
    t = _theta_array(theta)
    m = channels.m
    if t.shape != (m, m):
        raise ValueError(f"theta must be {m}x{m}, got {t.shape}")
    h = np.exp(1j * phase) * (channels.f @ t @ channels.g.conj().T)
    if channels.h_direct is not None:
        h = channels.h_direct + h
    return h


def achievable_rate(h, rho: float) -> float:
    """log2 det(I + rho H H^H) via the Gram of the smaller dimension:
    sum_i log2(1 + rho sigma_i^2)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    s = _svdvals(h)
    return float(np.sum(np.log2(1.0 + rho * s**2)))


def abs_det(h) -> float:
    """|det| of the equivalent channel: the product of all min(N_r, N_t)
    singular values, i.e. sqrt(det(H H^H)) for wide H and |det(H)| for square H."""
    return float(np.prod(_svdvals(h)))


def _full_rank_svdvals(h):
    s = _svdvals(h)
    cutoff = max(np.asarray(h).shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size == 0 or s[-1] <= cutoff:
        raise ValueError("channel is rank-deficient; log det(H H^H) is -inf")
    return s


def rate_decomposition(h, rho: float) -> tuple[float, float, float]:
    """Split the rate into (r log2 rho, log2 det(H H^H), residual error term).

    The three terms sum to ``achievable_rate(h, rho)``; requires a full-rank
    channel.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    s = _full_rank_svdvals(h)
    r = s.size
    r_log_rho = r * float(np.log2(rho))
    log_det_gram = float(2.0 * np.sum(np.log2(s)))
    error_term = float(np.sum(np.log2(1.0 + 1.0 / (rho * s**2))))
    return r_log_rho, log_det_gram, error_term


def error_term_bound(h, rho: float) -> float:
    """Upper bound r / (rho sigma_min^2 ln 2) on the residual term of the
    rate decomposition."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    s = _full_rank_svdvals(h)
    return float(s.size / (rho * s[-1] ** 2 * LN2))


def rate_gap_bound(sigma_f, sigma_g, rho: float) -> float:
    """Closed-form bound (in bits) on the rate gap between the eigenmode-matched
    unitary design and the symmetric Max-Det design:

        r * log2[(1 + rho sf_r^2 sg_r^2) sf_1^2 sg_1^2
                 / ((1 + rho sf_1^2 sg_1^2) sf_r^2 sg_r^2)]
    """
    sf = np.sort(np.asarray(sigma_f, float))[::-1]
    sg = np.sort(np.asarray(sigma_g, float))[::-1]
    if sf.size != sg.size or sf.size == 0:
        raise ValueError("sigma_f and sigma_g must have the same nonzero length")
    if sf[-1] <= 0 or sg[-1] <= 0:
        raise ValueError("singular values must be strictly positive")
    if rho <= 0:
        raise ValueError("rho must be positive")
    r = sf.size
    top = sf[0] ** 2 * sg[0] ** 2
    bot = sf[-1] ** 2 * sg[-1] ** 2
    return float(r * np.log2((1.0 + rho * bot) * top / ((1.0 + rho * top) * bot)))


def d_max(channels) -> float:
    """Ceiling on |det| of the equivalent channel: the product of the r
    largest singular values of F times those of G, r = min(N_t, N_r)."""
    r = min(channels.n_t, channels.n_r)
    sf = _svdvals(channels.f)[:r]
    sg = _svdvals(channels.g)[:r]
    return float(np.prod(sf) * np.prod(sg))


def evaluate_design(channels, theta, rho: float, phase: float = 0.0) -> MetricsRecord:
    """Assemble the full metrics record for one design.

    The error term is +inf for rank-deficient equivalent channels, where the
    rate decomposition does not exist.
    """
    h = equivalent_channel(channels, theta, phase)
    s = _svdvals(h)
    if rho <= 0:
        raise ValueError("rho must be positive")
    r = min(channels.n_t, channels.n_r)
    sf = _svdvals(channels.f)[:r]
    sg = _svdvals(channels.g)[:r]
    cutoff = max(h.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size and s[-1] > cutoff:
        error_term = float(np.sum(np.log2(1.0 + 1.0 / (rho * s**2))))
    else:
        error_term = float("inf")
    return MetricsRecord(
        rate_bits=float(np.sum(np.log2(1.0 + rho * s**2))),
        abs_det=float(np.prod(s)),
        sigma_h=s,
        d_max=float(np.prod(sf) * np.prod(sg)),
        rate_gap_bound_bits=rate_gap_bound(sf, sg, rho),
        error_term_bits=error_term,
    )
