"""Diagonal Gaussian latents: reparameterised samples, densities and KLs.

All functions accept either a single distribution (vectors of length K) or
a batch (matrices of shape (B, K)); reductions run over the last axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError

LOG_2PI = math.log(2 * math.pi)
LOG_SIGMA_RANGE = (-10.0, 10.0)


@dataclass
class DiagGaussian:
    """N(mu, diag(exp(log_sigma)^2)); the log standard deviation is what is stored."""

    mu: Tensor
    log_sigma: Tensor

    def __post_init__(self):
        if not isinstance(self.mu, Tensor):
            self.mu = Tensor(self.mu)
        if not isinstance(self.log_sigma, Tensor):
            self.log_sigma = Tensor(self.log_sigma, dtype=self.mu.dtype)
        if self.mu.shape != self.log_sigma.shape:
            raise DimensionError(f"mu {self.mu.shape} and log_sigma {self.log_sigma.shape} differ")
        if not self.mu.shape or self.mu.shape[-1] < 1:
            raise DimensionError("a Gaussian needs at least one dimension")

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    @classmethod
    def standard(cls, k: int, dtype=np.float64) -> "DiagGaussian":
        return cls(Tensor(np.zeros(k, dtype=dtype)), Tensor(np.zeros(k, dtype=dtype)))

    def clamped(self, lo: float = LOG_SIGMA_RANGE[0], hi: float = LOG_SIGMA_RANGE[1]) -> "DiagGaussian":
        return DiagGaussian(self.mu, ad.clamp(self.log_sigma, lo, hi))


@dataclass
class LatentSample:
    h: Tensor
    epsilon: np.ndarray


def reparameterized_sample(dist: DiagGaussian, epsilon) -> LatentSample:
    """h = mu + sigma * epsilon, differentiable in mu and log_sigma."""
    eps = np.asarray(epsilon.values if isinstance(epsilon, Tensor) else epsilon, dtype=dist.mu.dtype)
    if eps.shape != dist.mu.shape:
        raise DimensionError(f"epsilon shape {eps.shape} does not match distribution {dist.mu.shape}")
    h = dist.mu + ad.mul(ad.exp(dist.log_sigma), Tensor._wrap(eps))
    return LatentSample(h, eps)


def kl_standard(q: DiagGaussian) -> Tensor:
    """KL[q || N(0, I)] = 0.5 * sum(sigma^2 + mu^2 - 1 - 2 log sigma).

    Written as (expm1(2 log sigma) - 2 log sigma) + mu^2, every term of which
    stays non-negative under rounding.
    """
    two_ls = q.log_sigma * 2.0
    terms = (ad.expm1(two_ls) - two_ls) + ad.square(q.mu)
    return ad.sum(terms, axis=-1) * 0.5


def kl_gaussians(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """KL[q || p] for two diagonal Gaussians of the same dimension.

    Same operation order as :func:`kl_standard`, so a standard ``p``
    reproduces it exactly, and ``q == p`` gives exactly zero.
    """
    if q.mu.shape != p.mu.shape:
        raise DimensionError(f"KL between shapes {q.mu.shape} and {p.mu.shape}")
    two_d = (q.log_sigma - p.log_sigma) * 2.0
    mean_term = ad.mul(ad.square(q.mu - p.mu), ad.exp(p.log_sigma * -2.0))
    terms = (ad.expm1(two_d) - two_d) + mean_term
    return ad.sum(terms, axis=-1) * 0.5


def log_density(dist: DiagGaussian, h) -> Tensor:
    h = h if isinstance(h, Tensor) else Tensor(h, dtype=dist.mu.dtype)
    if h.shape != dist.mu.shape:
        raise DimensionError(f"point shape {h.shape} does not match distribution {dist.mu.shape}")
    z = ad.mul(h - dist.mu, ad.exp(-dist.log_sigma))
    terms = (ad.square(z) + dist.log_sigma * 2.0) + LOG_2PI
    return ad.sum(terms, axis=-1) * -0.5

