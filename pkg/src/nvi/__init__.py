"""Neural variational inference for text: a document model and an answer-selection model.

Everything runs on a small reverse-mode autodiff layer over numpy.
"""
from . import autodiff, distributions, errors, optimizer, rng
from .distributions import DiagGaussian, kl_gaussians, kl_standard, log_density, reparameterized_sample
from .nvdm import NVDM, BowDocument

__all__ = [
    "autodiff", "distributions", "errors", "optimizer", "rng",
    "DiagGaussian", "kl_gaussians", "kl_standard", "log_density", "reparameterized_sample",
    "NVDM", "BowDocument",
]
