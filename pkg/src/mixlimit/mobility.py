"""Onsager mobility matrices and diffusion fluxes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transform import Basis

VARIANTS = ("uniform", "maxwell-stefan", "sum")


@dataclass(frozen=True)
class MobilityKind:
    """``uniform``: lambda0 (I - 11^T/N); ``maxwell-stefan``: d P^T diag(rho) P; ``sum``: both."""

    variant: str = "uniform"
    lambda0: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown mobility variant {self.variant!r}")
        if self.lambda0 < 0 or self.d < 0:
            raise ValueError("mobility coefficients must be nonnegative")

    @property
    def lam(self) -> float:
        return self.lambda0 if self.variant in ("uniform", "sum") else 0.0

    @property
    def dms(self) -> float:
        return self.d if self.variant in ("maxwell-stefan", "sum") else 0.0


def mobility(kind: MobilityKind, rho):
    """M(rho), shape (..., N, N): symmetric with zero row sums."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho.sum(axis=-1) <= 0):
        raise ValueError("mobility needs nonnegative, non-vanishing densities")
    N = rho.shape[-1]
    M = np.zeros(rho.shape + (N,))
    if kind.lam:
        M = M + kind.lam * (np.eye(N) - 1.0 / N)
    if kind.dms:
        y = rho / rho.sum(axis=-1, keepdims=True)
        M = M + kind.dms * (rho[..., :, None] * (np.eye(N) - y[..., None, :]))
    return M


def onsager_reduced(basis: Basis, kind: MobilityKind, rho):
    """Pi^T M(rho) Pi."""
    Pi = basis.Pi
    return Pi.T @ mobility(kind, rho) @ Pi


def c_eta(basis: Basis) -> float:
    """sum_{k<N} |eta^k|_2^2, so that Pi^T M Pi >= (lambda0/c_eta) I under (B3')."""
    return float(np.sum(basis.eta[:-1] ** 2))


def flux_from_gradq(basis: Basis, kind: MobilityKind, rho, gradq, temperature=1.0):
    """J = -M(rho) Pi grad q / T.

    ``gradq`` has shape (..., N-1) or (..., N-1, dim); J has the matching
    (..., N) or (..., N, dim) shape.
    """
    gradq = np.asarray(gradq, dtype=float)
    M = mobility(kind, rho)
    if gradq.ndim == np.ndim(rho):
        return -np.einsum("...ij,jk,...k->...i", M, basis.Pi, gradq) / temperature
    return -np.einsum("...ij,jk,...kd->...id", M, basis.Pi, gradq) / temperature
