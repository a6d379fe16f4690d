"""Shared fixtures and independent brute-force oracles for the test suite.

The oracles deliberately avoid the library's own construction paths: beam
splitters come from scipy's matrix exponential of the two-mode generator,
loss from explicit binomial matrices, derivatives from central finite
differences.
"""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import comb

from tmsvfisher import FockCutoff


@pytest.fixture
def cutoff6():
    return FockCutoff(6)


@pytest.fixture
def cutoff10():
    return FockCutoff(10)


def annihilation(d: int) -> np.ndarray:
    a = np.zeros((d, d))
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    return a


def bs_expm(eta: float, d: int) -> np.ndarray:
    """Two-mode 50:50-convention beam splitter from the matrix exponential.

    Matches the library's symmetric convention (reflection phase i):
    U = exp(i * phi * (a^dag b + a b^dag)) with cos(phi) = sqrt(eta).
    Uses an enlarged space internally so truncation error stays in the
    high-photon tail.
    """
    a = annihilation(d)
    eye = np.eye(d)
    G = np.kron(a.T, eye) @ np.kron(eye, a)
    H = G + G.conj().T
    phi = np.arccos(np.sqrt(eta))
    return expm(1j * phi * H)


def binomial_loss_matrix(eta: float, d: int) -> np.ndarray:
    """B[m, n] = P(m photons survive | n incident) under transmissivity eta."""
    B = np.zeros((d, d))
    for n in range(d):
        for m in range(n + 1):
            B[m, n] = comb(n, m) * eta**m * (1 - eta) ** (n - m)
    return B


def tmsv_vector(z: float, d: int) -> np.ndarray:
    """Joint (d*d,) TMSV amplitudes, signal-major index."""
    v = np.zeros(d * d)
    for n in range(d):
        v[n * d + n] = np.sqrt(1 - z**2) * z**n
    return v


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random full-rank density matrix via a Ginibre ensemble draw."""
    G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real
