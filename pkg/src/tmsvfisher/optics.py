"""Physical model layer: TMSV source, beam splitters, phase shifters, loss,
and the full interferometer pipeline sigma1 -> sigma4.

Beam-splitter convention (pinned): symmetric with reflection phase i, i.e.
a_s^dag -> sqrt(eta) a_s^dag + i sqrt(1-eta) a_i^dag. Any fixed convention only
shifts the interferometer phase by a constant.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .fock import (
    FockCutoff,
    ModeOperator,
    TwoModeState,
    signal_photon_numbers,
)

_BALANCED = 0.5


@dataclass(frozen=True)
class SqueezingParams:
    """Squeezing parameter z in [0, 1); mean pair photon number 2z^2/(1-z^2)."""

    z: float

    def __post_init__(self):
        if not (0.0 <= self.z < 1.0):
            raise ConfigError(f"squeezing parameter must be in [0, 1), got {self.z}")

    @property
    def mean_photons(self) -> float:
        return 2.0 * self.z**2 / (1.0 - self.z**2)

    @classmethod
    def from_mean_photons(cls, n_bar: float) -> "SqueezingParams":
        """Invert n_bar = 2z^2/(1-z^2); closed form z = sqrt(n_bar/(n_bar+2))."""
        if n_bar < 0:
            raise ConfigError(f"mean photon number must be >= 0, got {n_bar}")
        return cls(math.sqrt(n_bar / (n_bar + 2.0)))


@dataclass(frozen=True)
class LossModel:
    """Per-arm transmissivities: preparation (before the MZI) and detection (after)."""

    eta_p_s: float = 1.0
    eta_p_i: float = 1.0
    eta_d_s: float = 1.0
    eta_d_i: float = 1.0

    def __post_init__(self):
        for name in ("eta_p_s", "eta_p_i", "eta_d_s", "eta_d_i"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")

    @classmethod
    def lossless(cls) -> "LossModel":
        return cls()

    @classmethod
    def symmetric(cls, eta: float, stage: str = "d") -> "LossModel":
        """Equal transmissivity eta on both arms, at the given stage ('p' or 'd')."""
        if stage == "d":
            return cls(eta_d_s=eta, eta_d_i=eta)
        if stage == "p":
            return cls(eta_p_s=eta, eta_p_i=eta)
        raise ConfigError(f"stage must be 'p' or 'd', got {stage!r}")

    @property
    def is_lossless(self) -> bool:
        return self.eta_p_s == self.eta_p_i == self.eta_d_s == self.eta_d_i == 1.0

    def scaled(self, transmission: float) -> "LossModel":
        """Insert an extra common-path sample of the given transmission in both arms."""
        return LossModel(
            self.eta_p_s,
            self.eta_p_i,
            self.eta_d_s * transmission,
            self.eta_d_i * transmission,
        )


@dataclass(frozen=True)
class InterferometerConfig:
    squeezing: SqueezingParams
    loss: LossModel
    phase: float
    cutoff: FockCutoff

    @property
    def phase_mod_2pi(self) -> float:
        return self.phase % (2.0 * math.pi)

    def with_phase(self, phase: float) -> "InterferometerConfig":
        return InterferometerConfig(self.squeezing, self.loss, phase, self.cutoff)


# ---------------------------------------------------------------------------
# State and operator constructors
# ---------------------------------------------------------------------------

def tmsv_state(z: SqueezingParams | float, cutoff: FockCutoff) -> TwoModeState:
    """Truncated TMSV: amplitude sqrt(1-z^2) z^n on |n, n>."""
    if not isinstance(z, SqueezingParams):
        z = SqueezingParams(z)
    d = cutoff.dim
    amps = np.zeros((d, d), dtype=complex)
    amps[np.arange(d), np.arange(d)] = math.sqrt(1.0 - z.z**2) * z.z ** np.arange(d)
    return TwoModeState.pure(amps, cutoff)


def tmsv_tail_bound(z: float, max_photons: int) -> float:
    """Closed-form truncation-tail probability (1-z^2) sum_{n>max} z^{2n} = z^{2(max+1)}."""
    return float(z ** (2 * (max_photons + 1)))


def _bs_block(eta: float, N: int) -> np.ndarray:
    """Exact (N+1)x(N+1) beam-splitter unitary on the total-photon-number-N block.

    Matrix elements from the binomial expansion of
    (t a^dag + i r b^dag)^m (i r a^dag + t b^dag)^(N-m) on vacuum,
    with t = sqrt(eta), r = sqrt(1-eta). Column m is the input |m, N-m>.
    """
    t = math.sqrt(eta)
    r = math.sqrt(1.0 - eta)
    U = np.zeros((N + 1, N + 1), dtype=complex)
    lf = [math.lgamma(k + 1) for k in range(N + 1)]
    for m in range(N + 1):
        n = N - m
        for mp in range(N + 1):
            npp = N - mp
            amp = 0.0 + 0.0j
            for p in range(max(0, mp - n), min(m, mp) + 1):
                q = mp - p
                amp += (
                    math.comb(m, p)
                    * math.comb(n, q)
                    * t ** (p + n - q)
                    * (1j * r) ** (m - p + q)
                )
            scale = math.exp(0.5 * (lf[mp] + lf[npp] - lf[m] - lf[n]))
            U[mp, m] = amp * scale
    return U


@lru_cache(maxsize=64)
def _bs_matrix(eta: float, max_photons: int) -> np.ndarray:
    """Joint-space beam splitter, block-diagonal in total photon number.

    Blocks with total N <= max_photons are exact unitaries. Higher blocks are
    incomplete under the per-mode truncation; the exact sub-block is replaced
    by its closest unitary (SVD polar factor) so the full operator is unitary
    and trace is preserved; the distortion is confined to the truncation tail.
    """
    d = max_photons + 1
    U = np.zeros((d * d, d * d), dtype=complex)
    for N in range(2 * max_photons + 1):
        ks = np.arange(max(0, N - max_photons), min(max_photons, N) + 1)
        idx = ks * d + (N - ks)
        block = _bs_block(eta, N)
        sub = block[np.ix_(ks, ks)]
        if len(ks) < N + 1:
            u, _, vh = np.linalg.svd(sub)
            sub = u @ vh
        U[np.ix_(idx, idx)] = sub
    return U


def beam_splitter_unitary(eta: float, cutoff: FockCutoff) -> ModeOperator:
    """Two-mode beam splitter of transmissivity eta on the joint space."""
    if not (0.0 <= eta <= 1.0):
        raise ConfigError(f"transmissivity must be in [0, 1], got {eta}")
    return ModeOperator(_bs_matrix(eta, cutoff.max_photons), "unitary", cutoff)


def phase_shifter(theta: float, mode: str, cutoff: FockCutoff) -> ModeOperator:
    """Diagonal phase unitary exp(i n theta) on the chosen mode, embedded jointly."""
    if not math.isfinite(theta):
        raise ConfigError(f"phase must be finite, got {theta}")
    d = cutoff.dim
    one = np.diag(np.exp(1j * theta * np.arange(d)))
    eye = np.eye(d, dtype=complex)
    mat = np.kron(one, eye) if mode == "s" else np.kron(eye, one)
    if mode not in ("s", "i"):
        raise ConfigError(f"mode must be 's' or 'i', got {mode!r}")
    return ModeOperator(mat, "unitary", cutoff)


# ---------------------------------------------------------------------------
# Loss channels
# ---------------------------------------------------------------------------

def loss_kraus_operators(eta: float, cutoff: FockCutoff) -> list[np.ndarray]:
    """One-mode pure-loss Kraus set; K_l removes l photons."""
    if not (0.0 <= eta <= 1.0):
        raise ConfigError(f"transmissivity must be in [0, 1], got {eta}")
    d = cutoff.dim
    ops = []
    for l in range(d):
        K = np.zeros((d, d), dtype=complex)
        for n in range(l, d):
            K[n - l, n] = math.sqrt(math.comb(n, l) * eta ** (n - l) * (1.0 - eta) ** l)
        ops.append(K)
    return ops


def _apply_mode_kraus(rho: np.ndarray, ops: list[np.ndarray], d: int, mode: str) -> np.ndarray:
    """Apply a one-mode Kraus channel to one mode of a joint density operator."""
    r = rho.reshape(d, d, d, d)  # (s, i, s', i')
    out = np.zeros_like(r)
    for K in ops:
        if mode == "s":
            t = np.einsum("xa,abcd->xbcd", K, r)
            out += np.einsum("xbcd,yc->xbyd", t, K.conj())
        else:
            t = np.einsum("xb,abcd->axcd", K, r)
            out += np.einsum("axcd,yd->axcy", t, K.conj())
    return out.reshape(d * d, d * d)


def loss_channel(
    state: TwoModeState, mode: str, eta: float, method: str = "kraus"
) -> TwoModeState:
    """Pure-loss channel of transmissivity eta on one mode.

    method='kraus' applies the closed-form Kraus set; method='ancilla' mixes
    with a vacuum ancilla on a beam splitter and traces it out. The two agree
    to machine precision and serve as mutual oracles.
    """
    if mode not in ("s", "i"):
        raise ConfigError(f"mode must be 's' or 'i', got {mode!r}")
    if not (0.0 <= eta <= 1.0):
        raise ConfigError(f"transmissivity must be in [0, 1], got {eta}")
    cutoff = state.cutoff
    rho = state.to_density_matrix()
    if method == "kraus":
        out = _apply_mode_kraus(rho, loss_kraus_operators(eta, cutoff), cutoff.dim, mode)
    elif method == "ancilla":
        out = _loss_via_ancilla(rho, cutoff, mode, eta)
    else:
        raise ConfigError(f"unknown loss method {method!r}")
    return TwoModeState.density(out, cutoff, validate=False)


def _loss_via_ancilla(rho: np.ndarray, cutoff: FockCutoff, mode: str, eta: float) -> np.ndarray:
    """Fictitious-beam-splitter loss: vacuum ancilla + BS(eta) + partial trace."""
    d = cutoff.dim
    # Three-mode ordering (a, s, i); the ancilla starts in vacuum, so every
    # engaged total-N block of the (a, mode) beam splitter is complete.
    vac = np.zeros((d, d), dtype=complex)
    vac[0, 0] = 1.0
    rho3 = np.kron(vac, rho)  # (a x s x i)
    U2 = _bs_matrix(eta, cutoff.max_photons)  # acts on (a, target)
    eye = np.eye(d, dtype=complex)
    if mode == "s":
        U3 = np.kron(U2, eye)  # (a, s) pair, i untouched
    else:
        # permute so the BS couples (a, i): build on (a, i) then swap back
        perm = _swap_middle_last(d)
        U3 = perm @ np.kron(U2, eye) @ perm.T
    rho3 = U3 @ rho3 @ U3.conj().T
    # trace out the ancilla (first factor)
    r = rho3.reshape(d, d * d, d, d * d)
    return np.einsum("axay->xy", r)


@lru_cache(maxsize=16)
def _swap_middle_last(d: int) -> np.ndarray:
    """Permutation on (a, s, i) exchanging the s and i factors."""
    P = np.zeros((d**3, d**3))
    for a in range(d):
        for s in range(d):
            for i in range(d):
                P[a * d * d + i * d + s, a * d * d + s * d + i] = 1.0
    return P


# ---------------------------------------------------------------------------
# Interferometer pipeline
# ---------------------------------------------------------------------------

def binomial_population_matrix(eta: float, d: int) -> np.ndarray:
    """B[m, k] = P(m photons survive of k) under transmissivity eta."""
    B = np.zeros((d, d))
    for k in range(d):
        for m in range(k + 1):
            B[m, k] = math.comb(k, m) * eta**m * (1.0 - eta) ** (k - m)
    return B


class InterferometerEngine:
    """Precomputed sigma1 -> sigma4 pipeline, fast to evaluate across phases.

    The phase unitary is diagonal, so sigma3(theta) differs from the fixed
    conjugation A = U_bs sigma2 U_bs^dag only by an elementwise phase factor;
    its exact theta-derivative follows from d/dtheta exp(i n theta) = i n (...).
    """

    def __init__(self, squeezing: SqueezingParams, loss: LossModel, cutoff: FockCutoff):
        self.squeezing = squeezing
        self.loss = loss
        self.cutoff = cutoff
        d = cutoff.dim
        self.prep_lossless = loss.eta_p_s == 1.0 and loss.eta_p_i == 1.0
        self.det_lossless = loss.eta_d_s == 1.0 and loss.eta_d_i == 1.0

        psi1 = tmsv_state(squeezing, cutoff)
        self.Ub = _bs_matrix(_BALANCED, cutoff.max_photons)
        ns = signal_photon_numbers(cutoff).astype(float)
        ni = np.tile(np.arange(d, dtype=float), d)
        self._gen = {"signal": ns, "difference": 0.5 * (ns - ni)}
        self._ns = ns
        self._dn = {
            name: g[:, None] - g[None, :] for name, g in self._gen.items()
        }

        if self.prep_lossless:
            self._v2 = psi1.vector.ravel()
            sigma2 = np.outer(self._v2, self._v2.conj())
            self._a_vec = self.Ub @ self._v2
        else:
            self._v2 = None
            sigma2 = psi1.to_density_matrix()
            if loss.eta_p_s < 1.0:
                sigma2 = _apply_mode_kraus(
                    sigma2, loss_kraus_operators(loss.eta_p_s, cutoff), d, "s"
                )
            if loss.eta_p_i < 1.0:
                sigma2 = _apply_mode_kraus(
                    sigma2, loss_kraus_operators(loss.eta_p_i, cutoff), d, "i"
                )
        self.sigma2 = sigma2
        self._A = self.Ub @ sigma2 @ self.Ub.conj().T
        self._kraus_ds = loss_kraus_operators(loss.eta_d_s, cutoff)
        self._kraus_di = loss_kraus_operators(loss.eta_d_i, cutoff)
        self._Bs = binomial_population_matrix(loss.eta_d_s, d)
        self._Bi = binomial_population_matrix(loss.eta_d_i, d)

    # -- full-matrix path --------------------------------------------------

    def sigma3(self, theta: float, generator: str = "signal") -> np.ndarray:
        dn = self._dn[generator]
        E = np.exp(1j * theta * dn)
        return self.Ub @ (E * self._A) @ self.Ub.conj().T

    def dsigma3(self, theta: float, generator: str = "signal") -> np.ndarray:
        dn = self._dn[generator]
        E = np.exp(1j * theta * dn) * (1j * dn)
        return self.Ub @ (E * self._A) @ self.Ub.conj().T

    def _detection_loss(self, rho: np.ndarray) -> np.ndarray:
        d = self.cutoff.dim
        if self.loss.eta_d_s < 1.0:
            rho = _apply_mode_kraus(rho, self._kraus_ds, d, "s")
        if self.loss.eta_d_i < 1.0:
            rho = _apply_mode_kraus(rho, self._kraus_di, d, "i")
        return rho

    def sigma4(self, theta: float, generator: str = "signal") -> np.ndarray:
        return self._detection_loss(self.sigma3(theta, generator))

    def dsigma4(self, theta: float, generator: str = "signal") -> np.ndarray:
        return self._detection_loss(self.dsigma3(theta, generator))

    # -- population path (enough for diagonal POVMs) ------------------------

    def populations(self, theta: float) -> np.ndarray:
        """diag(sigma4) as a (d, d) array over (n_s, n_i)."""
        d = self.cutoff.dim
        s3 = self.sigma3(theta)
        p3 = np.real(np.diag(s3)).reshape(d, d)
        return self._Bs @ p3 @ self._Bi.T

    def dpopulations(self, theta: float) -> np.ndarray:
        d = self.cutoff.dim
        ds3 = self.dsigma3(theta)
        dp3 = np.real(np.diag(ds3)).reshape(d, d)
        return self._Bs @ dp3 @ self._Bi.T

    # -- lossless pure-state path -------------------------------------------

    @property
    def is_pure(self) -> bool:
        return self.prep_lossless and self.det_lossless

    def psi3(self, theta: float, generator: str = "signal") -> np.ndarray:
        if not self.prep_lossless:
            raise ConfigError("pure-state path requires lossless preparation")
        g = self._gen[generator]
        return self.Ub @ (np.exp(1j * theta * g) * self._a_vec)

    def dpsi3(self, theta: float, generator: str = "signal") -> np.ndarray:
        if not self.prep_lossless:
            raise ConfigError("pure-state path requires lossless preparation")
        g = self._gen[generator]
        return self.Ub @ (1j * g * np.exp(1j * theta * g) * self._a_vec)


def evolve_pipeline(config: InterferometerConfig) -> TwoModeState:
    """Full sigma1 -> sigma4 evolution at the configured phase (density operator)."""
    eng = InterferometerEngine(config.squeezing, config.loss, config.cutoff)
    return TwoModeState.density(eng.sigma4(config.phase), config.cutoff, validate=False)


def analytic_phase_derivative(config: InterferometerConfig) -> np.ndarray:
    """Exact d(sigma4)/d(theta) at the configured phase."""
    eng = InterferometerEngine(config.squeezing, config.loss, config.cutoff)
    return eng.dsigma4(config.phase)
