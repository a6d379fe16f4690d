"""Detector POVMs (diagonal in the Fock basis) and maximum-likelihood
tomography from coherent-state probe data.

A POVM is stored as the coefficient matrix theta[k, n] = probability that k
incident photons register as outcome n. Completeness: rows sum to 1.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _accel
from .errors import ConfigError, IdentifiabilityError
from .fock import TwoModeState

COMPLETENESS_TOL = 1e-9
_WARM_FLOOR = 1e-300


@dataclass
class DetectorPovm:
    """Diagonal-in-Fock POVM: theta[k, n], k incident photons -> outcome n."""

    theta: np.ndarray
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 2:
            raise ConfigError("theta must be a (k_max+1, n_outcomes) matrix")
        if not self.labels:
            self.labels = [str(n) for n in range(self.theta.shape[1])]
        if len(self.labels) != self.theta.shape[1]:
            raise ConfigError("label count does not match outcome count")
        self.validate()

    def validate(self):
        if self.theta.min() < -COMPLETENESS_TOL or self.theta.max() > 1.0 + COMPLETENESS_TOL:
            raise ConfigError("POVM coefficients must lie in [0, 1]")
        rows = self.theta.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > COMPLETENESS_TOL:
            raise ConfigError(
                f"POVM completeness violated: max row-sum deviation {np.max(np.abs(rows-1)):.3e}"
            )

    @property
    def k_max(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def n_outcomes(self) -> int:
        return self.theta.shape[1]

    def to_json(self, path):
        payload = {
            "k_max": self.k_max,
            "outcomes": self.labels,
            "theta": [[float(x) for x in row] for row in self.theta],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "DetectorPovm":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(np.asarray(payload["theta"], dtype=float), list(payload["outcomes"]))


def ideal_pnr_povm(n_max: int, k_max: int) -> DetectorPovm:
    """Perfect photon-number resolution with a saturation bucket at outcome n_max."""
    if n_max > k_max:
        raise ConfigError(f"n_max ({n_max}) must be <= k_max ({k_max})")
    theta = np.zeros((k_max + 1, n_max + 1))
    for k in range(k_max + 1):
        theta[k, min(k, n_max)] = 1.0
    return DetectorPovm(theta)


def efficiency_povm(eta: float, n_max: int, k_max: int) -> DetectorPovm:
    """Binomial-loss PNR detector: theta[k, n] = C(k, n) eta^n (1-eta)^(k-n),
    with outcomes >= n_max folded into the saturation bucket."""
    if not (0.0 <= eta <= 1.0):
        raise ConfigError(f"efficiency must be in [0, 1], got {eta}")
    if n_max > k_max:
        raise ConfigError(f"n_max ({n_max}) must be <= k_max ({k_max})")
    full = np.zeros((k_max + 1, k_max + 1))
    for k in range(k_max + 1):
        full[k, : k + 1] = stats.binom.pmf(np.arange(k + 1), k, eta)
    theta = np.zeros((k_max + 1, n_max + 1))
    theta[:, :n_max] = full[:, :n_max]
    theta[:, n_max] = full[:, n_max:].sum(axis=1)
    return DetectorPovm(theta)


def click_povm_from(pnr: DetectorPovm) -> DetectorPovm:
    """Coarse-grain a PNR POVM to the binary no-click / click detector."""
    theta = np.column_stack([pnr.theta[:, 0], pnr.theta[:, 1:].sum(axis=1)])
    return DetectorPovm(theta, ["no-click", "click"])


# ---------------------------------------------------------------------------
# Coherent-state probes and tomography
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSet:
    """Coherent-probe mean photon numbers |alpha|^2 and shots per probe."""

    alpha_sq: tuple
    shots_per_probe: int

    def __post_init__(self):
        if any(a < 0 for a in self.alpha_sq):
            raise ConfigError("probe |alpha|^2 values must be >= 0")
        if self.shots_per_probe <= 0:
            raise ConfigError("shots_per_probe must be positive")


def default_probe_ladder(n_points: int = 15, lo: float = 0.05, hi: float = 12.8) -> tuple:
    """Geometric ladder of probe intensities used for synthetic tomography."""
    return tuple(np.geomspace(lo, hi, n_points))


def dense_probe_ladder(k_max: int) -> tuple:
    """Probe ladder tuned for low-noise reconstruction of a (k_max+1)-row POVM.

    The middle rows of a lossy PNR detector are the hardest to separate because
    adjacent Poisson probe columns are nearly collinear there, so most probes
    are packed into the intensity window that feeds those rows. Intensities far
    above k_max remain useful: conditioned on the truncated support they load
    the top rows almost exclusively.
    """
    if k_max < 1:
        raise ConfigError("k_max must be >= 1")
    lo_band = np.linspace(0.25, 0.5 * k_max, 2 * k_max)
    mid_band = np.linspace(0.5 * k_max, 2.0 * k_max + 2.0, 18 * k_max)
    hi_band = np.linspace(2.0 * k_max + 3.0, 6.0 * k_max + 6.0, 4 * k_max + 4)
    return tuple(np.concatenate([lo_band, mid_band, hi_band]))


def coherent_probe_matrix(alpha_sq, k_max: int) -> np.ndarray:
    """Poisson photon-number weights C[m, k] = |a_m|^(2k) e^(-|a_m|^2) / k!.

    Rows are NOT renormalized: the deficit from 1 is the upper Poisson tail
    beyond k_max and is reported by probe_tail_deficit.
    """
    alpha_sq = np.asarray(alpha_sq, dtype=float)
    if alpha_sq.ndim != 1:
        alpha_sq = alpha_sq.ravel()
    if (alpha_sq < 0).any():
        raise ConfigError("probe |alpha|^2 values must be >= 0")
    if k_max < 0:
        raise ConfigError("k_max must be >= 0")
    ks = np.arange(k_max + 1)
    return stats.poisson.pmf(ks[None, :], alpha_sq[:, None])


def probe_tail_deficit(alpha_sq, k_max: int) -> np.ndarray:
    """Poisson mass beyond k_max for each probe."""
    alpha_sq = np.asarray(alpha_sq, dtype=float)
    return stats.poisson.sf(k_max, alpha_sq)


@dataclass
class ResponseMatrix:
    """Row-stochastic empirical outcome frequencies per probe."""

    R: np.ndarray
    shots_per_probe: int

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.min() < -COMPLETENESS_TOL or self.R.max() > 1.0 + COMPLETENESS_TOL:
            raise ConfigError("response frequencies must lie in [0, 1]")
        rows = self.R.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > COMPLETENESS_TOL:
            raise ConfigError("response rows must sum to 1 (all outcomes recorded)")

    @property
    def counts(self) -> np.ndarray:
        return self.R * self.shots_per_probe


@dataclass
class TomographyDiagnostics:
    iterations: int
    converged: bool
    log_likelihood: float
    ll_gain: float
    grad_norm: float
    cond_C: float
    ll_trace: np.ndarray


def simulate_response(
    povm: DetectorPovm, probes: ProbeSet, rng: np.random.Generator | None = None
) -> ResponseMatrix:
    """Synthetic response matrix for a known POVM; exact frequencies if rng is None.

    Each probe is conditioned on carrying at most k_max photons (row-wise
    renormalization), so rows sum to 1 and the truncated model R = C Theta is
    exactly identifiable. The EM update is invariant to this row scaling of C.
    """
    C = coherent_probe_matrix(probes.alpha_sq, povm.k_max)
    P = C @ povm.theta
    P /= P.sum(axis=1, keepdims=True)
    if rng is None:
        return ResponseMatrix(P, probes.shots_per_probe)
    counts = np.stack([rng.multinomial(probes.shots_per_probe, row) for row in P])
    return ResponseMatrix(counts / probes.shots_per_probe, probes.shots_per_probe)


def tomography_mle(
    response: ResponseMatrix,
    C: np.ndarray,
    *,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    allow_rank_deficient: bool = False,
    theta0: np.ndarray | None = None,
) -> tuple[DetectorPovm, TomographyDiagnostics]:
    """Maximum-likelihood POVM reconstruction from R = C Theta.

    EM-style multiplicative fixed point with per-k renormalization: preserves
    nonnegativity and completeness and increases the multinomial log-likelihood
    monotonically. Stops when the per-iteration gain drops below tol.
    """
    C = np.asarray(C, dtype=float)
    M, K = C.shape
    N = response.R.shape[1]
    if response.R.shape[0] != M:
        raise ConfigError("response and probe matrix disagree on probe count")
    if M < N:
        raise IdentifiabilityError(f"need at least as many probes ({M}) as outcomes ({N})")
    cond = float(np.linalg.cond(C))
    if np.linalg.matrix_rank(C) < K:
        if not allow_rank_deficient:
            raise IdentifiabilityError(
                f"probe matrix is column-rank deficient (cond={cond:.3e}); "
                "add probe amplitudes or pass allow_rank_deficient=True"
            )
        warnings.warn(f"rank-deficient probe matrix, cond={cond:.3e}", RuntimeWarning)

    counts = response.counts
    if theta0 is None:
        # Two starts, keep the higher-likelihood run. The least-squares start
        # (every POVM row sums to 1, so the row-stochastic response obeys
        # R = (C / rowsum(C)) Theta) lands on the exact solution for noiseless
        # data, but on noisy data its floored entries can pin the
        # multiplicative updates near zero far from the optimum; the uniform
        # start has no such locked entries.
        Cn = C / np.maximum(C.sum(axis=1, keepdims=True), _WARM_FLOOR)
        ls = np.linalg.lstsq(Cn, response.R, rcond=None)[0]
        warm = np.maximum(ls, 1e-12)
        warm /= warm.sum(axis=1, keepdims=True)
        starts = [warm, np.full((K, N), 1.0 / N)]
    else:
        starts = [np.asarray(theta0, dtype=float)]
    best = None
    for start in starts:
        run = _accel.em_fixed_point(counts, C, start, tol, max_iter)
        if best is None or run[1][-1] > best[1][-1]:
            best = run
    theta, ll_trace, n_iter, converged = best
    if not converged:
        warnings.warn(
            f"tomography MLE hit max_iter={max_iter} before tolerance", RuntimeWarning
        )
    # projected-gradient norm at the solution (KKT residual on the simplex)
    P = np.maximum(C @ theta, 1e-300)
    G = C.T @ (counts / P)  # d(LL)/d(theta)
    lam = (G * theta).sum(axis=1, keepdims=True)  # active-constraint multipliers
    kkt = theta * (G - lam)
    diag = TomographyDiagnostics(
        iterations=n_iter,
        converged=bool(converged),
        log_likelihood=float(ll_trace[-1]),
        ll_gain=float(ll_trace[-1] - ll_trace[-2]) if n_iter > 1 else float("nan"),
        grad_norm=float(np.linalg.norm(kkt)),
        cond_C=cond,
        ll_trace=ll_trace,
    )
    theta = np.clip(theta, 0.0, 1.0)
    theta /= theta.sum(axis=1, keepdims=True)
    return DetectorPovm(theta), diag


# ---------------------------------------------------------------------------
# Probe-data CSV interchange
# ---------------------------------------------------------------------------

def write_probe_csv(path, alpha_sq, counts):
    """Long-format probe data: columns alpha_sq, outcome, count."""
    counts = np.asarray(counts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha_sq", "outcome", "count"])
        for m, a in enumerate(alpha_sq):
            for n in range(counts.shape[1]):
                w.writerow([repr(float(a)), n, int(counts[m, n])])


def read_probe_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (alpha_sq values, counts matrix) from long-format probe data."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames is None or not {"alpha_sq", "outcome", "count"} <= set(r.fieldnames):
            raise ConfigError("probe CSV must have columns alpha_sq, outcome, count")
        for rec in r:
            rows.append((float(rec["alpha_sq"]), int(rec["outcome"]), float(rec["count"])))
    if not rows:
        raise ConfigError("probe CSV contains no data rows")
    alphas = sorted({a for a, _, _ in rows})
    n_out = max(n for _, n, _ in rows) + 1
    counts = np.zeros((len(alphas), n_out))
    aidx = {a: m for m, a in enumerate(alphas)}
    for a, n, c in rows:
        counts[aidx[a], n] += c
    return np.asarray(alphas), counts


# ---------------------------------------------------------------------------
# Joint outcome probabilities
# ---------------------------------------------------------------------------

def joint_outcome_probabilities(
    state: TwoModeState, povm_s: DetectorPovm, povm_i: DetectorPovm
) -> np.ndarray:
    """p(j, k) for joint diagonal POVMs on the two modes.

    p = Theta_s^T pops Theta_i with pops the joint photon-number populations.
    """
    d = state.cutoff.dim
    for povm, name in ((povm_s, "signal"), (povm_i, "idler")):
        if povm.k_max + 1 < d:
            raise ConfigError(
                f"{name} POVM k_max={povm.k_max} smaller than state cutoff {d - 1}"
            )
    pops = state.populations()
    return povm_s.theta[:d].T @ pops @ povm_i.theta[:d]
