"""
Quantum Brownian motion in the Fokker-Planck limit: kernel amplitudes,
suppression exponent, fluctuation width, decoherence length, the
classical residual and Gaussian coarse-grained path weights.

Continuous time integrals are discretized on the sample grid of a
SampledPath with trapezoid weights w_k; the dissipative field equation
F[X] = M X'' + M gamma X' + V'(X) uses central differences at interior
nodes. The discrete diagonal log-integrand is

    log W(M v(X), X_0) - sum_k w_k (X_k - xbar_k)^2 / sigma^2
                       - sum_interior dt F_k^2 / (2 (Delta F)^2)

with v the one-sided second-order initial velocity. It is quadratic in
X, so path weights have a closed form that the Monte Carlo estimator is
checked against. Weights are relative: only ratios between paths on the
same grid carry meaning.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from histories_sim.hilbert.constants import HBAR, HBAR_CGS, K_B_CGS, K_BOLTZMANN
from histories_sim.utils.errors import UndersamplingError, ValidationError
from histories_sim.utils.rng import trajectory_generator

logger = logging.getLogger(__name__)

POTENTIALS = ("free", "harmonic")
MIN_SAMPLES = 1000
MIN_EFFECTIVE_SAMPLES = 10.0


@dataclass(frozen=True)
class QbmParams:
    """
    Oscillator-bath parameters.

    Example:
        >>> params = QbmParams(mass=1.0, gamma=1.0, temperature=1.0, sigma=1.0)
        >>> fluctuation_width(params), decoherence_length(params)
        (5.0, 2.25)
    """

    mass: float
    gamma: float
    temperature: float
    sigma: float
    hbar: float = HBAR
    k: float = K_BOLTZMANN
    potential: str = "free"
    omega: float = 0.0

    def __post_init__(self):
        for name in ("mass", "gamma", "sigma", "hbar", "k"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        if not self.temperature >= 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.potential not in POTENTIALS:
            raise ValidationError(f"potential must be one of {POTENTIALS}, got {self.potential!r}")
        if self.potential == "harmonic" and not self.omega > 0:
            raise ValidationError(f"harmonic potential needs omega > 0, got {self.omega}")

    @property
    def stiffness(self) -> float:
        """V''(X): M omega^2 for the oscillator, 0 for the free particle."""
        return self.mass * self.omega ** 2 if self.potential == "harmonic" else 0.0

    def potential_gradient(self, x):
        return self.stiffness * np.asarray(x, dtype=float)

    @property
    def thermal_energy(self) -> float:
        return self.k * self.temperature

    @classmethod
    def cgs(cls, mass: float = 1.0, gamma: float = 1.0, sigma: float = 1.0, temperature: float = 300.0) -> "QbmParams":
        """Parameters in cgs units with the module's constant table."""
        return cls(mass, gamma, temperature, sigma, hbar=HBAR_CGS, k=K_B_CGS)


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Positions xbar_k on a uniform time grid t_0..t_K (K >= 1)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        values = np.asarray(self.values, dtype=float).copy()
        if times.ndim != 1 or times.shape != values.shape:
            raise ValidationError(f"times {times.shape} and values {values.shape} must be matching 1D arrays")
        if len(times) < 2:
            raise ValidationError(f"a sampled path needs K >= 1 (two samples), got {len(times)}")
        steps = np.diff(times)
        if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValidationError("path times must be uniformly spaced and increasing")
        for array in (times, values):
            array.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def same_grid(self, other: "SampledPath") -> bool:
        return self.times.shape == other.times.shape and np.allclose(self.times, other.times, rtol=0, atol=1e-12)

    def with_values(self, values) -> "SampledPath":
        return SampledPath(self.times, values)

    def translated(self, shift: float) -> "SampledPath":
        return SampledPath(self.times + shift, self.values)

    @classmethod
    def uniform(cls, t0: float, dt: float, values) -> "SampledPath":
        values = np.asarray(values, dtype=float)
        return cls(t0 + dt * np.arange(len(values)), values)


@dataclass(frozen=True, eq=False)
class GaussianWigner:
    """
    Gaussian Wigner function over (X, P).

    Raises:
        ValidationError: If the covariance is not symmetric positive
            definite or violates det >= (hbar/2)^2
    """

    mean: Tuple[float, float]
    covariance: np.ndarray
    hbar: float = HBAR

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).copy()
        cov = np.asarray(self.covariance, dtype=float).copy()
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValidationError(f"need mean (2,) and covariance (2, 2), got {mean.shape}, {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(cov))))):
            raise ValidationError("Wigner covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise ValidationError("Wigner covariance must be positive definite")
        det = float(np.linalg.det(cov))
        if det < (self.hbar / 2.0) ** 2 * (1.0 - 1e-9):
            raise ValidationError(f"covariance determinant {det:.6g} violates the uncertainty bound {(self.hbar / 2) ** 2:.6g}")
        for array in (mean, cov):
            array.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.covariance)

    @property
    def log_normalization(self) -> float:
        return -math.log(2.0 * math.pi) - 0.5 * math.log(float(np.linalg.det(self.covariance)))

    def log_density(self, x, p) -> np.ndarray:
        z = np.stack([np.asarray(x, dtype=float) - self.mean[0], np.asarray(p, dtype=float) - self.mean[1]], axis=-1)
        return self.log_normalization - 0.5 * np.einsum("...i,ij,...j->...", z, self.precision, z)

    def density(self, x, p) -> np.ndarray:
        return np.exp(self.log_density(x, p))

    @classmethod
    def minimum_uncertainty(cls, x0: float, p0: float, width: float, hbar: float = HBAR) -> "GaussianWigner":
        """Coherent-state Wigner function with position spread ``width``."""
        return cls((x0, p0), np.diag([width ** 2, hbar ** 2 / (4.0 * width ** 2)]), hbar)


# ==================== CLOSED-FORM QUANTITIES ====================

def fp_kernels(params: QbmParams) -> Tuple[float, float]:
    """(M gamma, 2 M gamma k T / hbar): coefficients of delta' in eta and delta in nu."""
    eta = params.mass * params.gamma
    nu = 2.0 * params.mass * params.gamma * params.thermal_energy / params.hbar
    return eta, nu


def suppression_exponent(params: QbmParams) -> float:
    """2 M gamma k T sigma^2 / hbar^2; interference is suppressed by exp(-exponent)."""
    return 2.0 * params.mass * params.gamma * params.thermal_energy * params.sigma ** 2 / params.hbar ** 2


def fluctuation_width(params: QbmParams) -> float:
    """(Delta F)^2 = hbar^2/sigma^2 + 4 M gamma k T."""
    return params.hbar ** 2 / params.sigma ** 2 + 4.0 * params.mass * params.gamma * params.thermal_energy


def decoherence_length(params: QbmParams) -> float:
    """l^2 = 2 sigma^2 + hbar^2/(4 M gamma k T); infinite at zero temperature."""
    thermal = 4.0 * params.mass * params.gamma * params.thermal_energy
    if thermal == 0:
        return math.inf
    return 2.0 * params.sigma ** 2 + params.hbar ** 2 / thermal


def thermal_dominates(params: QbmParams) -> bool:
    """True when the thermal term of (Delta F)^2 exceeds the quantum term."""
    return 4.0 * params.mass * params.gamma * params.thermal_energy > params.hbar ** 2 / params.sigma ** 2


# ==================== DISCRETE FUNCTIONALS ====================

def trapezoid_weights(path: SampledPath) -> np.ndarray:
    weights = np.full(len(path.times), path.dt)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return weights


def residual_matrix(path: SampledPath, params: QbmParams) -> np.ndarray:
    """Phi with F = Phi X at the interior nodes; shape (K-1, K+1)."""
    n = len(path.times)
    dt = path.dt
    phi = np.zeros((max(n - 2, 0), n))
    for row in range(n - 2):
        k = row + 1
        phi[row, k - 1] += params.mass / dt ** 2 - params.mass * params.gamma / (2.0 * dt)
        phi[row, k] += -2.0 * params.mass / dt ** 2 + params.stiffness
        phi[row, k + 1] += params.mass / dt ** 2 + params.mass * params.gamma / (2.0 * dt)
    return phi


def classical_residual(path: SampledPath, params: QbmParams) -> np.ndarray:
    """
    F_k = M X'' + M gamma X' + V'(X) at interior nodes by central differences.

    Raises:
        ValidationError: For fewer than three samples
    """
    if len(path.times) < 3:
        raise ValidationError(f"the classical residual needs at least 3 samples, got {len(path.times)}")
    return residual_matrix(path, params) @ path.values


def initial_velocity_row(path: SampledPath) -> np.ndarray:
    """v = g . X: (-3X0 + 4X1 - X2)/(2dt) when K >= 2, else the forward difference."""
    n = len(path.times)
    row = np.zeros(n)
    if n >= 3:
        row[:3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * path.dt)
    else:
        row[:2] = np.array([-1.0, 1.0]) / path.dt
    return row


def classical_path(params: QbmParams, wigner: GaussianWigner, times) -> SampledPath:
    """Solution of F[X] = 0 starting from the Wigner mean, sampled at ``times``."""
    times = np.asarray(times, dtype=float)
    generator = np.array([[0.0, 1.0], [-params.stiffness / params.mass, -params.gamma]])
    start = np.array([wigner.mean[0], wigner.mean[1] / params.mass])
    values = [(scipy.linalg.expm(generator * (t - times[0])) @ start)[0] for t in times]
    return SampledPath(times, values)


@dataclass(frozen=True, eq=False)
class _QuadraticForm:
    """log integrand = c + b.X - 1/2 X.A.X."""

    A: np.ndarray
    b: np.ndarray
    c: complex

    def log_integral(self) -> complex:
        n = self.A.shape[0]
        sign, logdet = np.linalg.slogdet(self.A)
        if sign <= 0:
            raise ValidationError("path weight form is not positive definite")
        solved = np.linalg.solve(self.A, self.b)
        return self.c + 0.5 * self.b @ solved + 0.5 * n * math.log(2.0 * math.pi) - 0.5 * logdet


def _wigner_and_dynamics_form(path: SampledPath, params: QbmParams, wigner: GaussianWigner) -> _QuadraticForm:
    """Wigner weight of the initial data plus the F^2 suppression."""
    n = len(path.times)
    rows = np.zeros((2, n))
    rows[0, 0] = 1.0
    rows[1] = params.mass * initial_velocity_row(path)
    precision = wigner.precision
    A = rows.T @ precision @ rows
    b = rows.T @ precision @ wigner.mean
    c = wigner.log_normalization - 0.5 * wigner.mean @ precision @ wigner.mean
    phi = residual_matrix(path, params)
    if phi.size:
        A = A + path.dt * phi.T @ phi / fluctuation_width(params)
    return _QuadraticForm(A, b.astype(complex), complex(c))


def _full_form(centre: SampledPath, params: QbmParams, wigner: GaussianWigner) -> _QuadraticForm:
    form = _wigner_and_dynamics_form(centre, params, wigner)
    weights = trapezoid_weights(centre) / params.sigma ** 2
    A = form.A + 2.0 * np.diag(weights)
    b = form.b + 2.0 * weights * centre.values
    c = form.c - np.sum(weights * centre.values ** 2)
    return _QuadraticForm(A, b, c)


def _phase_vector(xbar: SampledPath, ybar: SampledPath, params: QbmParams) -> np.ndarray:
    """Linear coefficients of the imaginary cross term, to be added to b."""
    phi = residual_matrix(xbar, params)
    if not phi.size:
        return np.zeros(len(xbar.times), dtype=complex)
    separation = (xbar.values - ybar.values)[1:-1]
    scale = params.hbar * xbar.dt / (4.0 * params.sigma ** 2 * fluctuation_width(params))
    return -1j * scale * (phi.T @ separation)


def path_log_weight_exact(path: SampledPath, params: QbmParams, wigner: GaussianWigner) -> float:
    """Closed-form log of the discrete diagonal path weight."""
    return float(np.real(_full_form(path, params, wigner).log_integral()))


@dataclass(frozen=True)
class PathWeight:
    """Monte Carlo path weight in log and linear form with its standard error."""

    log_weight: float
    weight: float
    stderr: float
    relative_error: float
    effective_samples: float
    n_mc: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "log_weight": self.log_weight,
            "weight": self.weight,
            "stderr": self.stderr,
            "relative_error": self.relative_error,
            "effective_samples": self.effective_samples,
            "n_mc": self.n_mc,
            "seed": self.seed,
        }


def _proposal(centre: SampledPath, params: QbmParams, n_mc: int, seed: int):
    """Draws from N(xbar_k, sigma^2/(2 w_k)) and the log of the path-factor normalization."""
    if n_mc < MIN_SAMPLES:
        raise ValidationError(f"n_mc must be >= {MIN_SAMPLES}, got {n_mc}")
    weights = trapezoid_weights(centre)
    scales = params.sigma / np.sqrt(2.0 * weights)
    draws = centre.values + scales * trajectory_generator(seed, 0).standard_normal((n_mc, len(centre.times)))
    log_z = float(np.sum(0.5 * np.log(math.pi * params.sigma ** 2 / weights)))
    return draws, log_z


def _remainder_log_integrand(samples: np.ndarray, path: SampledPath, params: QbmParams, wigner: GaussianWigner):
    """Wigner and F^2 parts of the log-integrand for a batch of discrete paths."""
    velocity = samples @ initial_velocity_row(path)
    log_w = wigner.log_density(samples[:, 0], params.mass * velocity)
    phi = residual_matrix(path, params)
    if phi.size:
        residuals = samples @ phi.T
        log_w = log_w - path.dt * np.sum(residuals ** 2, axis=1) / (2.0 * fluctuation_width(params))
    return log_w


def _effective_samples(log_terms: np.ndarray) -> float:
    r = np.exp(log_terms - np.max(log_terms))
    return float(np.sum(r) ** 2 / np.sum(r ** 2))


def path_probability(
    path: SampledPath,
    params: QbmParams,
    wigner: GaussianWigner,
    n_mc: int = 10000,
    seed: int = 0,
) -> PathWeight:
    """
    Importance-sampled weight of the coarse-grained history ``path``.

    Paths X are drawn from the Gaussian path factor centred on xbar, so
    the estimate is Z * mean(W(M v, X_0) exp(-sum dt F^2 / 2(Delta F)^2)),
    accumulated in the log domain.

    Raises:
        ValidationError: If n_mc < 1000
        UndersamplingError: If the proposal collapses onto a few samples
    """
    draws, log_z = _proposal(path, params, n_mc, seed)
    log_terms = _remainder_log_integrand(draws, path, params, wigner)
    ess = _effective_samples(log_terms)
    if ess < MIN_EFFECTIVE_SAMPLES:
        raise UndersamplingError("qbm", f"effective sample size {ess:.1f} of {n_mc}; proposal degenerate")
    log_mean = float(logsumexp(log_terms) - math.log(n_mc))
    ratios = np.exp(log_terms - log_mean)
    relative = float(np.std(ratios, ddof=1) / math.sqrt(n_mc))
    log_weight = log_z + log_mean
    weight = math.exp(log_weight) if log_weight < 700 else math.inf
    logger.debug(f"Path weight: log w = {log_weight:.6f} +- {relative:.2e} (ESS {ess:.0f})")
    return PathWeight(log_weight, weight, weight * relative, relative, ess, n_mc, seed)


def decoherence_offdiagonal_estimate(xbar: SampledPath, ybar: SampledPath, params: QbmParams) -> float:
    """exp(-sum_trapezoid dt (xbar - ybar)^2 / (2 l^2))."""
    if not xbar.same_grid(ybar):
        raise ValidationError("paths must share a time grid")
    length_sq = decoherence_length(params)
    if math.isinf(length_sq):
        return 1.0
    integral = float(np.sum(trapezoid_weights(xbar) * (xbar.values - ybar.values) ** 2))
    return math.exp(-integral / (2.0 * length_sq))


@dataclass(frozen=True)
class DecoherenceEstimate:
    """Off-diagonal D[xbar, ybar]: Monte Carlo value, its error and the closed form."""

    value: complex
    stderr: float
    exact: complex
    suppression: float

    def to_dict(self) -> dict:
        return {
            "real": self.value.real,
            "imag": self.value.imag,
            "stderr": self.stderr,
            "exact_real": self.exact.real,
            "exact_imag": self.exact.imag,
            "suppression": self.suppression,
        }


def decoherence_functional_estimate(
    xbar: SampledPath,
    ybar: SampledPath,
    params: QbmParams,
    wigner: GaussianWigner,
    n_mc: int = 10000,
    seed: int = 0,
) -> DecoherenceEstimate:
    """
    D[xbar, ybar] with the path factor centred on (xbar + ybar)/2, the
    imaginary cross term -i hbar sum dt (xbar - ybar) F[X] / (4 sigma^2 (Delta F)^2)
    and the explicit suppression factor.
    """
    if not xbar.same_grid(ybar):
        raise ValidationError("paths must share a time grid")
    centre = xbar.with_values(0.5 * (xbar.values + ybar.values))
    suppression = decoherence_offdiagonal_estimate(xbar, ybar, params)
    phase = _phase_vector(xbar, ybar, params)

    draws, log_z = _proposal(centre, params, n_mc, seed)
    log_terms = _remainder_log_integrand(draws, centre, params, wigner)
    complex_terms = log_terms + draws @ phase
    shift = float(np.max(log_terms))
    samples = np.exp(complex_terms - shift)
    mean = complex(np.mean(samples))
    scale = math.exp(log_z + shift) * suppression
    value = mean * scale
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n_mc)) * scale

    form = _full_form(centre, params, wigner)
    exact_form = _QuadraticForm(form.A, form.b + phase, form.c)
    exact = complex(np.exp(exact_form.log_integral())) * suppression
    return DecoherenceEstimate(value, stderr, exact, suppression)
