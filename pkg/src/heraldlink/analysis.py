"""Estimators and closed-form visibility budget factors.

Fringe fitting, excitation statistics and concurrence with uncertainties,
the five multiplicative visibility factors, and HOM-based
indistinguishability extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import FitError, InsufficientDataError, ParameterError

# mode duration calibrated from the arrival-time-mismatch visibility table
# (least squares of 1 - V = (dt/tau)^2, excluding the one outlier row)
DEFAULT_TAU_S = 50.57e-9
# noise-coincidence weight calibrated from the SNR-visibility table
DEFAULT_KAPPA = 0.24


# -- fringe fitting ----------------------------------------------------

@dataclass
class FitResult:
    """Sinusoid fit counts ~ offset*(1 + visibility*cos(theta - phase)).

    covariance is over the linear parameters (offset, c1, c2) with
    c1 = offset*V*cos(phase), c2 = offset*V*sin(phase).
    """
    amplitude: float
    phase: float
    offset: float
    visibility: float
    covariance: np.ndarray

    @property
    def visibility_sigma(self) -> float:
        a0 = self.offset
        c1 = self.amplitude * math.cos(self.phase)
        c2 = self.amplitude * math.sin(self.phase)
        amp = max(self.amplitude, 1e-300)
        # delta method on V = sqrt(c1^2+c2^2)/a0
        grad = np.array([-amp / a0 ** 2, c1 / (amp * a0), c2 / (amp * a0)])
        var = float(grad @ self.covariance @ grad)
        return math.sqrt(max(var, 0.0))


def fit_sinusoid(thetas, counts, weights=None) -> FitResult:
    """Weighted least-squares fringe fit over analyzer phase.

    Weights default to inverse-Poisson (1/max(count,1)); the model is
    linear in (offset, c1, c2) so the fit is a single solve.
    """
    th = np.asarray(thetas, dtype=float)
    y = np.asarray(counts, dtype=float)
    if th.shape != y.shape:
        raise ParameterError("thetas and counts must have the same shape")
    if np.unique(np.round(th, 12)).size < 4:
        raise InsufficientDataError("need at least 4 distinct analyzer phases")
    if weights is None:
        weights = 1.0 / np.maximum(y, 1.0)
    w = np.asarray(weights, dtype=float)
    X = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th)])
    WX = X * w[:, None]
    gram = X.T @ WX
    try:
        cov = np.linalg.inv(gram)
    except np.linalg.LinAlgError as e:
        raise FitError(f"singular fringe design matrix: {e}") from None
    coef = cov @ (WX.T @ y)
    a0, c1, c2 = coef
    if a0 <= 0:
        raise FitError(f"fitted offset {a0:.4g} is not positive")
    amp = math.hypot(c1, c2)
    return FitResult(amplitude=amp, phase=math.atan2(c2, c1), offset=float(a0),
                     visibility=amp / a0, covariance=cov)


# -- excitation statistics and concurrence ------------------------------

@dataclass
class PijEstimate:
    p00: float
    p01: float
    p10: float
    p11: float
    sigma: dict
    n_heralds: int

    def as_tuple(self):
        return (self.p00, self.p01, self.p10, self.p11)


def estimate_pij(records, min_heralds: int = 100, policy: str = "raw",
                 q_a: float | None = None, q_b: float | None = None) -> PijEstimate:
    """Classify heralded trials by per-node readout excitation (0 or >=1).

    Consumes trial records carrying number-basis readout clicks per node.
    policy="raw" reports detected fractions; policy="corrected" inverts the
    per-node detection map [[1, 1-q], [0, q]] with q the configured
    excitation-to-click efficiency of that node.
    """
    if policy not in ("raw", "corrected"):
        raise ParameterError(f"policy must be 'raw' or 'corrected', got {policy!r}")
    counts = np.zeros((2, 2), dtype=float)
    n = 0
    for rec in records:
        if rec.herald is None:
            continue
        if rec.node_clicks is None:
            continue
        a, b = rec.node_clicks
        counts[int(bool(a)), int(bool(b))] += 1
        n += 1
    if n < min_heralds:
        raise InsufficientDataError(f"need >= {min_heralds} heralded trials, got {n}")
    p = counts / n
    if policy == "corrected":
        if q_a is None or q_b is None:
            raise ParameterError("corrected policy needs q_a and q_b")
        if not (0 < q_a <= 1 and 0 < q_b <= 1):
            raise ParameterError("q_a and q_b must be in (0, 1]")
        inv_a = np.linalg.inv(np.array([[1.0, 1.0 - q_a], [0.0, q_a]]))
        inv_b = np.linalg.inv(np.array([[1.0, 1.0 - q_b], [0.0, q_b]]))
        p = inv_a @ p @ inv_b.T
        p = np.clip(p, 0.0, None)
        p /= p.sum()
    sig = {f"p{i}{j}": math.sqrt(max(p[i, j] * (1 - p[i, j]) / n, 0.0))
           for i in (0, 1) for j in (0, 1)}
    return PijEstimate(p00=float(p[0, 0]), p01=float(p[0, 1]), p10=float(p[1, 0]),
                       p11=float(p[1, 1]), sigma=sig, n_heralds=n)


@dataclass
class ConcurrenceEstimate:
    p00: float
    p01: float
    p10: float
    p11: float
    visibility: float
    d: float
    concurrence: float
    sigma_c: float


def concurrence(p00: float, p01: float, p10: float, p11: float, v: float,
                sigmas: dict | None = None) -> ConcurrenceEstimate:
    """Lower-bound concurrence from excitation statistics and fringe visibility.

    C = max(0, 2|d| - 2 sqrt(p00 p11)) with d = V (p01 + p10) / 2.
    sigma_c is first-order propagation from any sigmas supplied (keys among
    p00, p01, p10, p11, v) and is reported even when C clamps to zero.
    """
    for nm, val in (("p00", p00), ("p01", p01), ("p10", p10), ("p11", p11)):
        if val < 0:
            raise ParameterError(f"{nm} must be >= 0, got {val}")
    total = p00 + p01 + p10 + p11
    if not (0.99 <= total <= 1.01):
        raise ParameterError(f"probabilities sum to {total:.4f}, outside [0.99, 1.01]")
    d = v * (p01 + p10) / 2.0
    cross = math.sqrt(p00 * p11)
    c_raw = 2.0 * abs(d) - 2.0 * cross
    sig = dict(sigmas or {})
    grad = {
        "v": (p01 + p10) * _sign(v),
        "p01": abs(v),
        "p10": abs(v),
        "p00": -math.sqrt(p11 / p00) if p00 > 0 and p11 > 0 else 0.0,
        "p11": -math.sqrt(p00 / p11) if p00 > 0 and p11 > 0 else 0.0,
    }
    var = sum((grad[k] * sig.get(k, 0.0)) ** 2 for k in grad)
    return ConcurrenceEstimate(p00, p01, p10, p11, v, d,
                               max(0.0, c_raw), math.sqrt(var))


def _sign(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


# -- visibility factors --------------------------------------------------

def v_snr(snr: float, kappa: float = DEFAULT_KAPPA) -> float:
    """Visibility factor from heralds caused by noise instead of signal.

    Noise heralds contribute equally to both fringe outputs, diluting the
    contrast to snr/(snr + kappa); kappa is the ratio of an accidental
    readout coincidence to a retrieved one.
    """
    if snr < 0 or kappa < 0:
        raise ParameterError("snr and kappa must be >= 0")
    if snr + kappa == 0:
        raise ParameterError("snr + kappa must be positive")
    return snr / (snr + kappa)


def fit_kappa(pairs) -> float:
    """One-parameter least squares of v_snr over (snr, V) pairs."""
    pts = [(float(s), float(v)) for s, v in pairs]
    if not pts:
        raise InsufficientDataError("no (snr, V) pairs")
    s = np.array([a for a, _ in pts])
    v = np.array([b for _, b in pts])

    def cost(k):
        return float(np.sum((s / (s + k) - v) ** 2))

    res = optimize.minimize_scalar(cost, bounds=(1e-6, 10.0), method="bounded")
    return float(res.x)


def v_mismatch(dt_s: float, tau_s: float = DEFAULT_TAU_S) -> float:
    """Mode-overlap visibility for an arrival-time offset, exp(-(dt/tau)^2)."""
    if tau_s <= 0:
        raise ParameterError("tau_s must be > 0")
    return math.exp(-((dt_s / tau_s) ** 2))


def fit_tau(pairs) -> float:
    """Calibrate the mode duration from (dt, V) pairs via 1 - V = (dt/tau)^2."""
    pts = [(float(t), float(v)) for t, v in pairs]
    if not pts:
        raise InsufficientDataError("no (dt, V) pairs")
    x = np.array([t ** 2 for t, _ in pts])
    y = np.array([1.0 - v for _, v in pts])
    denom = float(x @ x)
    if denom <= 0:
        raise FitError("all mismatches are zero")
    inv_tau2 = float(x @ y) / denom
    if inv_tau2 <= 0:
        raise FitError("data implies non-positive 1/tau^2")
    return 1.0 / math.sqrt(inv_tau2)


def hom_g2(g2_a: float, g2_b: float, eta: float, zeta: float) -> float:
    """Forward two-source HOM correlation (g2_a + zeta^2 g2_b + 2(1-eta) zeta)/(1+zeta)^2."""
    if zeta <= 0:
        raise ParameterError("zeta must be > 0")
    return (g2_a + zeta ** 2 * g2_b + 2.0 * (1.0 - eta) * zeta) / (1.0 + zeta) ** 2


@dataclass
class HomInversion:
    eta: float
    sigma: float
    consistent: bool


def hom_indistinguishability(g2_a: float, g2_b: float, g2_hom: float,
                             zeta: float = 1.0, sigmas: dict | None = None) -> HomInversion:
    """Invert the two-source HOM correlation for the overlap eta.

    Returns the implied eta with first-order uncertainty from any sigmas
    given (keys g2_a, g2_b, g2_hom); `consistent` flags whether eta lies
    in the physically sensible window [-0.1, 1.1].
    """
    if zeta <= 0:
        raise ParameterError("zeta must be > 0")
    if min(g2_a, g2_b, g2_hom) < 0:
        raise ParameterError("g2 inputs must be >= 0")
    eta = 1.0 - (g2_hom * (1.0 + zeta) ** 2 - g2_a - zeta ** 2 * g2_b) / (2.0 * zeta)
    sig = dict(sigmas or {})
    grad = {
        "g2_hom": -((1.0 + zeta) ** 2) / (2.0 * zeta),
        "g2_a": 1.0 / (2.0 * zeta),
        "g2_b": zeta / 2.0,
    }
    var = sum((grad[k] * sig.get(k, 0.0)) ** 2 for k in grad)
    return HomInversion(eta, math.sqrt(var), -0.1 <= eta <= 1.1)


def v_indistinguishability(eta_wo: float, eta_ro: float) -> float:
    """Photon-overlap visibility sqrt(eta_wo * eta_ro)."""
    for nm, v in (("eta_wo", eta_wo), ("eta_ro", eta_ro)):
        if not (0.0 <= v <= 1.0):
            raise ParameterError(f"{nm} must be in [0, 1], got {v}")
    return math.sqrt(eta_wo * eta_ro)


def v_high_order(chi: float, eta_r: float) -> float:
    """Visibility ceiling from multi-excitation accidentals, 1/(1+2 chi (3-2 eta_r)).

    This is the two-excitation truncation of the accidental budget; the
    exact few-photon oracle sits slightly below it because triple
    emissions contribute at O(chi^2).
    """
    if not (0.0 <= chi < 1.0):
        raise ParameterError(f"chi must be in [0, 1), got {chi}")
    if not (0.0 <= eta_r <= 1.0):
        raise ParameterError(f"eta_r must be in [0, 1], got {eta_r}")
    return 1.0 / (1.0 + 2.0 * chi * (3.0 - 2.0 * eta_r))


@dataclass
class VisibilityBudget:
    v_snr: float
    v_m: float
    v_i: float
    v_h: float
    v_p: float
    v_theory: float
    sigma: dict = field(default_factory=dict)


def visibility_budget(snr: float, kappa: float, dt_s: float, tau_s: float,
                      eta_wo: float, eta_ro: float, chi: float, eta_r: float,
                      v_p: float, factor_sigmas: dict | None = None) -> VisibilityBudget:
    """All five visibility factors and their product.

    factor_sigmas may carry absolute uncertainties keyed by factor name
    (v_snr, v_m, v_i, v_h, v_p); the product's sigma is first-order.
    """
    factors = {
        "v_snr": v_snr(snr, kappa),
        "v_m": v_mismatch(dt_s, tau_s),
        "v_i": v_indistinguishability(eta_wo, eta_ro),
        "v_h": v_high_order(chi, eta_r),
        "v_p": v_p,
    }
    if not (0.0 <= v_p <= 1.0):
        raise ParameterError(f"v_p must be in [0, 1], got {v_p}")
    v_theory = 1.0
    for f in factors.values():
        v_theory *= f
    sig = dict(factor_sigmas or {})
    rel_var = 0.0
    for name, f in factors.items():
        if name in sig and f > 0:
            rel_var += (sig[name] / f) ** 2
    sigma = dict(sig)
    sigma["v_theory"] = v_theory * math.sqrt(rel_var)
    return VisibilityBudget(**factors, v_theory=v_theory, sigma=sigma)
