"""Analytic link budget.

Per-arm transmittance and efficiency, heralding probability and SNR per
trial, the repeaterless secret-key capacity bound, and log-log scaling
fits of rate versus channel transmittance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CrossingNotFoundError, FitError, ParameterError

LN2 = math.log(2.0)


class LinearizationWarning(UserWarning):
    """Emitted when chi * eta products leave the small-signal regime."""


def _check_fraction(name: str, v: float):
    if not (0.0 <= v <= 1.0):
        raise ParameterError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class FiberSegment:
    """One stretch of fiber: length, attenuation, and lumped extra loss."""
    length_km: float
    attenuation_db_per_km: float
    extra_loss_db: float = 0.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ParameterError(f"length_km must be >= 0, got {self.length_km}")
        if self.attenuation_db_per_km < 0:
            raise ParameterError(
                f"attenuation_db_per_km must be >= 0, got {self.attenuation_db_per_km}")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km + self.extra_loss_db


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float
    dark_rate_hz: float

    def __post_init__(self):
        _check_fraction("detector efficiency", self.efficiency)
        if self.dark_rate_hz < 0:
            raise ParameterError("dark_rate_hz must be >= 0")


@dataclass(frozen=True)
class LinkParams:
    """Source, conversion, fiber, filter, and detector parameters of one link.

    chi is the per-trial excitation probability of each node's source.
    noise_band_factor is the fraction of broadband conversion noise that
    survives the narrow filter chain (the filter stack is collapsed to the
    end-to-end transmission for signal plus this one suppression factor
    for noise).
    """
    chi: float
    qfc_efficiency: float = 1.0
    qfc_noise_rate_hz: float = 0.0
    probe_raman_rate_hz: float = 0.0
    filter_transmission: float = 1.0
    collection_efficiency: float = 1.0
    noise_band_factor: float = 1.0
    segments_a: tuple = ()
    segments_b: tuple = ()
    detector_d1: DetectorParams = DetectorParams(1.0, 0.0)
    detector_d2: DetectorParams = DetectorParams(1.0, 0.0)
    gate_window_s: float = 200e-9
    trial_rate_hz: float = 0.0
    distance_km: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.chi < 1.0):
            raise ParameterError(f"chi must be in [0, 1), got {self.chi}")
        for nm in ("qfc_efficiency", "filter_transmission", "collection_efficiency",
                   "noise_band_factor"):
            _check_fraction(nm, getattr(self, nm))
        for nm in ("qfc_noise_rate_hz", "probe_raman_rate_hz", "gate_window_s",
                   "trial_rate_hz"):
            if getattr(self, nm) < 0:
                raise ParameterError(f"{nm} must be >= 0")
        object.__setattr__(self, "segments_a", tuple(self.segments_a))
        object.__setattr__(self, "segments_b", tuple(self.segments_b))

    def segments(self, arm: str) -> tuple:
        arm = arm.upper()
        if arm == "A":
            return self.segments_a
        if arm == "B":
            return self.segments_b
        raise ParameterError(f"arm must be 'A' or 'B', got {arm!r}")

    def detector(self, which: str) -> DetectorParams:
        which = which.upper()
        if which == "D1":
            return self.detector_d1
        if which == "D2":
            return self.detector_d2
        raise ParameterError(f"detector must be 'D1' or 'D2', got {which!r}")


@dataclass(frozen=True)
class ArmBudget:
    arm_transmittance: float   # fiber only
    arm_efficiency: float      # source to click, all factors
    noise_click_prob: float    # per gate


@dataclass(frozen=True)
class HeraldStats:
    p_ent: float
    snr_d1: float
    snr_d2: float
    signal_click_d1: float
    signal_click_d2: float
    noise_click_d1: float
    noise_click_d2: float


def fiber_loss_db(segments) -> float:
    return float(sum(s.loss_db for s in segments))


def fiber_transmittance(segments) -> float:
    """10^(-total_dB/10) over the concatenated segments; empty list is lossless."""
    return 10.0 ** (-fiber_loss_db(segments) / 10.0)


def arm_budget(p: LinkParams, arm: str, detector: str) -> ArmBudget:
    """Efficiency and noise bookkeeping for one arm feeding one detector.

    noise_click_prob counts the conversion noise attenuated by this arm's
    fiber and narrowed by the filter chain, the probe-scatter floor, and
    the detector's own dark rate, all over one gate window.
    """
    segs = p.segments(arm)
    det = p.detector(detector)
    t_fiber = fiber_transmittance(segs)
    eff = (p.qfc_efficiency * p.filter_transmission * p.collection_efficiency
           * t_fiber * det.efficiency)
    photon_rate = (p.qfc_noise_rate_hz * t_fiber * p.noise_band_factor
                   + p.probe_raman_rate_hz)
    noise_rate = photon_rate * det.efficiency + det.dark_rate_hz
    return ArmBudget(t_fiber, eff, noise_rate * p.gate_window_s)


def _detection_prob_per_photon(p: LinkParams, arm: str, detector: str) -> float:
    """Per-photon probability that a source photon from `arm` clicks `detector`.

    Includes the balanced-splitter 1/2; excludes nothing else.
    """
    det = p.detector(detector)
    pre = (p.qfc_efficiency * p.filter_transmission * p.collection_efficiency
           * fiber_transmittance(p.segments(arm)))
    return 0.5 * pre * det.efficiency


def _port_moments(p: LinkParams) -> tuple:
    """Second moments of the two midpoint-splitter output fields.

    Each source emits a phase-insensitive geometric-statistics field with
    mean chi/(1-chi); after independent arm attenuation the two fields are
    still zero-mean Gaussian, so each splitter output is exactly thermal
    with mean m = (mu_A + mu_B)/2, and the two outputs share the
    cross-correlation d = (mu_A - mu_B)/2.  Returns (m, d), both before
    detection efficiency.
    """
    mu = p.chi / (1.0 - p.chi)
    t = {arm: (p.qfc_efficiency * p.filter_transmission
               * p.collection_efficiency
               * fiber_transmittance(p.segments(arm)))
         for arm in ("A", "B")}
    return 0.5 * (t["A"] + t["B"]) * mu, 0.5 * (t["A"] - t["B"]) * mu


def signal_click_prob(p: LinkParams, detector: str) -> float:
    """Per-trial probability of a signal click at one heralding detector.

    The splitter output feeding the detector is exactly thermal (see
    _port_moments), so the threshold click probability is
    eta*m/(1 + eta*m).  This sits below the independent-routing product
    form: the two write-out fields interfere at the splitter and bunch,
    which raises the vacuum probability at each output.  The small-chi
    expansion is the familiar chi*(eta_A + eta_B)/2 either way.
    """
    m, _ = _port_moments(p)
    eta = p.detector(detector).efficiency
    if eta * m > 0.5:
        warnings.warn(
            f"detected port occupancy {eta * m:.3f} exceeds 0.5; the "
            "small-chi linearized reading of this probability is invalid",
            LinearizationWarning, stacklevel=2)
    return eta * m / (1.0 + eta * m)


def noise_click_prob(p: LinkParams, detector: str) -> float:
    """Per-trial noise click probability at one heralding detector.

    Conversion noise from both arms reaches the detector through the
    balanced splitter; probe scatter is local.  Both are real photons, so
    they fire the detector with its quantum efficiency; dark counts add on
    top unattenuated.  This is what makes the two detectors' SNRs nearly
    equal in the noise-photon-dominated regime even when their
    efficiencies differ by 2x.
    """
    det = p.detector(detector)
    qfc = sum(0.5 * p.qfc_noise_rate_hz * fiber_transmittance(p.segments(arm))
              * p.noise_band_factor for arm in ("A", "B"))
    rate = (qfc + p.probe_raman_rate_hz) * det.efficiency + det.dark_rate_hz
    return rate * p.gate_window_s


def _exclusive_click_probs(p: LinkParams) -> tuple:
    """Exact joint threshold statistics of the two herald detectors.

    Returns (p_excl_d1, p_excl_d2, p_double) per trial, darks included.
    The joint no-click generating function of the two correlated thermal
    outputs is 1/det(I + diag(eta) N) with N = [[m, d], [d, m]] from
    _port_moments.
    """
    m, d = _port_moments(p)
    eta1 = p.detector("D1").efficiency
    eta2 = p.detector("D2").efficiency
    nu1 = noise_click_prob(p, "D1")
    nu2 = noise_click_prob(p, "D2")
    no1 = (1.0 - nu1) / (1.0 + eta1 * m)
    no2 = (1.0 - nu2) / (1.0 + eta2 * m)
    det2 = (1.0 + eta1 * m) * (1.0 + eta2 * m) - eta1 * eta2 * d * d
    noboth = (1.0 - nu1) * (1.0 - nu2) / det2
    return no2 - noboth, no1 - noboth, 1.0 - no1 - no2 + noboth


def herald_stats(p: LinkParams) -> HeraldStats:
    """Herald probability and SNR per trial.

    p_ent is the sum over both detectors of per-detector click
    probabilities (signal or noise, no double-click veto), matching what
    the Monte Carlo engine counts and what a heralding counter measures.
    It reduces to the signal sum when the noise rates are zero.
    """
    s1 = signal_click_prob(p, "D1")
    s2 = signal_click_prob(p, "D2")
    n1 = noise_click_prob(p, "D1")
    n2 = noise_click_prob(p, "D2")
    p1 = 1.0 - (1.0 - s1) * (1.0 - n1)
    p2 = 1.0 - (1.0 - s2) * (1.0 - n2)
    snr1 = s1 / n1 if n1 > 0 else (math.inf if s1 > 0 else 0.0)
    snr2 = s2 / n2 if n2 > 0 else (math.inf if s2 > 0 else 0.0)
    return HeraldStats(p_ent=p1 + p2, snr_d1=snr1, snr_d2=snr2,
                       signal_click_d1=s1, signal_click_d2=s2,
                       noise_click_d1=n1, noise_click_d2=n2)


def plob_bound(eta: float) -> float:
    """Repeaterless secret-key capacity -log2(1-eta) in bits per channel use."""
    if not (0.0 <= eta < 1.0):
        raise ParameterError(f"eta must be in [0, 1), got {eta}")
    return -math.log1p(-eta) / LN2


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residuals: np.ndarray


def scaling_fit(points) -> ScalingFit:
    """Least-squares line in (log10 eta, log10 p); slope near 0.5 means sqrt scaling."""
    pts = [(float(e), float(p)) for e, p in points]
    if len(pts) < 2:
        raise ParameterError("need at least 2 points")
    if any(e <= 0 or p <= 0 for e, p in pts):
        raise ParameterError("all points must be positive")
    x = np.log10([e for e, _ in pts])
    y = np.log10([p for _, p in pts])
    if np.ptp(x) < 1e-12:
        raise FitError("degenerate fit: all transmittances identical")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ScalingFit(float(slope), float(intercept), resid)


def plob_crossing(fit: ScalingFit, tolerance: float = 1e-4) -> float:
    """Transmittance where the fitted rate line crosses the capacity bound.

    Solves 10^(intercept + slope*log10 eta) = -log2(1-eta) by bisection on
    log10 eta in [-10, 0); `tolerance` bounds the bracket width in log10
    units at return.
    """
    if not (0.0 < fit.slope < 1.0):
        raise ParameterError(f"slope must be in (0, 1), got {fit.slope}")
    if tolerance <= 0:
        raise ParameterError("tolerance must be > 0")

    def g(x: float) -> float:
        return fit.intercept + fit.slope * x - math.log10(plob_bound(10.0 ** x))

    lo, hi = -10.0, -1e-9
    xs = np.linspace(lo, hi, 256)
    vals = [g(x) for x in xs]
    bracket = None
    for i in range(len(xs) - 1):
        if vals[i] == 0.0:
            return 10.0 ** xs[i]
        if vals[i] * vals[i + 1] < 0:
            bracket = (xs[i], xs[i + 1])
            break
    if bracket is None:
        raise CrossingNotFoundError(
            "rate line does not cross the capacity bound for eta in [1e-10, 1)")
    a, b = bracket
    fa = g(a)
    while b - a > tolerance:
        m = 0.5 * (a + b)
        fm = g(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
    return 10.0 ** (0.5 * (a + b))
