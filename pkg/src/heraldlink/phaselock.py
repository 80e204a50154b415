"""Interferometer stabilization models.

Signal-level models of the dual-band locking scheme (exact beat-note
intensity and its slow envelope), residual-phase coefficients for the
single-band scheme, thermal drift arithmetic, and a time-stepped
feedback-loop simulation producing residual phase trajectories and the
phase-noise visibility factor V_P.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import FitError, InsufficientDataError, ParameterError

C_LIGHT = 299792458.0


class BandImbalanceWarning(UserWarning):
    """Emitted when the two locking bands are too unequal for the reduced envelope."""


@dataclass(frozen=True)
class DualBandParams:
    """Two locking beams at nu0 +/- delta_nu entering both interferometer arms.

    a1, a2 are the blue-detuned amplitudes on paths 1 and 2; b1, b2 the
    red-detuned ones.  psi_plus / psi_minus are the source phases of the
    two bands.  n0 is the fiber index at the signal frequency and delta_n
    the index offset at the detuned frequencies (linear dispersion).
    """
    nu0_hz: float
    delta_nu_hz: float
    a1: float = 1.0
    a2: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    psi_plus: float = 0.0
    psi_minus: float = 0.0
    n0: float = 1.468
    delta_n: float = 0.0
    apd_bandwidth_hz: float = 1e6

    def __post_init__(self):
        if self.delta_nu_hz <= 0:
            raise ParameterError("delta_nu_hz must be > 0")
        if min(self.a1, self.a2, self.b1, self.b2) < 0:
            raise ParameterError("amplitudes must be >= 0")
        if self.apd_bandwidth_hz > 0.01 * (2.0 * self.delta_nu_hz):
            raise ParameterError(
                "apd_bandwidth_hz must be far below the band beat frequency "
                f"(got {self.apd_bandwidth_hz:.3g} Hz vs beat {2 * self.delta_nu_hz:.3g} Hz)")

    # wave numbers, with linear dispersion n(nu0 +/- dnu) = n0 +/- delta_n
    @property
    def k_plus(self) -> float:
        return 2.0 * math.pi / C_LIGHT * (self.n0 + self.delta_n) * (self.nu0_hz + self.delta_nu_hz)

    @property
    def k_minus(self) -> float:
        return 2.0 * math.pi / C_LIGHT * (self.n0 - self.delta_n) * (self.nu0_hz - self.delta_nu_hz)

    @property
    def k_signal(self) -> float:
        return 2.0 * math.pi / C_LIGHT * self.n0 * self.nu0_hz

    @property
    def k_mean(self) -> float:
        return 0.5 * (self.k_plus + self.k_minus)

    @property
    def delta_k(self) -> float:
        """Half the wave-number splitting, (2 pi / c)(n0 d_nu + nu0 d_n)."""
        return 0.5 * (self.k_plus - self.k_minus)

    @property
    def delta_omega(self) -> float:
        return 2.0 * math.pi * 2.0 * self.delta_nu_hz


@dataclass(frozen=True)
class InterferometerGeometry:
    """Path lengths and wave numbers of the stabilized interferometers.

    l1_m and l2_m are the long write-out paths of the two nodes; their
    difference is the working point of the locking fringe.  l_wol_m and
    l_pl_m are the composite lengths that appear once the converted field
    is referenced back through the pump (conversion conserves the wave
    number budget, k_tel = k_wo - k_p).
    """
    l1_m: float
    l2_m: float
    l_ro_m: float = 10.0
    l_wol_m: float = 0.0
    l_pl_m: float = 0.0
    k_ro: float = 0.0
    k_wo: float = 0.0
    k_lo: float = 0.0
    k_p: float = 0.0

    def __post_init__(self):
        for nm in ("l1_m", "l2_m", "l_ro_m", "l_wol_m", "l_pl_m"):
            if getattr(self, nm) < 0:
                raise ParameterError(f"{nm} must be >= 0")

    @property
    def delta_l(self) -> float:
        return self.l1_m - self.l2_m


@dataclass(frozen=True)
class PhaseBudget:
    """Per-node path phases of the four pulses, radians; nodes as (A, B) pairs."""
    phi_w: tuple
    phi_wo: tuple
    phi_r: tuple
    phi_ro: tuple

    def delta_local(self) -> float:
        """Write plus read phase difference between nodes (the local lock's job)."""
        return (self.phi_w[0] + self.phi_r[0]) - (self.phi_w[1] + self.phi_r[1])

    def delta_long(self) -> float:
        """Write-out plus read-out phase difference (the long interferometer's job)."""
        return (self.phi_wo[0] + self.phi_ro[0]) - (self.phi_wo[1] + self.phi_ro[1])

    @property
    def delta_phi_wr(self) -> float:
        return self.delta_local() + self.delta_long()


def dual_band_intensity_exact(p: DualBandParams, g: InterferometerGeometry, t):
    """Detected intensity of the two-band lock signal, beat terms included.

    Direct |E|^2 of the four amplitude components (two bands times two
    paths), keeping the four cross-band terms that oscillate at the band
    beat frequency; only optical-frequency terms are dropped.  `t` may be
    a scalar or an array of times.
    """
    t = np.asarray(t, dtype=float)
    kp, km = p.k_plus, p.k_minus
    dpsi = p.psi_plus - p.psi_minus
    dw = p.delta_omega
    dl = g.delta_l
    static = (p.a1 ** 2 + p.a2 ** 2 + p.b1 ** 2 + p.b2 ** 2
              + 2.0 * p.a1 * p.a2 * math.cos(kp * dl)
              + 2.0 * p.b1 * p.b2 * math.cos(km * dl))
    beats = (p.a1 * p.b1 * np.cos(dw * t - (kp - km) * g.l1_m - dpsi)
             + p.a2 * p.b2 * np.cos(dw * t - (kp - km) * g.l2_m - dpsi)
             + p.a1 * p.b2 * np.cos(dw * t - kp * g.l1_m + km * g.l2_m - dpsi)
             + p.a2 * p.b1 * np.cos(dw * t - kp * g.l2_m + km * g.l1_m - dpsi))
    return static + 2.0 * beats


@dataclass(frozen=True)
class EnvelopeResult:
    s_offset: float
    a_tilde: float
    intensity: float


def dual_band_envelope(p: DualBandParams, g: InterferometerGeometry) -> EnvelopeResult:
    """Slow-detector view of the lock signal at the given path imbalance.

    Returns S (the incoherent offset), the principal fringe amplitude
    A_tilde = 2(a1 a2 + b1 b2) cos(delta_k * dl), and the full static
    intensity.  The latter keeps the quadrature term proportional to
    (a1 a2 - b1 b2); when the bands are imbalanced beyond 5% that term is
    no longer negligible against A_tilde and a warning states its size.
    """
    dl = g.delta_l
    s = p.a1 ** 2 + p.a2 ** 2 + p.b1 ** 2 + p.b2 ** 2
    pair_sum = p.a1 * p.a2 + p.b1 * p.b2
    pair_diff = p.a1 * p.a2 - p.b1 * p.b2
    if pair_sum > 0 and abs(pair_diff) / pair_sum > 0.05:
        warnings.warn(
            "band imbalance |a1a2-b1b2|/(a1a2+b1b2) = "
            f"{abs(pair_diff) / pair_sum:.3f} > 0.05; the quadrature fringe term "
            f"(amplitude {2 * abs(pair_diff):.3g}) is not negligible against the "
            f"principal amplitude {2 * pair_sum:.3g}",
            BandImbalanceWarning, stacklevel=2)
    a_tilde = 2.0 * pair_sum * math.cos(p.delta_k * dl)
    intensity = (s + 2.0 * p.a1 * p.a2 * math.cos(p.k_plus * dl)
                 + 2.0 * p.b1 * p.b2 * math.cos(p.k_minus * dl))
    return EnvelopeResult(s, a_tilde, intensity)


def envelope_peak_to_peak(p: DualBandParams, delta_l) -> np.ndarray:
    """Peak-to-peak fringe amplitude versus path imbalance.

    At each delta_l the fast fringe sweeps cos/sin of k_mean*dl while the
    band-splitting phase delta_k*dl is effectively frozen, so the swing is
    2 sqrt(P^2 + Q^2) with P, Q the two quadrature amplitudes.
    """
    dl = np.asarray(delta_l, dtype=float)
    pair_sum = p.a1 * p.a2 + p.b1 * p.b2
    pair_diff = p.a1 * p.a2 - p.b1 * p.b2
    pp = 2.0 * pair_sum * np.cos(p.delta_k * dl)
    qq = 2.0 * pair_diff * np.sin(p.delta_k * dl)
    return 2.0 * np.hypot(pp, qq)


@dataclass(frozen=True)
class EnvelopeFit:
    delta_k: float          # 1/m
    delta_nu_hz: float
    amplitude: float        # fitted peak-to-peak at the envelope maximum
    phase: float            # radians, offset of the envelope cosine
    rms_residual: float


def envelope_fit(samples, n0: float = 1.0) -> EnvelopeFit:
    """Recover the band wave-number splitting from a peak-to-peak scan.

    Fits p2p^2 = c0 + R cos(2 delta_k x + phi), which is linear in the
    unknowns at fixed delta_k; a coarse grid over delta_k picks the basin
    and a bounded polish refines it.  delta_nu = delta_k * c / (2 pi n0)
    assumes the scan medium has negligible dispersion (an air delay line).
    """
    pts = [(float(x), float(y)) for x, y in samples]
    if len(pts) < 5:
        raise InsufficientDataError(f"need >= 5 samples, got {len(pts)}")
    x = np.array([a for a, _ in pts])
    y = np.array([b for _, b in pts]) ** 2
    span = float(np.ptp(x))
    if span <= 0:
        raise FitError("all samples at the same path imbalance")
    if np.max(np.abs(y)) <= 0:
        raise FitError("zero-amplitude envelope data")

    def sse(dk: float):
        design = np.column_stack([np.ones_like(x), np.cos(2 * dk * x), np.sin(2 * dk * x)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ coef
        return float(r @ r), coef

    # envelope must complete >= half a period over the span, and the
    # modulation frequency 2*delta_k must stay below the sampling Nyquist
    # limit: on a uniform grid every frequency above it has an exact alias
    # below it, so admitting both makes the fit a coin toss
    dk_lo = 0.5 * math.pi / span
    dk_hi = 0.5 * math.pi / max(float(np.median(np.diff(np.sort(x)))), 1e-12)
    grid = np.linspace(dk_lo, dk_hi, 2048)
    errs = [sse(dk)[0] for dk in grid]
    best = int(np.argmin(errs))
    res = optimize.minimize_scalar(
        lambda dk: sse(dk)[0],
        bounds=(grid[max(best - 2, 0)], grid[min(best + 2, len(grid) - 1)]),
        method="bounded")
    dk = float(res.x)
    final_err, coef = sse(dk)
    c0, cc, cs = coef
    r_amp = math.hypot(cc, cs)
    if r_amp < 1e-9 * max(abs(c0), 1e-300) or r_amp <= 0:
        raise FitError("fitted envelope modulation is numerically zero")
    if span < 0.5 * math.pi / dk:
        raise FitError(
            f"scan span {span:.3g} m covers less than half an envelope period at "
            f"the fitted delta_k {dk:.3g} 1/m")
    # p2p^2 = c0 + R cos(2 dk x + phi); at the envelope peak p2p^2 = c0 + R
    amplitude = math.sqrt(max(c0 + r_amp, 0.0))
    delta_nu = dk * C_LIGHT / (2.0 * math.pi * n0)
    return EnvelopeFit(dk, delta_nu, amplitude, math.atan2(-cs, cc),
                       math.sqrt(final_err / len(pts)))


def single_band_residual(g: InterferometerGeometry, dl_ro_drift_m: float,
                         dl_wol_drift_m: float) -> float:
    """Residual phase left by a one-frequency lock after path drifts.

    The lock pins k_lo * (L_ro + L_wol) while the physical phase walks with
    k_ro and k_wo, so the wave-number differences multiply the drifts.
    """
    return ((g.k_ro - g.k_lo) * dl_ro_drift_m
            + (g.k_wo - g.k_lo) * dl_wol_drift_m)


def thermal_drift(length_m: float, dt_kelvin: float, expansion_coeff: float) -> float:
    """Path-length change of a fiber of given length under a temperature step."""
    if length_m < 0:
        raise ParameterError("length_m must be >= 0")
    return length_m * expansion_coeff * dt_kelvin


@dataclass(frozen=True)
class LockLoopConfig:
    """Two-actuator lock: a fast low-stroke loop always on, a slow
    high-stroke loop that corrects between entanglement windows and holds
    during them.

    Noise enters as white phase jitter (PSD `white_noise_rad_per_sqrt_hz`)
    plus a temperature random walk mapped through a rad/K coefficient.
    When the slow actuator command leaves its stroke the lock is declared
    lost for `relock_dead_time_s` and re-centered.
    """
    fast_loop_gain: float = 0.25
    slow_loop_gain: float = 0.1
    fast_actuator_stroke_rad: float = 2.5
    slow_actuator_stroke_rad: float = 60.0
    relock_threshold_rad: float = 1.2
    mot_phase_s: float = 0.012
    entangle_phase_s: float = 0.006
    white_noise_rad_per_sqrt_hz: float = 0.0
    drift_rad_per_k: float = 0.0
    temp_walk_k_per_sqrt_s: float = 0.0
    relock_dead_time_s: float = 2.0
    time_step_s: float = 1e-3

    def __post_init__(self):
        for nm in ("fast_loop_gain", "slow_loop_gain"):
            if not (0.0 < getattr(self, nm) < 2.0):
                raise ParameterError(f"{nm} must be in (0, 2)")
        for nm in ("fast_actuator_stroke_rad", "slow_actuator_stroke_rad",
                   "relock_threshold_rad", "mot_phase_s", "entangle_phase_s",
                   "relock_dead_time_s", "time_step_s"):
            if getattr(self, nm) <= 0:
                raise ParameterError(f"{nm} must be > 0")
        # the discrete fast loop must oversample its own closed-loop bandwidth
        # (f_c ~ gain / (2 pi dt)): gain <= 2 pi / 10 keeps dt <= 1/(10 f_c)
        if self.fast_loop_gain > 2.0 * math.pi / 10.0:
            raise ParameterError(
                "time step too coarse for the fast loop: fast_loop_gain must be "
                f"<= {2 * math.pi / 10:.3f} so the step resolves the loop bandwidth")


@dataclass
class PhaseTrajectory:
    t: np.ndarray
    residual_phase: np.ndarray
    locked: np.ndarray
    relock_count: int

    @property
    def residual_rms(self) -> float:
        """RMS of the residual phase over locked samples only."""
        if not np.any(self.locked):
            return float("nan")
        r = self.residual_phase[self.locked]
        return float(np.sqrt(np.mean(r ** 2)))


def simulate_lock(cfg: LockLoopConfig, p: DualBandParams, g: InterferometerGeometry,
                  duration_s: float, seed: int) -> PhaseTrajectory:
    """Time-stepped simulation of the two-loop stabilization.

    The disturbance is integrated white jitter plus a temperature random
    walk scaled by the configured rad/K coefficient.  The fast actuator
    tracks every step; the slow actuator updates only during preparation
    windows of the duty schedule and holds during entanglement windows.
    Slow-actuator saturation or loss of fringe triggers a relock dead time
    during which the phase runs free and samples are flagged unlocked.
    Deterministic for a fixed seed.
    """
    if duration_s <= 0:
        raise ParameterError("duration_s must be > 0")
    dt = cfg.time_step_s
    n = int(round(duration_s / dt))
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFF, 0x10CC]))
    white_sigma = cfg.white_noise_rad_per_sqrt_hz * math.sqrt(0.5 / dt)
    jitter = rng.normal(0.0, 1.0, size=n) * white_sigma
    temp_steps = rng.normal(0.0, 1.0, size=n) * (cfg.temp_walk_k_per_sqrt_s * math.sqrt(dt))

    t = np.arange(n) * dt
    residual = np.zeros(n)
    locked = np.ones(n, dtype=bool)
    relock_count = 0

    cycle = cfg.mot_phase_s + cfg.entangle_phase_s
    temp = 0.0
    drift = 0.0
    fast = 0.0
    slow = 0.0
    dead_until = -1.0
    reacquire = False

    for i in range(n):
        temp += temp_steps[i]
        drift = cfg.drift_rad_per_k * temp
        now = t[i]
        disturbance = drift + jitter[i]
        if now < dead_until:
            locked[i] = False
            residual[i] = disturbance - fast - slow
            continue
        if reacquire:
            # the relock completes at the end of the dead window: the slow
            # actuator is re-centered on whatever the drift has become,
            # otherwise the loop would trip again immediately on re-engage
            slow = drift
            fast = 0.0
            reacquire = False
        err = disturbance - fast - slow
        in_prep = (now % cycle) < cfg.mot_phase_s
        fast += cfg.fast_loop_gain * err
        if in_prep:
            # slow loop absorbs the fast actuator's standing command
            slow += cfg.slow_loop_gain * fast
            fast -= cfg.slow_loop_gain * fast
        if abs(fast) > cfg.fast_actuator_stroke_rad:
            fast = math.copysign(cfg.fast_actuator_stroke_rad, fast)
        err = disturbance - fast - slow
        residual[i] = err
        if abs(slow) > cfg.slow_actuator_stroke_rad or abs(err) > cfg.relock_threshold_rad:
            relock_count += 1
            dead_until = now + cfg.relock_dead_time_s
            locked[i] = False
            reacquire = True
    return PhaseTrajectory(t, residual, locked, relock_count)


def visibility_from_phase(traj: PhaseTrajectory) -> float:
    """Fringe visibility left by the residual phase, |<exp(i phi)>|.

    Unlocked (relock) samples are included, weighted by their duty time,
    which is how re-locking eats into the observed visibility.
    """
    if traj.residual_phase.size == 0:
        raise InsufficientDataError("empty trajectory")
    return float(np.abs(np.mean(np.exp(1j * traj.residual_phase))))


def imbalance_visibility(i1: float, i2: float) -> float:
    """Two-beam interference visibility penalty 2 sqrt(I1 I2)/(I1+I2)."""
    if i1 < 0 or i2 < 0:
        raise ParameterError("intensities must be >= 0")
    if i1 + i2 == 0:
        raise ParameterError("at least one intensity must be positive")
    return 2.0 * math.sqrt(i1 * i2) / (i1 + i2)
