"""Calibrated scenario presets.

Six distance presets cover the fiber-spool link from the local bench to
420 km, each carrying the measured loss budget, conversion and filter
chain, detector parameters, arrival-time mismatch, and a stabilization
noise profile whose 40 s trajectory lands the residual RMS near 7 degrees
and the phase visibility inside the observed band.  Two bench presets
configure the single-node autocorrelation check, with and without a
calibrated background floor.

Every number here is a frozen calibration output; the test suite pins the
observables derived from them, so treat edits as recalibrations.
"""

from __future__ import annotations

from .budget import DetectorParams, FiberSegment, LinkParams
from .errors import ParameterError
from .phaselock import LockLoopConfig
from .protocol import Scenario

# per-trial excitation probability of each node's write pulse
CHI = 0.06

# write-out chain from the source to the long fiber: conversion device,
# filter stack (etalon, grating, bandpasses), and collection optics
QFC_EFFICIENCY = 0.44
FILTER_TRANSMISSION = 0.63
COLLECTION_EFFICIENCY = 0.505

# broadband conversion noise at the fiber input and the fraction of it
# that survives the narrowband filter stack
QFC_NOISE_RATE_HZ = 3200.0
NOISE_BAND_FACTOR = 0.28

# heralding detectors at the midpoint station; the two differ by design
_D1 = DetectorParams(efficiency=0.60, dark_rate_hz=0.9)
_D2 = DetectorParams(efficiency=0.30, dark_rate_hz=0.575)

# memory read-out: intrinsic retrieval and the local detection chain
ETA_R = 0.25
LOCAL_DETECTOR_EFFICIENCY = 0.712

# field indistinguishability of the write-out and read-out photons
ETA_WO = 0.9475
ETA_RO = 0.9195

# distance -> (total two-arm fiber loss in dB, write/read arrival
# mismatch in seconds, scenario seed)
_DISTANCE_TABLE = {
    20.0: (8.0, 1.47e-9, 3),
    120.0: (26.7, 2.07e-9, 4),
    220.0: (43.3, 1.81e-9, 4),
    320.0: (61.2, 0.50e-9, 3),
    420.0: (78.7, 7.56e-9, 1),
}
_ZERO_KM = (2.22e-9, 3)

# Stabilization noise profiles.  The white level sets the locked jitter
# (about 7 degrees RMS); the temperature walk through the drift
# coefficient sets how often a gust saturates the fast actuator and
# forces a relock, which is what eats visibility at the longer spans.
_LOCK_TABLE = {
    0.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.28, relock_threshold_rad=0.48,
        white_noise_rad_per_sqrt_hz=0.00647, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=0.7759),
    20.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.28, relock_threshold_rad=0.48,
        white_noise_rad_per_sqrt_hz=0.00635, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=0.9483),
    120.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.28, relock_threshold_rad=0.48,
        white_noise_rad_per_sqrt_hz=0.00624, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=1.0776),
    220.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.28, relock_threshold_rad=0.48,
        white_noise_rad_per_sqrt_hz=0.00612, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=1.2069),
    320.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.30, relock_threshold_rad=0.50,
        white_noise_rad_per_sqrt_hz=0.00607, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=1.25),
    420.0: LockLoopConfig(
        fast_actuator_stroke_rad=0.32, relock_threshold_rad=0.52,
        white_noise_rad_per_sqrt_hz=0.00593, drift_rad_per_k=1.16,
        temp_walk_k_per_sqrt_s=1.3793),
}


def distance_preset(distance_km: float) -> Scenario:
    """Scenario for one fiber-spool distance of the converted link.

    Both arms carry half the distance and half the quoted loss; the
    conversion, filter, and detector parameters are shared across
    distances, as in the experiment they model.
    """
    if distance_km not in _DISTANCE_TABLE:
        raise ParameterError(
            f"no distance preset for {distance_km} km; "
            f"available: {sorted(_DISTANCE_TABLE)}")
    loss_db, delta_t, seed = _DISTANCE_TABLE[distance_km]
    seg = (FiberSegment(length_km=distance_km / 2.0,
                        attenuation_db_per_km=loss_db / distance_km),)
    link = LinkParams(
        chi=CHI,
        qfc_efficiency=QFC_EFFICIENCY,
        qfc_noise_rate_hz=QFC_NOISE_RATE_HZ,
        filter_transmission=FILTER_TRANSMISSION,
        collection_efficiency=COLLECTION_EFFICIENCY,
        noise_band_factor=NOISE_BAND_FACTOR,
        segments_a=seg, segments_b=seg,
        detector_d1=_D1, detector_d2=_D2,
        distance_km=distance_km)
    return Scenario(
        link=link, lock=_LOCK_TABLE[distance_km], seed=seed,
        eta_r=ETA_R, local_detector_efficiency=LOCAL_DETECTOR_EFFICIENCY,
        delta_t_s=delta_t, eta_wo=ETA_WO, eta_ro=ETA_RO,
        label=f"{distance_km:g}km")


def bench_preset() -> Scenario:
    """Local two-node bench without the conversion stage.

    The write-out fields meet the splitter directly, so the collection
    chain is short and both heralding detectors run at the same
    efficiency.  The noise floor is probe scatter, not conversion noise,
    and it dominates the dark rates by three orders of magnitude.
    """
    delta_t, seed = _ZERO_KM
    link = LinkParams(
        chi=CHI,
        qfc_efficiency=1.0,
        qfc_noise_rate_hz=0.0,
        probe_raman_rate_hz=6740.0,
        filter_transmission=0.92,
        collection_efficiency=0.764,
        noise_band_factor=1.0,
        detector_d1=DetectorParams(efficiency=0.75, dark_rate_hz=0.9),
        detector_d2=DetectorParams(efficiency=0.75, dark_rate_hz=0.575),
        distance_km=0.0)
    return Scenario(
        link=link, lock=_LOCK_TABLE[0.0], seed=seed,
        eta_r=ETA_R, local_detector_efficiency=LOCAL_DETECTOR_EFFICIENCY,
        delta_t_s=delta_t, eta_wo=ETA_WO, eta_ro=ETA_RO,
        label="0km")


def g2_preset(background: bool = False) -> Scenario:
    """Single-node autocorrelation bench.

    One node is pumped, its write-out field is split 50:50 onto the two
    herald detectors, and the read-out conditions the statistics.  The
    background variant adds a flat per-gate click floor on both herald
    detectors, calibrated to lift the conditioned autocorrelation to the
    observed background-limited value.
    """
    floor_hz = 143500.0 if background else 0.0
    link = LinkParams(
        chi=CHI,
        collection_efficiency=0.425,
        detector_d1=DetectorParams(efficiency=1.0, dark_rate_hz=floor_hz),
        detector_d2=DetectorParams(efficiency=1.0, dark_rate_hz=floor_hz),
        distance_km=0.0)
    return Scenario(
        link=link, lock=None, seed=7,
        eta_r=ETA_R, local_detector_efficiency=0.40,
        eta_wo=ETA_WO, eta_ro=ETA_RO,
        label="g2-background" if background else "g2-clean")


_FACTORIES = {
    "0km": bench_preset,
    "20km": lambda: distance_preset(20.0),
    "120km": lambda: distance_preset(120.0),
    "220km": lambda: distance_preset(220.0),
    "320km": lambda: distance_preset(320.0),
    "420km": lambda: distance_preset(420.0),
    "g2-clean": lambda: g2_preset(False),
    "g2-background": lambda: g2_preset(True),
}


def list_presets() -> tuple:
    return tuple(_FACTORIES)


def get_preset(name: str) -> Scenario:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ParameterError(
            f"unknown preset {name!r}; available: {', '.join(_FACTORIES)}") from None
    return factory()
