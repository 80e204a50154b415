"""Monte Carlo trial engine for the heralded memory-memory link.

A trial writes both nodes, sends the scattered fields through the lossy
arms to the midpoint splitter, forms a herald from threshold detectors
with noise, and on a herald retrieves after a fixed delay and interferes
the read-out fields at the analyzer splitter.

Two engines share one parameterization.  The analytic-amplitude engine
samples excitation sectors classically and carries the single-excitation
coherence as an amplitude weight on the read-out fringe, applying exact
few-photon splitter statistics to multi-photon sectors.  The fock-oracle
engine evaluates the same pipeline on a truncated density matrix and
samples only the final counts.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import analysis, fock
from .budget import (LinkParams, fiber_transmittance, noise_click_prob,
                     signal_click_prob)
from .errors import DegenerateConditionError, InsufficientDataError, ParameterError
from .phaselock import (DualBandParams, InterferometerGeometry, LockLoopConfig,
                        simulate_lock)

ENGINES = ("analytic-amplitude", "fock-oracle")
READOUT_BASES = ("interference", "number")

# fixed shard size for counter-keyed RNG streams; results depend only on
# (seed, trial index), so merging shards is associative and the total is
# independent of how shards are grouped into calls
SHARD_SIZE = 1 << 15

# excitation sectors enumerated exactly when conditioning on a herald;
# the neglected tail is O(chi^(cap+1)) of the heralded weight
_SECTOR_CAP = 6

_DEFAULT_THETAS = tuple(np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False))


@dataclass(frozen=True)
class Scenario:
    """Full configuration of one simulated entanglement run."""
    link: LinkParams
    lock: LockLoopConfig | None = None
    phase_sigma_rad: float = 0.0
    theta_list: tuple = _DEFAULT_THETAS
    n_trials_per_theta: int = 1000
    seed: int = 0
    engine: str = "analytic-amplitude"
    read_delay_s: float = 750e-9
    eta_r: float = 0.25
    local_detector_efficiency: float = 1.0
    delta_t_s: float = 0.0
    tau_s: float = analysis.DEFAULT_TAU_S
    eta_wo: float = 1.0
    eta_ro: float = 1.0
    readout_basis: str = "interference"
    lock_duration_s: float = 40.0
    n_herald_trials: int = 0
    label: str = ""

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ParameterError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.readout_basis not in READOUT_BASES:
            raise ParameterError(f"readout_basis must be one of {READOUT_BASES}")
        for nm in ("eta_r", "local_detector_efficiency", "eta_wo", "eta_ro"):
            v = getattr(self, nm)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{nm} must be in [0, 1], got {v}")
        if self.n_trials_per_theta < 0:
            raise ParameterError("n_trials_per_theta must be >= 0")
        if self.tau_s <= 0 or self.read_delay_s < 0:
            raise ParameterError("tau_s must be > 0 and read_delay_s >= 0")
        if self.phase_sigma_rad < 0:
            raise ParameterError("phase_sigma_rad must be >= 0")
        object.__setattr__(self, "theta_list", tuple(float(t) for t in self.theta_list))

    @property
    def readout_q(self) -> float:
        """Per-excitation probability of a read-out click."""
        return self.eta_r * self.local_detector_efficiency

    @property
    def fringe_weight(self) -> float:
        """Amplitude weight of the interference term: photon overlap times
        the temporal mode-overlap factor."""
        return (math.sqrt(self.eta_wo * self.eta_ro)
                * analysis.v_mismatch(self.delta_t_s, self.tau_s))


@dataclass
class TrialRecord:
    herald: str | None          # None, "D1" or "D2" (exclusive; doubles veto)
    herald_source: str | None   # "signal" or "noise", defined when heralded
    excitations: tuple          # (n_A, n_B) as sampled
    readout_clicks: tuple | None   # (E, F) raw booleans, interference basis
    node_clicks: tuple | None      # (A, B) raw booleans, number basis
    theta: float
    delta_phi: float
    d1_click: bool = False      # raw, before the double-click veto
    d2_click: bool = False


@dataclass
class FringeData:
    """Per-analyzer-phase, per-herald-detector count tallies."""
    thetas: np.ndarray
    counts_e: dict
    counts_f: dict
    coincidences: dict
    trials: dict

    detectors = ("D1", "D2")

    def visibility(self, detector: str) -> analysis.FitResult:
        return analysis.fit_sinusoid(self.thetas, self.counts_e[detector])


def _rng(seed: int, *key) -> np.random.Generator:
    """Counter-keyed stream: up to three 32-bit tags packed beside the seed."""
    words = [seed & 0xFFFFFFFF] + [k & 0xFFFFFFFF for k in key]
    if len(words) > 4:
        raise ParameterError("at most three stream tags")
    words += [0] * (4 - len(words))
    k0 = (words[0] << 32) | words[1]
    k1 = (words[2] << 32) | words[3]
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))


# -- phase-noise model ---------------------------------------------------

def _lock_geometry(distance_km: float) -> InterferometerGeometry:
    arm = max(1.0, distance_km * 1000.0 / 2.0)
    return InterferometerGeometry(l1_m=arm + 0.25, l2_m=arm)


_LOCK_BAND = DualBandParams(nu0_hz=195e12, delta_nu_hz=678.334e6)


_pool_cache: dict = {}


def phase_pool(s: Scenario) -> np.ndarray | None:
    """Residual-phase sample pool for per-trial draws.

    With a lock configuration, runs the stabilization simulation and keeps
    the samples inside entanglement windows, relock dead times included --
    a trial taken while the lock is hunting still lands in the data.
    Returns None when a fixed Gaussian sigma is configured instead.
    """
    if s.lock is None:
        return None
    key = (dataclasses.astuple(s.lock), s.seed, s.lock_duration_s,
           s.link.distance_km)
    if key not in _pool_cache:
        # same seed as a direct stabilization run of this scenario, so the
        # fringe smear uses the documented trajectory; the lock stream is
        # separated from trial streams by its own Philox key word
        traj = simulate_lock(s.lock, _LOCK_BAND, _lock_geometry(s.link.distance_km),
                             s.lock_duration_s, seed=s.seed)
        cycle = s.lock.mot_phase_s + s.lock.entangle_phase_s
        in_entangle = np.mod(traj.t, cycle) >= s.lock.mot_phase_s
        pool = traj.residual_phase[in_entangle]
        if pool.size == 0:
            raise InsufficientDataError("lock trajectory has no entanglement windows")
        _pool_cache[key] = pool
    return _pool_cache[key]


def _draw_phases(s: Scenario, pool, n: int, rng) -> np.ndarray:
    if pool is not None:
        return pool[rng.integers(0, pool.size, size=n)]
    if s.phase_sigma_rad == 0.0:
        return np.zeros(n)
    return rng.normal(0.0, s.phase_sigma_rad, size=n)


# -- exact few-photon splitter statistics --------------------------------

@lru_cache(maxsize=None)
def _quantum_split(j: int, k: int) -> tuple:
    """P(m photons exit port E) for Fock |j, k> on a balanced splitter."""
    n = j + k
    if n == 0:
        return (1.0,)
    kern = fock._bs_kernel(n, 0.5, 0.0)
    dim = n + 1
    amps = kern[:, j * dim + k]
    probs = np.array([abs(amps[m * dim + (n - m)]) ** 2 for m in range(dim)])
    probs = probs / probs.sum()
    return tuple(float(p) for p in probs)


@lru_cache(maxsize=None)
def _binomial_split(n: int) -> tuple:
    return tuple(math.comb(n, m) * 0.5 ** n for m in range(n + 1))


# -- herald class table ---------------------------------------------------

@dataclass(frozen=True)
class _ClassTable:
    """Exact conditional distribution over heralded trial classes.

    One row per (detector, source, n_A, n_B, coherent).  `coherent` marks
    the single-excitation sector heralded by its own arrived photon, the
    only class carrying a fringe.
    """
    det: np.ndarray       # 0 -> D1, 1 -> D2
    source: np.ndarray    # 0 -> signal, 1 -> noise
    n_a: np.ndarray
    n_b: np.ndarray
    coherent: np.ndarray
    cond_prob: np.ndarray     # P(row | exclusive herald)
    p_excl: tuple             # exclusive herald probability per detector
    p_click: tuple            # marginal click probability per detector
    p_signal: tuple           # P(>=1 photon detected at D) per detector
    p_noise: tuple            # noise firing probability per detector


def _arm_transmission(link: LinkParams) -> dict:
    """Source-to-splitter transmission per arm (detector efficiency excluded)."""
    return {arm: (link.qfc_efficiency * link.filter_transmission
                  * link.collection_efficiency
                  * fiber_transmittance(link.segments(arm)))
            for arm in ("A", "B")}


@lru_cache(maxsize=None)
def _binom_pmf(n: int, p: float) -> tuple:
    return tuple(math.comb(n, k) * p ** k * (1.0 - p) ** (n - k)
                 for k in range(n + 1))


def herald_class_table(link: LinkParams) -> _ClassTable:
    """Conditional herald-class distribution, exact within the sector cap.

    Photons surviving each arm arrive at the midpoint splitter fully
    indistinguishable and split with the two-mode interference statistics;
    threshold detection with dark firing follows on each output.  The
    write-out mode overlap enters the heralded coherence, not the herald
    rates, where its effect is second order in chi.
    """
    chi = link.chi
    t = _arm_transmission(link)
    eta = {d: link.detector(d).efficiency for d in ("D1", "D2")}
    nu = {d: noise_click_prob(link, d) for d in ("D1", "D2")}

    ns = np.arange(_SECTOR_CAP + 1)
    p_th = (1.0 - chi) * chi ** ns

    rows = {k: [] for k in ("det", "source", "n_a", "n_b", "coherent", "prob")}

    def add(det_i, src_i, a, b, coh, prob):
        if prob <= 0.0:
            return
        rows["det"].append(det_i)
        rows["source"].append(src_i)
        rows["n_a"].append(a)
        rows["n_b"].append(b)
        rows["coherent"].append(coh)
        rows["prob"].append(prob)

    for det_i, (d, o) in enumerate((("D1", "D2"), ("D2", "D1"))):
        no_o = 1.0 - nu[o]
        for a in range(_SECTOR_CAP + 1):
            for b in range(_SECTOR_CAP + 1 - a):
                p_ab = p_th[a] * p_th[b]
                # P(photon detection at d) and P(nothing anywhere), summed
                # over arrivals and their interference split at the splitter
                hit_d_quiet_o = 0.0
                quiet_both = 0.0
                for ka, wa in enumerate(_binom_pmf(a, t["A"])):
                    for kb, wb in enumerate(_binom_pmf(b, t["B"])):
                        w_arr = wa * wb
                        if w_arr <= 0.0:
                            continue
                        split = _quantum_split(ka, kb)
                        n_tot = ka + kb
                        for m1, pq in enumerate(split):
                            if pq <= 0.0:
                                continue
                            m_d, m_o = ((m1, n_tot - m1) if det_i == 0
                                        else (n_tot - m1, m1))
                            miss_d = (1.0 - eta[d]) ** m_d
                            miss_o = (1.0 - eta[o]) ** m_o
                            hit_d_quiet_o += w_arr * pq * (1.0 - miss_d) * miss_o
                            quiet_both += w_arr * pq * miss_d * miss_o
                # >=1 photon at d, none at o, no noise at o
                add(det_i, 0, a, b, a + b == 1, p_ab * no_o * hit_d_quiet_o)
                # noise fires d, no photon detected anywhere, no noise at o
                add(det_i, 1, a, b, False, p_ab * no_o * nu[d] * quiet_both)

    det = np.array(rows["det"], dtype=np.int8)
    prob = np.array(rows["prob"])
    p_excl = (float(prob[det == 0].sum()), float(prob[det == 1].sum()))
    if prob.sum() <= 0:
        raise ParameterError("herald probability is zero for this link")

    # marginal per-detector statistics (no veto), exact in closed form
    p_sig, p_clk = [], []
    for d in ("D1", "D2"):
        ps = signal_click_prob(link, d)
        p_sig.append(ps)
        p_clk.append(1.0 - (1.0 - ps) * (1.0 - nu[d]))

    return _ClassTable(det=det, source=np.array(rows["source"], dtype=np.int8),
                       n_a=np.array(rows["n_a"], dtype=np.int64),
                       n_b=np.array(rows["n_b"], dtype=np.int64),
                       coherent=np.array(rows["coherent"], dtype=bool),
                       cond_prob=prob / prob.sum(), p_excl=p_excl,
                       p_click=(p_clk[0], p_clk[1]), p_signal=(p_sig[0], p_sig[1]),
                       p_noise=(nu["D1"], nu["D2"]))


def _sample_port_split(j, k, rng):
    """Photons at the first splitter output for Fock inputs (j, k).

    Fully indistinguishable inputs: cross-source pairs interfere with the
    exact two-mode statistics.  When either input is vacuum the quantum
    split reduces to a binomial, sampled directly.
    """
    m_e = np.zeros(j.shape, dtype=np.int64)
    single = (j == 0) | (k == 0)
    if np.any(single):
        m_e[single] = rng.binomial(j[single] + k[single], 0.5)
    both = ~single
    if np.any(both):
        for a, b in {(int(x), int(y)) for x, y in zip(j[both], k[both])}:
            mask = (j == a) & (k == b)
            probs = _quantum_split(a, b)
            m_e[mask] = rng.choice(len(probs), size=int(mask.sum()), p=probs)
    return m_e


# -- read-out sampling -----------------------------------------------------

def _route_classical(j, k, w2, rng):
    """Sample photons exiting port E for Fock pairs (j, k).

    Cross-node pairs interfere with probability w2 (the squared mode
    overlap) and route independently otherwise; same-node photons always
    route independently, which for a balanced splitter is exact.
    """
    n = j + k
    m_e = np.zeros(j.shape, dtype=np.int64)
    quantum = (j > 0) & (k > 0) & (rng.random(j.shape) < w2)
    for pair in {(int(a), int(b)) for a, b in zip(j.ravel(), k.ravel())}:
        a, b = pair
        if a + b == 0:
            continue
        mask = (j == a) & (k == b)
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        qm = mask & quantum
        nq = int(qm.sum())
        if nq:
            probs = _quantum_split(a, b)
            m_e[qm] = rng.choice(len(probs), size=nq, p=probs)
        cm = mask & ~quantum
        nc = int(cm.sum())
        if nc:
            m_e[cm] = rng.binomial(a + b, 0.5, size=nc)
    return m_e, n - m_e


def _sample_readout(s: Scenario, table: _ClassTable, idx, theta, delta, rng):
    """Sample read-out clicks for heralded trials given their class rows.

    Returns (click_e, click_f) in the interference basis or
    (click_a, click_b) in the number basis.
    """
    q = s.readout_q
    a = table.n_a[idx]
    b = table.n_b[idx]
    coh = table.coherent[idx]
    sgn = np.where(table.det[idx] == 0, 1.0, -1.0)

    if s.readout_basis == "number":
        # analyzer splitter removed; per-node threshold detection
        node = rng.random(idx.shape) < 0.5   # collapse for the coherent class
        a_eff = np.where(coh, node.astype(np.int64), a)
        b_eff = np.where(coh, (~node).astype(np.int64), b)
        ca = rng.binomial(a_eff, q) > 0
        cb = rng.binomial(b_eff, q) > 0
        return ca, cb

    w = s.fringe_weight
    click_e = np.zeros(idx.shape, dtype=bool)
    click_f = np.zeros(idx.shape, dtype=bool)

    # coherent single-excitation class: one photon, fringed splitting
    if np.any(coh):
        n_coh = int(coh.sum())
        retrieved = rng.random(n_coh) < q
        p_e = 0.5 * (1.0 + sgn[coh] * w * np.cos(theta - delta[coh]))
        to_e = rng.random(n_coh) < p_e
        click_e[coh] = retrieved & to_e
        click_f[coh] = retrieved & ~to_e

    # classical sectors: thin excitations, route with pairwise interference
    cls = ~coh
    if np.any(cls):
        j = rng.binomial(a[cls], q)
        k = rng.binomial(b[cls], q)
        m_e, m_f = _route_classical(j, k, w * w, rng)
        click_e[cls] = m_e > 0
        click_f[cls] = m_f > 0

    return click_e, click_f


# -- unconditional passes --------------------------------------------------

@dataclass
class HeraldTally:
    n_trials: int
    click_d1: int = 0
    click_d2: int = 0
    signal_d1: int = 0
    signal_d2: int = 0
    noise_d1: int = 0
    noise_d2: int = 0
    excl_d1: int = 0
    excl_d2: int = 0
    double: int = 0

    @property
    def p_ent(self) -> float:
        """Per-detector click sum, matching the link-budget convention."""
        return (self.click_d1 + self.click_d2) / self.n_trials

    def snr(self, detector: str) -> float:
        s, n = ((self.signal_d1, self.noise_d1) if detector.upper() == "D1"
                else (self.signal_d2, self.noise_d2))
        return s / n if n else float("inf")

    def merge(self, other: "HeraldTally") -> "HeraldTally":
        out = HeraldTally(self.n_trials + other.n_trials)
        for f in ("click_d1", "click_d2", "signal_d1", "signal_d2",
                  "noise_d1", "noise_d2", "excl_d1", "excl_d2", "double"):
            setattr(out, f, getattr(self, f) + getattr(other, f))
        return out


def herald_tally(s: Scenario, n_trials: int, first_shard: int = 0) -> HeraldTally:
    """Vectorized unconditional herald statistics over sharded RNG streams."""
    link = s.link
    arm_t = _arm_transmission(link)
    eta1 = link.detector("D1").efficiency
    eta2 = link.detector("D2").efficiency
    nu1 = noise_click_prob(link, "D1")
    nu2 = noise_click_prob(link, "D2")
    out = HeraldTally(0)
    done = 0
    shard = first_shard
    while done < n_trials:
        m = min(SHARD_SIZE, n_trials - done)
        rng = _rng(s.seed, 0xE1, shard)
        n_a = rng.geometric(1.0 - link.chi, size=m) - 1
        n_b = rng.geometric(1.0 - link.chi, size=m) - 1
        k_a = rng.binomial(n_a, arm_t["A"])
        k_b = rng.binomial(n_b, arm_t["B"])
        m1 = _sample_port_split(k_a, k_b, rng)
        m2 = k_a + k_b - m1
        sig1 = rng.binomial(m1, eta1) > 0
        sig2 = rng.binomial(m2, eta2) > 0
        noi1 = rng.random(m) < nu1
        noi2 = rng.random(m) < nu2
        c1 = sig1 | noi1
        c2 = sig2 | noi2
        t = HeraldTally(m, click_d1=int(c1.sum()), click_d2=int(c2.sum()),
                        signal_d1=int(sig1.sum()), signal_d2=int(sig2.sum()),
                        noise_d1=int(noi1.sum()), noise_d2=int(noi2.sum()),
                        excl_d1=int((c1 & ~c2).sum()), excl_d2=int((c2 & ~c1).sum()),
                        double=int((c1 & c2).sum()))
        out = out.merge(t)
        done += m
        shard += 1
    return out


def run_trial(s: Scenario, rng) -> TrialRecord:
    """One unconditional trial, write pulse through read-out detection.

    Reference path for record streaming and spot checks; the scan and
    campaign entry points use the vectorized equivalents.
    """
    link = s.link
    chi = link.chi
    n_a = int(rng.geometric(1.0 - chi)) - 1 if chi > 0 else 0
    n_b = int(rng.geometric(1.0 - chi)) - 1 if chi > 0 else 0
    t = _arm_transmission(link)
    k_a = int(rng.binomial(n_a, t["A"])) if n_a else 0
    k_b = int(rng.binomial(n_b, t["B"])) if n_b else 0
    if k_a and k_b:
        probs = _quantum_split(k_a, k_b)
        m1 = int(rng.choice(len(probs), p=probs))
    else:
        m1 = int(rng.binomial(k_a + k_b, 0.5)) if k_a + k_b else 0
    det_counts = {
        "D1": int(rng.binomial(m1, link.detector("D1").efficiency)),
        "D2": int(rng.binomial(k_a + k_b - m1, link.detector("D2").efficiency)),
    }
    noi1 = rng.random() < noise_click_prob(link, "D1")
    noi2 = rng.random() < noise_click_prob(link, "D2")
    c1 = det_counts["D1"] > 0 or noi1
    c2 = det_counts["D2"] > 0 or noi2
    theta = s.theta_list[0] if s.theta_list else 0.0
    pool = phase_pool(s)
    delta = float(_draw_phases(s, pool, 1, rng)[0])

    herald = None
    source = None
    if c1 != c2:
        herald = "D1" if c1 else "D2"
        source = "signal" if det_counts[herald] > 0 else "noise"

    rec = TrialRecord(herald=herald, herald_source=source,
                      excitations=(n_a, n_b), readout_clicks=None,
                      node_clicks=None, theta=theta, delta_phi=delta,
                      d1_click=c1, d2_click=c2)
    if herald is None:
        return rec

    # read-out after the storage delay
    coherent = (n_a + n_b == 1) and source == "signal"
    q = s.readout_q
    if s.readout_basis == "number":
        ca = sum(rng.random() < q for _ in range(n_a)) > 0
        cb = sum(rng.random() < q for _ in range(n_b)) > 0
        rec.node_clicks = (bool(ca), bool(cb))
        return rec
    w = s.fringe_weight
    sgn = 1.0 if herald == "D1" else -1.0
    if coherent:
        if rng.random() < q:
            p_e = 0.5 * (1.0 + sgn * w * math.cos(theta - delta))
            ce = rng.random() < p_e
            rec.readout_clicks = (bool(ce), bool(not ce))
        else:
            rec.readout_clicks = (False, False)
        return rec
    j = sum(rng.random() < q for _ in range(n_a))
    k = sum(rng.random() < q for _ in range(n_b))
    if j > 0 and k > 0 and rng.random() < w * w:
        probs = _quantum_split(j, k)
        m_e = int(rng.choice(len(probs), p=probs))
    else:
        m_e = int(rng.binomial(j + k, 0.5)) if j + k else 0
    rec.readout_clicks = (m_e > 0, (j + k - m_e) > 0)
    return rec


# -- fringe scans -----------------------------------------------------------

def run_fringe_scan(s: Scenario) -> FringeData:
    """Scan the analyzer phase and tally read-out counts per herald detector.

    n_trials_per_theta counts heralded trials at each analyzer phase; the
    sampler conditions on the herald with the exact class distribution, so
    deep-loss links cost the same as local ones.  Deterministic for a
    fixed seed.
    """
    if not s.theta_list:
        raise ParameterError("theta_list must be non-empty")
    if s.engine == "fock-oracle":
        return _run_fringe_fock(s)
    table = herald_class_table(s.link)
    pool = phase_pool(s)
    thetas = np.array(s.theta_list)
    shape = (len(thetas),)
    counts_e = {"D1": np.zeros(shape, dtype=np.int64), "D2": np.zeros(shape, dtype=np.int64)}
    counts_f = {"D1": np.zeros(shape, dtype=np.int64), "D2": np.zeros(shape, dtype=np.int64)}
    coinc = {"D1": np.zeros(shape, dtype=np.int64), "D2": np.zeros(shape, dtype=np.int64)}
    trials = {"D1": np.zeros(shape, dtype=np.int64), "D2": np.zeros(shape, dtype=np.int64)}
    cum = np.cumsum(table.cond_prob)
    for it, theta in enumerate(thetas):
        done = 0
        shard = 0
        while done < s.n_trials_per_theta:
            m = min(SHARD_SIZE, s.n_trials_per_theta - done)
            rng = _rng(s.seed, 0xF1, it, shard)
            idx = np.searchsorted(cum, rng.random(m))
            delta = _draw_phases(s, pool, m, rng)
            ce, cf = _sample_readout(s, table, idx, theta, delta, rng)
            for d_i, d in enumerate(("D1", "D2")):
                sel = table.det[idx] == d_i
                trials[d][it] += int(sel.sum())
                counts_e[d][it] += int((ce & ~cf & sel).sum())
                counts_f[d][it] += int((cf & ~ce & sel).sum())
                coinc[d][it] += int((ce & cf & sel).sum())
            done += m
            shard += 1
    return FringeData(thetas=thetas, counts_e=counts_e, counts_f=counts_f,
                      coincidences=coinc, trials=trials)


def _fock_herald_state(s: Scenario, detector: str, cutoff: int = 4):
    """Click-conditioned joint memory state and herald probability.

    Exact truncated-space pipeline: two-mode-squeezed sources, arm loss,
    midpoint splitter, threshold herald with noise on the named detector,
    no-click veto on the other, multi-excitation dephasing.
    """
    if abs(s.fringe_weight - 1.0) > 1e-12:
        raise ParameterError("fock-oracle engine requires eta_wo = eta_ro = 1 "
                             "and delta_t = 0; partial overlap is analytic-only")
    link = s.link
    pre = _arm_transmission(link)
    st = fock.tensor_product(fock.tms_state(link.chi, cutoff),
                             fock.tms_state(link.chi, cutoff))
    # modes: [mem_A, wo_A, mem_B, wo_B]
    st = fock.apply_loss(st, 1, pre["A"])
    st = fock.apply_loss(st, 3, pre["B"])
    st = fock.beam_splitter(st, 1, 3, 0.5)
    d, o = ("D1", "D2") if detector.upper() == "D1" else ("D2", "D1")
    port = {"D1": 1, "D2": 3}
    p_click, st, _ = fock.measure_click(st, port[d], link.detector(d).efficiency,
                                        noise_click_prob(link, d), require="click")
    # the measured mode is traced out, shifting the other port's index
    other = port[o] - (1 if port[o] > port[d] else 0)
    p_other, _, st = fock.measure_click(st, other, link.detector(o).efficiency,
                                        noise_click_prob(link, o), require="noclick")
    # remaining modes are exactly [mem_A, mem_B]
    st = fock.dephase_multi_excitation(st, (0, 1), keep_total=1)
    return st, p_click * (1.0 - p_other)


def _fock_fringe_probs(s: Scenario, detector: str, thetas, cutoff: int = 4):
    """Exact P(E only), P(F only), P(coincidence) versus analyzer phase."""
    st0, p_herald = _fock_herald_state(s, detector, cutoff)
    q = s.readout_q
    p_e = np.empty(len(thetas))
    p_f = np.empty(len(thetas))
    p_c = np.empty(len(thetas))
    base = fock.apply_loss(fock.apply_loss(st0, 0, q), 1, q)
    for i, th in enumerate(thetas):
        st = fock.phase_shift(base, 0, th)
        st = fock.beam_splitter(st, 0, 1, 0.5)
        dim = st.cutoff + 1
        diag = np.einsum("ijij->ij", st.matrix.reshape(dim, dim, dim, dim)).real
        p_e[i] = float(diag[1:, 0].sum())
        p_f[i] = float(diag[0, 1:].sum())
        p_c[i] = float(diag[1:, 1:].sum())
    return p_e, p_f, p_c, p_herald


def _smear_fringe(thetas, values, v_p: float):
    """Apply the residual-phase visibility factor to an exact sinusoid."""
    th = np.asarray(thetas)
    X = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th)])
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    return coef[0] + v_p * (X[:, 1] * coef[1] + X[:, 2] * coef[2])


def _run_fringe_fock(s: Scenario) -> FringeData:
    thetas = np.array(s.theta_list)
    if s.phase_sigma_rad > 0:
        v_p = math.exp(-0.5 * s.phase_sigma_rad ** 2)
    elif s.lock is not None:
        pool = phase_pool(s)
        v_p = float(np.abs(np.mean(np.exp(1j * pool))))
    else:
        v_p = 1.0
    counts_e, counts_f, coinc, trials = {}, {}, {}, {}
    curves = {}
    zero = np.zeros(len(thetas))
    for d in ("D1", "D2"):
        try:
            p_e, p_f, p_c, p_herald = _fock_fringe_probs(s, d, thetas)
        except DegenerateConditionError:
            curves[d] = (0.0, zero, zero, zero)   # detector never heralds
            continue
        # p_e / p_f / p_c come from the click-conditioned state and are
        # already per-herald quantities
        curves[d] = (p_herald,
                     np.clip(_smear_fringe(thetas, p_e, v_p), 0, 1),
                     np.clip(_smear_fringe(thetas, p_f, v_p), 0, 1),
                     np.clip(p_c, 0, 1))
    tot = curves["D1"][0] + curves["D2"][0]
    if tot <= 0:
        raise DegenerateConditionError("no detector has a finite herald probability")
    for d in ("D1", "D2"):
        p_herald, pe, pf, pc = curves[d]
        counts_e[d] = np.zeros(len(thetas), dtype=np.int64)
        counts_f[d] = np.zeros(len(thetas), dtype=np.int64)
        coinc[d] = np.zeros(len(thetas), dtype=np.int64)
        trials[d] = np.zeros(len(thetas), dtype=np.int64)
        if p_herald == 0.0:
            continue
        for it in range(len(thetas)):
            rng = _rng(s.seed, 0xFC, it, 0 if d == "D1" else 1)
            n_d = rng.binomial(s.n_trials_per_theta, p_herald / tot)
            trials[d][it] = n_d
            rest = max(1.0 - pe[it] - pf[it] - pc[it], 0.0)
            probs = np.array([pe[it], pf[it], pc[it], rest])
            draw = rng.multinomial(n_d, probs / probs.sum())
            counts_e[d][it], counts_f[d][it], coinc[d][it] = draw[0], draw[1], draw[2]
    return FringeData(thetas=thetas, counts_e=counts_e, counts_f=counts_f,
                      coincidences=coinc, trials=trials)


# -- campaign ---------------------------------------------------------------

@dataclass
class CampaignRow:
    label: str
    distance_km: float
    n_herald_trials: int
    p_ent: float
    snr_d1: float
    snr_d2: float
    v_d1: float
    v_d1_sigma: float
    v_d2: float
    v_d2_sigma: float
    pij: analysis.PijEstimate | None
    c_d1: float
    c_d1_sigma: float
    c_d2: float
    c_d2_sigma: float


def _auto_herald_trials(s: Scenario, table: _ClassTable) -> int:
    p = table.p_excl[0] + table.p_excl[1]
    want = int(2e4 / max(p, 1e-12))
    return int(min(max(want, 1 << 16), 2e7))


def run_campaign(scenarios) -> list:
    """Full statistics for each scenario: herald budget, fringes, excitation
    statistics, concurrence.  Bit-identical for fixed seeds regardless of
    how the sharded passes are grouped."""
    if not scenarios:
        raise ParameterError("need at least one scenario")
    out = []
    for s in scenarios:
        n_fringe = s.n_trials_per_theta * len(s.theta_list)
        if n_fringe == 0:
            continue
        table = herald_class_table(s.link)
        n_h = s.n_herald_trials or _auto_herald_trials(s, table)
        tally = herald_tally(s, n_h)
        fringe = run_fringe_scan(s)
        fits = {d: fringe.visibility(d) for d in ("D1", "D2")}

        s_num = replace(s, readout_basis="number", engine="analytic-amplitude",
                        theta_list=(0.0,),
                        n_trials_per_theta=max(n_fringe, 2000))
        recs = collect_heralded(s_num, s_num.n_trials_per_theta)
        pij = analysis.estimate_pij(_ArrayRecords(recs), min_heralds=100)
        cs = {}
        for d in ("D1", "D2"):
            fit = fits[d]
            est = analysis.concurrence(pij.p00, pij.p01, pij.p10, pij.p11,
                                       fit.visibility,
                                       sigmas={"v": fit.visibility_sigma, **pij.sigma})
            cs[d] = est
        out.append(CampaignRow(
            label=s.label, distance_km=s.link.distance_km, n_herald_trials=n_h,
            p_ent=tally.p_ent, snr_d1=tally.snr("D1"), snr_d2=tally.snr("D2"),
            v_d1=fits["D1"].visibility, v_d1_sigma=fits["D1"].visibility_sigma,
            v_d2=fits["D2"].visibility, v_d2_sigma=fits["D2"].visibility_sigma,
            pij=pij, c_d1=cs["D1"].concurrence, c_d1_sigma=cs["D1"].sigma_c,
            c_d2=cs["D2"].concurrence, c_d2_sigma=cs["D2"].sigma_c))
    return out


class _ArrayRecords:
    """Adapter exposing columnar heralded samples as a record stream."""

    def __init__(self, cols):
        self.cols = cols

    def __iter__(self):
        herald = self.cols["herald"]
        na = self.cols.get("node_a")
        nb = self.cols.get("node_b")
        for i in range(herald.size):
            yield TrialRecord(
                herald="D1" if herald[i] == 0 else "D2",
                herald_source="signal" if self.cols["source"][i] == 0 else "noise",
                excitations=(int(self.cols["n_a"][i]), int(self.cols["n_b"][i])),
                readout_clicks=None if na is not None else
                (bool(self.cols["click_e"][i]), bool(self.cols["click_f"][i])),
                node_clicks=(bool(na[i]), bool(nb[i])) if na is not None else None,
                theta=float(self.cols["theta"][i]),
                delta_phi=float(self.cols["delta"][i]),
                d1_click=herald[i] == 0, d2_click=herald[i] == 1)


def collect_heralded(s: Scenario, n_heralds: int, theta: float | None = None) -> dict:
    """Vectorized heralded-trial sample in columnar form.

    Keys: herald (0/1), source (0/1), n_a, n_b, theta, delta, and either
    (click_e, click_f) or (node_a, node_b) depending on the read-out basis.
    """
    table = herald_class_table(s.link)
    pool = phase_pool(s)
    th = s.theta_list[0] if theta is None else theta
    cum = np.cumsum(table.cond_prob)
    cols = {k: [] for k in ("herald", "source", "n_a", "n_b", "theta", "delta",
                            "e", "f")}
    done = 0
    shard = 0
    while done < n_heralds:
        m = min(SHARD_SIZE, n_heralds - done)
        rng = _rng(s.seed, 0xC0, shard)
        idx = np.searchsorted(cum, rng.random(m))
        delta = _draw_phases(s, pool, m, rng)
        x, y = _sample_readout(s, table, idx, th, delta, rng)
        cols["herald"].append(table.det[idx].copy())
        cols["source"].append(table.source[idx].copy())
        cols["n_a"].append(table.n_a[idx].copy())
        cols["n_b"].append(table.n_b[idx].copy())
        cols["theta"].append(np.full(m, th))
        cols["delta"].append(delta)
        cols["e"].append(x)
        cols["f"].append(y)
        done += m
        shard += 1
    out = {k: np.concatenate(v) for k, v in cols.items()}
    if s.readout_basis == "number":
        out["node_a"] = out.pop("e")
        out["node_b"] = out.pop("f")
    else:
        out["click_e"] = out.pop("e")
        out["click_f"] = out.pop("f")
    return out


def collect_unconditional(s: Scenario, n_trials: int,
                          single_source: bool = False) -> dict:
    """Vectorized unconditional trials with read-out attempted every time.

    Used for correlation measurements that condition in either direction
    (no herald veto, no fringe: the read-out routing is classical, which
    leaves the click unions and cross-correlations unchanged).  With
    single_source the B node is left unpumped, the bench configuration for
    characterizing one source's autocorrelation: its write-out field meets
    vacuum at the splitter, so D1/D2 become a plain 50:50 split of the
    conditioned mode.  Columns: n_a, n_b, d1_click, d2_click, click_e,
    click_f.
    """
    link = s.link
    t = _arm_transmission(link)
    eta1 = link.detector("D1").efficiency
    eta2 = link.detector("D2").efficiency
    nu1 = noise_click_prob(link, "D1")
    nu2 = noise_click_prob(link, "D2")
    q = s.readout_q
    w2 = s.fringe_weight ** 2
    cols = {k: [] for k in ("n_a", "n_b", "d1_click", "d2_click",
                            "click_e", "click_f")}
    done = 0
    shard = 0
    while done < n_trials:
        m = min(SHARD_SIZE, n_trials - done)
        rng = _rng(s.seed, 0xA7, shard)
        n_a = rng.geometric(1.0 - link.chi, size=m) - 1
        n_b = (np.zeros(m, dtype=np.int64) if single_source
               else rng.geometric(1.0 - link.chi, size=m) - 1)
        k_a = rng.binomial(n_a, t["A"])
        k_b = rng.binomial(n_b, t["B"])
        m1 = _sample_port_split(k_a, k_b, rng)
        m2 = k_a + k_b - m1
        c1 = (rng.binomial(m1, eta1) > 0) | (rng.random(m) < nu1)
        c2 = (rng.binomial(m2, eta2) > 0) | (rng.random(m) < nu2)
        j = rng.binomial(n_a, q)
        k = rng.binomial(n_b, q)
        m_e, m_f = _route_classical(j, k, w2, rng)
        cols["n_a"].append(n_a)
        cols["n_b"].append(n_b)
        cols["d1_click"].append(c1)
        cols["d2_click"].append(c2)
        cols["click_e"].append(m_e > 0)
        cols["click_f"].append(m_f > 0)
        done += m
        shard += 1
    return {k: np.concatenate(v) for k, v in cols.items()}


# -- interference diagnostics ------------------------------------------------

def hom_experiment(s: Scenario, zeta: float, field_mode: str = "wo",
                   g2_a: float | None = None, g2_b: float | None = None,
                   mu: float = 0.005) -> float:
    """Bunching correlation of the two nodes' fields on a balanced splitter.

    Sources are modeled as {0, 1, 2}-photon emitters with the requested
    autocorrelations (default: the unconditioned thermal value 2) and mean
    photon number mu (mu and zeta*mu).  The analytic engine enumerates the
    nine photon-number combinations exactly; the fock-oracle engine builds
    the four-mode state with a matched/unmatched mode decomposition.
    Returns g2 = P(EF) / (P(E) P(F)).
    """
    if zeta <= 0:
        raise ParameterError(f"zeta must be > 0, got {zeta}")
    if field_mode not in ("wo", "ro"):
        raise ParameterError("field_mode must be 'wo' or 'ro'")
    eta = s.eta_wo if field_mode == "wo" else s.eta_ro
    g2a = 2.0 if g2_a is None else g2_a
    g2b = 2.0 if g2_b is None else g2_b

    def dist(g2, mean):
        p2 = g2 * mean ** 2 / 2.0
        p1 = mean - 2.0 * p2
        if p1 < 0 or p1 + p2 > 1:
            raise ParameterError("mu too large for the requested g2")
        return np.array([1.0 - p1 - p2, p1, p2])

    pa = dist(g2a, mu)
    pb = dist(g2b, zeta * mu)

    if s.engine == "fock-oracle":
        return _hom_fock(pa, pb, eta)

    p_e = p_f = p_ef = 0.0
    for j in range(3):
        for k in range(3):
            w = pa[j] * pb[k]
            if w == 0.0 or j + k == 0:
                continue
            mix = ((eta, _quantum_split(j, k)), (1.0 - eta, _binomial_split(j + k))) \
                if (j > 0 and k > 0) else ((1.0, _binomial_split(j + k)),)
            for frac, probs in mix:
                if frac == 0.0:
                    continue
                n = j + k
                for m, pm in enumerate(probs):
                    e_click = m > 0
                    f_click = (n - m) > 0
                    p_e += w * frac * pm * e_click
                    p_f += w * frac * pm * f_click
                    p_ef += w * frac * pm * (e_click and f_click)
    if p_e == 0.0 or p_f == 0.0:
        raise InsufficientDataError("no singles on one splitter output")
    return p_ef / (p_e * p_f)


def _hom_fock(pa, pb, eta) -> float:
    cutoff = 4
    vac = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    vac[0, 0] = 1.0

    def source(p):
        m = vac.copy() * 0
        for n, pn in enumerate(p):
            m[n, n] = pn
        return fock.TruncatedState(1, cutoff, matrix=m.copy())

    # modes: [A_matched, A_unmatched, B_matched, B_unmatched]
    st = fock.tensor_product(source(pa), fock.vacuum_state(1, cutoff))
    st = fock.tensor_product(st, source(pb))
    st = fock.tensor_product(st, fock.vacuum_state(1, cutoff))
    st = fock.beam_splitter(st, 2, 3, eta)   # B leaks sqrt(1-eta) into unmatched
    st = fock.beam_splitter(st, 0, 2, 0.5)
    st = fock.beam_splitter(st, 1, 3, 0.5)

    # unit-efficiency threshold detectors: no-click means zero photons in
    # both modes feeding the detector, read off the joint number distribution
    dim = cutoff + 1
    joint = np.einsum("abcdabcd->abcd",
                      st.matrix.reshape((dim,) * 8)).real
    p_no_e = float(joint[0, 0, :, :].sum())
    p_no_f = float(joint[:, :, 0, 0].sum())
    p_no_ef = float(joint[0, 0, 0, 0])
    p_e = 1.0 - p_no_e
    p_f = 1.0 - p_no_f
    p_ef = 1.0 - p_no_e - p_no_f + p_no_ef
    if p_e <= 0.0 or p_f <= 0.0:
        raise InsufficientDataError("no singles on one splitter output")
    return p_ef / (p_e * p_f)


def conditional_g2(records, conditioning: str = "write-on-read") -> float:
    """Heralded autocorrelation from raw click statistics.

    write-on-read: write-out correlation D1 x D2 conditioned on any
    read-out click.  read-on-write: read-out correlation E x F conditioned
    on any write-out click.  Accepts a TrialRecord iterable or the
    columnar dict from collect_heralded.
    """
    if conditioning not in ("write-on-read", "read-on-write"):
        raise ParameterError("conditioning must be 'write-on-read' or 'read-on-write'")
    if isinstance(records, dict):
        d1 = np.asarray(records["d1_click"], dtype=bool)
        d2 = np.asarray(records["d2_click"], dtype=bool)
        e = np.asarray(records["click_e"], dtype=bool)
        f = np.asarray(records["click_f"], dtype=bool)
    else:
        d1l, d2l, el, fl = [], [], [], []
        for r in records:
            rc = r.readout_clicks or (False, False)
            d1l.append(r.d1_click)
            d2l.append(r.d2_click)
            el.append(rc[0])
            fl.append(rc[1])
        d1 = np.array(d1l, dtype=bool)
        d2 = np.array(d2l, dtype=bool)
        e = np.array(el, dtype=bool)
        f = np.array(fl, dtype=bool)
    if conditioning == "write-on-read":
        cond = e | f
        x, y = d1, d2
    else:
        cond = d1 | d2
        x, y = e, f
    n_c = int(cond.sum())
    if n_c == 0:
        raise InsufficientDataError("no conditioning events")
    n_x = int((x & cond).sum())
    n_y = int((y & cond).sum())
    n_xy = int((x & y & cond).sum())
    if n_x == 0 or n_y == 0:
        raise InsufficientDataError("no singles on one conditioned output")
    return (n_xy * n_c) / (n_x * n_y)
