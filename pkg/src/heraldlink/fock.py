"""Truncated Fock-space density-matrix machinery.

This is the exact few-photon oracle: a dense multi-mode density operator
with a hard per-mode photon cutoff, plus the standard linear-optics
channels (beam splitter, loss, phase shift, threshold detection).  The
analytic link budget and the Monte Carlo protocol engine are validated
against it on small instances.

Probability mass pushed past the cutoff is tracked in ``leakage`` so that
``trace + leakage == 1`` holds through every channel.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DegenerateConditionError, InvalidStateError, ParameterError

ModeId = int

EPS_TRUNC_DEFAULT = 1e-4
_P_DEGENERATE = 1e-12


class TruncatedState:
    """Density operator on ``mode_count`` modes, each truncated at ``cutoff`` photons.

    The matrix is dense complex of dimension ``(cutoff + 1) ** mode_count``,
    indexed in row-major mode order (mode 0 is the slowest axis).
    """

    def __init__(self, mode_count: int, cutoff: int, matrix=None,
                 leakage: float = 0.0, eps_trunc: float = EPS_TRUNC_DEFAULT):
        if mode_count < 1:
            raise ParameterError(f"mode_count must be >= 1, got {mode_count}")
        if cutoff < 1:
            raise ParameterError(f"cutoff must be >= 1, got {cutoff}")
        self.mode_count = int(mode_count)
        self.cutoff = int(cutoff)
        self.eps_trunc = float(eps_trunc)
        d = (cutoff + 1) ** mode_count
        if matrix is None:
            matrix = np.zeros((d, d), dtype=complex)
            matrix[0, 0] = 1.0
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (d, d):
            raise ParameterError(f"matrix shape {matrix.shape} does not match dimension {d}")
        self.matrix = matrix
        self.leakage = float(leakage)

    # -- bookkeeping ---------------------------------------------------

    @property
    def dim(self) -> int:
        return (self.cutoff + 1) ** self.mode_count

    @property
    def valid(self) -> bool:
        """True while the discarded tail stays below the configured bound."""
        return self.leakage < self.eps_trunc

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def copy(self) -> "TruncatedState":
        return TruncatedState(self.mode_count, self.cutoff, self.matrix.copy(),
                              self.leakage, self.eps_trunc)

    def tensor(self) -> np.ndarray:
        """View of the matrix with one axis per ket mode then per bra mode."""
        c1 = self.cutoff + 1
        return self.matrix.reshape((c1,) * (2 * self.mode_count))

    def number_marginal(self, m: ModeId) -> np.ndarray:
        """Photon-number distribution p(n) of mode ``m`` (sums to trace)."""
        self._check_mode(m)
        c1 = self.cutoff + 1
        M = self.mode_count
        rest = c1 ** (M - 1)
        t = np.moveaxis(self.tensor(), (m, M + m), (0, 1))
        t = t.reshape(c1, c1, rest, rest)
        return np.real(np.einsum('nnjj->n', t))

    def _check_mode(self, m: ModeId):
        if not (0 <= m < self.mode_count):
            raise ParameterError(f"mode {m} out of range for {self.mode_count} modes")

    def assert_physical(self, atol: float = 1e-9):
        """Raise InvalidStateError if a physicality invariant is broken."""
        if abs(self.trace() + self.leakage - 1.0) > atol:
            raise InvalidStateError(
                f"trace {self.trace():.12f} + leakage {self.leakage:.3e} != 1")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > atol:
            raise InvalidStateError("matrix is not Hermitian")
        w = np.linalg.eigvalsh(self.matrix)
        if w.min() < -atol:
            raise InvalidStateError(f"negative eigenvalue {w.min():.3e}")

    def __repr__(self):
        return (f"TruncatedState(modes={self.mode_count}, cutoff={self.cutoff}, "
                f"trace={self.trace():.6f}, leakage={self.leakage:.3e})")


# -- state constructors ------------------------------------------------

def vacuum_state(mode_count: int, cutoff: int) -> TruncatedState:
    return TruncatedState(mode_count, cutoff)


def fock_state(occupations, cutoff: int) -> TruncatedState:
    """Pure product number state |n_0, n_1, ...>."""
    occ = list(occupations)
    if any(n < 0 or n > cutoff for n in occ):
        raise ParameterError(f"occupations {occ} exceed cutoff {cutoff}")
    s = TruncatedState(len(occ), cutoff)
    c1 = cutoff + 1
    idx = 0
    for n in occ:
        idx = idx * c1 + n
    s.matrix[...] = 0.0
    s.matrix[idx, idx] = 1.0
    return s


def pure_state(amplitudes: np.ndarray, mode_count: int, cutoff: int,
               leakage: float = 0.0) -> TruncatedState:
    """Density matrix |psi><psi| from a flat amplitude vector."""
    v = np.asarray(amplitudes, dtype=complex).reshape(-1)
    d = (cutoff + 1) ** mode_count
    if v.shape[0] != d:
        raise ParameterError("amplitude vector has wrong length")
    return TruncatedState(mode_count, cutoff, np.outer(v, v.conj()), leakage)


def tms_state(chi: float, cutoff: int) -> TruncatedState:
    """Two-mode squeezed-type source state with excitation probability chi.

    Amplitudes sqrt(1 - chi) * chi^(n/2) on |n, n>; the photon-number
    marginal of either mode is exactly geometric, p(n) = (1 - chi) chi^n,
    and the discarded tail chi^(cutoff + 1) is booked as leakage.
    """
    if not (0.0 <= chi < 1.0):
        raise ParameterError(f"chi must be in [0, 1), got {chi}")
    if cutoff < 1:
        raise ParameterError(f"cutoff must be >= 1, got {cutoff}")
    c1 = cutoff + 1
    amps = np.zeros((c1, c1), dtype=complex)
    n = np.arange(c1)
    amps[n, n] = np.sqrt((1.0 - chi) * chi ** n)
    leak = chi ** (cutoff + 1)
    return pure_state(amps, 2, cutoff, leakage=leak)


def tensor_product(s1: TruncatedState, s2: TruncatedState) -> TruncatedState:
    """Joint state of two registers; mode indices of s2 shift up by s1.mode_count."""
    if s1.cutoff != s2.cutoff:
        raise ParameterError("cutoffs differ")
    mat = np.kron(s1.matrix, s2.matrix)
    leak = s1.leakage + s2.leakage - s1.leakage * s2.leakage
    return TruncatedState(s1.mode_count + s2.mode_count, s1.cutoff, mat, leak,
                          min(s1.eps_trunc, s2.eps_trunc))


# -- channel helpers ---------------------------------------------------

def _diag_apply(state: TruncatedState, m: ModeId, dvec: np.ndarray) -> np.ndarray:
    """Return matrix of D rho D^dagger where D = diag(dvec) acts on mode m."""
    c1 = state.cutoff + 1
    M = state.mode_count
    t = state.tensor()
    shape_ket = [1] * (2 * M)
    shape_ket[m] = c1
    shape_bra = [1] * (2 * M)
    shape_bra[M + m] = c1
    out = t * dvec.reshape(shape_ket) * dvec.conj().reshape(shape_bra)
    return out.reshape(state.dim, state.dim)


def _single_mode_kraus(state: TruncatedState, m: ModeId, kraus: list) -> np.ndarray:
    """Sum_k K rho K^dagger with each K acting on mode m only."""
    c1 = state.cutoff + 1
    M = state.mode_count
    t = state.tensor()
    # ket axis m to front, bra axis M+m to back
    tk = np.moveaxis(t, (m, M + m), (0, 2 * M - 1))
    mid = tk.reshape(c1, -1, c1)
    acc = np.zeros_like(mid)
    for K in kraus:
        acc += np.einsum('ik,kmj,jl->iml', K, mid, K.conj().T, optimize=True)
    out = acc.reshape(tk.shape)
    out = np.moveaxis(out, (0, 2 * M - 1), (m, M + m))
    return out.reshape(state.dim, state.dim)


def _two_mode_kernel_apply(state: TruncatedState, a: ModeId, b: ModeId,
                           kernel: np.ndarray) -> np.ndarray:
    """K rho K^dagger with K acting on the joint (a, b) mode pair."""
    c1 = state.cutoff + 1
    M = state.mode_count
    t = state.tensor()
    tk = np.moveaxis(t, (a, b, M + a, M + b), (0, 1, 2 * M - 2, 2 * M - 1))
    mid = tk.reshape(c1 * c1, -1, c1 * c1)
    mid = np.einsum('ik,kmj,jl->iml', kernel, mid, kernel.conj().T, optimize=True)
    out = mid.reshape(tk.shape)
    out = np.moveaxis(out, (0, 1, 2 * M - 2, 2 * M - 1), (a, b, M + a, M + b))
    return out.reshape(state.dim, state.dim)


@lru_cache(maxsize=256)
def _bs_kernel(cutoff: int, transmittance: float, phase: float) -> np.ndarray:
    """Exact truncated beam-splitter kernel on the (cutoff+1)^2 pair space.

    Built blockwise in total photon number on the doubled space (where the
    unitary is exact, since total N <= 2*cutoff for any truncated input)
    and projected back; overflow rows are dropped and show up as leakage.
    """
    theta = math.acos(math.sqrt(max(0.0, min(1.0, transmittance))))
    c1 = cutoff + 1
    big = 2 * cutoff
    # dense unitary on the doubled two-mode space, block per total N
    U = {}
    for N in range(big + 1):
        dN = N + 1
        Mgen = np.zeros((dN, dN), dtype=complex)
        # basis |k, N-k>, k = 0..N ; generator theta*(e^{i phase} a^dag b - h.c.)
        for k in range(N):
            amp = math.sqrt((k + 1) * (N - k))
            Mgen[k + 1, k] += theta * np.exp(1j * phase) * amp
            Mgen[k, k + 1] -= theta * np.exp(-1j * phase) * amp
        H = 1j * Mgen  # Hermitian
        w, V = np.linalg.eigh(H)
        U[N] = (V * np.exp(-1j * w)) @ V.conj().T
    kernel = np.zeros((c1 * c1, c1 * c1), dtype=complex)
    for ka in range(c1):
        for kb in range(c1):
            N = ka + kb
            col = ka * c1 + kb
            UN = U[N]
            for ma in range(N + 1):
                mb = N - ma
                if ma > cutoff or mb > cutoff:
                    continue  # projected out -> leakage
                kernel[ma * c1 + mb, col] = UN[ma, ka]
    return kernel


# -- channels ----------------------------------------------------------

def beam_splitter(state: TruncatedState, a: ModeId, b: ModeId,
                  transmittance: float, phase: float = 0.0) -> TruncatedState:
    """Two-mode beam splitter; transmittance is the intensity ratio cos^2(theta).

    The map is exactly unitary whenever the total photon number stays within
    the cutoff; overflow population is discarded and added to leakage.
    The inverse of beam_splitter(T, phi) is beam_splitter(T, phi + pi).
    """
    state._check_mode(a)
    state._check_mode(b)
    if a == b:
        raise ParameterError("beam splitter needs two distinct modes")
    if not (0.0 <= transmittance <= 1.0):
        raise ParameterError(f"transmittance must be in [0, 1], got {transmittance}")
    K = _bs_kernel(state.cutoff, float(transmittance), float(phase))
    mat = _two_mode_kernel_apply(state, a, b, K)
    out = TruncatedState(state.mode_count, state.cutoff, mat, state.leakage,
                         state.eps_trunc)
    out.leakage += max(0.0, state.trace() - out.trace())
    return out


@lru_cache(maxsize=256)
def _loss_kraus(cutoff: int, transmittance: float):
    c1 = cutoff + 1
    t = transmittance
    ops = []
    for k in range(c1):
        K = np.zeros((c1, c1))
        for n in range(k, c1):
            K[n - k, n] = math.sqrt(math.comb(n, k) * t ** (n - k) * (1.0 - t) ** k)
        ops.append(K)
    return tuple(ops)


def apply_loss(state: TruncatedState, m: ModeId, transmittance: float) -> TruncatedState:
    """Pure loss on mode m: binomial thinning of the photon number.

    Implemented with the exact Kraus family of a beam splitter to a traced
    environment; trace is preserved and photon numbers only decrease, so
    leakage is unchanged.
    """
    state._check_mode(m)
    if not (0.0 <= transmittance <= 1.0):
        raise ParameterError(f"transmittance must be in [0, 1], got {transmittance}")
    if transmittance == 1.0:
        return state.copy()
    kraus = _loss_kraus(state.cutoff, float(transmittance))
    mat = _single_mode_kraus(state, m, list(kraus))
    return TruncatedState(state.mode_count, state.cutoff, mat, state.leakage,
                          state.eps_trunc)


def phase_shift(state: TruncatedState, m: ModeId, phi: float) -> TruncatedState:
    """exp(i phi n) on mode m. Number marginals are untouched."""
    state._check_mode(m)
    n = np.arange(state.cutoff + 1)
    mat = _diag_apply(state, m, np.exp(1j * phi * n))
    return TruncatedState(state.mode_count, state.cutoff, mat, state.leakage,
                          state.eps_trunc)


def partial_trace(state: TruncatedState, m: ModeId) -> TruncatedState:
    """Trace out mode m; remaining modes keep their relative order."""
    state._check_mode(m)
    M = state.mode_count
    if M == 1:
        raise ParameterError("cannot trace out the last mode")
    t = state.tensor()
    t = np.trace(t, axis1=m, axis2=M + m)
    d = (state.cutoff + 1) ** (M - 1)
    return TruncatedState(M - 1, state.cutoff, t.reshape(d, d), state.leakage,
                          state.eps_trunc)


def measure_click(state: TruncatedState, m: ModeId, eta_det: float,
                  p_dark: float, require: str | None = None):
    """Threshold (non-number-resolving) detector on mode m.

    POVM: no-click element (1 - p_dark) (1 - eta_det)^n, click element its
    complement; dark counts are an independent Bernoulli OR-ed with photon
    clicks.  Returns (p_click, post_click, post_noclick); the measured mode
    is traced out of both conditional states.  A branch with probability
    below 1e-12 is returned as None, unless ``require`` names it, in which
    case a DegenerateConditionError is raised.
    """
    state._check_mode(m)
    if not (0.0 <= eta_det <= 1.0):
        raise ParameterError(f"eta_det must be in [0, 1], got {eta_det}")
    if not (0.0 <= p_dark <= 1.0):
        raise ParameterError(f"p_dark must be in [0, 1], got {p_dark}")
    if require not in (None, "click", "noclick"):
        raise ParameterError(f"require must be 'click', 'noclick' or None, got {require!r}")
    n = np.arange(state.cutoff + 1)
    e_noclick = (1.0 - p_dark) * (1.0 - eta_det) ** n  # diagonal POVM weights
    tr = state.trace()
    if tr < _P_DEGENERATE:
        raise DegenerateConditionError("state has numerically zero trace")

    def _branch(weights):
        mat = _diag_apply(state, m, np.sqrt(weights))
        p = float(np.real(np.trace(mat)))
        return p, mat

    p_nc, mat_nc = _branch(e_noclick)
    p_c, mat_c = _branch(1.0 - e_noclick)
    # normalize against the live trace so p_click + p_noclick == 1
    p_click = p_c / tr
    p_noclick = p_nc / tr

    def _finish(p_abs, mat, name):
        if p_abs < _P_DEGENERATE:
            if require == name:
                raise DegenerateConditionError(
                    f"conditional '{name}' has probability {p_abs:.3e}")
            return None
        cond = TruncatedState(state.mode_count, state.cutoff, mat / p_abs,
                              state.leakage, state.eps_trunc)
        return partial_trace(cond, m)

    post_click = _finish(p_c, mat_c, "click")
    post_noclick = _finish(p_nc, mat_nc, "noclick")
    return p_click, post_click, post_noclick


def dephase_multi_excitation(state: TruncatedState, modes, keep_total: int = 1) -> TruncatedState:
    """Pinch away coherences that involve multi-excitation components.

    Matrix elements <m|rho|n> are kept only if m == n or both basis states
    carry at most ``keep_total`` total photons over ``modes``.  This is a
    projective pinching (completely positive, trace preserving); it models
    higher-order source emissions turning into incoherent accidentals while
    leaving the heralded single-excitation coherence intact.
    """
    modes = list(modes)
    for m in modes:
        state._check_mode(m)
    c1 = state.cutoff + 1
    M = state.mode_count
    grids = np.indices((c1,) * M).reshape(M, -1)
    totals = np.zeros(state.dim, dtype=int)
    for m in modes:
        totals += grids[m]
    low = totals <= keep_total
    keep = np.logical_or(np.logical_and(low[:, None], low[None, :]),
                         np.eye(state.dim, dtype=bool))
    return TruncatedState(M, state.cutoff, np.where(keep, state.matrix, 0.0),
                          state.leakage, state.eps_trunc)


# -- oracle ------------------------------------------------------------

def fit_fringe(thetas: np.ndarray, counts: np.ndarray):
    """Least-squares fit of counts ~ A + B cos(theta) + C sin(theta).

    Returns (visibility, mean A, amplitude, phase offset).
    """
    thetas = np.asarray(thetas, dtype=float)
    y = np.asarray(counts, dtype=float)
    X = np.column_stack([np.ones_like(thetas), np.cos(thetas), np.sin(thetas)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    a, b, c = coef
    amp = math.hypot(b, c)
    if a <= 0:
        return 0.0, a, amp, 0.0
    return amp / a, a, amp, math.atan2(-c, b)


def oracle_readout_visibility(chi: float, eta_arm: float, eta_r: float,
                              eta_det_local: float, cutoff: int = 4,
                              n_phase: int = 32, dephase: bool = True) -> float:
    """Exact-model readout fringe visibility with only source higher orders on.

    Builds two source states, sends the flying modes through identical arms
    of efficiency eta_arm onto a balanced splitter, heralds on a click at one
    output, dephases the multi-excitation remainder, retrieves both memories
    with efficiency eta_r * eta_det_local, scans the analyzer phase, and fits
    the exclusive-count fringe at one readout detector.

    With ``dephase=False`` the multi-photon coherence survives the herald
    and the visibility comes out noticeably higher than the incoherent
    accidental model; the default matches how accidentals behave once all
    the neglected distinguishability of the higher-order terms is folded in.
    """
    for name, v in (("chi", chi), ("eta_arm", eta_arm), ("eta_r", eta_r),
                    ("eta_det_local", eta_det_local)):
        if not (0.0 <= v <= 1.0):
            raise ParameterError(f"{name} must be in [0, 1], got {v}")
    if chi >= 1.0:
        raise ParameterError("chi must be < 1")
    if cutoff < 3:
        raise ParameterError("cutoff must be >= 3 for a faithful oracle")

    # modes: 0 = memory A, 1 = write-out A, 2 = memory B, 3 = write-out B
    s = tensor_product(tms_state(chi, cutoff), tms_state(chi, cutoff))
    s = apply_loss(s, 1, eta_arm)
    s = apply_loss(s, 3, eta_arm)
    s = beam_splitter(s, 1, 3, 0.5)
    p_herald, heralded, _ = measure_click(s, 1, 1.0, 0.0)
    if p_herald < _P_DEGENERATE or heralded is None:
        raise DegenerateConditionError(f"herald probability {p_herald:.3e}")
    # modes now: 0 = memory A, 1 = memory B, 2 = unused splitter port
    heralded = partial_trace(heralded, 2)
    if dephase:
        heralded = dephase_multi_excitation(heralded, (0, 1), keep_total=1)
    q = eta_r * eta_det_local
    heralded = apply_loss(heralded, 0, q)
    heralded = apply_loss(heralded, 1, q)

    thetas = np.linspace(0.0, 2.0 * np.pi, n_phase, endpoint=False)
    counts = np.empty_like(thetas)
    c1 = cutoff + 1
    for i, th in enumerate(thetas):
        out = phase_shift(heralded, 0, th)
        out = beam_splitter(out, 0, 1, 0.5)
        diag = np.real(np.diag(out.matrix)).reshape(c1, c1)
        counts[i] = diag[1:, 0].sum()  # click at E, silence at F
    vis, *_ = fit_fringe(thetas, counts)
    return float(vis)
