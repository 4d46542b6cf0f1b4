"""OM-LSA speech enhancement with MCRA noise tracking.

One pass runs STFT analysis, a per-frame recursion over the noise PSD,
a priori / a posteriori SNR, speech absence and presence probabilities and
the optimally-modified log-spectral amplitude gain, then overlap-add
synthesis.  :func:`denoise` chains identical passes (three by default) to
clear residual noise left by the first pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer, istft, stft
from .errors import BufferTooShort

EULER_GAMMA = 0.5772156649015329
XI_MIN = 10 ** (-25 / 10)


@dataclass(frozen=True)
class DenoiserParams:
    alpha: float = 0.92                  # decision-directed weight
    g_min: float = 10 ** (-25 / 20)      # gain floor under speech absence
    frame_len: int = 512
    hop: int = 256
    window: str = "hamming"
    alpha_d: float = 0.95                # noise PSD smoothing base
    minima_window: int = 50              # frames searched for the spectral minimum
    q_max: float = 0.95
    # MCRA internals
    alpha_s: float = 0.8                 # periodogram time smoothing
    alpha_p: float = 0.2                 # presence-indicator smoothing
    delta: float = 5.0                   # local-energy / minimum ratio threshold
    # a priori speech absence (smoothed local/global a priori SNR test)
    beta: float = 0.7
    zeta_min_db: float = -10.0
    zeta_max_db: float = -5.0
    local_bins: int = 3
    global_bins: int = 31
    xi_min: float = XI_MIN
    floor: float = 1e-12                 # lambda_d never drops below this

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not 0 < self.g_min < 1:
            raise ValueError("g_min must be in (0, 1)")
        if not 0 < self.q_max <= 1:
            raise ValueError("q_max must be in (0, 1]")
        if not 0 < self.alpha_d < 1:
            raise ValueError("alpha_d must be in (0, 1)")
        if not self.frame_len >= self.hop >= 1:
            raise ValueError("need frame_len >= hop >= 1")
        if self.minima_window < 1:
            raise ValueError("minima_window must be >= 1")


@dataclass
class DenoiserState:
    """Per-bin recursive estimates carried from frame to frame.

    ``update_noise_psd`` and the pass loop mutate it in place; one state
    belongs to exactly one stream.
    """

    lambda_d: np.ndarray
    xi_hat: np.ndarray
    gamma_prev: np.ndarray
    gain_prev: np.ndarray
    p: np.ndarray
    q: np.ndarray
    energy_minimum: np.ndarray
    # MCRA bookkeeping
    smoothed_power: np.ndarray
    presence_tilde: np.ndarray
    zeta: np.ndarray
    history: np.ndarray          # ring buffer of smoothed_power, (minima_window, bins)
    frames_seen: int = 0
    power_sum: np.ndarray = field(default=None)

    @classmethod
    def initial(cls, n_bins: int, params: DenoiserParams) -> "DenoiserState":
        z = np.zeros(n_bins)
        return cls(
            lambda_d=np.full(n_bins, params.floor),
            xi_hat=np.full(n_bins, params.xi_min),
            gamma_prev=z.copy(),
            gain_prev=z.copy(),
            p=z.copy(),
            q=np.full(n_bins, params.q_max),
            energy_minimum=z.copy(),
            smoothed_power=z.copy(),
            presence_tilde=z.copy(),
            zeta=z.copy(),
            history=np.zeros((params.minima_window, n_bins)),
            power_sum=z.copy(),
        )


# --------------------------------------------------------- special function


def expint_e1(v) -> np.ndarray:
    """Exponential integral E1(v) = int_v^inf e^-t / t dt for v > 0.

    Power series below v = 1, Lentz continued fraction at and above it.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    small = v < 1.0

    if np.any(small):
        x = v[small]
        term = np.ones_like(x)
        acc = np.zeros_like(x)
        for k in range(1, 40):
            term = term * (-x) / k
            acc += term / k
            if np.all(np.abs(term) < 1e-17):
                break
        out[small] = -EULER_GAMMA - np.log(x) - acc

    big = ~small
    if np.any(big):
        x = v[big]
        tiny = 1e-300
        b = x + 1.0
        c = np.full_like(x, 1.0 / tiny)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, 200):
            an = -float(i * i)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            h *= delta
            if np.all(np.abs(delta - 1.0) < 1e-13):
                break
        out[big] = h * np.exp(-x)
    return out


# ------------------------------------------------------------ components


def _smooth_bins(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kern = np.hanning(width + 2)[1:-1]
    kern /= kern.sum()
    pad = width // 2
    xp = np.pad(x, pad, mode="edge")
    return np.convolve(xp, kern, mode="valid")


def update_noise_psd(state: DenoiserState, frame_power: np.ndarray,
                     params: DenoiserParams) -> DenoiserState:
    """MCRA step: time-varying recursive averaging of the noise PSD.

    Smoothing factor is ``alpha_d + (1 - alpha_d) * p_tilde`` where
    ``p_tilde`` tracks how often the smoothed periodogram exceeds ``delta``
    times its minimum over the last ``minima_window`` frames.
    """
    power = np.asarray(frame_power, dtype=np.float64)
    s_f = _smooth_bins(power, 3)
    if state.frames_seen == 0:
        state.smoothed_power = s_f.copy()
        state.history[:] = s_f
    else:
        state.smoothed_power = params.alpha_s * state.smoothed_power + (1 - params.alpha_s) * s_f
        state.history[state.frames_seen % params.minima_window] = state.smoothed_power
    state.energy_minimum = state.history.min(axis=0)

    ratio = state.smoothed_power / np.maximum(state.energy_minimum, params.floor)
    indicator = (ratio > params.delta).astype(np.float64)
    state.presence_tilde = params.alpha_p * state.presence_tilde + (1 - params.alpha_p) * indicator
    a_d = params.alpha_d + (1 - params.alpha_d) * state.presence_tilde

    state.power_sum += power
    if state.frames_seen < params.minima_window:
        lam = state.power_sum / (state.frames_seen + 1)
    else:
        lam = a_d * state.lambda_d + (1 - a_d) * power
    state.lambda_d = np.maximum(lam, params.floor)
    state.frames_seen += 1
    return state


def posteriori_snr(frame_power, lambda_d) -> np.ndarray:
    return np.asarray(frame_power, dtype=np.float64) / np.asarray(lambda_d, dtype=np.float64)


def priori_snr(state: DenoiserState, gamma, alpha: float, xi_min: float = XI_MIN) -> np.ndarray:
    """Decision-directed a priori SNR from the previous frame's G_H1 and gamma."""
    gamma = np.asarray(gamma, dtype=np.float64)
    xi = alpha * state.gain_prev ** 2 * state.gamma_prev + (1 - alpha) * np.maximum(gamma - 1.0, 0.0)
    return np.maximum(xi, xi_min)


def speech_absence_prob(state: DenoiserState, xi: np.ndarray, params: DenoiserParams) -> np.ndarray:
    """A priori speech absence from a smoothed local/global a priori SNR test.

    ``zeta`` is the a priori SNR smoothed over time, then averaged over a
    narrow (local) and a wide (global) frequency neighbourhood.  Each average
    maps log-linearly onto [0, 1] between ``zeta_min_db`` and ``zeta_max_db``;
    ``q = 1 - P_local * P_global`` capped at ``q_max``.
    """
    state.zeta = params.beta * state.zeta + (1 - params.beta) * xi
    z_min = 10 ** (params.zeta_min_db / 10)
    z_max = 10 ** (params.zeta_max_db / 10)

    def level(z):
        z = np.maximum(z, 1e-30)
        return np.clip(np.log(z / z_min) / np.log(z_max / z_min), 0.0, 1.0)

    p_local = level(_smooth_bins(state.zeta, params.local_bins))
    p_global = level(_smooth_bins(state.zeta, params.global_bins))
    return np.minimum(1.0 - p_local * p_global, params.q_max)


def presence_prob(xi: np.ndarray, gamma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Posterior speech presence P(H1 | Y) under complex Gaussian models."""
    v = gamma * xi / (1.0 + xi)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        odds = q / (1.0 - q) * (1.0 + xi) * np.exp(-np.minimum(v, 700.0))
        p = 1.0 / (1.0 + odds)
    return np.where(q >= 1.0, 0.0, p)


def lsa_gain(xi, gamma) -> np.ndarray:
    """Log-spectral amplitude gain under speech presence, G_H1."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    v = np.maximum(gamma * xi / (1.0 + xi), 1e-10)
    return xi / (1.0 + xi) * np.exp(0.5 * expint_e1(v))


def combine_gain(g_h1, p, g_min: float) -> np.ndarray:
    g = np.asarray(g_h1, dtype=np.float64) ** p * g_min ** (1.0 - np.asarray(p, dtype=np.float64))
    return np.clip(g, g_min, 1.0)


def spectral_gain(xi, gamma, p, g_min: float) -> np.ndarray:
    """OM-LSA gain G = G_H1^p * g_min^(1-p), held inside [g_min, 1]."""
    return combine_gain(lsa_gain(xi, gamma), p, g_min)


# ----------------------------------------------------------------- passes


def omlsa_pass(buf: AudioBuffer, params: DenoiserParams | None = None,
               on_frame=None) -> AudioBuffer:
    """One analysis -> gain -> synthesis pass.

    ``on_frame(l, gain)`` is called with each frame's gain vector when given.
    """
    params = params or DenoiserParams()
    if len(buf) < params.frame_len:
        raise BufferTooShort(f"{len(buf)} samples < one frame of {params.frame_len}")
    spec = stft(buf, params.frame_len, params.hop, params.window, pad=True)
    Y = spec.frames
    power = np.abs(Y) ** 2
    state = DenoiserState.initial(spec.n_bins, params)
    out = np.empty_like(Y)

    for l in range(spec.n_frames):
        pw = power[:, l]
        update_noise_psd(state, pw, params)
        gamma = posteriori_snr(pw, state.lambda_d)
        xi = priori_snr(state, gamma, params.alpha, params.xi_min)
        q = speech_absence_prob(state, xi, params)
        p = presence_prob(xi, gamma, q)
        g_h1 = lsa_gain(xi, gamma)
        gain = combine_gain(g_h1, p, params.g_min)

        state.xi_hat, state.q, state.p = xi, q, p
        state.gain_prev, state.gamma_prev = g_h1, gamma
        if on_frame is not None:
            on_frame(l, gain)
        out[:, l] = gain * Y[:, l]

    enhanced = istft(type(spec)(out, spec.frame_len, spec.hop, spec.window,
                                spec.sample_rate, spec.num_samples))
    return AudioBuffer(enhanced.samples, buf.sample_rate)


def denoise(buf: AudioBuffer, params: DenoiserParams | None = None, passes: int = 3) -> AudioBuffer:
    if passes < 1:
        raise ValueError("passes must be >= 1")
    params = params or DenoiserParams()
    for _ in range(passes):
        buf = omlsa_pass(buf, params)
    return buf
