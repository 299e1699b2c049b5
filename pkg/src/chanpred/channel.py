"""Synthetic time-correlated MIMO fading channel.

Generates Rayleigh-fading channel traces with a Clarke Doppler spectrum
via a stratified sum of sinusoids, models noisy pilot observations under
a simple link budget, and handles dataset splitting and trace file I/O.

Each complex channel entry is built from two independent real
components (in-phase and quadrature), each a sum of ``n_sinusoids``
cosines whose frequencies stratify the Clarke spectral support
[0, f_d] and whose amplitudes carry the spectral mass of their bin, so
the empirical autocorrelation tracks J0(2*pi*f_d*k*dt) without relying
on luck in the angle draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import sos_mix

SPEED_OF_LIGHT = 299_792_458.0

# history window length shared by the predictors and the filtering loop
DEFAULT_HISTORY_LEN = 3


@dataclass(frozen=True)
class SystemConfig:
    """Physical and link-budget parameters of the simulated system.

    Attributes
    ----------
    n_bs : transmit (base station) antenna count M.
    n_ue : receive (user) antenna count N.
    carrier_hz : carrier frequency.
    slot_s : slot duration (sampling interval of the trace).
    speed_kmh : user speed; sets the maximum Doppler shift.
    bandwidth_hz : system bandwidth, enters the noise power.
    noise_psd_dbm_hz : thermal noise power spectral density.
    pathloss_db : fixed large-scale loss between transmitter and receiver.
    """

    n_bs: int = 2
    n_ue: int = 2
    carrier_hz: float = 3.59e9
    slot_s: float = 2e-3
    speed_kmh: float = 5.0
    bandwidth_hz: float = 1e7
    noise_psd_dbm_hz: float = -174.0
    pathloss_db: float = 100.0

    def __post_init__(self):
        if self.n_bs < 1 or self.n_ue < 1:
            raise ValueError("antenna counts must be positive")
        if self.carrier_hz <= 0 or self.slot_s <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("carrier_hz, slot_s and bandwidth_hz must be positive")
        if self.speed_kmh < 0:
            raise ValueError("speed_kmh must be nonnegative")

    @property
    def n_links(self) -> int:
        """Number of complex channel entries M*N."""
        return self.n_bs * self.n_ue

    @property
    def dim(self) -> int:
        """Length L = 2*M*N of the real channel vector."""
        return 2 * self.n_bs * self.n_ue

    @property
    def doppler_hz(self) -> float:
        """Maximum Doppler shift v*f_c/c."""
        return self.speed_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT

    @property
    def noise_var(self) -> float:
        """Receiver noise power in watts over the full bandwidth."""
        dbm = self.noise_psd_dbm_hz + 10.0 * np.log10(self.bandwidth_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)

    def rx_gain(self, tx_power_dbm: float) -> float:
        """Received power scale rho for a given transmit power in dBm."""
        return 10.0 ** ((tx_power_dbm - 30.0 - self.pathloss_db) / 10.0)


@dataclass
class ChannelTrace:
    """A generated channel realization.

    ``h`` has shape (T, L); row t stacks the real parts of the M*N
    channel matrix (row-major) followed by the imaginary parts.
    """

    h: np.ndarray
    config: SystemConfig
    seed: int
    doppler_hz: float

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.h.ndim != 2:
            raise ValueError("h must be 2-d (slots, components)")
        if self.h.shape[1] != self.config.dim:
            raise ValueError(
                f"h has {self.h.shape[1]} components, config implies {self.config.dim}"
            )
        if not np.all(np.isfinite(self.h)):
            raise ValueError("trace contains non-finite values")

    @property
    def n_slots(self) -> int:
        return self.h.shape[0]


def _component_spectrum(doppler_hz, n_sinusoids, rng):
    """Frequencies and amplitudes for one real fading component.

    Frequencies stratify (0, f_d): bin n gets f_n = (n - 0.5 + u)/K * f_d
    with a single uniform jitter u in (-0.25, 0.25) shared across bins.
    Each amplitude squared is the Clarke spectral mass of its bin
    (integral of the normalized PSD between the midpoint edges), so the
    component variance is exactly 1/2 and the lagged autocorrelation
    approximates (1/2)*J0(2*pi*f_d*tau).
    """
    k = np.arange(1, n_sinusoids + 1, dtype=np.float64)
    if doppler_hz == 0.0:
        # degenerate spectrum: all mass at zero frequency
        freq = np.zeros(n_sinusoids)
        mass = np.full(n_sinusoids, 1.0 / n_sinusoids)
        rng.uniform(-0.25, 0.25)  # keep the draw budget identical
    else:
        u = rng.uniform(-0.25, 0.25)
        freq = (k - 0.5 + u) / n_sinusoids * doppler_hz
        edges = np.concatenate(([0.0], 0.5 * (freq[1:] + freq[:-1]), [doppler_hz]))
        mass = (2.0 / np.pi) * np.diff(np.arcsin(edges / doppler_hz))
    amp = np.sqrt(mass)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_sinusoids)
    return freq, amp, phase


def generate_trace(config: SystemConfig, n_slots: int, seed: int,
                   n_sinusoids: int = 64) -> ChannelTrace:
    """Generate a channel trace of ``n_slots`` slots.

    Parameters
    ----------
    config : SystemConfig
    n_slots : number of slots T; must exceed the prediction history
        length so at least one window fits.
    seed : integer seed; the trace is a deterministic function of
        (config, n_slots, seed, n_sinusoids).
    n_sinusoids : sinusoids per real component, at least 8.

    Returns
    -------
    ChannelTrace with h of shape (T, 2*M*N).
    """
    if n_slots <= DEFAULT_HISTORY_LEN:
        raise ValueError(
            f"n_slots must exceed the history length ({DEFAULT_HISTORY_LEN})")
    if n_sinusoids < 8:
        raise ValueError("n_sinusoids must be at least 8")
    rng = np.random.default_rng(seed)
    fd = config.doppler_hz
    n_cplx = config.n_links
    h = np.empty((n_slots, config.dim))
    for link in range(n_cplx):
        for part in range(2):  # 0 = real, 1 = imaginary
            freq, amp, phase = _component_spectrum(fd, n_sinusoids, rng)
            col = sos_mix(2.0 * np.pi * freq, phase, amp, n_slots, config.slot_s)
            h[:, part * n_cplx + link] = col
    return ChannelTrace(h=h, config=config, seed=seed, doppler_hz=fd)


def link_budget(config: SystemConfig, tx_power_dbm: float) -> tuple[float, float]:
    """Return (rho, noise_var) for observations at the given transmit power."""
    return config.rx_gain(tx_power_dbm), config.noise_var


def observe(h_t, config: SystemConfig, tx_power_dbm: float, rng) -> np.ndarray:
    """One noisy pilot observation r = sqrt(rho)*h + w.

    Each real component of w is N(0, noise_var/2) so the complex noise
    power equals config.noise_var.
    """
    h_t = np.asarray(h_t, dtype=np.float64)
    rng = np.random.default_rng(rng)
    rho, noise_var = link_budget(config, tx_power_dbm)
    return np.sqrt(rho) * h_t + rng.normal(0.0, np.sqrt(noise_var / 2.0), size=h_t.shape)


def observe_sequence(h, config: SystemConfig, tx_power_dbm: float, rng) -> np.ndarray:
    """Vectorized observe() over the rows of ``h`` (one draw per slot)."""
    return observe(h, config, tx_power_dbm, rng)


@dataclass(frozen=True)
class DatasetSplit:
    """Contiguous window-start index blocks for train/val/cal/test."""

    train: np.ndarray
    val: np.ndarray
    cal: np.ndarray
    test: np.ndarray
    history_len: int

    @property
    def n_windows(self) -> int:
        return len(self.train) + len(self.val) + len(self.cal) + len(self.test)


def split_dataset(n_slots: int, history_len: int = DEFAULT_HISTORY_LEN) -> DatasetSplit:
    """Partition window starts 0..T-p-1 into train/val/cal/test blocks.

    A window starting at w uses slots w..w+p-1 as input and slot w+p as
    target, so there are W = T - p windows.  The blocks are contiguous
    and in temporal order with sizes close to ratio 7:1:1:1.
    """
    if history_len < 1:
        raise ValueError("history_len must be at least 1")
    n_windows = n_slots - history_len
    if n_windows < 10:
        raise ValueError(
            f"need at least {history_len + 10} slots for a usable split, got {n_slots}"
        )
    n_side = max(1, round(n_windows / 10))
    n_train = n_windows - 3 * n_side
    bounds = np.cumsum([0, n_train, n_side, n_side, n_side])
    idx = np.arange(n_windows)
    return DatasetSplit(
        train=idx[bounds[0]:bounds[1]],
        val=idx[bounds[1]:bounds[2]],
        cal=idx[bounds[2]:bounds[3]],
        test=idx[bounds[3]:bounds[4]],
        history_len=history_len,
    )


def windows(h, starts, history_len: int = DEFAULT_HISTORY_LEN):
    """Assemble (inputs, targets) for the given window starts.

    inputs[i] concatenates h[w], .., h[w+p-1] (oldest first) into a
    length p*L vector; targets[i] = h[w+p].
    """
    h = np.asarray(h, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + history_len >= h.shape[0]):
        raise ValueError("window starts out of range for trace length")
    gather = starts[:, None] + np.arange(history_len)
    inputs = h[gather].reshape(len(starts), history_len * h.shape[1])
    targets = h[starts + history_len]
    return inputs, targets


def write_trace(trace: ChannelTrace, path) -> None:
    """Write a trace as text: one header line, then T rows of L values.

    Values are written with repr so reading the file back reproduces the
    array bit for bit.
    """
    cfg = trace.config
    header = (
        f"M={cfg.n_bs} N={cfg.n_ue} speed_kmh={float(cfg.speed_kmh)!r} "
        f"carrier_hz={float(cfg.carrier_hz)!r} slot_s={float(cfg.slot_s)!r} "
        f"seed={trace.seed}"
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in trace.h:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_trace(path) -> ChannelTrace:
    """Read a trace written by write_trace()."""
    with open(path) as fh:
        header = fh.readline().strip()
        fields = {}
        for token in header.split():
            if "=" not in token:
                raise ValueError(f"malformed trace header token {token!r}")
            key, val = token.split("=", 1)
            fields[key] = val
        try:
            config = SystemConfig(
                n_bs=int(fields["M"]),
                n_ue=int(fields["N"]),
                speed_kmh=float(fields["speed_kmh"]),
                carrier_hz=float(fields["carrier_hz"]),
                slot_s=float(fields["slot_s"]),
            )
            seed = int(fields["seed"])
        except KeyError as exc:
            raise ValueError(f"trace header missing field {exc}") from exc
        h = np.loadtxt(fh, ndmin=2)
    if h.shape[1] != config.dim:
        raise ValueError(
            f"trace body has {h.shape[1]} columns, header implies {config.dim}"
        )
    return ChannelTrace(h=h, config=config, seed=seed, doppler_hz=config.doppler_hz)
