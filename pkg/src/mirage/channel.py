"""Frequency-domain tensor channel model for a beam-swept MIMO-OFDM uplink.

The UE transmits pilots over S precoder beams and K subcarriers while the
BS sweeps M combiner beams, giving an M x S x K observation tensor

    Y = H o X + Q,        H[m,s,k] = sqrt(E_s) sum_l a_l B[m,l] C[s,l] D[k,l],

where o is the elementwise product, B = W^H A_rx and C = F^H A_tx collect
the beamspace array responses, D stacks delay steering vectors, and E_s is
the energy per subcarrier. Everything here is per-subcarrier frequency
domain; there is no time-domain waveform.

Memory layout is (m, s, k) with k fastest. ``vec`` and ``khatri_rao`` are
defined so that vec(H) = sqrt(E_s) * khatri_rao(B, C, D) @ gains holds
exactly, which the spoofing designs rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PathParameterSet

__all__ = [
    "BOLTZMANN_J_PER_K",
    "SystemConfig",
    "Codebooks",
    "PilotTensor",
    "ReceivedTensor",
    "thermal_noise_psd",
    "ula_steering",
    "delay_steering",
    "build_codebooks",
    "factor_matrices",
    "channel_tensor",
    "synthesize_received",
    "unfold_subcarriers",
    "vec",
    "khatri_rao",
    "save_tensor",
    "load_tensor",
]

BOLTZMANN_J_PER_K = 1.380649e-23


def thermal_noise_psd(noise_figure_db: float = 0.0) -> float:
    """Noise power spectral density in W/Hz at 290 K plus a noise figure."""
    return BOLTZMANN_J_PER_K * 290.0 * 10.0 ** (noise_figure_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Array, sweep, and OFDM dimensions plus power and noise levels."""

    n_rx: int
    n_tx: int
    n_combiners: int
    n_precoders: int
    n_subcarriers: int
    subcarrier_spacing_hz: float
    carrier_hz: float
    noise_psd_w_per_hz: float
    tx_power_w: float

    def __post_init__(self):
        for name in ("n_rx", "n_tx", "n_combiners", "n_precoders", "n_subcarriers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("subcarrier_spacing_hz", "carrier_hz", "tx_power_w"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.noise_psd_w_per_hz < 0:
            raise ValueError("noise_psd_w_per_hz must be nonnegative")

    @property
    def energy_per_subcarrier(self) -> float:
        """E_s: transmit power split over the K-subcarrier bandwidth."""
        return self.tx_power_w / (self.n_subcarriers * self.subcarrier_spacing_hz)

    @property
    def tensor_shape(self) -> tuple[int, int, int]:
        return (self.n_combiners, self.n_precoders, self.n_subcarriers)


@dataclass(frozen=True)
class Codebooks:
    """Receive combiner matrix W (N_rx x M) and precoder matrix F (N_tx x S)."""

    combiners: np.ndarray
    precoders: np.ndarray

    def __post_init__(self):
        for name, mat in (("combiners", self.combiners), ("precoders", self.precoders)):
            mat = np.asarray(mat, dtype=complex)
            if mat.ndim != 2:
                raise ValueError(f"{name} must be a matrix")
            norms = np.linalg.norm(mat, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-9):
                raise ValueError(f"{name} columns must be unit norm")
            if np.linalg.matrix_rank(mat) < mat.shape[1]:
                raise ValueError(f"{name} must have full column rank")
            object.__setattr__(self, name, mat)

    @property
    def is_square_unitary(self) -> bool:
        w, f = self.combiners, self.precoders
        return w.shape[0] == w.shape[1] and f.shape[0] == f.shape[1]


@dataclass(frozen=True)
class PilotTensor:
    """Known pilot entries over (combiner, precoder, subcarrier).

    The nominal pilot is all-ones (unit modulus everywhere). Spoofed pilots
    may have arbitrary per-entry modulus but must respect the total energy
    budget, which defaults to the nominal energy M*S*K.
    """

    entries: np.ndarray
    energy_budget: float = None  # type: ignore[assignment]

    def __post_init__(self):
        x = np.asarray(self.entries, dtype=complex)
        if x.ndim != 3:
            raise ValueError("pilot entries must be an (M, S, K) tensor")
        budget = float(x.size) if self.energy_budget is None else float(self.energy_budget)
        if budget < 0:
            raise ValueError("energy budget must be nonnegative")
        energy = float(np.vdot(x, x).real)
        if energy > budget * (1.0 + 1e-9):
            raise ValueError(f"pilot energy {energy:.6g} exceeds budget {budget:.6g}")
        object.__setattr__(self, "entries", x)
        object.__setattr__(self, "energy_budget", budget)

    @classmethod
    def nominal(cls, cfg: SystemConfig) -> "PilotTensor":
        return cls(np.ones(cfg.tensor_shape, dtype=complex))

    @property
    def energy(self) -> float:
        return float(np.vdot(self.entries, self.entries).real)


@dataclass(frozen=True)
class ReceivedTensor:
    """Noisy beam-swept observation tensor Y, shape (M, S, K)."""

    entries: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.entries, dtype=complex)
        if y.ndim != 3:
            raise ValueError("received entries must be an (M, S, K) tensor")
        object.__setattr__(self, "entries", y)


def ula_steering(n: int, angle_rad: float) -> np.ndarray:
    """Half-wavelength ULA response: element i is exp(j pi i sin(angle))."""
    if n < 1:
        raise ValueError("array size must be at least 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle_rad))


def delay_steering(k_count: int, spacing_hz: float, delay_s: float) -> np.ndarray:
    """Subcarrier response of a delay: element k is exp(-j 2 pi k df tau)."""
    if k_count < 1:
        raise ValueError("subcarrier count must be at least 1")
    return np.exp(-2j * np.pi * np.arange(k_count) * spacing_hz * delay_s)


def _dft_codebook(n_antennas: int, n_beams: int) -> np.ndarray:
    if n_beams > n_antennas:
        raise ValueError("more beams than antennas cannot have full column rank")
    n = np.arange(n_antennas)[:, None]
    m = np.arange(n_beams)[None, :]
    return np.exp(-2j * np.pi * n * m / n_beams) / np.sqrt(n_antennas)


def build_codebooks(cfg: SystemConfig) -> Codebooks:
    """Unit-norm DFT beam codebooks for both ends of the link.

    With M = N_rx (and S = N_tx, the default) the matrices are square DFTs,
    unitary up to the 1/sqrt(N) column scaling, which lets the estimator map
    beamspace observations back to element space exactly.
    """
    return Codebooks(
        combiners=_dft_codebook(cfg.n_rx, cfg.n_combiners),
        precoders=_dft_codebook(cfg.n_tx, cfg.n_precoders),
    )


def factor_matrices(
    params: PathParameterSet, books: Codebooks, cfg: SystemConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Beamspace and delay factor matrices (B, C, D) for the given paths.

    B[m, l] = w_m^H a_rx(theta_l), C[s, l] = f_s^H a_tx(phi_l), and column l
    of D is the K-point delay steering vector of tau_l. Columns follow the
    path order of ``params``.
    """
    a_rx = np.stack([ula_steering(cfg.n_rx, th) for th in params.aoa_rad], axis=1)
    a_tx = np.stack([ula_steering(cfg.n_tx, ph) for ph in params.aod_rad], axis=1)
    b = books.combiners.conj().T @ a_rx
    c = books.precoders.conj().T @ a_tx
    d = np.stack(
        [delay_steering(cfg.n_subcarriers, cfg.subcarrier_spacing_hz, tau)
         for tau in params.delays_s],
        axis=1,
    )
    return b, c, d


def channel_tensor(params: PathParameterSet, books: Codebooks, cfg: SystemConfig) -> np.ndarray:
    """Noise-free channel tensor H, shape (M, S, K), including sqrt(E_s)."""
    if params.gains is None:
        raise ValueError("channel synthesis requires path gains")
    b, c, d = factor_matrices(params, books, cfg)
    h = np.einsum("l,ml,sl,kl->msk", params.gains.astype(complex), b, c, d, optimize=True)
    return np.sqrt(cfg.energy_per_subcarrier) * h


def synthesize_received(
    h: np.ndarray, x: PilotTensor, cfg: SystemConfig, rng
) -> ReceivedTensor:
    """Y = H o X + Q with i.i.d. circular complex Gaussian noise.

    Per-entry noise variance is the configured noise density; the generator
    is always advanced (even at zero noise) so paired comparisons across
    noise settings consume identical streams.
    """
    if h.shape != cfg.tensor_shape or x.entries.shape != cfg.tensor_shape:
        raise ValueError(
            f"tensor shapes {h.shape} / {x.entries.shape} do not match config {cfg.tensor_shape}"
        )
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    y = h * x.entries + np.sqrt(cfg.noise_psd_w_per_hz / 2.0) * noise
    return ReceivedTensor(y)


def unfold_subcarriers(y: np.ndarray) -> np.ndarray:
    """Subcarrier-mode unfolding: (M, S, K) -> (K, M*S), snapshot j = m*S + s."""
    m, s, k = y.shape
    return y.reshape(m * s, k).T


def vec(y: np.ndarray) -> np.ndarray:
    """Flatten an (M, S, K) tensor with k fastest, matching ``khatri_rao``."""
    return np.asarray(y).reshape(-1)


def khatri_rao(*mats: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product of matrices with equal column counts."""
    out = np.ones((1, mats[0].shape[1]), dtype=complex)
    for a in mats:
        if a.shape[1] != out.shape[1]:
            raise ValueError("all factors must have the same number of columns")
        out = np.einsum("il,jl->ijl", out, a).reshape(-1, out.shape[1])
    return out


def save_tensor(path, arr: np.ndarray) -> None:
    """Write a 3-D complex tensor as little-endian binary.

    Format: three unsigned 64-bit dimensions, then the entries in C order
    (last axis fastest) as interleaved re/im 64-bit floats.
    """
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim != 3:
        raise ValueError("tensor dump requires a 3-D array")
    with open(path, "wb") as fh:
        fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(arr).astype("<c16").tobytes())


def load_tensor(path) -> np.ndarray:
    """Read a tensor written by ``save_tensor``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 24:
        raise ValueError("tensor file too short for a dimension header")
    shape = tuple(int(v) for v in np.frombuffer(raw[:24], dtype="<u8"))
    expected = 24 + 16 * int(np.prod(shape))
    if len(raw) != expected:
        raise ValueError(f"tensor file size {len(raw)} does not match header {shape}")
    return np.frombuffer(raw[24:], dtype="<c16").reshape(shape).astype(complex)
