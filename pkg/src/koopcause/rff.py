"""Random Fourier feature dictionaries ``cos(phi_j . x + b_j)``.

Frequencies are drawn from a zero-mean Gaussian with diagonal covariance,
``phi_j ~ N(0, diag(bandwidth**2))``, so the real-feature inner product
``(2/M) * Psi(x) . Psi(y)`` estimates the Gaussian kernel
``exp(-0.5 * sum((bandwidth * (x - y))**2))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .io import array_digest, read_blob, write_blob

__all__ = [
    "RffDictionary",
    "sample",
    "evaluate",
    "tensor_compose",
    "zero_extend",
    "concat_features",
    "default_bandwidth",
    "gaussian_kernel",
    "kernel_estimate",
    "kernel_approximation_error",
    "save_dictionary",
    "load_dictionary",
]

TWO_PI = 2.0 * np.pi
_MAGIC = b"KCRFF001"


@dataclass(frozen=True, eq=False)
class RffDictionary:
    frequencies: np.ndarray  # (M, d)
    offsets: np.ndarray  # (M,), radians in [0, 2*pi)
    seed: int
    bandwidth: np.ndarray  # (d,) frequency std per input dimension

    def __post_init__(self):
        freq = np.array(self.frequencies, dtype=float, ndmin=2)
        off = np.array(self.offsets, dtype=float).reshape(-1)
        bw = np.array(self.bandwidth, dtype=float).reshape(-1)
        if freq.shape[0] < 1 or freq.shape[0] != off.size:
            raise ContractViolation(f"need M >= 1 frequencies matching offsets, got {freq.shape} / {off.shape}")
        if not np.all(np.isfinite(freq)):
            raise ContractViolation("frequencies must be finite")
        if np.any(off < 0) or np.any(off >= TWO_PI):
            raise ContractViolation("offsets must lie in [0, 2*pi)")
        if bw.size != freq.shape[1]:
            raise ContractViolation("bandwidth length must equal the input dimension")
        for a in (freq, off, bw):
            a.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "bandwidth", bw)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def m_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def digest(self) -> str:
        return array_digest(self.frequencies, self.offsets)

    def __eq__(self, other):
        if not isinstance(other, RffDictionary):
            return NotImplemented
        return (self.seed == other.seed
                and np.array_equal(self.frequencies, other.frequencies)
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.bandwidth, other.bandwidth))

    __hash__ = None

    def __call__(self, points):
        return evaluate(self, points)

    def select(self, columns) -> "RffDictionary":
        """Restrict to a subset of input dimensions, keeping every feature."""
        columns = list(columns)
        return RffDictionary(self.frequencies[:, columns], self.offsets, self.seed, self.bandwidth[columns])

    def head(self, m) -> "RffDictionary":
        return RffDictionary(self.frequencies[:m], self.offsets[:m], self.seed, self.bandwidth)


def _check_bandwidth(bandwidth, d):
    bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
    if not np.all(np.isfinite(bw)) or np.any(bw <= 0):
        raise ContractViolation(f"bandwidths must be positive and finite, got {bw}")
    return bw


def sample(input_dim: int, m_features: int, bandwidth, seed: int) -> RffDictionary:
    """Draw ``m_features`` frequencies and offsets, fully determined by ``seed``.

    Frequencies and offsets come from separate child streams, so a larger
    ``m_features`` with the same seed extends a smaller draw row by row.
    """
    if int(m_features) != m_features or m_features < 1:
        raise ContractViolation(f"m_features must be a positive integer, got {m_features}")
    if int(input_dim) != input_dim or input_dim < 1:
        raise ContractViolation(f"input_dim must be a positive integer, got {input_dim}")
    bw = _check_bandwidth(bandwidth, int(input_dim))
    freq_ss, off_ss = np.random.SeedSequence(int(seed)).spawn(2)
    freq = np.random.default_rng(freq_ss).standard_normal((int(m_features), int(input_dim))) * bw
    off = np.random.default_rng(off_ss).uniform(0.0, TWO_PI, int(m_features))
    return RffDictionary(freq, off, seed, bw)


def evaluate(dictionary: RffDictionary, points) -> np.ndarray:
    """Feature values for one point ``(d,) -> (M,)`` or a batch ``(n, d) -> (n, M)``."""
    x = np.asarray(points, dtype=float)
    if x.shape[-1:] != (dictionary.input_dim,) or x.ndim > 2:
        raise ContractViolation(f"expected points with trailing dimension {dictionary.input_dim}, got {x.shape}")
    # einsum keeps the summation order independent of batch size (BLAS does not)
    return np.cos(np.einsum("...d,md->...m", x, dictionary.frequencies) + dictionary.offsets)


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint32)[0])


def tensor_compose(dict_a: RffDictionary, dict_b: RffDictionary) -> RffDictionary:
    """Pair features index-wise over the concatenated input ``[x_a; x_b]``.

    Row ``j`` of the result has frequency ``[phi_a_j; phi_b_j]``. The phase
    offsets are drawn afresh, uniform on ``[0, 2*pi)``, from a stream keyed by
    both parents' seeds.
    """
    if dict_a.m_features != dict_b.m_features:
        raise ContractViolation(f"cannot compose M={dict_a.m_features} with M={dict_b.m_features}")
    seed = _derived_seed(dict_a.seed, dict_b.seed, 0x7E5)
    off = np.random.default_rng(seed).uniform(0.0, TWO_PI, dict_a.m_features)
    return RffDictionary(np.hstack([dict_a.frequencies, dict_b.frequencies]), off, seed,
                         np.concatenate([dict_a.bandwidth, dict_b.bandwidth]))


def zero_extend(dictionary: RffDictionary, extra_bandwidth) -> RffDictionary:
    """Same features over a larger input whose extra dimensions are ignored."""
    extra = np.atleast_1d(np.asarray(extra_bandwidth, dtype=float))
    zeros = np.zeros((dictionary.m_features, extra.size))
    return RffDictionary(np.hstack([dictionary.frequencies, zeros]), dictionary.offsets, dictionary.seed,
                         np.concatenate([dictionary.bandwidth, extra]))


def concat_features(first: RffDictionary, second: RffDictionary) -> RffDictionary:
    """Stack two dictionaries over the same input into one with M1 + M2 features."""
    if first.input_dim != second.input_dim:
        raise ContractViolation("dictionaries must share the input dimension")
    return RffDictionary(np.vstack([first.frequencies, second.frequencies]),
                         np.concatenate([first.offsets, second.offsets]),
                         _derived_seed(first.seed, second.seed, 0xCA7), second.bandwidth)


def default_bandwidth(data) -> np.ndarray:
    """Per-dimension ``1 / std`` of the data; constant columns get 1."""
    std = np.std(np.asarray(data, dtype=float), axis=0)
    return np.where(std > 0, 1.0 / np.where(std > 0, std, 1.0), 1.0)


def gaussian_kernel(x, y, bandwidth) -> np.ndarray:
    diff = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) * np.asarray(bandwidth, dtype=float)
    return np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def kernel_estimate(dictionary: RffDictionary, x, y) -> np.ndarray:
    """``(2/M) * Psi(x) . Psi(y)`` row by row."""
    return 2.0 / dictionary.m_features * np.sum(evaluate(dictionary, x) * evaluate(dictionary, y), axis=-1)


def kernel_approximation_error(dictionary: RffDictionary, x, y, bandwidth=None) -> float:
    """Max over pairs ``(x[i], y[i])`` of ``|estimate - exact Gaussian kernel|``."""
    bw = dictionary.bandwidth if bandwidth is None else bandwidth
    exact = gaussian_kernel(x, y, bw)
    return float(np.max(np.abs(kernel_estimate(dictionary, x, y) - exact)))


def save_dictionary(path, dictionary: RffDictionary):
    header = {"input_dim": dictionary.input_dim, "m_features": dictionary.m_features,
              "seed": dictionary.seed, "bandwidth": dictionary.bandwidth.tolist(),
              "digest": dictionary.digest}
    write_blob(path, _MAGIC, header, [dictionary.frequencies, dictionary.offsets, dictionary.bandwidth])


def load_dictionary(path) -> RffDictionary:
    header, (freq, off, bw) = read_blob(path, _MAGIC)
    d = RffDictionary(freq, off, header["seed"], bw)
    if d.digest != header["digest"]:
        raise ContractViolation(f"{path}: payload digest mismatch")
    return d
