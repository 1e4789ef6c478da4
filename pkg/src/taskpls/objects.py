"""Stochastic object models for the two signal-known-exactly detection tasks.

Images are plain 2-D float64 arrays indexed ``[row, col]``. Every generator is
a pure function of its parameters and an integer seed.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from scipy.special import expit

from .errors import InvalidParameterError, ShapeError

H0 = 0
H1 = 1


@dataclass(frozen=True)
class MvnLumpyParams:
    width: int = 32
    height: int = 32
    dc_offset: float = 0.1
    kernel_std: float = 6.0
    field_std: float = 0.03

    kind = "mvn_lumpy"

    def __post_init__(self):
        _check_dims(self.width, self.height)
        if not self.kernel_std > 0:
            raise InvalidParameterError(f"kernel_std must be > 0, got {self.kernel_std}")
        if not self.field_std > 0:
            raise InvalidParameterError(f"field_std must be > 0, got {self.field_std}")


@dataclass(frozen=True)
class BinaryTextureParams:
    width: int = 32
    height: int = 32
    spectral_exponent: float = 1.5
    sigmoid_center: float = 0.0
    sigmoid_steepness: float = 5.0
    low_level: float = 0.0
    high_level: float = 1.0

    kind = "binary_texture"

    def __post_init__(self):
        _check_dims(self.width, self.height)
        if not self.sigmoid_steepness > 0:
            raise InvalidParameterError("sigmoid_steepness must be > 0")
        if not self.low_level < self.high_level:
            raise InvalidParameterError("low_level must be below high_level")


BackgroundParams = Union[MvnLumpyParams, BinaryTextureParams]


@dataclass(frozen=True)
class SignalSpec:
    shape: str = "gaussian"
    center: tuple[float, float] | None = None  # None: grid center
    scale: float = 5.0
    amplitude: float = 0.02

    def __post_init__(self):
        if self.shape not in ("gaussian", "disk"):
            raise InvalidParameterError(f"unknown signal shape {self.shape!r}")
        if not self.scale > 0:
            raise InvalidParameterError("signal scale must be > 0")
        if not np.isfinite(self.amplitude):
            raise InvalidParameterError("signal amplitude must be finite")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class NoiseSpec:
    std: float = 0.01

    def __post_init__(self):
        if not self.std >= 0:
            raise InvalidParameterError(f"noise std must be >= 0, got {self.std}")


@dataclass
class LabeledEnsemble:
    """Noisy images, their noise-free counterparts and H0/H1 labels.

    Arrays are stacked along axis 0: ``noisy`` and ``truth`` have shape
    ``(n, height, width)`` and ``labels`` holds 0 (H0) or 1 (H1).
    """

    noisy: np.ndarray
    truth: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.noisy.shape != self.truth.shape or self.noisy.ndim != 3:
            raise ShapeError(
                f"noisy {self.noisy.shape} and truth {self.truth.shape} must be equal (n, h, w) stacks"
            )
        if self.labels.shape != (self.noisy.shape[0],):
            raise ShapeError("one label per item required")

    def __len__(self):
        return self.noisy.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.noisy.shape[1:]

    @property
    def items(self):
        return list(zip(self.noisy, self.truth, self.labels.tolist()))

    def by_label(self, label: int) -> np.ndarray:
        return self.noisy[self.labels == label]


def _check_dims(width, height):
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise InvalidParameterError(f"grid dimensions must be positive integers, got {width}x{height}")


def check_grid(image, name="image") -> np.ndarray:
    """Return ``image`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


def derive_seed(master_seed: int, index: int, role: str) -> int:
    """Stable 64-bit seed from ``(master_seed, index, role)``."""
    key = f"{int(master_seed)}:{int(index)}:{role}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def _radial_frequency(height, width):
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    return np.sqrt(fx * fx + fy * fy)


def _filtered_white_noise(spectrum, seed):
    # Circular convolution of white noise with the kernel whose transfer
    # function is `spectrum`; marginal variance is mean(|spectrum|^2).
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(spectrum.shape)
    return np.fft.ifft2(np.fft.fft2(white) * spectrum).real


def gen_mvn_lumpy(params: MvnLumpyParams, seed: int) -> np.ndarray:
    """Type-2 lumpy background: Gaussian-filtered white noise plus a DC level.

    The filter is normalized so the marginal standard deviation of every
    pixel is exactly ``params.field_std``.
    """
    freq = _radial_frequency(params.height, params.width)
    spectrum = np.exp(-2.0 * np.pi**2 * params.kernel_std**2 * freq**2)
    spectrum *= params.field_std / np.sqrt(np.mean(spectrum**2))
    return params.dc_offset + _filtered_white_noise(spectrum, seed)


def gen_binary_texture(params: BinaryTextureParams, seed: int) -> np.ndarray:
    """Sigmoid-thresholded Gaussian 1/f^p field mapped onto ``[low, high]``."""
    freq = _radial_frequency(params.height, params.width)
    spectrum = np.zeros_like(freq)
    nz = freq > 0
    spectrum[nz] = freq[nz] ** (-params.spectral_exponent)
    # unit marginal variance (the DC term is zero so the field is zero-mean)
    spectrum /= np.sqrt(np.mean(spectrum**2))
    x = _filtered_white_noise(spectrum, seed)
    level = expit(params.sigmoid_steepness * (x - params.sigmoid_center))
    return params.low_level + (params.high_level - params.low_level) * level


def gen_background(params: BackgroundParams, seed: int) -> np.ndarray:
    if isinstance(params, MvnLumpyParams):
        return gen_mvn_lumpy(params, seed)
    if isinstance(params, BinaryTextureParams):
        return gen_binary_texture(params, seed)
    raise InvalidParameterError(f"unsupported background model {type(params).__name__}")


def signal_center(spec: SignalSpec, width: int, height: int) -> tuple[float, float]:
    if spec.center is None:
        return (float(height // 2), float(width // 2))
    return spec.center


def render_signal(spec: SignalSpec, width: int, height: int) -> np.ndarray:
    _check_dims(width, height)
    r0, c0 = signal_center(spec, width, height)
    if not (0 <= r0 <= height - 1 and 0 <= c0 <= width - 1):
        raise InvalidParameterError(f"signal center {(r0, c0)} outside {height}x{width} grid")
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    dist2 = (rows - r0) ** 2 + (cols - c0) ** 2
    if spec.shape == "gaussian":
        return spec.amplitude * np.exp(-dist2 / (2.0 * spec.scale**2))
    return np.where(dist2 <= spec.scale**2, float(spec.amplitude), 0.0)


def add_noise(image, spec: NoiseSpec, seed: int) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if spec.std == 0:
        return image.copy()
    rng = np.random.default_rng(seed)
    return image + spec.std * rng.standard_normal(image.shape)


def make_ensemble(
    bg: BackgroundParams,
    signal: SignalSpec,
    noise: NoiseSpec,
    n_absent: int,
    n_present: int,
    master_seed: int,
    paired_backgrounds: bool = False,
) -> LabeledEnsemble:
    """Generate ``n_absent`` H0 items followed by ``n_present`` H1 items.

    Each item draws its background and noise from seeds derived from
    ``(master_seed, index within class, role)``, so items are independent and
    the ensemble is reproducible. With ``paired_backgrounds`` the k-th H1 item
    reuses the background seed of the k-th H0 item.
    """
    if n_absent < 0 or n_present < 0:
        raise InvalidParameterError("item counts must be >= 0")
    h, w = bg.height, bg.width
    sig = render_signal(signal, w, h)
    n = n_absent + n_present
    noisy = np.empty((n, h, w))
    truth = np.empty((n, h, w))
    labels = np.array([H0] * n_absent + [H1] * n_present, dtype=np.int8)
    seeds = []
    for i in range(n):
        label = int(labels[i])
        k = i if label == H0 else i - n_absent
        tag = "H0" if label == H0 else "H1"
        bg_seed = derive_seed(master_seed, k, "background" if paired_backgrounds else f"background/{tag}")
        noise_seed = derive_seed(master_seed, k, f"noise/{tag}")
        b = gen_background(bg, bg_seed)
        truth[i] = b + sig if label == H1 else b
        noisy[i] = add_noise(truth[i], noise, noise_seed)
        seeds.append({"background": bg_seed, "noise": noise_seed})
    provenance = {
        "background": {"model": bg.kind, **asdict(bg)},
        "signal": asdict(signal),
        "noise": asdict(noise),
        "master_seed": int(master_seed),
        "paired_backgrounds": bool(paired_backgrounds),
        "n_absent": int(n_absent),
        "n_present": int(n_present),
        "seeds": seeds,
    }
    return LabeledEnsemble(noisy, truth, labels, provenance)


def background_from_dict(d: dict) -> BackgroundParams:
    d = dict(d)
    model = d.pop("model", None) or d.pop("kind", None)
    if model == "mvn_lumpy":
        return MvnLumpyParams(**d)
    if model == "binary_texture":
        return BinaryTextureParams(**d)
    raise InvalidParameterError(f"unknown background model {model!r}")
