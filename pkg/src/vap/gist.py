"""Spatial-envelope ("gist") descriptor of object crops.

A crop is resized to 128x128, filtered per color channel by a bank of 20
complex Gabor filters (3 scales; 8, 8 and 4 orientations) and the response
magnitudes are averaged over a 4x4 grid of blocks, giving
3 * 20 * 16 = 960 features.

Feature order is channel-major, then scale, then orientation, then block
(row-major), i.e. ``features[((c * 20 + k) * 16) + b]`` where ``k`` counts
filters scale by scale.

Orientation ``theta`` is the direction of the filter's wave vector measured
from the image x axis (columns), so ``theta = 0`` responds to vertical
stripes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .core import DegenerateInputError, GistPrediction, Kind
from .svm import KernelSpec, SvmModel, calibrate, train_smo

N_FEATURES = 960
WORKING_SIZE = 128
GRID = 4


@dataclass(frozen=True)
class GaborFilter:
    frequency: float  # cycles / pixel
    orientation: float  # radians in [0, pi)
    sigma: float  # spatial std of the Gaussian envelope, pixels
    kernel: np.ndarray = field(repr=False)  # complex, zero-sum

    @property
    def size(self) -> int:
        return self.kernel.shape[0]


def gabor_sigma(frequency: float, n_orientations: int) -> float:
    """Envelope width at which adjacent orientations' half-power contours touch.

    In the frequency domain the filter is a Gaussian of std ``s_f`` centred
    at distance ``frequency`` from the origin; its half-power radius is
    ``s_f * sqrt(ln 2)``, and adjacent centres lie ``2 f sin(pi / 2n)`` apart.
    """
    s_f = frequency * np.sin(np.pi / (2 * n_orientations)) / np.sqrt(np.log(2.0))
    return 1.0 / (2.0 * np.pi * s_f)


def gabor_kernel(frequency: float, theta: float, sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=float)
    xx, yy = np.meshgrid(ax, ax)
    envelope = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    carrier = np.exp(2j * np.pi * frequency * (xx * np.cos(theta) + yy * np.sin(theta)))
    # remove the DC response by subtracting a scaled copy of the envelope
    kappa = (envelope * carrier).sum() / envelope.sum()
    kernel = envelope * (carrier - kappa)
    return kernel / envelope.sum()


@dataclass(frozen=True)
class GaborBank:
    filters: tuple[GaborFilter, ...]
    pad: int = 32

    def __len__(self) -> int:
        return len(self.filters)

    @property
    def fft_size(self) -> int:
        return WORKING_SIZE + 2 * self.pad

    def transfer_functions(self) -> np.ndarray:
        """DFTs of the kernels on the padded working grid, shape (n_filters, P, P).

        Kernels wider than the grid are wrapped (periodic summation) before
        the transform. Stored in single precision; filtering runs in float32.
        """
        cached = getattr(self, "_transfer", None)
        if cached is not None:
            return cached
        P = self.fft_size
        out = np.empty((len(self.filters), P, P), dtype=np.complex128)
        for k, f in enumerate(self.filters):
            r = f.size // 2
            idx = np.arange(-r, r + 1) % P
            wrapped = np.zeros((P, P), dtype=np.complex128)
            np.add.at(wrapped, (idx[:, None], idx[None, :]), f.kernel)
            out[k] = sfft.fft2(wrapped)
        out[:, 0, 0] = 0.0
        out = out.astype(np.complex64)
        object.__setattr__(self, "_transfer", out)
        return out


def build_gabor_bank(frequencies: Sequence[float] = (0.02, 0.08, 0.32),
                     orientations: Sequence[int] = (8, 8, 4), pad: int = 32) -> GaborBank:
    if len(frequencies) != len(orientations):
        raise ValueError("one orientation count per frequency scale is required")
    filters = []
    for freq, n in zip(frequencies, orientations):
        sigma = gabor_sigma(freq, n)
        for j in range(n):
            theta = np.pi * j / n
            filters.append(GaborFilter(freq, theta, sigma, gabor_kernel(freq, theta, sigma)))
    return GaborBank(tuple(filters), pad)


def resize_bilinear(img: np.ndarray, size: int = WORKING_SIZE) -> np.ndarray:
    h, w = img.shape[:2]
    zoom = (size / h, size / w) + (1,) * (img.ndim - 2)
    out = ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=True)
    return out[:size, :size]


def filter_energies(crop: np.ndarray, bank: GaborBank) -> np.ndarray:
    """Gabor magnitude maps, shape (3, n_filters, 128, 128)."""
    crop = np.asarray(crop, dtype=float)
    if crop.ndim == 2:
        crop = np.repeat(crop[:, :, None], 3, axis=2)
    if crop.shape[0] < 2 or crop.shape[1] < 2:
        raise DegenerateInputError(f"gist needs a crop of at least 2x2, got {crop.shape[:2]}")
    img = resize_bilinear(crop, WORKING_SIZE)
    p = bank.pad
    chans = np.pad(np.moveaxis(img, 2, 0), ((0, 0), (p, p), (p, p)), mode="symmetric").astype(np.float32)
    spectrum = sfft.fft2(chans)
    resp = sfft.ifft2(spectrum[:, None] * bank.transfer_functions()[None], overwrite_x=True)
    return np.abs(resp[..., p:p + WORKING_SIZE, p:p + WORKING_SIZE]).astype(float)


def compute_gist(crop: np.ndarray, bank: GaborBank) -> np.ndarray:
    """960-dimensional descriptor of an RGB crop (any size >= 2x2)."""
    mag = filter_energies(crop, bank)
    b = WORKING_SIZE // GRID
    blocks = mag.reshape(3, len(bank), GRID, b, GRID, b).mean(axis=(3, 5))
    return blocks.reshape(-1)


def write_descriptor(path, features: np.ndarray) -> None:
    with open(path, "w") as fh:
        for v in features:
            fh.write(f"{v:.9e}\n")


def read_descriptor(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1)


class GistClassifier:
    """Man-made vs natural decision on gist features (+1 = man-made)."""

    def __init__(self, model: SvmModel, bank: GaborBank):
        self.model = model
        self.bank = bank

    @classmethod
    def fit(cls, crops: Sequence[np.ndarray], kinds: Sequence[Kind], bank: Optional[GaborBank] = None,
            kernel: KernelSpec = KernelSpec("linear"), C: float = 1.0,
            calib_crops: Optional[Sequence[np.ndarray]] = None,
            calib_kinds: Optional[Sequence[Kind]] = None) -> "GistClassifier":
        bank = bank or build_gabor_bank()
        X = np.array([compute_gist(c, bank) for c in crops])
        y = np.array([1 if k is Kind.MAN_MADE else -1 for k in kinds])
        model = train_smo(X, y, kernel=kernel, C=C)
        if calib_crops is not None:
            Xc = np.array([compute_gist(c, bank) for c in calib_crops])
            yc = np.array([1 if k is Kind.MAN_MADE else -1 for k in calib_kinds])
            model = replace(model, calibration=calibrate(model, Xc, yc))
        return cls(model, bank)

    def predict_features(self, features: np.ndarray) -> GistPrediction:
        p = float(self.model.predict_proba(features[None, :])[0])
        if p >= 0.5:
            return GistPrediction(Kind.MAN_MADE, p, features)
        return GistPrediction(Kind.NATURAL, 1.0 - p, features)

    def predict(self, crop: np.ndarray) -> GistPrediction:
        return self.predict_features(compute_gist(crop, self.bank))
