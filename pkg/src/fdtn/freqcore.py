"""Phase-difference motion encoding and per-bin phase rotation.

The transformation between two frames is summarized per frequency bin as a
near-unit complex number R rotating the first spectrum's phase onto the
second's. Multiplying a spectrum by R advances the motion one step; velocity
mirroring and blending operate directly on R fields.
"""

from dataclasses import dataclass, field

import numpy as np

from .gridfft import ComplexGrid, _neg_index

__all__ = [
    "PhaseField",
    "encode_transform",
    "apply_transform",
    "encode_transform_multi",
    "higher_order",
    "flip_variants",
    "blend_variants",
]


@dataclass
class PhaseField:
    """Per-bin transformation field: (height, width) re/im arrays.

    Fields produced by encode/blend have magnitude <= 1 (the eps in the
    encoding denominator damps instead of renormalizing); learned denoisers
    may emit slight excursions above 1, so magnitude is not a constructor
    check.
    """

    width: int
    height: int
    re: np.ndarray = field(repr=False)
    im: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("field dimensions must be positive")
        self.re = np.asarray(self.re, dtype=np.float64).reshape(self.height, self.width)
        self.im = np.asarray(self.im, dtype=np.float64).reshape(self.height, self.width)

    @classmethod
    def from_complex(cls, z) -> "PhaseField":
        z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
        return cls(z.shape[1], z.shape[0], z.real.copy(), z.imag.copy())

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.re, self.im)


def _check_dims(a, b, what: str):
    if a.width != b.width or a.height != b.height:
        raise ValueError(
            f"{what}: dimensions differ, "
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )


def _encode(z0: np.ndarray, z1: np.ndarray, eps: float) -> np.ndarray:
    # dot product in the real part, cross product in the imaginary part;
    # written out componentwise so encode(h, h) has im identically zero
    # (a*d - b*c cancels exactly when the operands are the same array).
    a, b = z0.real, z0.imag
    c, d = z1.real, z1.imag
    denom = np.hypot(a, b) * np.hypot(c, d) + eps
    return (a * c + b * d) / denom + 1j * ((a * d - b * c) / denom)


def encode_transform(h0: ComplexGrid, h1: ComplexGrid, eps: float = 1e-8) -> PhaseField:
    """Per-bin phase difference rotating h0's phase onto h1's."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_dims(h0, h1, "encode_transform")
    return PhaseField.from_complex(_encode(h0.to_complex(), h1.to_complex(), eps))


def apply_transform(r: PhaseField, h: ComplexGrid) -> ComplexGrid:
    """Advance a spectrum one step: per-bin complex multiplication by R."""
    _check_dims(r, h, "apply_transform")
    return ComplexGrid.from_complex(r.to_complex() * h.to_complex())


def encode_transform_multi(spectra, eps: float = 1e-8) -> PhaseField:
    """Average the pairwise encodings of consecutive spectra.

    Arithmetic mean of the (re, im) fields; any bin whose mean exceeds unit
    magnitude is scaled back down to 1, and nothing is ever scaled up.
    """
    spectra = list(spectra)
    if len(spectra) < 2:
        raise ValueError("encode_transform_multi needs at least two spectra")
    for s in spectra[1:]:
        _check_dims(spectra[0], s, "encode_transform_multi")
    acc = np.zeros((spectra[0].height, spectra[0].width), dtype=np.complex128)
    for a, b in zip(spectra[:-1], spectra[1:]):
        acc += _encode(a.to_complex(), b.to_complex(), eps)
    acc /= len(spectra) - 1
    mag = np.abs(acc)
    acc = np.where(mag > 1.0, acc / np.maximum(mag, 1e-300), acc)
    return PhaseField.from_complex(acc)


def higher_order(r01: PhaseField, r12: PhaseField, eps: float = 1e-8) -> PhaseField:
    """Difference of differences: the encoding formula applied to two fields.

    For constant velocity this is the unit field; under acceleration it
    carries the per-step change of the transformation.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_dims(r01, r12, "higher_order")
    return PhaseField.from_complex(_encode(r01.to_complex(), r12.to_complex(), eps))


def flip_variants(r: PhaseField):
    """Four velocity-mirrored copies: identity, horizontal, vertical, both.

    Mirroring negates the bin index along an axis, i -> (W - i) mod W, which
    keeps the DC row/column fixed and carries velocity (dx, dy) to (-dx, dy)
    for the horizontal case exactly. Plain array reversal would not.
    """
    cols = _neg_index(r.width)
    rows = _neg_index(r.height)
    ident = PhaseField(r.width, r.height, r.re.copy(), r.im.copy())
    horiz = PhaseField(r.width, r.height, r.re[:, cols], r.im[:, cols])
    vert = PhaseField(r.width, r.height, r.re[rows, :], r.im[rows, :])
    both = PhaseField(r.width, r.height, r.re[rows][:, cols], r.im[rows][:, cols])
    return ident, horiz, vert, both


def blend_variants(variants, weights: np.ndarray) -> PhaseField:
    """Per-bin convex combination of four variants.

    weights: (4, height, width) nonnegative, summing to 1 at every bin
    within 1e-6.
    """
    variants = tuple(variants)
    if len(variants) != 4:
        raise ValueError("blend_variants expects exactly four variants")
    for v in variants[1:]:
        _check_dims(variants[0], v, "blend_variants")
    w = np.asarray(weights, dtype=np.float64)
    want = (4, variants[0].height, variants[0].width)
    if w.shape != want:
        raise ValueError(f"weights shape {w.shape} != {want}")
    if np.min(w) < -1e-6:
        raise ValueError("blend weights must be nonnegative")
    sums = w.sum(axis=0)
    if np.max(np.abs(sums - 1.0)) > 1e-6:
        raise ValueError("blend weights must sum to 1 per bin")
    re = sum(w[k] * variants[k].re for k in range(4))
    im = sum(w[k] * variants[k].im for k in range(4))
    return PhaseField(variants[0].width, variants[0].height, re, im)
