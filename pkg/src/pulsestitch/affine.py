"""Planar affine transforms: least-squares fitting, composition, warping.

Transforms are 2x3 coefficient sets with an implicit [0, 0, 1] homogeneous
row. Points are (x, y) with x along columns, y along rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientCorrespondenceError, SingularTransformError

# Normal-equation condition number above this means the correspondence
# geometry cannot support a stable 6-parameter fit.
COND_LIMIT = 1e8

_DET_EPS = 1e-12


@dataclass(frozen=True)
class AffineTransform:
    """Affine map p' = A p + t, stored as the six row-major coefficients."""

    a11: float = 1.0
    a12: float = 0.0
    a13: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    a23: float = 0.0

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(1.0, 0.0, float(dx), 0.0, 1.0, float(dy))

    @classmethod
    def from_matrix(cls, m) -> "AffineTransform":
        m = np.asarray(m, dtype=float)
        if m.shape == (3, 3):
            if not np.allclose(m[2], [0.0, 0.0, 1.0], atol=1e-12):
                raise ValueError("bottom row must be [0, 0, 1]")
            m = m[:2]
        if m.shape != (2, 3):
            raise ValueError(f"expected 2x3 or 3x3 matrix, got {m.shape}")
        return cls(*m.ravel().tolist())

    @classmethod
    def from_coeffs(cls, coeffs) -> "AffineTransform":
        c = [float(v) for v in coeffs]
        if len(c) != 6:
            raise ValueError("expected 6 coefficients")
        return cls(*c)

    def coeffs(self) -> list[float]:
        return [self.a11, self.a12, self.a13, self.a21, self.a22, self.a23]

    def matrix(self) -> np.ndarray:
        """Full 3x3 matrix with the implicit homogeneous row."""
        return np.array(
            [
                [self.a11, self.a12, self.a13],
                [self.a21, self.a22, self.a23],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def determinant(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def apply(self, points) -> np.ndarray:
        """Map (N, 2) points (or a single (2,) point) through the transform."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.empty_like(pts)
        out[:, 0] = self.a11 * pts[:, 0] + self.a12 * pts[:, 1] + self.a13
        out[:, 1] = self.a21 * pts[:, 0] + self.a22 * pts[:, 1] + self.a23
        return out[0] if single else out

    def inverse(self) -> "AffineTransform":
        det = self.determinant
        if abs(det) < _DET_EPS:
            raise SingularTransformError(f"determinant {det} too small to invert")
        ia11 = self.a22 / det
        ia12 = -self.a12 / det
        ia21 = -self.a21 / det
        ia22 = self.a11 / det
        ia13 = -(ia11 * self.a13 + ia12 * self.a23)
        ia23 = -(ia21 * self.a13 + ia22 * self.a23)
        return AffineTransform(ia11, ia12, ia13, ia21, ia22, ia23)


def compose(outer: AffineTransform, inner: AffineTransform) -> AffineTransform:
    """Return the transform applying ``inner`` first, then ``outer``."""
    return AffineTransform.from_matrix(outer.matrix() @ inner.matrix())


def fit_affine(pairs) -> AffineTransform:
    """Least-squares affine fit from (source, target) point pairs.

    Solves the two normal-equation systems (one per output coordinate)
    with LU partial pivoting. Needs at least 3 non-collinear pairs.

    Parameters
    ----------
    pairs : sequence of ((x, y), (x', y'))
        Source points and the target points they should map to.

    Raises
    ------
    InsufficientCorrespondenceError
        Fewer than 3 pairs, or source geometry so degenerate that the
        normal-equation condition number exceeds COND_LIMIT.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[1:] != (2, 2):
        raise ValueError(f"expected (N, 2, 2) pair array, got {arr.shape}")
    n = arr.shape[0]
    if n < 3:
        raise InsufficientCorrespondenceError(f"{n} pairs, need at least 3")
    src = arr[:, 0, :]
    dst = arr[:, 1, :]

    design = np.column_stack([src[:, 0], src[:, 1], np.ones(n)])
    gram = design.T @ design
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise InsufficientCorrespondenceError(
            f"degenerate correspondence geometry (cond={cond:.3e})"
        )
    px = np.linalg.solve(gram, design.T @ dst[:, 0])
    py = np.linalg.solve(gram, design.T @ dst[:, 1])
    return AffineTransform(px[0], px[1], px[2], py[0], py[1], py[2])


def warp_frame(image, transform: AffineTransform, out_size=None):
    """Resample ``image`` into the geometry defined by ``transform``.

    ``transform`` maps source coordinates to output coordinates; each
    output pixel is sampled from the source at the inverse-mapped
    location with bilinear interpolation.

    Parameters
    ----------
    image : ndarray (h, w) or (h, w, c)
    transform : AffineTransform
    out_size : (width, height), defaults to the input size

    Returns
    -------
    (warped, valid) : float64 ndarray like ``image``, bool ndarray (h, w)
        ``valid`` is False where any bilinear neighbor falls outside the
        source; those output pixels are 0.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
        squeeze = True
    elif img.ndim == 3:
        squeeze = False
    else:
        raise ValueError(f"expected 2-D or 3-D image, got shape {img.shape}")
    h, w = img.shape[:2]
    if out_size is None:
        out_w, out_h = w, h
    else:
        out_w, out_h = int(out_size[0]), int(out_size[1])

    inv = transform.inverse()
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    sx = inv.a11 * xs + inv.a12 * ys + inv.a13
    sy = inv.a21 * xs + inv.a22 * ys + inv.a23

    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)

    x0 = np.clip(np.floor(sx), 0, w - 1).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)[:, :, None]
    fy = np.clip(sy - y0, 0.0, 1.0)[:, :, None]

    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    warped = (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
    )
    warped[~valid] = 0.0
    if squeeze:
        warped = warped[:, :, 0]
    return warped, valid
