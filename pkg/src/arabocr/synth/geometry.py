"""Projective transforms and inverse-mapped bilinear warping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DET_EPS = 1e-9


class SingularHomographyError(ValueError):
    pass


@dataclass(frozen=True)
class Homography:
    """3x3 projective map of (x, y, 1) pixel coordinates, normalized so
    the bottom-right entry is 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) < DET_EPS:
            raise SingularHomographyError("homography bottom-right entry is zero")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise SingularHomographyError(f"homography is near-singular (det={np.linalg.det(m):.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def affine(cls, a: np.ndarray) -> "Homography":
        m = np.eye(3)
        m[:2] = a
        return cls(m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)

    def apply(self, points) -> np.ndarray:
        """Map ``(..., 2)`` points with the projective divide."""
        pts = np.asarray(points, dtype=np.float64)
        homog = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        return homog[..., :2] / homog[..., 2:3]


def homography_from_points(src, dst) -> Homography:
    """Exact homography taking four ``src`` points to four ``dst`` points
    (direct linear transform with h33 = 1)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("need exactly four 2-D point correspondences")
    a = np.zeros((8, 8))
    rhs = np.zeros(8)
    for k, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * k] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * k + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * k], rhs[2 * k + 1] = u, v
    try:
        h = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularHomographyError("degenerate point configuration") from exc
    return Homography(np.append(h, 1.0).reshape(3, 3))


def random_homography(height: int, width: int, jitter: float, rng: np.random.Generator) -> Homography:
    """Move each image corner by up to ``jitter`` of the image size."""
    corners = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], dtype=np.float64)
    offsets = rng.uniform(-jitter, jitter, size=(4, 2)) * np.array([width, height])
    return homography_from_points(corners, corners + offsets)


def sample_bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Bilinear samples at pixel-centre coordinates; neighbours outside
    the image contribute ``fill``."""
    h, w = img.shape
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    out = np.zeros(x.shape, dtype=np.float64)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.where(inside, img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], fill)
            out += wy * wx * vals
    return out


def warp_array(img: np.ndarray, h: Homography, out_shape=None, fill: float = 0.0) -> np.ndarray:
    """Inverse-mapped bilinear warp: ``out(p) = img(h^-1 p)``."""
    img = np.asarray(img, dtype=np.float64)
    oh, ow = img.shape if out_shape is None else out_shape
    ys, xs = np.mgrid[0:oh, 0:ow].astype(np.float64)
    src = h.inverse().apply(np.stack([xs, ys], axis=-1))
    return sample_bilinear(img, src[..., 0], src[..., 1], fill)
