"""Joint angle-distance (polar-domain) sampling grid and synthesis dictionary.

The grid samples the sine of the arrival angle uniformly and the wavefront
curvature on uniformly spaced rings; a path is sparse in this domain because
one (angle, curvature) sample pins down a whole spherical wavefront. The
dictionary collects the exact spherical steering vectors of every grid point
at the carrier frequency, laid out ring-major so that flat column index
ring * num_angles + angle_index addresses atom (angle_index, ring).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, approx_array_response, array_response

PDIC_MAGIC = b"PDIC"


@dataclass
class PolarGrid:
    """Sampled angle/curvature lattice for a given array geometry.

    ``angles`` holds the sampled sine-domain values (2(k+1) - 2 - N_a)/N_a,
    strictly increasing inside [-1, 1). ``curvatures`` holds the ring values
    oversample^2 * wavelength * (ring+1) / aperture^2, all positive.
    ``distances[ring, k]`` is the physical ring distance for angle k, which
    degenerates to 0 at the sine value -1 (that atom is built from the
    quadratic-phase form instead of the spherical one).
    """

    num_angles: int
    num_rings: int
    oversample: float
    angles: np.ndarray = field(repr=False)
    curvatures: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)

    def flat_index(self, angle_index: int | np.ndarray, ring: int | np.ndarray):
        """Flat dictionary column for 0-based (angle_index, ring)."""
        return ring * self.num_angles + angle_index

    @property
    def size(self) -> int:
        return self.num_angles * self.num_rings


@dataclass
class PolarDictionary:
    """Synthesis matrix with one unit-norm carrier-frequency atom per grid point."""

    matrix: np.ndarray
    grid: PolarGrid = field(repr=False)


def build_grid(cfg: SystemConfig, num_angles: int, num_rings: int,
               oversample: float) -> PolarGrid:
    """Construct the polar sampling grid for the given geometry."""
    if num_angles < 2:
        raise ValueError("num_angles must be at least 2")
    if num_rings < 1:
        raise ValueError("num_rings must be at least 1")
    if oversample <= 0:
        raise ValueError("oversample must be positive")
    k = np.arange(1, num_angles + 1)
    angles = (2 * (k - 1) - num_angles) / num_angles
    rings = np.arange(1, num_rings + 1)
    curvatures = oversample**2 * cfg.wavelength * rings / cfg.aperture**2
    cos_sq = 1.0 - angles**2
    distances = cfg.aperture**2 * cos_sq[None, :] / (
        2 * oversample**2 * cfg.wavelength * rings[:, None]
    )
    return PolarGrid(num_angles=num_angles, num_rings=num_rings,
                     oversample=oversample, angles=angles,
                     curvatures=curvatures, distances=distances)


def build_dictionary(cfg: SystemConfig, grid: PolarGrid) -> PolarDictionary:
    """Evaluate the exact spherical steering vector of every grid point at f_c.

    The endfire sample (sine value exactly -1) has a degenerate ring distance
    of 0, so its atoms fall back to the quadratic-phase steering vector, which
    is well defined in (sin_angle, curvature) and stays unit-norm.
    """
    w = np.empty((cfg.num_antennas, grid.size), dtype=complex)
    for ring in range(grid.num_rings):
        for k in range(grid.num_angles):
            col = grid.flat_index(k, ring)
            r = grid.distances[ring, k]
            if r > 0:
                theta = float(np.arcsin(grid.angles[k]))
                w[:, col] = array_response(cfg, theta, r, cfg.carrier_freq)
            else:
                w[:, col] = approx_array_response(
                    cfg, grid.angles[k], grid.curvatures[ring], cfg.carrier_freq)
    return PolarDictionary(matrix=w, grid=grid)


def build_angle_dictionary(cfg: SystemConfig, grid: PolarGrid) -> np.ndarray:
    """Far-field dictionary: plane-wave atoms at the grid's sine samples (N x N_a)."""
    w = np.empty((cfg.num_antennas, grid.num_angles), dtype=complex)
    for k in range(grid.num_angles):
        w[:, k] = approx_array_response(cfg, grid.angles[k], 0.0, cfg.carrier_freq)
    return w


def locate_on_grid(grid: PolarGrid, sin_angle: float, curvature: float) -> tuple[int, int]:
    """Nearest grid point to (sin_angle, curvature), 0-based (angle_index, ring).

    The two coordinates are matched independently; ties break toward the
    lower index, the same rule used by the drift-pattern tables.
    """
    if abs(sin_angle) > 1:
        raise ValueError("sin_angle must lie in [-1, 1]")
    if curvature < 0:
        raise ValueError("curvature must be non-negative")
    angle_index = int(np.argmin(np.abs(grid.angles - sin_angle)))
    ring = int(np.argmin(np.abs(grid.curvatures - curvature)))
    return angle_index, ring


def save_dictionary(pdict: PolarDictionary, path) -> None:
    """Write the dictionary matrix as little-endian complex64 pairs, row-major.

    Layout: 16-byte header (magic ``PDIC``, u32 rows, u32 cols, u32 reserved 0)
    followed by rows*cols interleaved float32 (re, im) pairs.
    """
    mat = np.ascontiguousarray(pdict.matrix.astype(np.complex64))
    rows, cols = mat.shape
    with open(path, "wb") as fh:
        fh.write(PDIC_MAGIC)
        fh.write(struct.pack("<III", rows, cols, 0))
        fh.write(mat.astype("<c8").tobytes(order="C"))


def load_dictionary_matrix(path) -> np.ndarray:
    """Read back a matrix written by :func:`save_dictionary`."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != PDIC_MAGIC:
            raise ValueError(f"{path}: not a PDIC dictionary file")
        rows, cols, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(rows, cols).astype(complex)
