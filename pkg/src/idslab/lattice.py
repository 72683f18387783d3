"""Translation-invariant hopping kernels and finite periodic-box Hamiltonians."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

Displacement = tuple[int, ...]

NAMED_SYMBOLS = ("laplacian_1d", "laplacian_d", "zero")


class KernelSymmetryError(ValueError):
    """Raised when a coefficient list violates eps(xi) == eps(-xi)."""

    def __init__(self, violations: list[tuple[Displacement, float, float]]):
        self.violations = violations
        lines = [f"  xi={xi}: {a!r} vs -xi: {b!r}" for xi, a, b in violations]
        super().__init__("hopping coefficients are not symmetric:\n" + "\n".join(lines))


class BoxError(ValueError):
    pass


@dataclass(frozen=True)
class HoppingKernel:
    """Finitely supported real symmetric hopping coefficients on Z^d.

    ``coefficients`` maps a displacement to its hopping amplitude; zero
    entries are never stored, so the zero operator has an empty map.
    """

    dimension: int
    coefficients: Mapping[Displacement, float]
    name: str = "custom"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        clean = {}
        for xi, c in self.coefficients.items():
            xi = tuple(int(v) for v in xi)
            if len(xi) != self.dimension:
                raise ValueError(f"displacement {xi} does not have dimension {self.dimension}")
            if c != 0.0:
                clean[xi] = float(c)
        bad = []
        for xi, c in sorted(clean.items()):
            partner = clean.get(tuple(-v for v in xi), 0.0)
            if partner != c:
                bad.append((xi, c, partner))
        if bad:
            raise KernelSymmetryError(bad)
        object.__setattr__(self, "coefficients", dict(sorted(clean.items())))

    @property
    def support_radius(self) -> int:
        """Largest per-axis |xi| in the support (0 for the zero kernel)."""
        if not self.coefficients:
            return 0
        return max(max(abs(v) for v in xi) for xi in self.coefficients)

    @property
    def norm_bound(self) -> float:
        """sum |eps(xi)|, an upper bound on the operator norm of H0."""
        return float(sum(abs(c) for c in self.coefficients.values()))

    @property
    def lipschitz_bound(self) -> float:
        """Upper bound on |grad eps| (sum |xi| |eps(xi)|), Euclidean |xi|."""
        return float(sum(np.linalg.norm(xi) * abs(c) for xi, c in self.coefficients.items()))

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    def displacements(self) -> np.ndarray:
        return np.array(list(self.coefficients), dtype=np.int64).reshape(-1, self.dimension)

    def values(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()), dtype=float)

    def to_spec(self):
        """Config-file representation (named string or list of pairs)."""
        if self.name in NAMED_SYMBOLS:
            return self.name
        return [[list(xi), c] for xi, c in self.coefficients.items()]


def laplacian(dimension: int) -> HoppingKernel:
    coeffs = {}
    for axis in range(dimension):
        for sign in (1, -1):
            xi = [0] * dimension
            xi[axis] = sign
            coeffs[tuple(xi)] = 1.0
    return HoppingKernel(dimension, coeffs, "laplacian_1d" if dimension == 1 else "laplacian_d")


def kernel_from_symbol(spec, dimension: int | None = None) -> HoppingKernel:
    """Build a kernel from a named symbol or a list of ``(xi, coefficient)`` pairs.

    Named symbols: ``laplacian_1d`` (symbol 2 cos q), ``laplacian_d``
    (2 sum_i cos q_i, needs ``dimension``) and ``zero`` (H0 = 0).
    A mapping ``{xi: c}`` is accepted in place of the pair list.
    """
    if isinstance(spec, str):
        if spec == "laplacian_1d":
            if dimension not in (None, 1):
                raise ValueError("laplacian_1d is one-dimensional")
            return laplacian(1)
        if spec == "laplacian_d":
            if dimension is None:
                raise ValueError("laplacian_d needs an explicit dimension")
            return laplacian(dimension)
        if spec == "zero":
            return HoppingKernel(dimension or 1, {}, "zero")
        raise ValueError(f"unknown named symbol {spec!r}; expected one of {NAMED_SYMBOLS}")

    pairs = spec.items() if isinstance(spec, Mapping) else spec
    coeffs: dict[Displacement, float] = {}
    for xi, c in pairs:
        xi = (int(xi),) if np.isscalar(xi) else tuple(int(v) for v in xi)
        coeffs[xi] = coeffs.get(xi, 0.0) + float(c)
    if dimension is None:
        if not coeffs:
            raise ValueError("empty coefficient list needs an explicit dimension")
        dimension = len(next(iter(coeffs)))
    return HoppingKernel(dimension, coeffs, "custom")


def symbol_eval(kernel: HoppingKernel, q) -> np.ndarray | float:
    """Evaluate eps(q) = sum_xi eps(xi) cos(xi . q).

    ``q`` has trailing axis of length d; for d = 1 a scalar or plain array of
    momenta is accepted as well.
    """
    q = np.asarray(q, dtype=float)
    scalar = q.ndim == 0
    if kernel.dimension == 1 and (q.ndim == 0 or q.shape[-1:] != (1,)):
        q = q[..., None]
    if q.shape[-1] != kernel.dimension:
        raise ValueError(f"momentum has {q.shape[-1]} components, kernel is {kernel.dimension}-d")
    out = np.zeros(q.shape[:-1])
    for xi, c in kernel.coefficients.items():
        out += c * np.cos(q @ np.asarray(xi, dtype=float))
    if scalar:
        return float(out)
    return out


def fourier_coefficients(symbol, dimension: int, radius: int, n: int = 4096) -> HoppingKernel:
    """Recover a kernel from a callable symbol by FFT over an n^d torus grid.

    Coefficients below 1e-13 in magnitude are dropped; the symbol must be a
    trigonometric polynomial of degree <= ``radius`` for the result to be exact.
    """
    axes = [2 * np.pi * np.arange(n) / n] * dimension
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.asarray(symbol(grid if dimension > 1 else grid[..., 0]), dtype=float)
    coef = np.fft.fftn(vals).real / n**dimension
    coeffs = {}
    for xi in itertools.product(range(-radius, radius + 1), repeat=dimension):
        c = coef[tuple(v % n for v in xi)]
        if abs(c) > 1e-13:
            coeffs[xi] = c
    # Symmetrize against roundoff; the symbol is real and even by assumption.
    sym = {xi: 0.5 * (c + coeffs.get(tuple(-v for v in xi), 0.0)) for xi, c in coeffs.items()}
    return HoppingKernel(dimension, sym, "custom")


@dataclass(frozen=True)
class BoxSpec:
    """Periodic box of side L in d dimensions, sites indexed in C order."""

    dimension: int
    L: int

    def __post_init__(self):
        if self.dimension < 1:
            raise BoxError("dimension must be positive")
        if self.L < 2:
            raise BoxError("box side L must be >= 2")

    @property
    def n_sites(self) -> int:
        return self.L**self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.dimension

    def coordinates(self) -> np.ndarray:
        """(N, d) integer coordinates of every site."""
        return np.stack(np.unravel_index(np.arange(self.n_sites), self.shape), axis=-1)

    def index(self, coords) -> np.ndarray:
        coords = np.asarray(coords) % self.L
        return np.ravel_multi_index(tuple(np.moveaxis(coords, -1, 0)), self.shape)

    def dual_grid(self) -> np.ndarray:
        """Momenta 2 pi n / L, shape (N, d), in site order."""
        return 2 * np.pi * self.coordinates() / self.L


@dataclass(frozen=True, eq=False)
class LatticeHamiltonian:
    """H = H0 + lam * V on a periodic box, kept as stencil plus diagonal."""

    box: BoxSpec
    kernel: HoppingKernel
    lam: float
    potential: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.box.n_sites

    @property
    def diagonal(self) -> np.ndarray:
        return self.kernel.coefficients.get((0,) * self.box.dimension, 0.0) + self.lam * self.potential

    @property
    def norm_bound(self) -> float:
        return self.kernel.norm_bound + abs(self.lam) * float(np.max(np.abs(self.potential), initial=0.0))

    def _offdiag_entries(self):
        coords = self.box.coordinates()
        rows, cols, vals = [], [], []
        for xi, c in self.kernel.coefficients.items():
            if not any(xi):
                continue
            # H[x, x - xi] = eps(xi)
            rows.append(np.arange(self.n_sites))
            cols.append(self.box.index(coords - np.asarray(xi)))
            vals.append(np.full(self.n_sites, c))
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def to_dense(self) -> np.ndarray:
        n = self.n_sites
        H = np.zeros((n, n))
        r, c, v = self._offdiag_entries()
        np.add.at(H, (r, c), v)
        H[np.diag_indices(n)] += self.diagonal
        return H

    def to_sparse(self) -> sp.csr_matrix:
        n = self.n_sites
        r, c, v = self._offdiag_entries()
        idx = np.arange(n)
        return sp.csr_matrix(
            (np.concatenate([v, self.diagonal]), (np.concatenate([r, idx]), np.concatenate([c, idx]))),
            shape=(n, n),
        )


def assemble_hamiltonian(kernel: HoppingKernel, box: BoxSpec, lam: float, omega) -> LatticeHamiltonian:
    """Assemble H0 + lam * V_omega on ``box`` with periodic wraparound.

    ``omega`` is a :class:`~idslab.disorder.Realization` or a plain array of
    one value per site.
    """
    values = getattr(omega, "values", omega)
    values = np.asarray(values, dtype=float).reshape(-1)
    rbox = getattr(omega, "box", None)
    if rbox is not None and rbox != box:
        raise BoxError(f"realization box {rbox} does not match {box}")
    if kernel.dimension != box.dimension:
        raise BoxError(f"kernel is {kernel.dimension}-d but box is {box.dimension}-d")
    if values.size != box.n_sites:
        raise BoxError(f"expected {box.n_sites} potential values, got {values.size}")
    if 2 * kernel.support_radius >= box.L:
        raise BoxError(
            f"kernel support radius {kernel.support_radius} must be < L/2 = {box.L / 2}; "
            "wraparound would double-count couplings"
        )
    if lam < 0:
        raise ValueError("disorder strength must be >= 0")
    values = values.copy()
    values.setflags(write=False)
    return LatticeHamiltonian(box, kernel, float(lam), values)


def free_spectrum(kernel: HoppingKernel, box: BoxSpec) -> np.ndarray:
    """Sorted symbol values on the box's dual grid (the lam = 0 spectrum)."""
    return np.sort(symbol_eval(kernel, box.dual_grid()))
