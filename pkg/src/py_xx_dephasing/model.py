"""Domain types for the dephasing XX chain and the momentum/real-space maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike


DENSE_MAX_L = 4096
STRUCTURE_TOL = 1e-10
_TWO_PI = 2.0 * np.pi


class ModelError(ValueError):
    """Raised when chain parameters, grids or initial data are invalid."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot deliver a trustworthy value."""


@dataclass(frozen=True)
class ChainParams:
    """Periodic XX chain of ``L`` sites with hopping ``J`` and dephasing ``gamma``."""

    L: int
    J: float = 1.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if int(self.L) != self.L or self.L < 2:
            raise ModelError(f"L must be an integer >= 2, got {self.L!r}")
        if not self.J > 0:
            raise ModelError(f"J must be positive, got {self.J!r}")
        if not self.gamma >= 0:
            raise ModelError(f"gamma must be non-negative, got {self.gamma!r}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "J", float(self.J))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def diffusion_constant(self) -> float:
        if self.gamma <= 0:
            raise ModelError("the diffusion constant needs gamma > 0")
        return 2.0 * self.J**2 / self.gamma


def dispersion(q: ArrayLike, J: float) -> Any:
    """omega(q) = 8 J sin(q/2); exactly zero on multiples of 2*pi."""
    q_arr = np.asarray(q, dtype=np.float64)
    omega = 8.0 * J * np.sin(0.5 * q_arr)
    omega = np.where(np.mod(q_arr, _TWO_PI) == 0.0, 0.0, omega)
    return float(omega) if omega.ndim == 0 else omega


@dataclass(frozen=True)
class MomentumMode:
    n: int
    q: float
    omega: float


def mode_arrays(L: int, J: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mode index n = 1..L with q_n = 2*pi*n/L and omega(q_n)."""
    if L < 2:
        raise ModelError(f"momentum grid needs L >= 2, got {L}")
    n = np.arange(1, L + 1)
    q = _TWO_PI * (n / L)
    return n, q, dispersion(q, J)


def momentum_grid(L: int, J: float = 1.0) -> list[MomentumMode]:
    n, q, omega = mode_arrays(L, J)
    return [
        MomentumMode(n=int(a), q=float(b), omega=float(c))
        for a, b, c in zip(n, q, omega)
    ]


def unique_mode_indices(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical index m = min(n, N - n) per mode n = 1..N and the distinct m.

    Modes n and N - n share omega (and, for even N, the corner phase).
    """
    n = np.arange(1, n_modes + 1) % n_modes
    canonical = np.minimum(n, n_modes - n)
    return canonical, np.unique(canonical)


def representative_positions(distinct: np.ndarray, n_modes: int) -> np.ndarray:
    """Array position (n - 1) of the mode standing in for each canonical m."""
    return np.where(distinct == 0, n_modes - 1, distinct - 1)


def corner_phase(q: float, L: int) -> complex:
    """Phase eta with g_L = eta * g_0 imposed by periodicity of C.

    On the momentum grid eta = (-i)^L (-1)^n and is evaluated exactly.
    """
    n_float = q * L / _TWO_PI
    n = round(n_float)
    if abs(n_float - n) < 1e-9:
        base = (-1j) ** (L % 4)
        return complex(base * (-1) ** (n % 2))
    return complex(np.exp(-0.5j * L * (np.pi - q)))


def momentum_transform(c: ArrayLike) -> np.ndarray:
    """c(q_n) = sum_x exp(-i q_n x) c_x for n = 1..L."""
    return np.roll(np.fft.fft(np.asarray(c, dtype=np.float64)), -1)


def synthesize(h: ArrayLike) -> np.ndarray:
    """(1/L) sum_n exp(i q_n x) h_n for x = 0..L-1."""
    return np.fft.ifft(np.roll(np.asarray(h, dtype=np.complex128), 1))


@dataclass(frozen=True, eq=False)
class DiagonalInitialState:
    """Diagonal C(0) with c_x = C_xx(0) = -<sigma_z^x> and its momentum transform."""

    c: np.ndarray
    cq: np.ndarray | None = None
    tag: str = "custom"

    def __post_init__(self) -> None:
        c = np.array(self.c, dtype=np.float64)
        if c.ndim != 1 or c.size < 2:
            raise ModelError("initial state needs a vector of at least 2 sites")
        if not np.all(np.isfinite(c)):
            raise ModelError("initial state contains non-finite values")
        if np.max(np.abs(c)) > 1.0 + 1e-12:
            raise ModelError("initial occupations must satisfy |c_x| <= 1")
        computed = momentum_transform(c)
        if self.cq is None:
            cq = computed
        else:
            cq = np.array(self.cq, dtype=np.complex128)
            scale = max(1.0, float(np.max(np.abs(cq))))
            if cq.shape != c.shape or np.max(np.abs(cq - computed)) > 1e-12 * scale:
                raise ModelError("stored c(q) does not match the transform of c")
        c.setflags(write=False)
        cq.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "cq", cq)

    @property
    def L(self) -> int:
        return int(self.c.size)

    @classmethod
    def from_values(cls, c: ArrayLike, tag: str = "custom") -> DiagonalInitialState:
        return cls(np.asarray(c, dtype=np.float64), tag=tag)

    @classmethod
    def delta(cls, L: int, site: int = 0) -> DiagonalInitialState:
        """Single excitation c_x = delta_{x,site}."""
        c = np.zeros(L)
        c[site % L] = 1.0
        return cls(c, tag="delta")

    @classmethod
    def domain_wall(cls, L: int) -> DiagonalInitialState:
        """Left half up (c = -1), right half down (c = +1).

        c(q) comes from the finite geometric sum over the up domain: zero on
        even n and -4/(1 - exp(-i q_n)) on odd n.
        """
        if L < 2 or L % 2:
            raise ModelError(f"domain wall needs an even L >= 2, got {L}")
        c = np.ones(L)
        c[: L // 2] = -1.0
        n = np.arange(1, L + 1)
        q = _TWO_PI * (n / L)
        cq = np.zeros(L, dtype=np.complex128)
        odd = n % 2 == 1
        cq[odd] = -4.0 / (1.0 - np.exp(-1j * q[odd]))
        return cls(c, cq=cq, tag="domain-wall")

    @classmethod
    def from_csv(cls, path: str | Path) -> DiagonalInitialState:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as exc:
            raise ModelError(f"cannot read initial state from {path}: {exc}") from exc
        if "c" not in frame.columns:
            raise ModelError(
                f"initial-state CSV needs a 'c' column, found {list(frame.columns)}"
            )
        return cls(frame["c"].to_numpy(dtype=np.float64), tag="custom-csv")


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Dense C_{x,y}(t). ``l_max`` marks a banded reconstruction."""

    entries: np.ndarray
    time: float = 0.0
    l_max: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ModelError("correlation matrix must be square")
        if self.time < 0:
            raise ModelError("correlation matrix time must be >= 0")
        object.__setattr__(self, "entries", entries)

    @property
    def L(self) -> int:
        return int(self.entries.shape[0])

    @property
    def truncated(self) -> bool:
        return self.l_max is not None and self.l_max < self.L // 2

    @classmethod
    def from_initial(cls, init: DiagonalInitialState) -> CorrelationMatrix:
        return cls(np.diag(init.c).astype(np.complex128), time=0.0)

    def diagonal(self, l: int = 0) -> np.ndarray:
        """C_{x+l,x} for x = 0..L-1 with periodic indices."""
        x = np.arange(self.L)
        return self.entries[(x + l) % self.L, x]

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def structure_error(self) -> float:
        """Largest violation of real-even / imaginary-odd diagonals."""
        x = np.arange(self.L)
        parity = (x[:, None] - x[None, :]) % 2
        even = np.where(parity == 0, np.abs(self.entries.imag), 0.0)
        odd = np.where(parity == 1, np.abs(self.entries.real), 0.0)
        if self.L % 2:
            # Odd rings mix parities across the boundary.
            return float(np.max(np.abs(self.entries.imag.diagonal())))
        return float(max(np.max(even), np.max(odd)))

    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def to_frame(self) -> pd.DataFrame:
        x, y = np.meshgrid(np.arange(self.L), np.arange(self.L), indexing="ij")
        return pd.DataFrame(
            {
                "x": x.ravel(),
                "y": y.ravel(),
                "re": self.entries.real.ravel(),
                "im": self.entries.imag.ravel(),
            }
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def to_json(self) -> str:
        payload = {
            "L": self.L,
            "t": self.time,
            "entries": [
                [[float(v.real), float(v.imag)] for v in row] for row in self.entries
            ],
        }
        return json.dumps(payload)


def assemble_correlations(
    g: Mapping[int, ArrayLike],
    L: int,
    t: float,
    *,
    dense_max_L: int = DENSE_MAX_L,
) -> CorrelationMatrix:
    """Rebuild C(t) from g_l(t, q_n), l = 0..l_max.

    C_{x+l,x} = (1/L) sum_n exp(i q_n (x + l/2)) i^l g_l(q_n); negative l
    follow from Hermiticity. Diagonals beyond l_max stay zero.
    """
    if L > dense_max_L:
        raise ModelError(
            f"dense reconstruction limited to L <= {dense_max_L}, got L={L}"
        )
    if 0 not in g:
        raise ModelError("assemble_correlations needs at least g_0")
    l_max = max(g)
    missing = [l for l in range(l_max + 1) if l not in g]
    if missing:
        raise ModelError(f"missing off-diagonal orders {missing}")
    x = np.arange(L)
    entries = np.zeros((L, L), dtype=np.complex128)
    for l in range(min(l_max, L // 2) + 1):
        values = np.asarray(g[l], dtype=np.complex128)
        if values.shape != (L,):
            raise ModelError(
                f"g_{l} must hold one value per momentum mode ({L}), "
                f"got shape {values.shape}"
            )
        # phase e^{+i q l/2}: row x + l, column x
        band = band_from_modes(values, l)
        rows = (x + l) % L
        entries[rows, x] = band
        if 0 < l and 2 * l != L:
            entries[x, rows] = band.conj()
    banded = l_max if l_max < L // 2 else None
    return CorrelationMatrix(entries, time=t, l_max=banded)


def band_from_modes(values: ArrayLike, l: int) -> np.ndarray:
    """C_{x+l,x} along x from per-mode g_l values (no dense matrix)."""
    values = np.asarray(values, dtype=np.complex128)
    L = values.size
    q = _TWO_PI * (np.arange(1, L + 1) / L)
    return synthesize(np.exp(0.5j * q * l) * (1j) ** (l % 4) * values)
