"""Pydantic schemas for run configuration."""

from __future__ import annotations

import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .laplace import TalbotConfig
from .model import DENSE_MAX_L, ChainParams

Command = Literal[
    "evolve", "density", "offdiag", "beta", "compare", "resolvent-dump", "bench"
]
Method = Literal["ed", "transfer-talbot", "transfer-contour", "asymptotic"]
InitialPreset = Literal["delta", "domain-wall", "custom-csv"]


class ChainSettings(BaseModel):
    """Chain length, hopping and dephasing rate."""

    model_config = ConfigDict(extra="forbid")

    L: int = Field(64, ge=2)
    J: float = Field(1.0, gt=0)
    gamma: float = Field(0.0, ge=0)

    def params(self) -> ChainParams:
        return ChainParams(L=self.L, J=self.J, gamma=self.gamma)


class TimeGrid(BaseModel):
    """Evolution times: explicit ``values`` or a linear/log grid.

    With ``scale="gamma_t"`` the numbers are gamma*t and are divided by gamma.
    """

    model_config = ConfigDict(extra="forbid")

    values: Optional[List[float]] = None
    start: float = Field(0.0, ge=0)
    stop: float = Field(1.0, gt=0)
    count: int = Field(5, ge=1, le=100_000)
    spacing: Literal["linear", "log"] = "linear"
    per_decade: Optional[int] = Field(
        None,
        ge=1,
        le=1000,
        description="Log grids: points per decade (overrides count)",
    )
    scale: Literal["t", "gamma_t"] = "t"

    @model_validator(mode="after")
    def validate_grid(self) -> "TimeGrid":
        if self.values is not None:
            if not self.values:
                raise ValueError("times.values must not be empty")
            if any(v < 0 for v in self.values):
                raise ValueError("times must be >= 0")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise ValueError("times.values must be strictly increasing")
            return self
        if self.count > 1 and self.stop <= self.start:
            raise ValueError("times.stop must exceed times.start")
        if self.spacing == "log" and self.start <= 0:
            raise ValueError("log-spaced times need start > 0")
        return self

    def resolve(self, gamma: float) -> np.ndarray:
        if self.values is not None:
            grid = np.asarray(self.values, dtype=np.float64)
        elif self.spacing == "log":
            count = self.count
            if self.per_decade:
                decades = math.log10(self.stop / self.start)
                count = max(2, int(round(decades * self.per_decade)) + 1)
            grid = np.logspace(math.log10(self.start), math.log10(self.stop), count)
        else:
            grid = np.linspace(self.start, self.stop, self.count)
        if self.scale == "gamma_t":
            if gamma <= 0:
                raise ValueError("times given as gamma*t need gamma > 0")
            grid = grid / gamma
        return grid


class TalbotSettings(BaseModel):
    """Fixed-Talbot inversion settings."""

    model_config = ConfigDict(extra="forbid")

    M: int = Field(64, ge=8, le=4096)
    backend: Literal["auto", "mpmath", "vector"] = "auto"
    precision_mode: Literal["fixed", "richardson"] = "fixed"
    vector_nodes: int = Field(32, ge=8, le=64)
    tolerance: float = Field(1e-6, gt=0)

    @model_validator(mode="after")
    def validate_even(self) -> "TalbotSettings":
        if self.M % 2 or self.vector_nodes % 2:
            raise ValueError("Talbot node counts must be even")
        return self

    def to_config(self) -> TalbotConfig:
        return TalbotConfig(
            M=self.M,
            precision_mode=self.precision_mode,
            backend=self.backend,
            vector_nodes=self.vector_nodes,
            tolerance=self.tolerance,
        )


class ResolventGrid(BaseModel):
    """Vertical line s = re + i y, |y| <= imag_max, for resolvent dumps."""

    model_config = ConfigDict(extra="forbid")

    re: float = Field(0.5, gt=0)
    imag_max: float = Field(16.0, ge=0)
    count: int = Field(9, ge=1, le=10_000)


class RunConfig(BaseModel):
    """Validated configuration of one CLI run."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    chain: ChainSettings = Field(default_factory=ChainSettings)
    times: TimeGrid = Field(default_factory=TimeGrid)
    talbot: TalbotSettings = Field(default_factory=TalbotSettings)
    resolvent: ResolventGrid = Field(default_factory=ResolventGrid)
    initial: InitialPreset = "delta"
    initial_csv: Optional[str] = None
    site: int = Field(0, ge=0, description="Release site of the delta state")
    method: Method = "ed"
    nq: Optional[int] = Field(None, ge=2)
    lmax: int = Field(4, ge=0)
    window: Optional[int] = Field(
        None, ge=1, description="Only write sites within this distance of L/2"
    )
    output: Optional[str] = None
    threads: Optional[int] = Field(None, ge=1)
    plot: bool = False
    smooth: bool = False
    compare_tolerance: float = Field(1e-6, gt=0)
    bench_sizes: List[int] = Field(default_factory=lambda: [10_000, 100_000, 1_000_000])
    bench_dense_sizes: List[int] = Field(default_factory=lambda: [8, 12, 16])
    bench_budget_s: float = Field(
        1800.0, gt=0, description="Wall-clock limit for each transfer bench point"
    )
    dense_max_L: int = Field(DENSE_MAX_L, ge=2)
    preset: Optional[str] = None

    @model_validator(mode="after")
    def validate_combination(self) -> "RunConfig":
        L = self.chain.L
        if self.initial == "custom-csv" and not self.initial_csv:
            raise ValueError("initial=custom-csv requires initial_csv")
        if self.initial == "domain-wall" and L % 2:
            raise ValueError("the domain-wall state needs an even L")
        if self.site >= L:
            raise ValueError(f"site must be < L={L}")
        uses_ed = self.method == "ed" or self.command == "compare"
        if uses_ed and L > self.dense_max_L:
            raise ValueError(
                f"method=ed is limited to L <= {self.dense_max_L}, got L={L}"
            )
        if self.method.startswith("transfer") and L % 2:
            raise ValueError("transfer methods need an even L")
        if self.command == "beta" and self.initial != "domain-wall":
            raise ValueError("command beta requires initial=domain-wall")
        if self.command == "beta" and self.method == "asymptotic":
            raise ValueError("command beta has no asymptotic method")
        if self.command == "evolve" and self.method not in ("ed", "transfer-talbot"):
            raise ValueError("command evolve supports method ed or transfer-talbot")
        if self.command == "offdiag" and self.method == "transfer-contour":
            raise ValueError(
                "off-diagonals have no contour pipeline; use transfer-talbot"
            )
        if self.method == "asymptotic":
            if self.initial != "delta":
                raise ValueError("asymptotic laws describe a delta release")
            if self.command == "offdiag" and self.chain.gamma <= 0:
                raise ValueError("asymptotic off-diagonals need gamma > 0")
        if self.times.scale == "gamma_t" and self.chain.gamma <= 0:
            raise ValueError("times given as gamma*t need gamma > 0")
        if self.command == "compare" and L % 2:
            raise ValueError("compare runs the transfer pipeline and needs an even L")
        return self

    def time_grid(self) -> np.ndarray:
        return self.times.resolve(self.chain.gamma)
