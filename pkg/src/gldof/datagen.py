"""Reproducible synthetic instances of the model y = X beta0 + noise.

Designs are i.i.d. Gaussian with columns scaled by 1/sqrt(Q) (so block
correlations are O(1) across problem sizes), regenerated until comfortably
full column rank; beta0 activates a chosen number of blocks with unit-norm
random directions.  Also owns the problem-file format used by the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import BlockPartition, Design
from .solver import Problem
from .validate import replicate_rng

MIN_SINGULAR_VALUE = 1e-6
MAX_RETRIES = 50


class GenerationError(RuntimeError):
    """Could not draw a full-column-rank design within the retry budget."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to regenerate a synthetic scenario from its seed."""

    Q: int
    N: int
    block_sizes: tuple[int, ...]
    k_active: int
    signal_scale: float = 1.0
    sigma: float = 1.0
    seed: int = 0
    identity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))
        if sum(self.block_sizes) != self.N:
            raise ValueError("block sizes must sum to N")
        if self.identity:
            if self.Q != self.N:
                raise ValueError("identity design requires Q == N")
        elif self.Q <= self.N:
            raise ValueError("random designs require Q > N")
        if not 0 <= self.k_active <= len(self.block_sizes):
            raise ValueError("k_active out of range")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.signal_scale > 0:
            raise ValueError("signal_scale must be positive")

    def to_dict(self) -> dict:
        return {"Q": self.Q, "N": self.N, "block_sizes": list(self.block_sizes),
                "k_active": self.k_active, "signal_scale": self.signal_scale,
                "sigma": self.sigma, "seed": self.seed, "identity": self.identity}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(Q=d["Q"], N=d["N"], block_sizes=tuple(d["block_sizes"]),
                   k_active=d["k_active"],
                   signal_scale=d.get("signal_scale", 1.0),
                   sigma=d.get("sigma", 1.0), seed=d.get("seed", 0),
                   identity=d.get("identity", False))


@dataclass(frozen=True)
class Scenario:
    """A generated problem template: design, truth, and noise-draw support."""

    spec: ScenarioSpec
    design: Design
    partition: BlockPartition
    beta0: np.ndarray
    mu0: np.ndarray

    @property
    def sigma(self) -> float:
        return self.spec.sigma

    def draw_y(self, seed: int | None = None, replicate: int = 0) -> np.ndarray:
        """One noisy observation y = mu0 + sigma * standard normal."""
        if seed is None:
            seed = self.spec.seed
        noise = replicate_rng(seed, replicate).standard_normal(self.design.Q)
        return self.mu0 + self.spec.sigma * noise

    def problem(self, lam: float, y=None) -> Problem:
        if y is None:
            y = self.draw_y()
        return Problem(self.design, y, lam, self.partition)


def generate(spec: ScenarioSpec) -> Scenario:
    """Draw the design and truth vector for a scenario, deterministically."""
    rng = np.random.default_rng(spec.seed)
    partition = BlockPartition.from_sizes(spec.block_sizes)

    if spec.identity:
        x = np.eye(spec.N)
    else:
        for _ in range(MAX_RETRIES):
            x = rng.standard_normal((spec.Q, spec.N)) / np.sqrt(spec.Q)
            if np.linalg.svd(x, compute_uv=False)[-1] > MIN_SINGULAR_VALUE:
                break
        else:
            raise GenerationError(
                f"no design with smallest singular value > {MIN_SINGULAR_VALUE:g} "
                f"in {MAX_RETRIES} draws")

    beta0 = np.zeros(spec.N)
    if spec.k_active:
        chosen = np.sort(rng.choice(len(partition), size=spec.k_active, replace=False))
        for b in chosen:
            idx = np.array(partition.blocks[b], dtype=int)
            direction = rng.standard_normal(idx.size)
            beta0[idx] = spec.signal_scale * direction / np.linalg.norm(direction)

    design = Design(x)
    return Scenario(spec=spec, design=design, partition=partition,
                    beta0=beta0, mu0=design.matrix @ beta0)


# ---------------------------------------------------------------------------
# problem files

def problem_to_dict(design: Design, y, partition: BlockPartition, *,
                    lam: float | None = None, beta0=None,
                    sigma: float | None = None) -> dict:
    d = {
        "Q": design.Q,
        "N": design.N,
        "partition": [list(b) for b in partition.blocks],
        "X": [list(map(float, row)) for row in design.matrix],
        "y": [float(v) for v in np.asarray(y, dtype=float)],
    }
    if lam is not None:
        d["lambda"] = float(lam)
    if beta0 is not None:
        d["beta0"] = [float(v) for v in np.asarray(beta0, dtype=float)]
    if sigma is not None:
        d["sigma"] = float(sigma)
    return d


@dataclass(frozen=True)
class LoadedProblem:
    design: Design
    y: np.ndarray
    partition: BlockPartition
    lam: float | None = None
    beta0: np.ndarray | None = None
    sigma: float | None = None

    def problem(self, lam: float | None = None) -> Problem:
        if lam is None:
            lam = self.lam
        if lam is None:
            raise ValueError("no lambda stored in the file; pass one explicitly")
        return Problem(self.design, self.y, lam, self.partition)


def problem_from_dict(d: dict) -> LoadedProblem:
    q, n = int(d["Q"]), int(d["N"])
    x = np.asarray(d["X"], dtype=float)
    if x.ndim == 1:  # row-major flat layout is accepted too
        x = x.reshape(q, n)
    if x.shape != (q, n):
        raise ValueError(f"X has shape {x.shape}, expected ({q}, {n})")
    y = np.asarray(d["y"], dtype=float)
    partition = BlockPartition(tuple(tuple(b) for b in d["partition"]))
    beta0 = np.asarray(d["beta0"], dtype=float) if "beta0" in d else None
    return LoadedProblem(design=Design(x), y=y, partition=partition,
                         lam=d.get("lambda"), beta0=beta0, sigma=d.get("sigma"))


def save_problem(path, design: Design, y, partition: BlockPartition, *,
                 lam: float | None = None, beta0=None, sigma: float | None = None,
                 manifest: dict | None = None) -> None:
    d = problem_to_dict(design, y, partition, lam=lam, beta0=beta0, sigma=sigma)
    if manifest is not None:
        d["manifest"] = manifest
    with open(path, "w", newline="\n") as fh:
        json.dump(d, fh, indent=1)
        fh.write("\n")


def load_problem(path) -> LoadedProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def load_matrix_csv(path) -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return m


def load_vector_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=float).reshape(-1)
