"""Sparse dictionary learning and single-vector sparse encoding.

The training objective is the penalized form

    J(V, U) = 0.5 * ||X - V U||_F^2 + gamma1 * ||V||_1 + gamma2 * ||U||_1

with V and U constrained non-negative and atom columns normalized to unit
Euclidean norm. Minimization alternates exact non-negative-lasso encoding
of the columns of U (warm-started cyclic coordinate descent) with
projected-gradient atom updates guarded by backtracking, so the objective
never increases across outer iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import cd_nnlasso
from .nn import Dense, Network
from .container import load_network, save_network

_ENCODE_MAX_ITER = 2000
_V_STEPS_PER_ITER = 5
_BACKTRACK_TRIES = 12


@dataclass(frozen=True)
class DictLearnConfig:
    atoms: int
    gamma1: float = 0.0
    gamma2: float = 0.0
    max_iters: int = 200
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.atoms < 1:
            raise ValueError(f"atoms must be positive, got {self.atoms}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("gamma1 and gamma2 must be >= 0")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.seed < 0:
            raise ValueError(f"seed must be unsigned, got {self.seed}")


@dataclass(frozen=True)
class Encoding:
    """Coefficient vector expressing one input in terms of atoms/features."""

    coefficients: np.ndarray
    converged: bool = True
    sweeps: int = 0

    def __post_init__(self):
        u = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        if not np.all(np.isfinite(u)):
            raise ValueError("encoding coefficients must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "coefficients", u)


@dataclass(frozen=True)
class Dictionary:
    """Learned atoms (columns of atoms_matrix), unit-norm and non-negative."""

    atoms_matrix: np.ndarray
    config: DictLearnConfig | None = None
    objective_trace: tuple = ()
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        v = np.ascontiguousarray(self.atoms_matrix, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"atoms_matrix must be (d, k), got shape {v.shape}")
        if v.min() < -1e-12:
            raise ValueError("dictionary atoms must be non-negative")
        norms = np.linalg.norm(v, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("dictionary atoms must have unit Euclidean norm")
        v.setflags(write=False)
        object.__setattr__(self, "atoms_matrix", v)
        object.__setattr__(self, "objective_trace", tuple(float(x) for x in self.objective_trace))

    @property
    def num_atoms(self) -> int:
        return self.atoms_matrix.shape[1]

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")


def _atoms_of(dictionary) -> np.ndarray:
    if isinstance(dictionary, Dictionary):
        return dictionary.atoms_matrix
    v = np.ascontiguousarray(dictionary, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"dictionary must be a (d, k) matrix, got shape {v.shape}")
    return v


def sparse_encode(
    dictionary,
    x: np.ndarray,
    gamma2: float,
    init: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = _ENCODE_MAX_ITER,
) -> Encoding:
    """Solve u = argmin_{u >= 0} 0.5 ||x - V u||^2 + gamma2 ||u||_1.

    Hitting the iteration cap is reported through Encoding.converged, not
    raised.
    """
    v = _atoms_of(dictionary)
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != v.shape[0]:
        raise ValueError(
            f"atom dimension {v.shape[0]} does not match input length {x.shape[0]}"
        )
    if gamma2 < 0:
        raise ValueError(f"gamma2 must be >= 0, got {gamma2}")
    gram = np.ascontiguousarray(v.T @ v)
    cov = np.ascontiguousarray(v.T @ x)
    u0 = np.zeros(v.shape[1]) if init is None else np.ascontiguousarray(init, dtype=np.float64)
    u, sweeps, converged = cd_nnlasso(gram, cov, float(gamma2), u0, int(max_iter), float(tol))
    return Encoding(coefficients=u, converged=bool(converged), sweeps=int(sweeps))


def objective(x_data, v, u, gamma1, gamma2) -> float:
    resid = x_data - v @ u
    return float(
        0.5 * np.sum(resid * resid)
        + gamma1 * np.sum(np.abs(v))
        + gamma2 * np.sum(np.abs(u))
    )


def _project_atoms(v, fallback):
    out = np.maximum(v, 0.0)
    norms = np.linalg.norm(out, axis=0)
    dead = norms < 1e-300
    if np.any(dead):
        out[:, dead] = fallback[:, dead]
        norms = np.linalg.norm(out, axis=0)
    return out / norms


def learn_dictionary(data: np.ndarray, config: DictLearnConfig) -> Dictionary:
    """Alternating minimization of the penalized reconstruction objective."""
    x_data = np.ascontiguousarray(data, dtype=np.float64)
    if x_data.ndim != 2:
        raise ValueError(f"data must be (d, n), got shape {x_data.shape}")
    d, n = x_data.shape
    if not np.any(x_data):
        raise ValueError("data is all zeros; nothing to learn")
    k = config.atoms
    if k > 4 * min(d, n):
        raise ValueError(f"atoms={k} is unreasonably large for a {d}x{n} problem")

    rng = np.random.default_rng(config.seed)
    picks = rng.integers(0, n, size=k)
    v = np.maximum(x_data[:, picks], 0.0) + rng.uniform(0.01, 0.1, size=(d, k))
    v = v / np.linalg.norm(v, axis=0)
    u = np.zeros((k, n))
    encode_tol = min(1e-10, config.tolerance)

    trace = [objective(x_data, v, u, config.gamma1, config.gamma2)]
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        iterations += 1
        # coefficient step: exact per-column minimization, warm-started
        for i in range(n):
            enc = sparse_encode(v, x_data[:, i], config.gamma2, init=u[:, i], tol=encode_tol)
            u[:, i] = enc.coefficients
        # atom step: projected gradient, accepted only when non-increasing
        j_current = objective(x_data, v, u, config.gamma1, config.gamma2)
        lip = np.linalg.norm(u @ u.T, 2)
        if lip > 0:
            for _ in range(_V_STEPS_PER_ITER):
                grad = (v @ u - x_data) @ u.T + config.gamma1
                step = 1.0 / lip
                accepted = False
                for _ in range(_BACKTRACK_TRIES):
                    cand = _project_atoms(v - step * grad, v)
                    j_cand = objective(x_data, cand, u, config.gamma1, config.gamma2)
                    if j_cand <= j_current:
                        v = cand
                        j_current = j_cand
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    break
        trace.append(j_current)
        prev = trace[-2]
        if prev - j_current < config.tolerance * max(abs(prev), 1e-12):
            converged = True
            break

    return Dictionary(
        atoms_matrix=v,
        config=config,
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Container with a single dense layer (weights = atoms, zero bias)
    plus a JSON metadata sidecar at <path>.meta.json."""
    v = dictionary.atoms_matrix
    net = Network(
        layers=(Dense(weight=v, bias=np.zeros(v.shape[0])),),
        input_shape=(v.shape[1],),
    )
    save_network(net, path)
    meta = {
        "schema": "mlfr-dictionary-v1",
        "config": None
        if dictionary.config is None
        else {
            "atoms": dictionary.config.atoms,
            "gamma1": dictionary.config.gamma1,
            "gamma2": dictionary.config.gamma2,
            "max_iters": dictionary.config.max_iters,
            "tolerance": dictionary.config.tolerance,
            "seed": dictionary.config.seed,
        },
        "objective_trace": list(dictionary.objective_trace),
        "iterations": dictionary.iterations,
        "converged": dictionary.converged,
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_dictionary(path) -> Dictionary:
    """Inverse of save_dictionary; the sidecar is optional."""
    net = load_network(path)
    if len(net.layers) != 1 or net.layers[0].kind != "dense":
        raise ValueError(f"{path}: not a dictionary container (want a single dense layer)")
    v = net.layers[0].weight
    # float32 storage perturbs unit norms at the 1e-8 level; restore exactly
    v = v / np.linalg.norm(v, axis=0)
    meta_path = Path(str(path) + ".meta.json")
    config = None
    trace: tuple = ()
    iterations = 0
    converged = True
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("config"):
            config = DictLearnConfig(**meta["config"])
        trace = tuple(meta.get("objective_trace", ()))
        iterations = int(meta.get("iterations", 0))
        converged = bool(meta.get("converged", True))
    return Dictionary(
        atoms_matrix=v,
        config=config,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
    )
