"""Discrete-time LTI systems: model type, simulation, generated test systems, I/O.

A system is ``M x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k)`` with ``x(0) = 0``
and nonsingular mass matrix ``M`` (identity when absent).  All computations
reduce the generalized form to the standard one implicitly through a cached
factorization of ``M``; ``M`` is never inverted densely unless the caller asks
for an explicit standard-form conversion.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import (
    DimensionMismatchError,
    SingularMassMatrixError,
    SystemIOError,
)

GENERATOR_VERSION = "numpy-pcg64/1"

_EXAMPLE_KINDS = ("jacobi", "gauss-seidel", "random-stable", "laplacian-grid")


def _as_dense_2d(name: str, mat) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a matrix, got ndim={arr.ndim}")
    return arr


class DiscreteLTISystem:
    """State-space model with coefficient matrices A (n x n), B (n x m),
    C (p x n) and optional mass matrix M (n x n, nonsingular).

    A and M may be scipy sparse matrices or dense arrays; B and C are dense.
    Instances are immutable after construction and safe to share read-only.
    """

    def __init__(self, A, B, C, M=None, meta: dict | None = None):
        self.A = A.tocsr() if sp.issparse(A) else _as_dense_2d("A", A)
        self.B = _as_dense_2d("B", B)
        self.C = _as_dense_2d("C", C)
        self.M = M.tocsr() if sp.issparse(M) else (None if M is None else _as_dense_2d("M", M))
        self.meta = dict(meta) if meta else {}

        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatchError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionMismatchError(
                f"B has {self.B.shape[0]} rows, expected n={n}")
        if self.C.shape[1] != n:
            raise DimensionMismatchError(
                f"C has {self.C.shape[1]} columns, expected n={n}")
        if self.M is not None and self.M.shape != (n, n):
            raise DimensionMismatchError(f"M must be {n}x{n}, got {self.M.shape}")
        self.n = n
        self.m = self.B.shape[1]
        self.p = self.C.shape[0]
        self._mass_solve = None
        if self.M is not None:
            self._mass_solve = _factorize_nonsingular(self.M, "M")

    @property
    def is_generalized(self) -> bool:
        return self.M is not None

    def mass_solve(self, X: np.ndarray) -> np.ndarray:
        """Solve M Z = X for Z (identity passthrough when M is absent)."""
        if self._mass_solve is None:
            return X
        return self._mass_solve(X)

    def apply_dynamics(self, X: np.ndarray) -> np.ndarray:
        """Apply the standard-form state map M^{-1} A to the columns of X."""
        return self.mass_solve(self.A @ X)

    def input_map(self) -> np.ndarray:
        """Standard-form input matrix M^{-1} B."""
        return self.mass_solve(self.B)

    def dual(self) -> "DiscreteLTISystem":
        """Adjoint system (A^T, C^T, B^T, M^T).

        Its reachability-side quantities are the observability-side
        quantities of the original system.
        """
        AT = self.A.T.tocsr() if sp.issparse(self.A) else self.A.T.copy()
        MT = None
        if self.M is not None:
            MT = self.M.T.tocsr() if sp.issparse(self.M) else self.M.T.copy()
        return DiscreteLTISystem(AT, self.C.T.copy(), self.B.T.copy(), MT)

    def dense_dynamics(self) -> np.ndarray:
        """Dense standard-form state matrix M^{-1} A."""
        A = self.A.toarray() if sp.issparse(self.A) else self.A
        return self.mass_solve(np.asarray(A, dtype=float))

    def to_standard(self) -> "DiscreteLTISystem":
        """Explicit dense standard form (M eliminated)."""
        if not self.is_generalized:
            return self
        return DiscreteLTISystem(
            self.dense_dynamics(), self.input_map(), self.C.copy(), meta=self.meta)

    def spectral_radius(self) -> float:
        """Spectral radius of the (M, A) pencil, by dense eigensolve."""
        return float(np.max(np.abs(np.linalg.eigvals(self.dense_dynamics()))))

    def __repr__(self) -> str:
        tag = "generalized " if self.is_generalized else ""
        return f"DiscreteLTISystem({tag}n={self.n}, m={self.m}, p={self.p})"


def _factorize_nonsingular(M, name: str):
    """Return a solve closure for M, raising if M is numerically singular."""
    if sp.issparse(M):
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:
            raise SingularMassMatrixError(f"sparse factorization of {name} failed: {exc}") from exc
        udiag = np.abs(lu.U.diagonal())
        if udiag.size == 0 or udiag.min() <= 1e-14 * max(udiag.max(), 1.0):
            raise SingularMassMatrixError(f"{name} is numerically singular")

        def solve(X):
            X = np.asarray(X)
            if np.iscomplexobj(X):
                return lu.solve(X.real) + 1j * lu.solve(X.imag)
            return lu.solve(np.asarray(X, dtype=float))
        return solve

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # singular pivots are detected below
        lu, piv = sla.lu_factor(M)
    udiag = np.abs(np.diag(lu))
    if udiag.min() <= 1e-14 * max(udiag.max(), 1.0):
        raise SingularMassMatrixError(f"{name} is numerically singular")

    def solve(X):
        X = np.asarray(X)
        if not np.iscomplexobj(X):
            X = X.astype(float)
        return sla.lu_solve((lu, piv), X)
    return solve


def build_system(A, B, C, M=None) -> DiscreteLTISystem:
    """Validate coefficient matrices and assemble a system.

    Raises
    ------
    DimensionMismatchError
        if the shapes are inconsistent.
    SingularMassMatrixError
        if M is present but numerically singular.
    """
    return DiscreteLTISystem(A, B, C, M)


@dataclass(frozen=True)
class SimulationTrace:
    """Input and output sequences over k = 0..horizon."""
    inputs: np.ndarray   # (horizon+1, m)
    outputs: np.ndarray  # (horizon+1, p)
    horizon: int

    def __post_init__(self):
        if len(self.inputs) != self.horizon + 1 or len(self.outputs) != self.horizon + 1:
            raise DimensionMismatchError("trace length must equal horizon + 1")


def impulse_response(sys: DiscreteLTISystem, k: int) -> np.ndarray:
    """Impulse-response coefficient at step k.

    h(0) = 0 and h(k) = C (M^{-1}A)^{k-1} M^{-1}B for k >= 1, evaluated by
    repeated solves/products; matrix powers are never formed densely.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return np.zeros((sys.p, sys.m))
    X = sys.input_map()
    for _ in range(k - 1):
        X = sys.apply_dynamics(X)
    return sys.C @ X


def impulse_sequence(sys: DiscreteLTISystem, horizon: int) -> np.ndarray:
    """Stack h(0), ..., h(horizon) into an array of shape (horizon+1, p, m)."""
    out = np.zeros((horizon + 1, sys.p, sys.m))
    if horizon == 0:
        return out
    X = sys.input_map()
    for k in range(1, horizon + 1):
        out[k] = sys.C @ X
        if k < horizon:
            X = sys.apply_dynamics(X)
    return out


def simulate(sys: DiscreteLTISystem, u, horizon: int | None = None) -> SimulationTrace:
    """Run the state recursion from x(0) = 0 under the input sequence u.

    u is an array of shape (K+1, m) (a 1-D array is accepted for m = 1).
    One sparse solve with M is performed per step for generalized systems.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if horizon is None:
        horizon = len(u) - 1
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if u.shape != (horizon + 1, sys.m):
        raise DimensionMismatchError(
            f"input sequence must have shape ({horizon + 1}, {sys.m}), got {u.shape}")
    y = np.zeros((horizon + 1, sys.p))
    x = np.zeros(sys.n)
    for k in range(horizon + 1):
        y[k] = sys.C @ x
        if k < horizon:
            x = sys.mass_solve(sys.A @ x + sys.B @ u[k])
    return SimulationTrace(inputs=u.copy(), outputs=y, horizon=horizon)


@dataclass(frozen=True)
class ExampleSpec:
    """Recipe for a generated test system.

    kind is one of 'jacobi', 'gauss-seidel', 'random-stable',
    'laplacian-grid'; size is the grid width N for grid kinds (n = N^2)
    and the state order for 'random-stable'.
    """
    kind: str
    size: int
    inputs: int = 1
    outputs: int = 1
    seed: int = 0
    target_radius: float = 0.95


def _grid_laplacian(N: int) -> sp.csr_matrix:
    """5-point finite-difference Laplacian on the interior of an (N+2)^2 grid."""
    T = sp.diags([-np.ones(N - 1), 2.0 * np.ones(N), -np.ones(N - 1)], (-1, 0, 1))
    eye = sp.identity(N)
    return (sp.kron(eye, T) + sp.kron(T, eye)).tocsr()


def generate_example(spec: ExampleSpec) -> DiscreteLTISystem:
    """Build one of the named test systems, deterministically from the seed.

    Splitting-iteration kinds use S = L + U + D for the square-grid
    Laplacian: 'jacobi' takes A = L + U, M = D and 'gauss-seidel' takes the
    strictly-triangular/triangular split.  Input and output maps are drawn
    i.i.d. uniform on [0, 1) from a PCG64 stream (B first, then C).
    """
    if spec.kind not in _EXAMPLE_KINDS:
        raise ValueError(f"unknown example kind {spec.kind!r}; expected one of {_EXAMPLE_KINDS}")
    if spec.inputs < 1 or spec.outputs < 1:
        raise ValueError("inputs and outputs must be positive")
    if spec.kind == "random-stable":
        if spec.size < 1:
            raise ValueError("random-stable order must be >= 1")
    elif spec.size < 2:
        raise ValueError(f"{spec.kind} grid size must be >= 2")

    rng = np.random.default_rng(spec.seed)
    meta = {
        "kind": spec.kind,
        "seed": spec.seed,
        "generator-version": GENERATOR_VERSION,
    }

    if spec.kind == "random-stable":
        n = spec.size
        raw = rng.standard_normal((n, n))
        rho = float(np.max(np.abs(np.linalg.eigvals(raw)))) if n > 1 else abs(raw[0, 0])
        A = raw if rho == 0.0 else raw * (spec.target_radius / rho)
        B = rng.random((n, spec.inputs))
        C = rng.random((spec.outputs, n))
        return DiscreteLTISystem(A, B, C, meta=meta)

    N = spec.size
    S = _grid_laplacian(N)
    n = N * N
    B = rng.random((n, spec.inputs))
    C = rng.random((spec.outputs, n))
    if spec.kind == "jacobi":
        D = sp.diags(S.diagonal())
        A = (S - D).tocsr()
        return DiscreteLTISystem(A, B, C, D.tocsr(), meta=meta)
    if spec.kind == "gauss-seidel":
        A = sp.triu(S, k=1).tocsr()
        M = sp.tril(S, k=0).tocsr()
        return DiscreteLTISystem(A, B, C, M, meta=meta)
    # laplacian-grid: damped explicit diffusion step, standard form
    A = (sp.identity(n) - S / 4.0).tocsr()
    return DiscreteLTISystem(A, B, C, meta=meta)


_MANIFEST_NAME = "manifest.json"
_MATRIX_FILES = {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx", "M": "M.mtx"}


def write_system(sys: DiscreteLTISystem, path, extra_manifest: dict | None = None) -> None:
    """Serialize a system to a directory of Matrix Market files plus manifest."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        scipy.io.mmwrite(path / _MATRIX_FILES["A"], sys.A, precision=17)
        scipy.io.mmwrite(path / _MATRIX_FILES["B"], sys.B, precision=17)
        scipy.io.mmwrite(path / _MATRIX_FILES["C"], sys.C, precision=17)
        if sys.M is not None:
            scipy.io.mmwrite(path / _MATRIX_FILES["M"], sys.M, precision=17)
        manifest = {
            "format": "dtmor-system",
            "version": 1,
            "n": sys.n,
            "m": sys.m,
            "p": sys.p,
            "generalized": sys.is_generalized,
            "kind": sys.meta.get("kind"),
            "seed": sys.meta.get("seed"),
            "generator-version": sys.meta.get("generator-version"),
        }
        if extra_manifest:
            manifest.update(extra_manifest)
        with open(path / _MANIFEST_NAME, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise SystemIOError(f"failed to write system to {path}: {exc}") from exc


def _read_matrix(path: Path):
    try:
        mat = scipy.io.mmread(path)
    except OSError as exc:
        raise SystemIOError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise SystemIOError(f"malformed Matrix Market file {path}: {exc}") from exc
    if sp.issparse(mat):
        return mat.tocsr()
    return np.asarray(mat, dtype=float)


def read_system(path) -> DiscreteLTISystem:
    """Load a system written by :func:`write_system`, validating the manifest."""
    path = Path(path)
    mpath = path / _MANIFEST_NAME
    try:
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise SystemIOError(f"cannot read manifest {mpath}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SystemIOError(f"malformed manifest {mpath}: {exc}") from exc

    A = _read_matrix(path / _MATRIX_FILES["A"])
    B = _read_matrix(path / _MATRIX_FILES["B"])
    C = _read_matrix(path / _MATRIX_FILES["C"])
    B = B.toarray() if sp.issparse(B) else B
    C = C.toarray() if sp.issparse(C) else C
    M = None
    if (path / _MATRIX_FILES["M"]).exists() or manifest.get("generalized"):
        M = _read_matrix(path / _MATRIX_FILES["M"])

    n, m, p = manifest.get("n"), manifest.get("m"), manifest.get("p")
    if A.shape != (n, n) or B.shape != (n, m) or C.shape != (p, n):
        raise SystemIOError(
            f"manifest dimensions (n={n}, m={m}, p={p}) disagree with matrix shapes "
            f"A{A.shape}, B{B.shape}, C{C.shape}")
    meta = {k: manifest[k] for k in ("kind", "seed", "generator-version")
            if manifest.get(k) is not None}
    try:
        return DiscreteLTISystem(A, B, C, M, meta=meta)
    except DimensionMismatchError as exc:
        raise SystemIOError(str(exc)) from exc
