"""Direct dense solvers for Stein, time-limited Stein, and Stein-like
Sylvester equations.

This is the oracle layer: every low-rank result in the package is checked
against it at desk scale, and the Krylov solvers use :func:`solve_projected_tl`
for their compressed problems.  Sizes are guarded by the dense cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import check_dense_cap
from .exceptions import ConvergenceError, DimensionMismatchError, SolvabilityError
from .system import DiscreteLTISystem

_SOLVABILITY_TOL = 1e-10
_SMITH_MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class DenseGramianPair:
    """A dense (time-limited) Gramian together with its inhomogeneity term.

    For the reachability side ``gramian`` is P_tau and ``tl_term`` the
    standard-form matrix (M^{-1}A)^tau M^{-1}B; for the observability side
    (solved on the adjoint system) ``gramian`` is the mass-adjusted Q and
    ``tl_term`` the adjoint analogue.  ``tl_term`` is None for the infinite
    horizon.
    """
    gramian: np.ndarray
    tl_term: np.ndarray | None
    horizon: float
    side: str


@dataclass(frozen=True)
class CrossGramian:
    """Solution of the mixed full-order/reduced-order Stein-like equation."""
    matrix: np.ndarray
    horizon: float
    side: str


def _check_square_symmetric(A: np.ndarray, W: np.ndarray) -> None:
    s = A.shape[0]
    if A.shape != (s, s):
        raise DimensionMismatchError(f"coefficient matrix must be square, got {A.shape}")
    if W.shape != (s, s):
        raise DimensionMismatchError(f"right-hand side must be {s}x{s}, got {W.shape}")


def _solvability_margin(eigs_a: np.ndarray, eigs_b: np.ndarray) -> float:
    """min |1 - alpha*beta| over eigenvalue pairs."""
    prod = np.abs(1.0 - np.outer(eigs_a, eigs_b))
    return float(prod.min()) if prod.size else math.inf


def solve_stein_sylvester(A: np.ndarray, B: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve A X B^T - X + W = 0 by complex Schur decomposition of both sides.

    Unique solvability requires alpha*beta != 1 for all eigenvalue pairs;
    violations are reported as :class:`SolvabilityError`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    sa, sb = A.shape[0], B.shape[0]
    if A.shape != (sa, sa) or B.shape != (sb, sb) or W.shape != (sa, sb):
        raise DimensionMismatchError(
            f"incompatible shapes A{A.shape}, B{B.shape}, W{W.shape}")
    check_dense_cap(max(sa, sb), "dense Sylvester solve")

    TA, U = sla.schur(A.astype(complex), output="complex")
    TB, V = sla.schur(B.astype(complex), output="complex")
    margin = _solvability_margin(np.diag(TA), np.diag(TB))
    if margin < _SOLVABILITY_TOL:
        raise SolvabilityError(
            f"reciprocal eigenvalue pair within {margin:.2e} of 1; equation not uniquely solvable")

    Wt = U.conj().T @ W @ V.conj()
    X = np.zeros((sa, sb), dtype=complex)
    eye = np.eye(sa, dtype=complex)
    for j in range(sb - 1, -1, -1):
        rhs = -Wt[:, j] - TA @ (X[:, j + 1:] @ TB[j, j + 1:])
        X[:, j] = sla.solve_triangular(TB[j, j] * TA - eye, rhs)
    return (U @ X @ V.T).real


def solve_stein_dense(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve the Stein equation A X A^T - X + W = 0.

    Uses the squared Smith iteration when A is stable (quadratic
    convergence, no transforms) and the Schur backend otherwise; both are
    guarded by the reciprocal-eigenvalue solvability test.  The result is
    symmetrized when W is symmetric.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    _check_square_symmetric(A, W)
    check_dense_cap(A.shape[0], "dense Stein solve")

    eigs = np.linalg.eigvals(A)
    if _solvability_margin(eigs, eigs) < _SOLVABILITY_TOL:
        raise SolvabilityError("Stein equation has a reciprocal eigenvalue pair near 1")
    symmetric = np.allclose(W, W.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(W).max())))

    rho = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    if rho < 1.0 - 1e-9:
        X = _smith_squared(A, W)
    else:
        X = solve_stein_sylvester(A, A, W)
    if symmetric:
        X = 0.5 * (X + X.T)
    return X


def _smith_squared(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    # X_{k+1} = X_k + A_k X_k A_k^T with A_{k+1} = A_k^2 accumulates
    # sum_j A^j W A^T^j; quadratic convergence for rho(A) < 1.
    X = W.copy()
    Ak = A.copy()
    norm0 = max(float(np.linalg.norm(W)), 1e-300)
    for _ in range(_SMITH_MAX_DOUBLINGS):
        incr = Ak @ X @ Ak.T
        X = X + incr
        if np.linalg.norm(incr) <= 1e-16 * max(norm0, float(np.linalg.norm(X))):
            return X
        Ak = Ak @ Ak
    raise ConvergenceError("Smith doubling iteration failed to converge")


def _accumulate_tl_sum(apply_dyn, B0: np.ndarray, tau: int):
    """Direct summation of the time-limited Gramian plus its TL term."""
    n = B0.shape[0]
    P = np.zeros((n, n))
    X = B0.copy()
    for _ in range(tau):
        P += X @ X.T
        X = apply_dyn(X)
    return P, X  # X = (dynamics)^tau B0


def tl_gramian_dense(sys: DiscreteLTISystem, tau, side: str = "reach") -> DenseGramianPair:
    """Dense (time-limited) Gramian of one side.

    Finite tau: direct summation, which satisfies the defining Stein
    equation identically.  tau = inf: squared Smith iteration; requires the
    (M, A) pencil to be stable.  The observability side is computed as the
    reachability side of the adjoint system, so for generalized systems the
    returned matrix is the mass-adjusted Gramian whose trace identities use
    the original C (see the bounds module).
    """
    if side not in ("reach", "obs"):
        raise ValueError(f"side must be 'reach' or 'obs', got {side!r}")
    work = sys if side == "reach" else sys.dual()
    check_dense_cap(work.n, "dense Gramian computation")

    B0 = work.input_map()
    if math.isinf(tau):
        rho = work.spectral_radius()
        if rho >= 1.0 - 1e-12:
            raise SolvabilityError(
                f"infinite-horizon Gramian needs a stable pencil, spectral radius {rho:.6f}")
        Ad = work.dense_dynamics()
        P = _smith_squared(Ad, B0 @ B0.T)
        P = 0.5 * (P + P.T)
        return DenseGramianPair(P, None, math.inf, side)

    tau = int(tau)
    if tau < 1:
        raise ValueError("tau must be >= 1 or inf")
    P, F = _accumulate_tl_sum(work.apply_dynamics, B0, tau)
    return DenseGramianPair(0.5 * (P + P.T), F, float(tau), side)


def solve_cross_sylvester(sys: DiscreteLTISystem, rom: DiscreteLTISystem,
                          tau, side: str = "Y") -> CrossGramian:
    """Mixed Stein-like equation coupling a full-order and a reduced system.

    Side 'Y' solves  Abar Y Ahat^T - Y + Bbar Bhat^T - Fbar Fhat^T = 0 in
    standard form; side 'Z' is the same equation on the adjoint pair, whose
    solution satisfies trace(B^T Z Bhat) = <S, Shat> with the original B.
    The reduced coefficient is Schur-decomposed and the full-order side is
    only touched through r shifted solves, so sparse systems stay sparse.
    """
    if side not in ("Y", "Z"):
        raise ValueError(f"side must be 'Y' or 'Z', got {side!r}")
    if side == "Z":
        inner = solve_cross_sylvester(sys.dual(), rom.dual(), tau, side="Y")
        return CrossGramian(inner.matrix, inner.horizon, "Z")
    if rom.m != sys.m:
        raise DimensionMismatchError(
            f"input counts disagree: full {sys.m}, reduced {rom.m}")
    check_dense_cap(rom.n, "reduced coefficient in cross Sylvester solve")

    r = rom.n
    Ahat = rom.dense_dynamics()
    Bhat = rom.input_map()
    Bbar = sys.input_map()

    finite = not math.isinf(tau)
    if finite:
        tau = int(tau)
        Fbar = Bbar.copy()
        for _ in range(tau):
            Fbar = sys.apply_dynamics(Fbar)
        Fhat = np.linalg.matrix_power(Ahat, tau) @ Bhat
        W = Bbar @ Bhat.T - Fbar @ Fhat.T
    else:
        W = Bbar @ Bhat.T

    TB, V = sla.schur(Ahat.astype(complex), output="complex")
    Wt = W @ V.conj()
    n = sys.n
    Y = np.zeros((n, r), dtype=complex)
    try:
        for j in range(r - 1, -1, -1):
            rhs = -Wt[:, j] - sys.apply_dynamics(Y[:, j + 1:] @ TB[j, j + 1:])
            Y[:, j] = _shifted_standard_solve(sys, TB[j, j], rhs)
    except (np.linalg.LinAlgError, sla.LinAlgError, RuntimeError) as exc:
        raise SolvabilityError(
            f"shifted solve in the cross Sylvester recursion is singular "
            f"(reciprocal eigenvalue pair): {exc}") from exc
    Ymat = (Y @ V.T).real

    # residual check doubles as the solvability guard for the sparse path
    resid = sys.apply_dynamics(Ymat) @ Ahat.T - Ymat + W
    scale = max(float(np.linalg.norm(W)), 1e-300)
    if np.linalg.norm(resid) > 1e-8 * max(scale, float(np.linalg.norm(Ymat))):
        raise SolvabilityError(
            "cross Sylvester solve failed its residual check; "
            "likely a reciprocal eigenvalue pair near 1")
    return CrossGramian(Ymat, float(tau) if finite else math.inf, "Y")


def _shifted_standard_solve(sys: DiscreteLTISystem, lam: complex, rhs: np.ndarray) -> np.ndarray:
    """Solve (lam * M^{-1}A - I) x = rhs via (lam A - M) x = M rhs,
    which keeps a sparse pencil sparse."""
    if sp.issparse(sys.A):
        M = sys.M if sys.M is not None else sp.identity(sys.n, format="csr")
        mat = (lam * sys.A - M).tocsc()
        return spla.splu(mat).solve(np.asarray(M @ rhs, dtype=complex))
    M = sys.M if sys.M is not None else np.eye(sys.n)
    return np.linalg.solve(lam * sys.A - M, M @ rhs)


def solve_projected_tl(H: np.ndarray, Bk: np.ndarray, Fk: np.ndarray | None = None) -> np.ndarray:
    """Galerkin-projected (time-limited) Stein equation
    H Y H^T - Y + Bk Bk^T - Fk Fk^T = 0, with the Fk term dropped when absent.

    The infinite-horizon form (Fk absent) additionally requires H stable,
    since the underlying series diverges otherwise.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Bk = np.atleast_2d(np.asarray(Bk, dtype=float))
    check_dense_cap(H.shape[0], "projected Stein solve")
    if Fk is None:
        rho = float(np.max(np.abs(np.linalg.eigvals(H)))) if H.size else 0.0
        if rho >= 1.0 - 1e-12:
            raise SolvabilityError(
                f"projected infinite-horizon equation with unstable coefficient "
                f"(spectral radius {rho:.6f})")
        W = Bk @ Bk.T
    else:
        Fk = np.atleast_2d(np.asarray(Fk, dtype=float))
        W = Bk @ Bk.T - Fk @ Fk.T
    Y = solve_stein_dense(H, W)
    return 0.5 * (Y + Y.T)


def stein_residual_dense(sys: DiscreteLTISystem, pair: DenseGramianPair) -> float:
    """Relative residual of the defining (generalized) Stein equation.

    For the reachability side this checks
    A P A^T - M P M^T + B B^T - F_M F_M^T with F_M = M Fbar; the
    observability side checks the adjoint equation.
    """
    work = sys if pair.side == "reach" else sys.dual()
    A = work.A.toarray() if sp.issparse(work.A) else work.A
    M = work.M.toarray() if (work.M is not None and sp.issparse(work.M)) else work.M
    if M is None:
        M = np.eye(work.n)
    B = work.B
    P = pair.gramian
    W = B @ B.T
    if pair.tl_term is not None:
        FM = M @ pair.tl_term
        W = W - FM @ FM.T
    R = A @ P @ A.T - M @ P @ M.T + W
    return float(np.linalg.norm(R) / max(np.linalg.norm(W), 1e-300))
