"""Independent reference implementations used only by the test-suite."""

import math

import cvxopt
import numpy as np


def jacobi_eigvalsh(a: np.ndarray, sweeps: int = 100, tol: float = 1e-15) -> np.ndarray:
    """Eigenvalues (descending) of a Hermitian matrix by cyclic Jacobi rotations.

    Complex input is embedded as the real symmetric ``[[B, -C], [C, B]]``,
    whose spectrum is that of ``B + iC`` with every eigenvalue doubled.
    """
    a = np.asarray(a)
    cplx = np.iscomplexobj(a)
    if cplx:
        b, c = a.real, a.imag
        a = np.block([[b, -c], [c, b]])
    a = np.array(a, dtype=float)
    n = a.shape[0]
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                cs = 1 / math.sqrt(t * t + 1)
                sn = t * cs
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = cs * rp - sn * rq, sn * rp + cs * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = cs * cp - sn * cq, sn * cp + cs * cq
    w = np.sort(np.diag(a))[::-1]
    return w[::2] if cplx else w


def svd_pca(X: np.ndarray, k: int):
    """PCA through the SVD of the centred data: (components d x k, variances)."""
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    return vt[:k].T, (s[:k] ** 2) / (X.shape[0] - 1)


def qp_dual(K: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Solve the soft-margin SVC dual with a generic interior-point QP solver."""
    m = len(y)
    Q = np.outer(y, y) * K
    opts = {"show_progress": False, "abstol": 1e-13, "reltol": 1e-13, "feastol": 1e-13, "maxiters": 300}
    sol = cvxopt.solvers.qp(
        cvxopt.matrix(Q),
        cvxopt.matrix(-np.ones(m)),
        cvxopt.matrix(np.vstack([-np.eye(m), np.eye(m)])),
        cvxopt.matrix(np.r_[np.zeros(m), C * np.ones(m)]),
        cvxopt.matrix(np.asarray(y, dtype=float)[None, :]),
        cvxopt.matrix(0.0),
        options=opts,
    )
    return np.array(sol["x"]).ravel()


def dual_value(alpha, y, K) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def fsum_dot(x, y) -> float:
    return math.fsum(float(a) * float(b) for a, b in zip(x, y))


def kkt_max_violation(alpha, bias, y, K, C, atol=1e-9):
    """Largest violation of the SVC KKT conditions for margins ``y f(x)``."""
    margins = y * (K @ (alpha * y) + bias)
    worst = 0.0
    for a, m in zip(alpha, margins):
        if a <= atol * C:
            worst = max(worst, 1 - m)
        elif a >= C * (1 - 1e-12):
            worst = max(worst, m - 1)
        else:
            worst = max(worst, abs(m - 1))
    return worst


def _ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _cnot(n, control, target):
    """Permutation matrix of a CNOT; qubit 0 is the most significant bit."""
    dim = 2**n
    p = np.zeros((dim, dim))
    for b in range(dim):
        if (b >> (n - 1 - control)) & 1:
            p[b ^ (1 << (n - 1 - target)), b] = 1
        else:
            p[b, b] = 1
    return p


def _kron_all(ops):
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def reference_unitary(family: str, n: int, layers: int, beta: float, x) -> np.ndarray:
    """Encoding unitary assembled layer by layer from the circuit definitions."""
    x = np.asarray(x)
    u = np.eye(2**n, dtype=complex)
    for layer in range(layers):
        if family == "Ry1DSt":
            rot = _kron_all([_ry(beta * x[i].real) for i in range(n)])
            pairs = [(i, i + 1) for i in range(n - 1)]
        elif family == "RyRz1DAlt":
            rot = _kron_all([_rz(beta * x[i].real) @ _ry(beta * x[i].real) for i in range(n)])
            pairs = [(i, i + 1) for i in range(layer % 2, n - 1, 2)]
        else:
            rot = _kron_all([_rz(np.angle(x[i])) @ _ry(beta * abs(x[i])) for i in range(n)])
            pairs = [(i, i + 1) for i in range(n - 1)]
        ent = np.eye(2**n)
        for c, t in pairs:
            ent = _cnot(n, c, t) @ ent
        u = ent @ rot @ u
    return u
