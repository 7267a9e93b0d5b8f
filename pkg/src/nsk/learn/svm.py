"""RBF support vector classifier trained with sequential minimal optimization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] - 2 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def gamma_scale(X) -> float:
    """1 / (n_features * variance of all training values); 1.0 if X is constant."""
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass(frozen=True)
class SmoResult:
    alpha: np.ndarray
    b: float
    iterations: int
    kkt_gap: float


def dual_objective(alpha, y_pm, K) -> float:
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    v = alpha * y_pm
    return float(alpha.sum() - 0.5 * v @ K @ v)


def smo(K: np.ndarray, y_pm: np.ndarray, C: float = 1.0, tol: float = 1e-3,
        max_iter: int = 100_000) -> SmoResult:
    """Solve the soft-margin dual for a precomputed kernel.

    Working pairs are chosen by maximal violation for the first index and by
    second-order gain for the second. Stops once the KKT gap
    max_{I_up} -y G - min_{I_low} -y G falls to ``tol``.
    """
    y = np.asarray(y_pm, dtype=np.float64)
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    gap = np.inf
    it = 0
    for it in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        score = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_val = score[i]
        gap = m_val - score[low].min()
        if gap <= tol:
            break
        cand = low & (score < m_val)
        b_it = m_val - score
        a_it = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        a_it = np.where(a_it > 0, a_it, TAU)
        gain = np.where(cand, -(b_it ** 2) / a_it, np.inf)
        j = int(np.argmin(gain))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2 * Q[i, j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2 * Q[i, j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[i] * (ai - ai_old) + Q[j] * (aj - aj_old)

    free = (alpha > 0) & (alpha < C)
    yG = y * G
    if free.any():
        rho = yG[free].mean()
    else:
        ub, lb = np.inf, -np.inf
        at_low = alpha <= 0
        at_up = alpha >= C
        for t in range(n):
            if (at_up[t] and y[t] < 0) or (at_low[t] and y[t] > 0):
                ub = min(ub, yG[t])
            elif (at_up[t] and y[t] > 0) or (at_low[t] and y[t] < 0):
                lb = max(lb, yG[t])
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return SmoResult(alpha, float(-rho), it, float(gap))


def kkt_residual(alpha, y_pm, K, b, C) -> float:
    """Largest violation of the margin conditions y_i f(x_i) >= 1 (alpha=0),
    = 1 (free), <= 1 (alpha=C) over the training set."""
    y = np.asarray(y_pm, dtype=np.float64)
    margin = y * (K @ (alpha * y) + b)
    free = (alpha > 0) & (alpha < C)
    viol = np.zeros_like(margin)
    viol[alpha <= 0] = np.maximum(1 - margin[alpha <= 0], 0)
    viol[alpha >= C] = np.maximum(margin[alpha >= C] - 1, 0)
    viol[free] = np.abs(margin[free] - 1)
    return float(viol.max()) if viol.size else 0.0


def platt_fit(f, y01, max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid 1/(1+exp(A f + B)) fit by Newton's method with backtracking on
    smoothed targets (Platt 1999, with the Lin-Lin-Weng numerics)."""
    f = np.asarray(f, dtype=np.float64)
    y = np.asarray(y01)
    n_pos = float(np.sum(y == 1))
    n_neg = float(y.size - n_pos)
    hi, lo = (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2)
    t = np.where(y == 1, hi, lo)
    A, B = 0.0, np.log((n_neg + 1) / (n_pos + 1))
    sigma, eps = 1e-12, 1e-5

    def objective(A, B):
        fApB = f * A + B
        return float(np.sum(np.where(fApB >= 0, t * fApB + np.log1p(np.exp(-fApB)),
                                     (t - 1) * fApB + np.log1p(np.exp(fApB)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        fApB = f * A + B
        p = np.where(fApB >= 0, np.exp(-fApB) / (1 + np.exp(-fApB)), 1 / (1 + np.exp(fApB)))
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1, g2 = np.sum(f * d1), np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            newA, newB = A + step * dA, B + step * dB
            newf = objective(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


def platt_proba(f, A: float, B: float) -> np.ndarray:
    z = np.asarray(f, dtype=np.float64) * A + B
    return np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))


@dataclass(frozen=True)
class Svm:
    support: np.ndarray  # support vectors (rows of the training set)
    coef: np.ndarray  # alpha_i * y_i for each support vector
    b: float
    gamma: float
    platt_a: float
    platt_b: float

    def decision_function(self, X) -> np.ndarray:
        if self.support.shape[0] == 0:
            return np.full(np.asarray(X).shape[0], self.b)
        return rbf_kernel(X, self.support, self.gamma) @ self.coef + self.b

    def predict_proba(self, X) -> np.ndarray:
        return platt_proba(self.decision_function(X), self.platt_a, self.platt_b)


def train_svm(X, y01, C: float = 1.0, gamma="scale", tol: float = 1e-3) -> tuple[Svm, SmoResult]:
    X = np.asarray(X, dtype=np.float64)
    y01 = np.asarray(y01, dtype=np.int64)
    if np.unique(y01).size < 2:
        raise DataError("SVM training needs both classes present")
    g = gamma_scale(X) if gamma == "scale" else float(gamma)
    y_pm = np.where(y01 == 1, 1.0, -1.0)
    K = rbf_kernel(X, X, g)
    res = smo(K, y_pm, C, tol)
    sv = res.alpha > 0
    f_train = K[:, sv] @ (res.alpha[sv] * y_pm[sv]) + res.b
    A, B = platt_fit(f_train, y01)
    model = Svm(X[sv].copy(), res.alpha[sv] * y_pm[sv], res.b, g, A, B)
    return model, res
