"""Soft-margin Gaussian-kernel SVM trained with SMO.

The dual solved is

    max_a  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   sum(a * y) = 0,  0 <= a_i <= C

with K(a, b) = exp(-gamma * |a - b|^2). The solver works on the equivalent
minimisation f(a) = 1/2 a'Qa - sum(a), Q_ij = y_i y_j K_ij, and picks the
working pair libsvm-style: i is the maximal KKT violator, j maximises the
second-order decrease among the remaining violators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

FULL_GRAM_LIMIT = 4096
ROW_CACHE_BYTES = 512 * 2**20
MODEL_MAGIC = "kmcsvm-model"
MODEL_VERSION = 1


class ConvergenceError(RuntimeError):
    """SMO stopped before reaching the KKT tolerance.

    ``model`` is the best-so-far model, ``violation`` the residual gap
    between the largest and smallest violating gradient.
    """

    def __init__(self, message, model, violation):
        super().__init__(message)
        self.model = model
        self.violation = violation


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class TrainConfig:
    """SMO settings.

    ``max_passes`` bounds consecutive pair updates that fail to lower the
    objective (default ``10 * n``); ``max_iter`` bounds total updates.
    """

    C: float
    gamma: float
    kkt_tol: float = 1e-3
    max_passes: int | None = None
    max_iter: int = 10_000_000
    shrinking: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        KernelParams(self.gamma)
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(self.gamma)


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    sv_labels: np.ndarray
    alphas: np.ndarray
    bias: float
    gamma: float
    C: float
    n_iter: int = field(default=0, compare=False)

    def __post_init__(self):
        sv = np.array(self.support_vectors, dtype=np.float64).reshape(-1, 2)
        lab = np.array(self.sv_labels, dtype=np.int64).reshape(-1)
        alpha = np.array(self.alphas, dtype=np.float64).reshape(-1)
        if not len(sv) == len(lab) == len(alpha) >= 1:
            raise ValueError("support vectors, labels and alphas must have equal nonzero length")
        for arr in (sv, lab, alpha):
            arr.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "sv_labels", lab)
        object.__setattr__(self, "alphas", alpha)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "C", float(self.C))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (
            np.array_equal(self.support_vectors, other.support_vectors)
            and np.array_equal(self.sv_labels, other.sv_labels)
            and np.array_equal(self.alphas, other.alphas)
            and self.bias == other.bias
            and self.gamma == other.gamma
            and self.C == other.C
        )

    @property
    def coef(self) -> np.ndarray:
        """alpha_i * y_i per support vector."""
        return self.alphas * self.sv_labels


def rbf(a, b, gamma) -> float:
    """exp(-gamma * |a - b|^2) for two feature points."""
    if isinstance(gamma, KernelParams):
        gamma = gamma.gamma
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return math.exp(-gamma * float(d @ d))


def rbf_matrix(A, B, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of A and B (differences, not the
    expanded-norm trick, so K(x, x) is exactly 1)."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 2)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 2)
    d0 = A[:, 0, None] - B[None, :, 0]
    d1 = A[:, 1, None] - B[None, :, 1]
    d0 *= d0
    d1 *= d1
    d0 += d1
    d0 *= -gamma
    return np.exp(d0, out=d0)


@njit(cache=True)
def _kernel_row(X, i, gamma, out):
    x0 = X[i, 0]
    x1 = X[i, 1]
    for t in range(X.shape[0]):
        d0 = X[t, 0] - x0
        d1 = X[t, 1] - x1
        out[t] = np.exp((d0 * d0 + d1 * d1) * -gamma)


@njit(cache=True)
def _row(X, gamma, i, cache, slot_of, owner, stamp, state):
    # state = [clock, slots_used]; least recently used slot is evicted.
    state[0] += 1
    s = slot_of[i]
    if s < 0:
        if state[1] < cache.shape[0]:
            s = state[1]
            state[1] += 1
        else:
            s = np.argmin(stamp)
            slot_of[owner[s]] = -1
        owner[s] = i
        slot_of[i] = s
        _kernel_row(X, i, gamma, cache[s])
    stamp[s] = state[0]
    return cache[s]


@njit(cache=True)
def _in_up(a, yt, C):
    return a < C if yt > 0 else a > 0


@njit(cache=True)
def _in_low(a, yt, C):
    return a > 0 if yt > 0 else a < C


@njit(cache=True)
def _reconstruct(X, y, gamma, alpha, grad, active, n_act, cache, slot_of, owner, stamp, state):
    """Recompute the gradient of the shrunk (inactive) variables."""
    n = X.shape[0]
    if n_act == n:
        return
    for k in range(n_act, n):
        grad[active[k]] = -1.0
    for j in range(n):
        if alpha[j] > 0:
            Kj = _row(X, gamma, j, cache, slot_of, owner, stamp, state)
            cj = y[j] * alpha[j]
            for k in range(n_act, n):
                t = active[k]
                grad[t] += y[t] * cj * Kj[t]


@njit(cache=True)
def _smo_core(X, y, C, gamma, eps, max_iter, max_passes, seed, capacity, shrinking):
    """Returns (alpha, grad, iterations, final gap, status); status 0 is
    converged, 1 hit max_iter, 2 stalled for max_passes updates."""
    n = X.shape[0]
    np.random.seed(seed)
    cache = np.empty((capacity, n))
    slot_of = np.full(n, -1, dtype=np.int64)
    owner = np.full(capacity, -1, dtype=np.int64)
    stamp = np.zeros(capacity, dtype=np.int64)
    state = np.zeros(2, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    # active[:n_act] are optimised; the rest are shrunk at a bound.
    active = np.arange(n)
    n_act = n
    interval = min(n, 1000)
    counter = interval
    unshrunk = False

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)
    stalled = 0
    it = 0
    gap = np.inf
    while True:
        counter -= 1
        if shrinking and counter == 0:
            counter = interval
            m_val = -np.inf
            M_val = np.inf
            for k in range(n_act):
                t = active[k]
                v = -y[t] * grad[t]
                if _in_up(alpha[t], y[t], C) and v > m_val:
                    m_val = v
                if _in_low(alpha[t], y[t], C) and v < M_val:
                    M_val = v
            if not unshrunk and m_val - M_val <= 10 * eps:
                unshrunk = True
                _reconstruct(X, y, gamma, alpha, grad, active, n_act, cache, slot_of, owner, stamp, state)
                n_act = n
            k = 0
            while k < n_act:
                t = active[k]
                v = -y[t] * grad[t]
                up = _in_up(alpha[t], y[t], C)
                low = _in_low(alpha[t], y[t], C)
                if (up and not low and v < M_val) or (low and not up and v > m_val):
                    n_act -= 1
                    active[k] = active[n_act]
                    active[n_act] = t
                else:
                    k += 1

        # I_up: y_i * alpha_i can grow; I_low: it can shrink. v = -y * grad.
        i = -1
        m_val = -np.inf
        M_val = np.inf
        for k in range(n_act):
            t = active[k]
            v = -y[t] * grad[t]
            if _in_up(alpha[t], y[t], C) and v > m_val:
                m_val = v
                i = t
            if _in_low(alpha[t], y[t], C) and v < M_val:
                M_val = v
        gap = m_val - M_val
        if gap < eps:
            if n_act < n:
                _reconstruct(X, y, gamma, alpha, grad, active, n_act, cache, slot_of, owner, stamp, state)
                n_act = n
                counter = interval
                continue
            return alpha, grad, it, gap, 0
        if it >= max_iter:
            _reconstruct(X, y, gamma, alpha, grad, active, n_act, cache, slot_of, owner, stamp, state)
            return alpha, grad, it, gap, 1
        Ki = _row(X, gamma, i, cache, slot_of, owner, stamp, state)

        j = -1
        if stalled == 0:
            best = -np.inf
            for k in range(n_act):
                t = active[k]
                v = -y[t] * grad[t]
                if _in_low(alpha[t], y[t], C) and v < m_val:
                    b = m_val - v
                    a = 2.0 - 2.0 * Ki[t]
                    if a <= 0:
                        a = 1e-12
                    g = b * b / a
                    if g > best:
                        best = g
                        j = t
        else:
            c = 0
            for k in range(n_act):
                t = active[k]
                if _in_low(alpha[t], y[t], C) and -y[t] * grad[t] < m_val:
                    cand[c] = t
                    c += 1
            j = cand[np.random.randint(0, c)]
        Kj = _row(X, gamma, j, cache, slot_of, owner, stamp, state)
        # Row i may have been evicted by row j only if capacity < 2.
        Kij = Kj[i]

        # Step along u (u_i = y_i, u_j = -y_j) keeps sum(a * y) fixed.
        b_ij = m_val + y[j] * grad[j]
        a_ij = 2.0 - 2.0 * Kij
        if a_ij <= 0:
            a_ij = 1e-12
        step = b_ij / a_ij
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        old_i = alpha[i]
        old_j = alpha[j]
        if step < min(lim_i, lim_j):
            alpha[i] = old_i + y[i] * step
            alpha[j] = old_j - y[j] * step
        else:
            # Clipped: whichever variable reaches its bound is set exactly.
            step = min(lim_i, lim_j)
            if lim_i <= lim_j:
                alpha[i] = C if y[i] > 0 else 0.0
            else:
                alpha[i] = old_i + y[i] * step
            if lim_j <= lim_i:
                alpha[j] = 0.0 if y[j] > 0 else C
            else:
                alpha[j] = old_j - y[j] * step
        ci = y[i] * (alpha[i] - old_i)
        cj = y[j] * (alpha[j] - old_j)
        for k in range(n_act):
            t = active[k]
            grad[t] += y[t] * (ci * Ki[t] + cj * Kj[t])
        it += 1

        decrease = b_ij * step - 0.5 * a_ij * step * step
        if (ci == 0.0 and cj == 0.0) or not decrease > 0:
            stalled += 1
            if stalled > max_passes:
                _reconstruct(X, y, gamma, alpha, grad, active, n_act, cache, slot_of, owner, stamp, state)
                return alpha, grad, it, gap, 2
        else:
            stalled = 0


def train_smo(X, y, cfg: TrainConfig, seed: int = 0) -> SvmModel:
    """Solve the soft-margin dual on (X, y) and return the support vectors.

    Raises ConvergenceError (carrying the current model) if ``max_iter`` is
    exhausted or ``max_passes`` consecutive updates make no progress.
    """
    X = np.ascontiguousarray(X, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y)
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if len(y) < 2 or not (np.any(y == 1) and np.any(y == -1)):
        raise ValueError("training data must contain both classes")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    n = len(y)
    max_passes = cfg.max_passes if cfg.max_passes is not None else 10 * n
    capacity = n if n <= FULL_GRAM_LIMIT else max(2, min(n, ROW_CACHE_BYTES // (8 * n)))
    alpha, grad, it, gap, status = _smo_core(
        X, y.astype(np.float64), float(cfg.C), float(cfg.gamma), float(cfg.kkt_tol),
        int(cfg.max_iter), int(max_passes), int(seed) % 2**32, int(capacity), bool(cfg.shrinking),
    )
    model = _build_model(X, y, alpha, grad, cfg.C, cfg.gamma, it)
    if status == 1:
        raise ConvergenceError(f"SMO hit max_iter={cfg.max_iter} (gap {gap:.3g})", model, gap)
    if status == 2:
        raise ConvergenceError(f"SMO made no progress in {max_passes} updates (gap {gap:.3g})", model, gap)
    return model


def warm_up() -> None:
    """Compile (or load) the jitted solver so later timings exclude it."""
    train_smo([[0.0, 0.0], [1.0, 1.0]], [1, -1], TrainConfig(1.0, 1.0))


def _build_model(X, y, alpha, grad, C, gamma, n_iter) -> SvmModel:
    yf = y.astype(np.float64)
    v = -yf * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        pos = y == 1
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        hi = np.max(v, where=up, initial=-np.inf)
        lo = np.min(v, where=low, initial=np.inf)
        if np.isfinite(hi) and np.isfinite(lo):
            bias = 0.5 * (hi + lo)
        else:
            bias = float(hi if np.isfinite(hi) else lo)
    keep = alpha > 1e-8 * C
    if not np.any(keep):
        # All-zero solution: keep one point so the expansion is well formed.
        keep = np.zeros(len(alpha), dtype=bool)
        keep[0] = True
    return SvmModel(X[keep], y[keep], alpha[keep], bias, gamma, C, n_iter)


def decision_value(model: SvmModel, x):
    """sum_i alpha_i y_i K(sv_i, x) + b for one point or an (m, 2) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(-1, 2)
    out = np.empty(len(X))
    step = max(1, 2**22 // max(1, len(model.alphas)))
    coef = model.coef
    for s in range(0, len(X), step):
        out[s:s + step] = rbf_matrix(X[s:s + step], model.support_vectors, model.gamma) @ coef
    out += model.bias
    return float(out[0]) if single else out


def predict(model: SvmModel, x):
    """Sign of the decision value; an exact zero maps to +1."""
    g = decision_value(model, x)
    if np.ndim(g) == 0:
        return 1 if g >= 0 else -1
    return np.where(g >= 0, 1, -1)


def sv_count(model: SvmModel) -> int:
    return len(model.alphas)


def dual_objective(model: SvmModel) -> float:
    """sum(a) - 1/2 a'Qa over the stored support vectors."""
    K = rbf_matrix(model.support_vectors, model.support_vectors, model.gamma)
    c = model.coef
    return float(model.alphas.sum() - 0.5 * c @ K @ c)


def kkt_violations(model: SvmModel, X, y, tol: float) -> dict[str, int]:
    """Count training points breaking each KKT case at tolerance ``tol``.

    Points absent from the model have alpha = 0.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y)
    alpha = np.zeros(len(y))
    index = {tuple(p): k for k, p in enumerate(X.tolist())}
    # Duplicated training points may split their weight; sum per location.
    by_point = {}
    for sv, a in zip(model.support_vectors.tolist(), model.alphas.tolist()):
        by_point[tuple(sv)] = by_point.get(tuple(sv), 0.0) + a
    if len(index) == len(X):
        for p, a in by_point.items():
            alpha[index[p]] = a
    else:
        raise ValueError("kkt_violations needs distinct training points")
    margin = y * decision_value(model, X)
    C = model.C
    at_zero = alpha <= 1e-8 * C
    at_c = alpha >= C * (1 - 1e-12)
    free = ~at_zero & ~at_c
    return {
        "zero": int(np.count_nonzero(at_zero & (margin < 1 - tol))),
        "free": int(np.count_nonzero(free & (np.abs(margin - 1) > tol))),
        "bound": int(np.count_nonzero(at_c & (margin > 1 + tol))),
    }


def save_model(model: SvmModel, path) -> None:
    from .dataset import atomic_write_text

    lines = [
        f"{MODEL_MAGIC} v{MODEL_VERSION}",
        f"gamma {model.gamma:.17g}",
        f"C {model.C:.17g}",
        f"bias {model.bias:.17g}",
        f"n_sv {len(model.alphas)}",
    ]
    for (s, th), lab, a in zip(model.support_vectors.tolist(), model.sv_labels.tolist(), model.alphas.tolist()):
        lines.append(f"{s:.17g} {th:.17g} {lab} {a:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_model(path) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_MAGIC or not head[1].startswith("v"):
        raise ModelFormatError(f"{path}: not a {MODEL_MAGIC} file")
    try:
        version = int(head[1][1:])
    except ValueError:
        raise ModelFormatError(f"{path}: bad version tag {head[1]!r}") from None
    if version > MODEL_VERSION:
        raise ModelFormatError(f"{path}: model format v{version} is newer than supported v{MODEL_VERSION}")
    try:
        fields = dict(ln.split(None, 1) for ln in lines[1:5])
        gamma = float(fields["gamma"])
        C = float(fields["C"])
        bias = float(fields["bias"])
        n_sv = int(fields["n_sv"])
        body = [ln.split() for ln in lines[5:]]
        if len(body) != n_sv or any(len(r) != 4 for r in body):
            raise ValueError("support-vector table does not match n_sv")
        sv = [(float(r[0]), float(r[1])) for r in body]
        lab = [int(r[2]) for r in body]
        alpha = [float(r[3]) for r in body]
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return SvmModel(sv, lab, alpha, bias, gamma, C)

