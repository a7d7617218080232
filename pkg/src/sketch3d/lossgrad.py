"""Reconstruction loss ``CD(A P_pre || P_gt) + lambda * ||I - A A^T||_F^2`` and its gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pointcloud as pc

DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True)
class LossConfig:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    chamfer: float
    orth: float
    total: float
    grad_points: np.ndarray
    grad_rotation: np.ndarray


def composite_loss(P_pre, A, P_gt, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Loss value plus gradients with respect to ``P_pre`` and ``A``.

    With ``X = A P_pre`` and ``G`` the Chamfer gradient at ``X``:
    ``dL/dP_pre = G A`` (row form of ``A^T g_k``) and
    ``dL/dA = sum_k g_k p_k^T + lambda * (-4 (I - A A^T) A)``.
    """
    pre = pc._as_points(P_pre)
    gt = pc._as_points(P_gt)
    m = pc._as_matrix(A)
    x = pre @ m.T
    cd = pc.chamfer(x, gt)
    g = pc.chamfer_grad(x, gt)
    orth = pc.orth_loss(m)
    return LossBreakdown(
        chamfer=cd,
        orth=orth,
        total=cd + cfg.lam * orth,
        grad_points=g @ m,
        grad_rotation=g.T @ pre + cfg.lam * pc.orth_loss_grad(m),
    )


def total_loss(P_pre, A, P_gt, cfg: LossConfig = LossConfig()) -> float:
    pre = pc._as_points(P_pre)
    m = pc._as_matrix(A)
    return pc.chamfer(pre @ m.T, P_gt) + cfg.lam * pc.orth_loss(m)


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = f(x)
        flat[j] = orig - h
        fm = f(x)
        flat[j] = orig
        gflat[j] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` in the Euclidean norm."""
    diff = np.linalg.norm(np.asarray(analytic) - np.asarray(numeric))
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def tie_gap(X, Y) -> float:
    """Smallest gap between best and second-best squared NN distance, both directions."""
    a, b = pc._as_points(X), pc._as_points(Y)
    gaps = []
    for src, dst in ((a, b), (b, a)):
        if len(dst) < 2:
            continue
        d2 = np.sort(pc._sqdist_rows(src[:, None, :], dst[None, :, :]), axis=1)
        gaps.append(float((d2[:, 1] - d2[:, 0]).min()))
    return min(gaps) if gaps else np.inf


def _assignments(X, Y):
    return pc.nearest(X, Y, accelerate=False)[0], pc.nearest(Y, X, accelerate=False)[0]


def stencil_crosses_tie(P_pre, A, P_gt, h: float = 1e-5) -> bool:
    """True if any +/-h probe of the finite-difference stencil changes a nearest-neighbour assignment.

    Such an instance straddles a kink of the Chamfer term, where central
    differences average two different one-sided slopes.
    """
    pre = np.array(P_pre, dtype=np.float64)
    m = np.array(A, dtype=np.float64)
    base = _assignments(pre @ m.T, P_gt)
    for arr in (pre, m):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            for step in (h, -h):
                flat[i] = old + step
                probe = _assignments(pre @ m.T, P_gt)
                if not all(np.array_equal(a, b) for a, b in zip(base, probe)):
                    flat[i] = old
                    return True
            flat[i] = old
    return False


def is_near_tie(P_pre, A, P_gt, h: float = 1e-5, tie_margin: float = 1e-6) -> bool:
    """Near-tie test used to exclude instances from gradient checking."""
    return tie_gap(np.asarray(P_pre) @ np.asarray(A).T, P_gt) < tie_margin or stencil_crosses_tie(P_pre, A, P_gt, h)


def random_instance(rng: np.random.Generator, n: int = 16, perturb: float = 0.05):
    """Random ``(P_pre, A, P_gt)``: A is a proper rotation plus Gaussian noise."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    A = q + perturb * rng.normal(size=(3, 3))
    P_gt = rng.uniform(-1, 1, size=(n, 3))
    P_pre = (P_gt + 0.3 * rng.normal(size=(n, 3))) @ q   # roughly aligned after A
    return P_pre, A, P_gt


@dataclass
class TrialResult:
    trial: int
    cd: float
    orth: float
    total: float
    max_rel_err: float
    status: str

    def line(self) -> str:
        return f"{self.trial}, {self.cd:.12e}, {self.orth:.12e}, {self.total:.12e}, {self.max_rel_err:.6e}, {self.status}"


@dataclass
class GradcheckReport:
    trials: list[TrialResult] = field(default_factory=list)
    tolerance: float = 1e-5

    @property
    def checked(self) -> list[TrialResult]:
        return [t for t in self.trials if t.status != "skip"]

    @property
    def max_rel_err(self) -> float:
        return max((t.max_rel_err for t in self.checked), default=0.0)

    @property
    def failures(self) -> list[int]:
        return [t.trial for t in self.trials if t.status == "FAIL"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def text(self) -> str:
        head = "trial, cd, orth, total, max_rel_err, status\n"
        body = "".join(t.line() + "\n" for t in self.trials)
        tail = (f"# checked={len(self.checked)} skipped={len(self.trials) - len(self.checked)} "
                f"max_rel_err={self.max_rel_err:.6e} failures={self.failures}\n")
        return head + body + tail


def check_instance(P_pre, A, P_gt, cfg: LossConfig = LossConfig(), h: float = 1e-5,
                   loss_fn=None) -> tuple[LossBreakdown, float]:
    """Analytic-vs-central-difference relative error (worst of points and rotation)."""
    loss_fn = loss_fn or composite_loss
    pre = np.array(P_pre, dtype=np.float64)
    m = np.array(A, dtype=np.float64)
    res = loss_fn(pre, m, P_gt, cfg)
    fd_pts = central_difference(lambda x: total_loss(x, m, P_gt, cfg), pre, h)
    fd_rot = central_difference(lambda a: total_loss(pre, a, P_gt, cfg), m, h)
    err = max(relative_error(res.grad_points, fd_pts), relative_error(res.grad_rotation, fd_rot))
    return res, err


def gradcheck(trials: int = 100, rng_seed: int = 0, n: int = 16, lam: float = DEFAULT_LAMBDA,
              h: float = 1e-5, tolerance: float = 1e-5, tie_margin: float = 1e-6,
              loss_fn=None) -> GradcheckReport:
    """Compare analytic gradients with finite differences on random instances.

    Instances whose rotated cloud sits within ``tie_margin`` (in squared
    distance) of a nearest-neighbour tie, or whose finite-difference stencil
    crosses one, are reported as ``skip``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    cfg = LossConfig(lam)
    rng = np.random.default_rng(rng_seed)
    report = GradcheckReport(tolerance=tolerance)
    for t in range(trials):
        P_pre, A, P_gt = random_instance(rng, n)
        if is_near_tie(P_pre, A, P_gt, h, tie_margin):
            res = composite_loss(P_pre, A, P_gt, cfg)
            report.trials.append(TrialResult(t, res.chamfer, res.orth, res.total, float("nan"), "skip"))
            continue
        res, err = check_instance(P_pre, A, P_gt, cfg, h, loss_fn)
        status = "ok" if err < tolerance else "FAIL"
        report.trials.append(TrialResult(t, res.chamfer, res.orth, res.total, err, status))
    return report
