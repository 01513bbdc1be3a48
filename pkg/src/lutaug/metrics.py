"""Evaluation metrics: MSE / foreground MSE / foreground SSIM on the 0-255
scale, the pairwise-fMSE diversity score, and Bradley-Terry ranking of
pairwise preferences via minorization-maximization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyForegroundError, NonIdentifiableError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def _check_images(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return pred, target


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Whole-image mean squared error on the 0-255 scale."""
    pred, target = _check_images(pred, target)
    return float((((pred - target) * 255.0) ** 2).mean())


def fmse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over foreground pixels only (0-255 scale)."""
    pred, target = _check_images(pred, target)
    fg = np.asarray(mask).astype(bool)
    if fg.shape != pred.shape[:2]:
        raise ValueError(f"mask shape {fg.shape} != image {pred.shape[:2]}")
    if not fg.any():
        raise EmptyForegroundError("fmse requires at least one foreground pixel")
    return float((((pred[fg] - target[fg]) * 255.0) ** 2).mean())


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def _filter_reflect(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2D filtering with reflective (mirror, edge not repeated)
    padding."""
    r = len(kernel) // 2
    out = np.pad(plane, r, mode="reflect")
    # horizontal then vertical pass
    out = sum(kernel[i] * out[:, i : i + plane.shape[1]] for i in range(len(kernel)))
    out = sum(kernel[i] * out[i : i + plane.shape[0], :] for i in range(len(kernel)))
    return out


def ssim_map(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Channel-averaged SSIM map (11x11 Gaussian window, sigma 1.5, constants
    on the 0-255 scale, reflective padding)."""
    pred, target = _check_images(pred, target)
    if min(pred.shape[:2]) < SSIM_WINDOW:
        raise ValueError(
            f"image min dimension {min(pred.shape[:2])} < SSIM window {SSIM_WINDOW}"
        )
    kernel = _gaussian_kernel()
    maps = []
    for c in range(pred.shape[2]):
        x = pred[..., c] * 255.0
        y = target[..., c] * 255.0
        mu_x = _filter_reflect(x, kernel)
        mu_y = _filter_reflect(y, kernel)
        var_x = _filter_reflect(x * x, kernel) - mu_x**2
        var_y = _filter_reflect(y * y, kernel) - mu_y**2
        cov = _filter_reflect(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        maps.append(num / den)
    return np.mean(maps, axis=0)


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    return float(ssim_map(pred, target).mean())


def fssim(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """SSIM map averaged over foreground pixels."""
    fg = np.asarray(mask).astype(bool)
    if not fg.any():
        raise EmptyForegroundError("fssim requires at least one foreground pixel")
    return float(ssim_map(pred, target)[fg].mean())


def diversity(samples: list[np.ndarray], mask: np.ndarray) -> float:
    """Mean pairwise fMSE over all unordered pairs of K >= 2 samples."""
    if len(samples) < 2:
        raise ValueError(f"diversity needs >= 2 samples, got {len(samples)}")
    vals = []
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            vals.append(fmse(samples[i], samples[j], mask))
    return float(np.mean(vals))


def dataset_diversity(per_image_samples: list[tuple[list[np.ndarray], np.ndarray]]) -> float:
    """Dataset-level diversity: mean over images of per-image diversity."""
    if not per_image_samples:
        raise ValueError("need at least one image")
    return float(np.mean([diversity(s, m) for s, m in per_image_samples]))


@dataclass(frozen=True)
class MetricReport:
    mse_values: list[float]
    fmse_values: list[float]
    fssim_values: list[float]

    @property
    def mse(self) -> float:
        return float(np.mean(self.mse_values))

    @property
    def fmse(self) -> float:
        return float(np.mean(self.fmse_values))

    @property
    def fssim(self) -> float:
        return float(np.mean(self.fssim_values))


def evaluate_images(
    triples: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
) -> MetricReport:
    """Per-image MSE/fMSE/fSSIM plus dataset means for (pred, target, mask)
    triples."""
    ms, fs, ss = [], [], []
    for pred, target, mask in triples:
        ms.append(mse(pred, target))
        fs.append(fmse(pred, target, mask))
        ss.append(fssim(pred, target, mask))
    return MetricReport(ms, fs, ss)


# ---------------------------------------------------------------------------
# Bradley-Terry ranking
# ---------------------------------------------------------------------------

def bt_log_likelihood(wins: np.ndarray, log_strength: np.ndarray) -> float:
    pi = np.exp(log_strength)
    n = wins + wins.T
    with np.errstate(divide="ignore", invalid="ignore"):
        p = pi[:, None] / (pi[:, None] + pi[None, :])
    ll = 0.0
    idx = np.nonzero(n)
    for i, j in zip(*idx):
        if wins[i, j] > 0:
            ll += wins[i, j] * np.log(p[i, j])
    return float(ll)


def _validate_wins(wins: np.ndarray) -> np.ndarray:
    wins = np.asarray(wins, dtype=np.float64)
    if wins.ndim != 2 or wins.shape[0] != wins.shape[1]:
        raise ValueError(f"wins must be a square matrix, got {wins.shape}")
    if np.any(wins < 0):
        raise ValueError("wins must be non-negative")
    if np.any(np.diag(wins) != 0):
        raise ValueError("wins diagonal must be zero")
    m = wins.shape[0]
    no_win = [i for i in range(m) if wins[i].sum() == 0]
    no_loss = [i for i in range(m) if wins[:, i].sum() == 0]
    if no_win or no_loss:
        raise NonIdentifiableError(
            f"degenerate win pattern: models with no wins {no_win}, "
            f"no losses {no_loss}",
            models=sorted(set(no_win) | set(no_loss)),
        )
    # connectivity of the comparison graph
    n = wins + wins.T
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(n[i])[0]:
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    if len(seen) != m:
        missing = sorted(set(range(m)) - seen)
        raise NonIdentifiableError(
            f"comparison graph is disconnected; unreachable models {missing}",
            models=missing,
        )
    return wins


def bt_rank(
    wins: np.ndarray,
    max_iters: int = 10000,
    rel_tol: float = 1e-10,
    return_history: bool = False,
):
    """Maximum-likelihood Bradley-Terry log-strengths, zero-mean normalized.

    Fitted by the standard MM iteration
    pi_i <- W_i / sum_j n_ij / (pi_i + pi_j), which never decreases the
    likelihood.
    """
    wins = _validate_wins(wins)
    m = wins.shape[0]
    n = wins + wins.T
    w_total = wins.sum(axis=1)
    pi = np.ones(m)
    history = [bt_log_likelihood(wins, np.log(pi))]
    for _ in range(max_iters):
        denom = np.where(n > 0, n / (pi[:, None] + pi[None, :]), 0.0).sum(axis=1)
        new_pi = w_total / denom
        new_pi /= np.exp(np.log(new_pi).mean())  # geometric-mean gauge
        delta = np.abs(np.log(new_pi) - np.log(pi)).max()
        pi = new_pi
        history.append(bt_log_likelihood(wins, np.log(pi)))
        if delta < rel_tol:
            break
    scores = np.log(pi)
    scores -= scores.mean()
    if return_history:
        return scores, history
    return scores
