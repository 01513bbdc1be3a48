"""Minimal differentiable compute core in float64 numpy: a small
strided-convolution encoder, linear/softmax layers, VAE losses, Adam, and a
central-finite-difference gradient checker.

Parameters live in flat ``{name: ndarray}`` dicts so optimizer state and
gradient checking stay generic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_VAR_CLAMP = 10.0


# ---------------------------------------------------------------------------
# parameter dict helpers
# ---------------------------------------------------------------------------

def prefixed(prefix: str, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {prefix + k: v for k, v in params.items()}


def subdict(prefix: str, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def accumulate(into: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for k, g in grads.items():
        if k in into:
            into[k] = into[k] + g
        else:
            into[k] = g.copy()


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


# ---------------------------------------------------------------------------
# convolution encoder
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, Ho*Wo) patch matrix."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    s0, s1, s2 = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp, (c, k, k, ho, wo), (s0, s1, s2, s1 * stride, s2 * stride)
    )
    return patches.reshape(c * k * k, ho * wo)


def _col2im(
    dcols: np.ndarray, c: int, h: int, w: int, k: int, stride: int, pad: int
) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back to (C, H, W)."""
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    dxp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    d = dcols.reshape(c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + ho * stride : stride, j : j + wo * stride : stride] += d[
                :, i, j
            ]
    return dxp[:, pad : pad + h, pad : pad + w]


class ConvEncoder:
    """Fixed toy architecture: len(widths) blocks of [3x3 conv, stride 2,
    zero padding 1, ReLU], then global average pooling over the final map.

    The feature dimension equals ``widths[-1]``.
    """

    KERNEL = 3
    STRIDE = 2
    PAD = 1

    def __init__(self, in_channels: int, widths: tuple[int, ...] = (16, 32, 64, 64)):
        if in_channels < 1 or not widths:
            raise ValueError("encoder needs >= 1 input channel and >= 1 block")
        self.in_channels = in_channels
        self.widths = tuple(widths)

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        params = {}
        c_in = self.in_channels
        for i, c_out in enumerate(self.widths):
            fan_in = c_in * self.KERNEL**2
            fan_out = c_out * self.KERNEL**2
            params[f"conv{i}_w"] = uniform_init(rng, (c_out, fan_in), fan_in, fan_out)
            params[f"conv{i}_b"] = np.zeros(c_out)
            c_in = c_out
        return params

    def forward(
        self, params: dict[str, np.ndarray], x: np.ndarray
    ) -> tuple[np.ndarray, list]:
        """x is (in_channels, H, W); returns (feature vector, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ValueError(
                f"expected ({self.in_channels}, H, W) input, got {x.shape}"
            )
        cache = []
        for i, c_out in enumerate(self.widths):
            c, h, w = x.shape
            cols = _im2col(x, self.KERNEL, self.STRIDE, self.PAD)
            ho = (h + 2 * self.PAD - self.KERNEL) // self.STRIDE + 1
            wo = (w + 2 * self.PAD - self.KERNEL) // self.STRIDE + 1
            pre = params[f"conv{i}_w"] @ cols + params[f"conv{i}_b"][:, None]
            mask = pre > 0
            cache.append((cols, mask, (c, h, w), (ho, wo)))
            x = (pre * mask).reshape(c_out, ho, wo)
        feat = x.mean(axis=(1, 2))
        cache.append(x.shape)
        return feat, cache

    def backward(
        self, params: dict[str, np.ndarray], cache: list, dfeat: np.ndarray
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Gradients w.r.t. parameters and the encoder input."""
        final_shape = cache[-1]
        dx = np.broadcast_to(
            dfeat[:, None, None] / (final_shape[1] * final_shape[2]), final_shape
        )
        grads = {}
        for i in reversed(range(len(self.widths))):
            cols, mask, (c, h, w), (ho, wo) = cache[i]
            dy = dx.reshape(self.widths[i], ho * wo) * mask
            grads[f"conv{i}_w"] = dy @ cols.T
            grads[f"conv{i}_b"] = dy.sum(axis=1)
            dcols = params[f"conv{i}_w"].T @ dy
            dx = _col2im(dcols, c, h, w, self.KERNEL, self.STRIDE, self.PAD)
        return grads, dx


# ---------------------------------------------------------------------------
# small layers and losses
# ---------------------------------------------------------------------------

def linear(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return w @ x + b


def linear_backward(
    w: np.ndarray, x: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dw, db, dx)."""
    return np.outer(dy, x), dy.copy(), w.T @ dy


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def softmax_vjp(alpha: np.ndarray, dalpha: np.ndarray) -> np.ndarray:
    return alpha * (dalpha - np.dot(dalpha, alpha))


def fc_softmax_head(
    w: np.ndarray, b: np.ndarray, features: np.ndarray, latent: np.ndarray
) -> np.ndarray:
    """Simplex coefficients alpha = softmax(W [f; z] + b)."""
    x = np.concatenate([features, latent])
    if w.shape[1] != x.size:
        raise ValueError(
            f"head expects input of length {w.shape[1]}, got {x.size}"
        )
    return softmax(linear(w, b, x))


@dataclass(frozen=True)
class LatentGaussian:
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ValueError("mu and log_var must have the same shape")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_var))):
            raise ValueError("latent Gaussian parameters must be finite")


def reparameterize(g: LatentGaussian, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != g.mu.shape:
        raise ValueError(f"eps shape {eps.shape} != latent dim {g.mu.shape}")
    return g.mu + eps * np.exp(g.log_var / 2.0)


def kl_to_standard_normal(g: LatentGaussian) -> float:
    return float(0.5 * np.sum(g.mu**2 + np.exp(g.log_var) - 1.0 - g.log_var))


def kl_grads(g: LatentGaussian) -> tuple[np.ndarray, np.ndarray]:
    """(d/dmu, d/dlog_var) of kl_to_standard_normal."""
    return g.mu.copy(), 0.5 * (np.exp(g.log_var) - 1.0)


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def l1_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient of l1_loss w.r.t. a."""
    return np.sign(a - b) / a.size


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction over a flat parameter dict."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(
        self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
    ) -> dict[str, np.ndarray]:
        if set(grads) != set(params):
            missing = set(params) ^ set(grads)
            raise ValueError(f"gradient/parameter name mismatch: {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        out = {}
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {k}")
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g**2
            m_hat = self.m[k] / (1 - self.beta1**t)
            v_hat = self.v[k] / (1 - self.beta2**t)
            out[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(
    loss_fn,
    grad_fn,
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> dict[str, float]:
    """Central finite differences vs analytic gradients.

    ``loss_fn(params) -> float`` must be deterministic; ``grad_fn(params)``
    returns the analytic gradient dict. Returns per-block max relative error,
    with relative error |a - n| / max(|a|, |n|, 1e-8).
    """
    analytic = grad_fn(params)
    report = {}
    for name, p in params.items():
        a = analytic[name]
        worst = 0.0
        flat = p.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_fn(params)
            flat[idx] = orig - h
            down = loss_fn(params)
            flat[idx] = orig
            numeric = (up - down) / (2 * h)
            ai = a.ravel()[idx]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return report


# ---------------------------------------------------------------------------
# image helpers used by the encoders
# ---------------------------------------------------------------------------

def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) image (half-pixel centers)."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    top = image[y0][:, x0] * (1 - fx)[None, :, None] + image[y0][:, x1] * fx[None, :, None]
    bot = image[y1][:, x0] * (1 - fx)[None, :, None] + image[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def stack_channels(image: np.ndarray, *extras: np.ndarray) -> np.ndarray:
    """Stack an (H, W, 3) image and extra (H, W) or (H, W, C) planes into a
    channels-first (C, H, W) tensor."""
    planes = [np.asarray(image, dtype=np.float64).transpose(2, 0, 1)]
    for e in extras:
        e = np.asarray(e, dtype=np.float64)
        if e.ndim == 2:
            planes.append(e[None])
        else:
            planes.append(e.transpose(2, 0, 1))
    return np.concatenate(planes, axis=0)
