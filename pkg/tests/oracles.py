"""Independent brute-force reference implementations used by the tests.

Everything here is written with explicit loops in numpy / scipy, separately
from the package code paths it cross-checks.
"""

import numpy as np
import scipy.linalg
import torch

NORM_EPS = 1e-10


def ref_normalize_channels(feat: np.ndarray) -> np.ndarray:
    """(C, H, W) -> channel-unit-normalized at every spatial location."""
    out = np.zeros_like(feat)
    C, H, W = feat.shape
    for h in range(H):
        for w in range(W):
            vec = feat[:, h, w]
            out[:, h, w] = vec / (np.sqrt((vec ** 2).sum()) + NORM_EPS)
    return out


def ref_lpips_single(feats_x, feats_y, weights) -> float:
    """Perceptual distance for one sample from per-tap (C, H, W) feature arrays."""
    total = 0.0
    for w, fx, fy in zip(weights, feats_x, feats_y):
        if w == 0:
            continue
        nx = ref_normalize_channels(np.asarray(fx, dtype=np.float64))
        ny = ref_normalize_channels(np.asarray(fy, dtype=np.float64))
        C, H, W = nx.shape
        acc = 0.0
        for h in range(H):
            for ww in range(W):
                acc += ((nx[:, h, ww] - ny[:, h, ww]) ** 2).sum()
        total += w * acc / (H * W)
    return total


def ref_lpips(x: torch.Tensor, y: torch.Tensor, backbone, weights) -> np.ndarray:
    """Per-sample perceptual distance via the brute-force tap evaluation."""
    with torch.no_grad():
        feats_x = [t.cpu().numpy() for t in backbone(x)]
        feats_y = [t.cpu().numpy() for t in backbone(y)]
    out = []
    for b in range(x.shape[0]):
        out.append(ref_lpips_single([f[b] for f in feats_x], [f[b] for f in feats_y], weights))
    return np.array(out)


def ref_triplet(d_ap: float, d_an: float, margin: float) -> float:
    return max(d_ap - d_an + margin, 0.0)


def ref_cdt(D: np.ndarray, margin: float, positive_weight: float = 1.0) -> float:
    m = D.shape[0]
    terms = []
    for i in range(m):
        neg = 0.0
        for j in range(m):
            if j != i:
                neg += D[i, j]
        neg /= m - 1
        terms.append(max(positive_weight * D[i, i] - neg + margin, 0.0))
    return float(np.mean(terms))


def ref_softmax(values: np.ndarray) -> np.ndarray:
    shifted = values - values.max()
    e = np.exp(shifted)
    return e / e.sum()


def ref_kl_adain(layers_s, layers_t) -> float:
    """Brute-force cosine / softmax / KL evaluation over trace layers."""
    total = 0.0
    for Fs, Ft in zip(layers_s, layers_t):
        Fs = np.asarray(Fs, dtype=np.float64)
        Ft = np.asarray(Ft, dtype=np.float64)
        m = Fs.shape[0]
        layer = 0.0
        for i in range(m):
            sims_s = []
            sims_t = []
            for j in range(m):
                if j == i:
                    continue
                sims_s.append(Fs[i] @ Fs[j] / (np.linalg.norm(Fs[i]) * np.linalg.norm(Fs[j])))
                sims_t.append(Ft[i] @ Ft[j] / (np.linalg.norm(Ft[i]) * np.linalg.norm(Ft[j])))
            ys = ref_softmax(np.array(sims_s))
            yt = ref_softmax(np.array(sims_t))
            layer += float((ys * (np.log(ys) - np.log(yt))).sum())
        total += layer / m
    return total


def ref_smooth_l1(a: np.ndarray, b: np.ndarray) -> float:
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).reshape(-1)
    vals = [0.5 * di * di if di < 1.0 else di - 0.5 for di in d]
    return float(np.mean(vals))


def ref_adain(feature: np.ndarray, scale: np.ndarray, shift: np.ndarray,
              eps: float = 1e-5) -> np.ndarray:
    """Brute-force per-channel instance normalization plus scale/shift."""
    B, C, H, W = feature.shape
    out = np.zeros_like(feature, dtype=np.float64)
    for b in range(B):
        for c in range(C):
            vals = feature[b, c].astype(np.float64)
            mu = vals.mean()
            var = ((vals - mu) ** 2).mean()
            out[b, c] = scale[b, c] * (vals - mu) / np.sqrt(var + eps) + shift[b, c]
    return out


def ref_fid_closed_form(mu_a, cov_a, mu_b, cov_b) -> float:
    """Fréchet distance on explicit Gaussian parameters via scipy's sqrtm."""
    mu_a = np.asarray(mu_a, dtype=np.float64)
    mu_b = np.asarray(mu_b, dtype=np.float64)
    cov_a = np.atleast_2d(np.asarray(cov_a, dtype=np.float64))
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=np.float64))
    cross = scipy.linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(cross):
        cross = cross.real
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))


def ref_lpips_cluster(generated: torch.Tensor, training: torch.Tensor, pair_fn):
    """O(n^2) assignment + intra-cluster statistics; pair_fn(a, b) -> float."""
    G = generated.shape[0]
    K = training.shape[0]
    assign = []
    for i in range(G):
        dists = [pair_fn(generated[i], training[k]) for k in range(K)]
        best = 0
        for k in range(1, K):
            if dists[k] < dists[best]:
                best = k
        assign.append(best)
    means = []
    for k in range(K):
        members = [i for i in range(G) if assign[i] == k]
        if len(members) < 2:
            continue
        pair_vals = []
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                pair_vals.append(pair_fn(generated[members[a]], generated[members[b]]))
        means.append(float(np.mean(pair_vals)))
    if not means:
        return None
    return float(np.mean(means)), float(np.std(means)), assign


def central_diff_grad(f, x: torch.Tensor, rel_eps: float = 1e-6) -> torch.Tensor:
    """Central finite-difference gradient of a scalar function of a tensor."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = float(flat[i])
        eps = rel_eps * (1.0 + abs(orig))
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def grad_relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    num = (analytic - numeric).norm().item()
    den = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
    return num / den
