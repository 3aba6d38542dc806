"""Evaluation suite: distribution distance, identity preservation, and the
intra-cluster overfitting measure, plus latent-distribution diagnostics.

At desk scale the distribution distance runs on pooled penultimate-tap
features of the toy backbone; full-scale runs can plug an external
classifier through the backbone adapter. Those numbers are internally
comparable across runs of this artifact, not against published tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import InvalidArgumentError, NumericFailureError, UndefinedMetricError
from .latent import ExtendedLatent
from .perceptual import PerceptualWeights, lpips, pairwise_lpips

EIG_CLAMP = 1e-10
PSD_TOL = 1e-6

REPORT_KEYS = ("fid", "lpips_distance_mean", "lpips_cluster_mean",
               "lpips_cluster_std", "counts")


@dataclass
class MetricsReport:
    fid: float | None = None
    lpips_distance_mean: float | None = None
    lpips_cluster_mean: float | None = None
    lpips_cluster_std: float | None = None
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("fid", "lpips_distance_mean", "lpips_cluster_mean", "lpips_cluster_std"):
            value = getattr(self, name)
            if value is None:
                continue
            if not np.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")

    def to_json(self) -> str:
        payload = {key: getattr(self, key) for key in REPORT_KEYS}
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        extra = set(data) - set(REPORT_KEYS)
        if extra:
            raise InvalidArgumentError(f"unexpected report keys: {sorted(extra)}")
        return cls(**data)


def _psd_eigvals(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    scale = max(1.0, float(np.abs(vals).max())) if vals.size else 1.0
    if vals.min() < -PSD_TOL * scale:
        raise NumericFailureError(
            f"matrix is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    return np.clip(vals, EIG_CLAMP, None), vecs


def fid(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature samples.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with unbiased
    covariance estimates and the cross square root taken through the
    symmetrized product sqrt(S_a) S_b sqrt(S_a) with eigenvalue clamping.
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    if feats_a.ndim != 2 or feats_b.ndim != 2:
        raise InvalidArgumentError("feature sets must be 2-D (samples x dims)")
    if feats_a.shape[1] != feats_b.shape[1]:
        raise InvalidArgumentError(
            f"feature dims differ: {feats_a.shape[1]} vs {feats_b.shape[1]}")
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise InvalidArgumentError("need >= 2 samples per set for covariance estimation")

    mu_a = feats_a.mean(axis=0)
    mu_b = feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)

    vals_a, vecs_a = _psd_eigvals(cov_a)
    sqrt_a = (vecs_a * np.sqrt(vals_a)) @ vecs_a.T
    cross = sqrt_a @ cov_b @ sqrt_a
    vals_cross, _ = _psd_eigvals(cross)
    trace_sqrt = float(np.sqrt(vals_cross).sum())

    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
    if not np.isfinite(value):
        raise NumericFailureError("distribution distance is non-finite")
    # the plug-in estimator can dip epsilon-negative; the distance itself is >= 0
    scale = max(1.0, abs(np.trace(cov_a)) + abs(np.trace(cov_b)))
    if value < -1e-6 * scale:
        raise NumericFailureError(f"distribution distance came out negative ({value:.3e})")
    return max(value, 0.0)


def backbone_fid_features(images: torch.Tensor, backbone, batch_size: int = 64) -> np.ndarray:
    """Pooled penultimate-tap features, the desk-scale FID embedding."""
    feats = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            taps = backbone(images[start:start + batch_size])
            pooled = taps[-2].mean(dim=(2, 3))
            feats.append(pooled.cpu().numpy())
    return np.concatenate(feats, axis=0).astype(np.float64)


def lpips_distance_eval(inputs: torch.Tensor, outputs: torch.Tensor,
                        backbone, weights: PerceptualWeights) -> float:
    """Mean perceptual distance over paired inputs/outputs (lower = closer)."""
    if inputs.shape[0] != outputs.shape[0]:
        raise InvalidArgumentError(
            f"paired sets must have equal counts, got {inputs.shape[0]} vs {outputs.shape[0]}")
    with torch.no_grad():
        per_pair = lpips(inputs, outputs, backbone, weights)
    return float(per_pair.mean())


def cluster_assignments(generated: torch.Tensor, training: torch.Tensor,
                        backbone, weights: PerceptualWeights) -> np.ndarray:
    """Index of the nearest training image per generated image (ties -> lowest index)."""
    with torch.no_grad():
        dists = pairwise_lpips(generated, training, backbone, weights).cpu().numpy()
    return np.argmin(dists, axis=1)


def lpips_cluster(generated: torch.Tensor, training: torch.Tensor,
                  backbone, weights: PerceptualWeights) -> tuple[float, float]:
    """Mean/std over clusters of the intra-cluster mean pairwise distance.

    Generated images are partitioned by nearest training exemplar; clusters
    with fewer than two members contribute no pairs. Higher means indicate
    less overfitting to the training set. The std is across clusters.
    """
    if training.shape[0] < 1:
        raise InvalidArgumentError("need at least one training image")
    if generated.shape[0] < 1:
        raise InvalidArgumentError("need at least one generated image")
    assign = cluster_assignments(generated, training, backbone, weights)
    with torch.no_grad():
        gg = pairwise_lpips(generated, generated, backbone, weights).cpu().numpy()
    cluster_means = []
    for k in range(training.shape[0]):
        members = np.flatnonzero(assign == k)
        if members.size < 2:
            continue
        pair_vals = [gg[i, j] for ii, i in enumerate(members) for j in members[ii + 1:]]
        cluster_means.append(float(np.mean(pair_vals)))
    if not cluster_means:
        raise UndefinedMetricError(
            "no cluster has >= 2 members; intra-cluster distance is undefined")
    return float(np.mean(cluster_means)), float(np.std(cluster_means))


@dataclass
class LatentDiagnostic:
    """2-D embedding of latent stacks plus per-label moment statistics."""

    embedding: np.ndarray          # (N, 2)
    labels: list[str]
    moments: dict                  # label -> {"mean_norm", "cov_identity_distance", "count"}

    def rows(self):
        for (x, y), label in zip(self.embedding, self.labels):
            yield float(x), float(y), label

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("x,y,label\n")
            for x, y, label in self.rows():
                f.write(f"{x},{y},{label}\n")


def latent_moments(codes_rows: np.ndarray) -> dict:
    """Row-pooled first/second moment summary of a latent population.

    mean_norm is the euclidean norm of the per-coordinate mean; the second
    statistic is the Frobenius distance of the (unbiased) covariance from
    identity. Both are zero in expectation for standard-normal rows.
    """
    mean = codes_rows.mean(axis=0)
    cov = np.atleast_2d(np.cov(codes_rows, rowvar=False))
    eye = np.eye(cov.shape[0])
    return {
        "mean_norm": float(np.linalg.norm(mean)),
        "cov_identity_distance": float(np.linalg.norm(cov - eye, ord="fro")),
        "count": int(codes_rows.shape[0]),
    }


def latent_diagnostic_export(codes, labels, seed: int = 0) -> LatentDiagnostic:
    """Neighbor-embed flattened codes to 2-D and summarize per-label moments."""
    if len(codes) != len(labels):
        raise InvalidArgumentError("need one label per code")
    unique = sorted(set(labels))
    if len(unique) < 2:
        raise InvalidArgumentError(f"need >= 2 labels, got {len(unique)}")
    counts = {u: labels.count(u) for u in unique}
    for u, c in counts.items():
        if c < 10:
            raise InvalidArgumentError(f"label {u!r} has {c} codes, need >= 10")

    stacks = [c.rows if isinstance(c, ExtendedLatent) else torch.as_tensor(c) for c in codes]
    flat = np.stack([s.detach().cpu().numpy().reshape(-1) for s in stacks])

    from sklearn.manifold import TSNE

    n = flat.shape[0]
    perplexity = min(30.0, (n - 1) / 3.0)
    embedding = TSNE(n_components=2, perplexity=perplexity, init="pca",
                     random_state=seed).fit_transform(flat)

    moments = {}
    for u in unique:
        rows = np.concatenate([stacks[i].detach().cpu().numpy()
                               for i in range(n) if labels[i] == u], axis=0)
        moments[u] = latent_moments(rows.astype(np.float64))
    return LatentDiagnostic(embedding=np.asarray(embedding, dtype=np.float64),
                            labels=list(labels), moments=moments)
