"""关节角的高斯混合模型，EM 拟合"""
from dataclasses import dataclass, field
from typing import List
import logging

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal
from sklearn.cluster import kmeans_plusplus

from ..core.errors import DimensionMismatch, NonMonotoneLikelihood, TooFewSamples

logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 1e-6
TOLERANCE = 1e-8
MAX_ITER = 500
SAMPLES_PER_COMPONENT = 10
# 相对下降超过该量视为 EM 出错
MONOTONE_SLACK = 1e-9


@dataclass(eq=False)
class GaussianMixture:
    """weights (n,), means (n,d), covariances (n,d,d)"""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: List[float] = field(default_factory=list)
    converged: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        n, d = self.means.shape
        if self.weights.shape != (n,) or self.covariances.shape != (n, d, d):
            raise DimensionMismatch(
                f"GMM 参数形状不一致: weights {self.weights.shape}, means {self.means.shape}, "
                f"covariances {self.covariances.shape}")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_pdf(self, X: np.ndarray) -> np.ndarray:
        """(n_samples, n_components) 的 log α_i + log φ(x|Θ_i)"""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.weights)
        return np.stack([
            # 单个样本时 logpdf 返回标量
            log_weights[i] + np.atleast_1d(multivariate_normal.logpdf(X, self.means[i], self.covariances[i]))
            for i in range(self.n_components)
        ], axis=1)

    def score_samples(self, X: np.ndarray) -> np.ndarray:
        """逐样本 log p(x)"""
        return logsumexp(self.component_log_pdf(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        return cls(weights=data["weights"], means=data["means"], covariances=data["covariances"])


def _floor_covariance(cov: np.ndarray) -> np.ndarray:
    """对称化并把特征值截断到 COVARIANCE_FLOOR 以上"""
    cov = 0.5 * (cov + cov.T)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    if eigenvalues.min() >= COVARIANCE_FLOOR:
        return cov
    eigenvalues = np.maximum(eigenvalues, COVARIANCE_FLOOR)
    return (eigenvectors * eigenvalues) @ eigenvectors.T


def _m_step(X: np.ndarray, resp: np.ndarray) -> GaussianMixture:
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    means = resp.T @ X / nk[:, None]
    covariances = []
    for i in range(resp.shape[1]):
        diff = X - means[i]
        covariances.append(_floor_covariance((resp[:, i, None] * diff).T @ diff / nk[i]))
    return GaussianMixture(weights=nk / nk.sum(), means=means, covariances=np.array(covariances))


def fit_gmm(samples: np.ndarray, n_components: int, seed: int = 0,
            tol: float = TOLERANCE, max_iter: int = MAX_ITER) -> GaussianMixture:
    """EM 拟合 GMM

    k-means++ 选初始中心，按最近中心硬分配得到初始参数。
    平均对数似然变化小于 tol 或达到 max_iter 时停止。
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"样本必须是二维数组: {X.shape}")
    if n_components < 1 or len(X) < SAMPLES_PER_COMPONENT * n_components:
        raise TooFewSamples(
            f"{n_components} 个分量至少需要 {SAMPLES_PER_COMPONENT * n_components} 个样本, 实际 {len(X)}")

    centers, _ = kmeans_plusplus(X, n_clusters=n_components, random_state=seed)
    labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((len(X), n_components))
    resp[np.arange(len(X)), labels] = 1.0
    model = _m_step(X, resp)

    history: List[float] = []
    converged = False
    for iteration in range(max_iter):
        log_prob = model.component_log_pdf(X)
        log_norm = logsumexp(log_prob, axis=1)
        ll = float(log_norm.mean())
        if history and ll < history[-1] - MONOTONE_SLACK * max(1.0, abs(history[-1])):
            raise NonMonotoneLikelihood(f"EM 第 {iteration} 次迭代对数似然下降: {history[-1]:.10f} -> {ll:.10f}")
        history.append(ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break
        model = _m_step(X, np.exp(log_prob - log_norm[:, None]))

    if not converged:
        logger.warning(f"EM 在 {max_iter} 次迭代内未收敛")
    model.log_likelihood = history
    model.converged = converged
    logger.debug(f"GMM 拟合完成: {n_components} 个分量, {len(history)} 次迭代, 平均对数似然 {history[-1]:.6f}")
    return model


def gmm_density(model: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Σ α_i φ(x|μ_i,Σ_i)；单个向量返回标量"""
    x = np.asarray(x, dtype=float)
    density = np.exp(model.score_samples(x))
    return float(density[0]) if x.ndim == 1 else density
