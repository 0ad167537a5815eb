"""Objective models: g, its gradient and Hessian, per-datum gradients and the
gradient-noise covariance, for the worked examples used throughout the lab.

All evaluation methods broadcast over leading axes, so ``theta`` may be a
single parameter vector of shape ``(p,)`` or an ensemble of shape ``(R, p)``.
Data records are plain arrays whose last axis is the payload of one datum.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .errors import ParameterDomainError, ShapeError, UnidentifiableStructureError


def _psd_sqrt(mat):
    """Symmetric square root of a (stack of) PSD matrices."""
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def _check_psd(mat, name, tol=1e-12):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParameterDomainError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=tol):
        raise ParameterDomainError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() < -tol * max(1.0, np.abs(mat).max()):
        raise ParameterDomainError(f"{name} must be positive semi-definite")
    return mat


class ObjectiveModel:
    """Interface shared by every optimization problem.

    Subclasses implement ``value``, ``grad``, ``hessian``, ``noise_cov``,
    ``sample`` and ``datum_grad``. ``noise_sqrt`` defaults to the symmetric
    square root of ``noise_cov``; constant-noise models override it.
    """

    name = "model"
    dim: int
    payload_dim: int
    minimizer: np.ndarray | None = None

    def params(self) -> dict:
        return {}

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 0 or theta.shape[-1] != self.dim:
            raise ShapeError(
                f"{self.name}: expected parameter with last axis {self.dim}, got shape {theta.shape}"
            )
        return theta

    def check_data(self, data):
        data = np.asarray(data, dtype=float)
        if data.ndim == 0 or data.shape[-1] != self.payload_dim:
            raise ShapeError(
                f"{self.name}: expected data with last axis {self.payload_dim}, got shape {data.shape}"
            )
        return data

    def value(self, theta):
        raise NotImplementedError

    def grad(self, theta):
        raise NotImplementedError

    def hessian(self, theta):
        raise NotImplementedError

    def noise_cov(self, theta):
        raise NotImplementedError

    def noise_sqrt(self, theta):
        return _psd_sqrt(self.noise_cov(theta))

    def sample(self, rng, size):
        """Draw ``size`` i.i.d. data from Q; returns shape ``size + (payload_dim,)``."""
        raise NotImplementedError

    def datum_grad(self, theta, data):
        raise NotImplementedError

    def affine_stats(self, data):
        """Return ``(A, b)`` with mean datum gradient ``A @ theta - b``, or None.

        ``data`` has shape ``(..., n, q)``; the reduction is over axis -2.
        Models whose per-datum gradient is affine in theta implement this so
        that full-data gradients can be evaluated in O(p^2) per step.
        """
        return None

    def post_step(self, x):
        """Hook applied to every iterate after an update (identity by default)."""
        return x

    def sample_dataset(self, rng, n):
        return self.sample(rng, n)


class QuadraticMean(ObjectiveModel):
    """Mean estimation with a squared loss.

    U = (U1, U2) with U1 ~ Normal(m1, tau^2) and U2 ~ Exponential(mean m2),
    independent; loss (U - theta)'(U - theta)/2.
    """

    name = "quadratic_mean"
    dim = 2
    payload_dim = 2

    def __init__(self, theta_check, tau):
        theta_check = np.asarray(theta_check, dtype=float)
        if theta_check.shape != (2,):
            raise ShapeError("quadratic_mean needs a length-2 minimizer")
        if not tau > 0:
            raise ParameterDomainError(f"tau must be positive, got {tau}")
        if not theta_check[1] > 0:
            raise ParameterDomainError(
                f"second coordinate is an exponential mean and must be positive, got {theta_check[1]}"
            )
        self.theta_check = theta_check
        self.tau = float(tau)
        self.minimizer = theta_check.copy()
        self._sig = np.array([self.tau, theta_check[1]])

    def params(self):
        return {"theta_check": self.theta_check.tolist(), "tau": self.tau}

    def value(self, theta):
        theta = self.check_theta(theta)
        d = theta - self.theta_check
        return 0.5 * (np.sum(d * d, axis=-1) + self.tau**2 + self.theta_check[1] ** 2)

    def grad(self, theta):
        return self.check_theta(theta) - self.theta_check

    def hessian(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(np.eye(2), theta.shape[:-1] + (2, 2)).copy()

    def noise_cov(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(np.diag(self._sig**2), theta.shape[:-1] + (2, 2)).copy()

    def noise_sqrt(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(np.diag(self._sig), theta.shape[:-1] + (2, 2)).copy()

    def sample(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        u1 = self.theta_check[0] + self.tau * rng.standard_normal(size)
        # inverse CDF keeps the stream layout platform independent
        u2 = -self.theta_check[1] * np.log1p(-rng.random(size))
        return np.stack([u1, u2], axis=-1)

    def datum_grad(self, theta, data):
        return self.check_theta(theta) - self.check_data(data)

    def affine_stats(self, data):
        data = self.check_data(data)
        b = data.mean(axis=-2)
        A = np.broadcast_to(np.eye(2), b.shape[:-1] + (2, 2)).copy()
        return A, b


class LinearRegressionRandom(ObjectiveModel):
    """Linear regression U1 = U2' theta + eps with Gaussian design U2 ~ N(0, alpha).

    Payload layout: ``(U1, U2_1, ..., U2_p)``.
    """

    name = "linreg_random"

    def __init__(self, alpha, tau, theta_check):
        alpha = _check_psd(alpha, "alpha")
        if not tau > 0:
            raise ParameterDomainError(f"tau must be positive, got {tau}")
        theta_check = np.asarray(theta_check, dtype=float)
        if theta_check.shape != (alpha.shape[0],):
            raise ShapeError("theta_check and alpha dimensions differ")
        self.alpha = alpha
        self.tau = float(tau)
        self.theta_check = theta_check
        self.minimizer = theta_check.copy()
        self.dim = alpha.shape[0]
        self.payload_dim = self.dim + 1
        self._design_sqrt = _psd_sqrt(alpha)

    def params(self):
        return {"alpha": self.alpha.tolist(), "tau": self.tau, "theta_check": self.theta_check.tolist()}

    def value(self, theta):
        d = self.check_theta(theta) - self.theta_check
        return 0.5 * self.tau**2 + 0.5 * np.einsum("...i,ij,...j->...", d, self.alpha, d)

    def grad(self, theta):
        d = self.check_theta(theta) - self.theta_check
        return d @ self.alpha.T

    def hessian(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(self.alpha, theta.shape[:-1] + self.alpha.shape).copy()

    def noise_cov(self, theta):
        # Gaussian fourth moments: E[(U2'b)^2 U2 U2'] = (b'ab) a + 2 a b b' a
        d = self.check_theta(theta) - self.theta_check
        ad = d @ self.alpha.T
        quad = np.einsum("...i,...i->...", d, ad)
        outer = ad[..., :, None] * ad[..., None, :]
        return quad[..., None, None] * self.alpha + outer + self.tau**2 * self.alpha

    def sample(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        z = rng.standard_normal(size + (self.dim,))
        u2 = z @ self._design_sqrt.T
        eps = self.tau * rng.standard_normal(size)
        u1 = u2 @ self.theta_check + eps
        return np.concatenate([u1[..., None], u2], axis=-1)

    def datum_grad(self, theta, data):
        theta = self.check_theta(theta)
        data = self.check_data(data)
        u1, u2 = data[..., 0], data[..., 1:]
        resid = np.einsum("...i,...i->...", u2, theta) - u1
        return u2 * resid[..., None]

    def affine_stats(self, data):
        data = self.check_data(data)
        u1, u2 = data[..., 0], data[..., 1:]
        n = data.shape[-2]
        A = np.einsum("...ni,...nj->...ij", u2, u2) / n
        b = np.einsum("...ni,...n->...i", u2, u1) / n
        return A, b


def _orthogonal_design(n, p):
    """n x p design with U2'U2/n = I.

    Uses block-repeated Sylvester-Hadamard columns; when n is not a multiple of
    the Hadamard order the columns are re-orthonormalized by QR.
    """
    order = 1
    while order < p:
        order *= 2
    had = np.ones((1, 1))
    while had.shape[0] < order:
        had = np.block([[had, had], [had, -had]])
    cols = had[:, :p]
    reps = -(-n // order)
    design = np.tile(cols, (reps, 1))[:n]
    if n % order:
        q, r = np.linalg.qr(design)
        q = q * np.sign(np.diag(r))
        design = np.sqrt(n) * q
    return design


class LinearRegressionFixed(ObjectiveModel):
    """Fixed orthogonal-design regression; a dataset is the full design with fresh noise."""

    name = "linreg_fixed"

    def __init__(self, theta_check, tau, n):
        theta_check = np.asarray(theta_check, dtype=float)
        if theta_check.ndim != 1:
            raise ShapeError("theta_check must be a vector")
        if not tau > 0:
            raise ParameterDomainError(f"tau must be positive, got {tau}")
        p = theta_check.shape[0]
        if int(n) < p:
            raise ParameterDomainError(f"orthogonal design needs n >= p, got n={n}, p={p}")
        self.theta_check = theta_check
        self.tau = float(tau)
        self.n = int(n)
        self.dim = p
        self.payload_dim = p + 1
        self.minimizer = theta_check.copy()
        self.design = _orthogonal_design(self.n, p)

    def params(self):
        return {"theta_check": self.theta_check.tolist(), "tau": self.tau, "n": self.n}

    def value(self, theta):
        d = self.check_theta(theta) - self.theta_check
        return 0.5 * (np.sum(d * d, axis=-1) + self.tau**2)

    def grad(self, theta):
        return self.check_theta(theta) - self.theta_check

    def hessian(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(np.eye(self.dim), theta.shape[:-1] + (self.dim, self.dim)).copy()

    def noise_cov(self, theta):
        # covariance of sqrt(n) * full-data gradient: tau^2 U2'U2/n
        theta = self.check_theta(theta)
        return np.broadcast_to(self.tau**2 * np.eye(self.dim), theta.shape[:-1] + (self.dim,) * 2).copy()

    def noise_sqrt(self, theta):
        theta = self.check_theta(theta)
        return np.broadcast_to(self.tau * np.eye(self.dim), theta.shape[:-1] + (self.dim,) * 2).copy()

    def _rows(self, u2, rng, size):
        eps = self.tau * rng.standard_normal(size)
        u1 = u2 @ self.theta_check + eps
        return np.concatenate([u1[..., None], u2], axis=-1)

    def sample(self, rng, size):
        """Population draws: a uniformly chosen design row with fresh noise."""
        size = (size,) if np.isscalar(size) else tuple(size)
        rows = rng.integers(0, self.n, size=size)
        return self._rows(self.design[rows], rng, size)

    def sample_dataset(self, rng, n):
        if n != self.n:
            raise ParameterDomainError(f"fixed design has n={self.n}; cannot build a dataset of size {n}")
        return self._rows(self.design, rng, (n,))

    def datum_grad(self, theta, data):
        theta = self.check_theta(theta)
        data = self.check_data(data)
        u1, u2 = data[..., 0], data[..., 1:]
        resid = np.einsum("...i,...i->...", u2, theta) - u1
        return u2 * resid[..., None]

    def affine_stats(self, data):
        data = self.check_data(data)
        u1, u2 = data[..., 0], data[..., 1:]
        n = data.shape[-2]
        A = np.einsum("...ni,...nj->...ij", u2, u2) / n
        b = np.einsum("...ni,...n->...i", u2, u1) / n
        return A, b


W_DISTRIBUTIONS = ("uniform_sym", "rademacher", "gaussian")


def w_moments(w_dist: str, kmax: int = 10) -> np.ndarray:
    """Raw moments psi_0..psi_kmax of one component of W."""
    psi = np.zeros(kmax + 1)
    for k in range(0, kmax + 1, 2):
        if w_dist == "uniform_sym":
            psi[k] = 3.0 ** (k // 2) / (k + 1)
        elif w_dist == "rademacher":
            psi[k] = 1.0
        elif w_dist == "gaussian":
            psi[k] = float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0
        else:
            raise ParameterDomainError(f"unknown W distribution {w_dist!r}; choose from {W_DISTRIBUTIONS}")
    return psi


class Tensor4D2(ObjectiveModel):
    """Orthogonal 4th-order tensor decomposition in d=2, transformed coordinates.

    The descent field is the tangent gradient -4 x (x^2 - ||x||_4^4) of the
    objective -sum x_i^4 on the unit circle, and iterates are renormalized after
    every step. The per-datum gradient is the descent field plus the centred
    fluctuation -4[(x'W)^3 W - E(x'W)^3 W], so its covariance is exactly
    16 Cov((x'W)^3 W), evaluated from the moments of W.
    """

    name = "tensor4_d2"
    dim = 2
    payload_dim = 2

    def __init__(self, w_dist="uniform_sym"):
        psi = w_moments(w_dist)
        if abs(psi[4] - 3.0) < 1e-12:
            raise UnidentifiableStructureError("unidentifiable tensor structure for psi_4=3")
        self.w_dist = w_dist
        self.psi = psi
        self.critical_points = {
            "saddle": np.array([1.0, 0.0]),
            "local_min": np.array([1.0, -1.0]) / np.sqrt(2.0),
        }

    def params(self):
        return {"w_dist": self.w_dist}

    def value(self, theta):
        x = self.check_theta(theta)
        return -np.sum(x**4, axis=-1)

    def grad(self, theta):
        x = self.check_theta(theta)
        n4 = np.sum(x**4, axis=-1, keepdims=True)
        return -4.0 * x * (x * x - n4)

    def hessian(self, theta):
        x = self.check_theta(theta)
        n4 = np.sum(x**4, axis=-1)
        eye = np.eye(2)
        diag = x[..., :, None] ** 2 * eye
        return -12.0 * diag + 4.0 * n4[..., None, None] * eye

    def mixed_moment(self, x, a, b, c):
        """E[(x1 W1 + x2 W2)^a W1^b W2^c] by binomial expansion."""
        x1, x2 = x[..., 0], x[..., 1]
        psi = self.psi
        out = np.zeros(np.shape(x1))
        for ell in range(a + 1):
            coef = comb(a, ell) * psi[ell + b] * psi[a - ell + c]
            if coef:
                out = out + coef * x1**ell * x2 ** (a - ell)
        return out

    def cubic_mean(self, theta):
        x = self.check_theta(theta)
        return np.stack([self.mixed_moment(x, 3, 1, 0), self.mixed_moment(x, 3, 0, 1)], axis=-1)

    def noise_cov(self, theta):
        x = self.check_theta(theta)
        e11 = self.mixed_moment(x, 6, 2, 0)
        e12 = self.mixed_moment(x, 6, 1, 1)
        e22 = self.mixed_moment(x, 6, 0, 2)
        second = np.stack([np.stack([e11, e12], -1), np.stack([e12, e22], -1)], -2)
        m = self.cubic_mean(x)
        return 16.0 * (second - m[..., :, None] * m[..., None, :])

    def sample(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        if self.w_dist == "uniform_sym":
            a = np.sqrt(3.0)
            return rng.uniform(-a, a, size + (2,))
        return np.where(rng.random(size + (2,)) < 0.5, -1.0, 1.0)

    def datum_grad(self, theta, data):
        x = self.check_theta(theta)
        w = self.check_data(data)
        proj = np.einsum("...i,...i->...", x, w)
        cubic = proj[..., None] ** 3 * w
        return self.grad(x) - 4.0 * (cubic - self.cubic_mean(x))

    def post_step(self, x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)


class LinearGaussian(ObjectiveModel):
    """g(theta) = theta' H theta / 2 with additive gradient noise S Z, Z ~ N(0, I).

    H need not be definite, which makes this the linearization of any model
    around a critical point.
    """

    name = "linear_gaussian"

    def __init__(self, H, S):
        H = np.asarray(H, dtype=float)
        S = np.asarray(S, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or not np.allclose(H, H.T):
            raise ParameterDomainError("H must be a symmetric square matrix")
        if S.shape != H.shape:
            raise ShapeError("S must match H")
        self.H = H
        self.S = S
        self.dim = H.shape[0]
        self.payload_dim = self.dim
        if np.linalg.eigvalsh(H).min() > 0:
            self.minimizer = np.zeros(self.dim)

    def params(self):
        return {"H": self.H.tolist(), "S": self.S.tolist()}

    def value(self, theta):
        x = self.check_theta(theta)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.H, x)

    def grad(self, theta):
        return self.check_theta(theta) @ self.H.T

    def hessian(self, theta):
        x = self.check_theta(theta)
        return np.broadcast_to(self.H, x.shape[:-1] + self.H.shape).copy()

    def noise_cov(self, theta):
        x = self.check_theta(theta)
        return np.broadcast_to(self.S @ self.S.T, x.shape[:-1] + self.H.shape).copy()

    def noise_sqrt(self, theta):
        x = self.check_theta(theta)
        return np.broadcast_to(self.S, x.shape[:-1] + self.H.shape).copy()

    def sample(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (self.dim,))

    def datum_grad(self, theta, data):
        return self.grad(theta) + self.check_data(data) @ self.S.T

    def affine_stats(self, data):
        data = self.check_data(data)
        b = -data.mean(axis=-2) @ self.S.T
        A = np.broadcast_to(self.H, b.shape[:-1] + self.H.shape).copy()
        return A, b


class ScalarPotential(ObjectiveModel):
    """One-dimensional g(theta) = a theta^2/2 + b theta^4/4 with constant gradient noise."""

    name = "scalar_potential"
    dim = 1
    payload_dim = 1

    def __init__(self, curvature=1.0, quartic=0.0, sigma=1.0):
        if not curvature > 0 or quartic < 0 or not sigma > 0:
            raise ParameterDomainError("need curvature > 0, quartic >= 0, sigma > 0")
        self.a = float(curvature)
        self.b = float(quartic)
        self.sigma = float(sigma)
        self.minimizer = np.zeros(1)

    def params(self):
        return {"curvature": self.a, "quartic": self.b, "sigma": self.sigma}

    def value(self, theta):
        x = self.check_theta(theta)[..., 0]
        return 0.5 * self.a * x**2 + 0.25 * self.b * x**4

    def grad(self, theta):
        x = self.check_theta(theta)
        return self.a * x + self.b * x**3

    def hessian(self, theta):
        x = self.check_theta(theta)
        return (self.a + 3.0 * self.b * x**2)[..., None]

    def noise_cov(self, theta):
        x = self.check_theta(theta)
        return np.full(x.shape[:-1] + (1, 1), self.sigma**2)

    def noise_sqrt(self, theta):
        x = self.check_theta(theta)
        return np.full(x.shape[:-1] + (1, 1), self.sigma)

    def sample(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (1,))

    def datum_grad(self, theta, data):
        return self.grad(theta) + self.sigma * self.check_data(data)


def make_quadratic_mean(theta_check, tau) -> QuadraticMean:
    return QuadraticMean(theta_check, tau)


def make_linreg_random(alpha, tau, theta_check) -> LinearRegressionRandom:
    return LinearRegressionRandom(alpha, tau, theta_check)


def make_linreg_fixed(theta_check, tau, n) -> LinearRegressionFixed:
    return LinearRegressionFixed(theta_check, tau, n)


def make_tensor4_d2(w_dist="uniform_sym") -> Tensor4D2:
    return Tensor4D2(w_dist)


def make_linear_gaussian(H, S) -> LinearGaussian:
    return LinearGaussian(H, S)


def make_scalar_potential(curvature=1.0, quartic=0.0, sigma=1.0) -> ScalarPotential:
    return ScalarPotential(curvature, quartic, sigma)


def eval_value(model, theta):
    return model.value(model.check_theta(theta))


def eval_grad(model, theta):
    return model.grad(model.check_theta(theta))


def eval_hessian(model, theta):
    return model.hessian(model.check_theta(theta))


def eval_noise_cov(model, theta):
    return model.noise_cov(model.check_theta(theta))
