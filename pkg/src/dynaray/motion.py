"""Motion models and the curve geometry they induce.

A motion model maps a point ``x`` observed at time (= source angle) ``phi``
to the position ``Gamma(phi, x)`` the same particle had at ``phi = 0``.  The
data at ``(phi, s)`` integrate the reference object over the curve

    C(phi, s) = {x : H(phi, x) = s} = Gamma_phi(l(phi, s)),
    H(phi, x) = Gamma_phi^{-1}(x) . theta(phi).

Models may ship analytic ``H`` and derivatives; anything missing falls back
to central differences with steps ``1e-4 * length_scale`` in ``x`` and
``1e-4`` rad in ``phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .core import TWO_PI, theta, theta_perp

H_PHI = 1e-4
H_X_REL = 1e-4
DEFAULT_EPSILON = 0.1

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MotionModel:
    """A motion model ``Gamma``.

    ``forward``/``inverse``/``jacobian`` take ``(phi, x)`` with ``x`` of shape
    ``(..., 2)`` and ``phi`` broadcastable against ``x[..., 0]``.  ``jacobian``
    returns ``D Gamma_phi(x)`` with shape ``(..., 2, 2)``.
    """

    name: str
    forward: Field
    inverse: Field
    jacobian: Field
    periodic: bool
    epsilon: float = DEFAULT_EPSILON
    H: Field | None = None
    grad_H: Field | None = None
    dphi_H: Field | None = None
    grad_dphi_H: Field | None = None
    det_inverse: Field | None = None
    length_scale: float = 1.0
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def jacobian_det(self, phi, x) -> np.ndarray:
        """``|det D Gamma_phi(x)|``."""
        return np.abs(np.linalg.det(self.jacobian(phi, np.asarray(x, dtype=np.float64))))

    def jacobian_det_inverse(self, phi, x) -> np.ndarray:
        """``|det D(Gamma_phi^{-1})(x)|``, the weight of the intensity model."""
        x = np.asarray(x, dtype=np.float64)
        if self.det_inverse is not None:
            return self.det_inverse(phi, x)
        return 1.0 / self.jacobian_det(phi, self.inverse(phi, x))


def check_phi(model: MotionModel, phi) -> None:
    if model.periodic:
        return
    p = np.asarray(phi, dtype=np.float64)
    if np.any(p <= -model.epsilon) or np.any(p >= TWO_PI + model.epsilon):
        raise ValueError(
            f"phi outside the extension interval (-{model.epsilon}, 2pi+{model.epsilon}) of model {model.name!r}"
        )


def _H_raw(model: MotionModel, phi, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if model.H is not None:
        return model.H(phi, x)
    y = model.inverse(phi, x)
    return np.sum(y * theta(phi), axis=-1)


def eval_H(model: MotionModel, phi, x) -> np.ndarray:
    """``H(phi, x) = Gamma_phi^{-1}(x) . theta(phi)``."""
    check_phi(model, phi)
    return _H_raw(model, phi, x)


def _fd_grad_x(fun, phi, x, h):
    x = np.asarray(x, dtype=np.float64)
    e0 = np.array([h, 0.0])
    e1 = np.array([0.0, h])
    d0 = (fun(phi, x + e0) - fun(phi, x - e0)) / (2 * h)
    d1 = (fun(phi, x + e1) - fun(phi, x - e1)) / (2 * h)
    return np.stack([d0, d1], axis=-1)


def _fd_dphi(fun, phi, x, h):
    phi = np.asarray(phi, dtype=np.float64)
    return (fun(phi + h, x) - fun(phi - h, x)) / (2 * h)


def _dphi_H_raw(model, phi, x):
    if model.dphi_H is not None:
        return model.dphi_H(phi, np.asarray(x, dtype=np.float64))
    return _fd_dphi(lambda p, y: _H_raw(model, p, y), phi, x, H_PHI)


def _grad_H_raw(model, phi, x):
    if model.grad_H is not None:
        return model.grad_H(phi, np.asarray(x, dtype=np.float64))
    return _fd_grad_x(lambda p, y: _H_raw(model, p, y), phi, x, H_X_REL * model.length_scale)


def eval_N(model: MotionModel, phi, x) -> np.ndarray:
    """``N(phi, x) = D_x H(phi, x)``, conormal to ``C(phi, H(phi, x))`` at ``x``."""
    check_phi(model, phi)
    return _grad_H_raw(model, phi, x)


def eval_dphi_H(model: MotionModel, phi, x) -> np.ndarray:
    check_phi(model, phi)
    return _dphi_H_raw(model, phi, x)


def eval_grad_dphi_H(model: MotionModel, phi, x) -> np.ndarray:
    """``D_x D_phi H(phi, x)``, the second row of the immersion matrix."""
    check_phi(model, phi)
    x = np.asarray(x, dtype=np.float64)
    if model.grad_dphi_H is not None:
        return model.grad_dphi_H(phi, x)
    if model.grad_H is not None:
        p = np.asarray(phi, dtype=np.float64)
        return (model.grad_H(p + H_PHI, x) - model.grad_H(p - H_PHI, x)) / (2 * H_PHI)
    if model.dphi_H is not None:
        return _fd_grad_x(model.dphi_H, phi, x, H_X_REL * model.length_scale)
    # mixed central difference on H
    h = H_PHI
    k = H_X_REL * model.length_scale
    phi = np.asarray(phi, dtype=np.float64)
    out = []
    for e in (np.array([k, 0.0]), np.array([0.0, k])):
        out.append((_H_raw(model, phi + h, x + e) - _H_raw(model, phi + h, x - e)
                    - _H_raw(model, phi - h, x + e) + _H_raw(model, phi - h, x - e)) / (4 * h * k))
    return np.stack(out, axis=-1)


def curve_tangent(model: MotionModel, phi, x) -> np.ndarray:
    """Unit tangent of ``C(phi, H(phi, x))`` at ``x`` from the motion Jacobian.

    ``C(phi, s)`` is the image of the line ``l(phi, s)`` under ``Gamma_phi``,
    so its tangent at ``x`` is ``D Gamma_phi(Gamma_phi^{-1} x) theta_perp(phi)``.
    """
    check_phi(model, phi)
    x = np.asarray(x, dtype=np.float64)
    J = model.jacobian(phi, model.inverse(phi, x))
    tp = np.broadcast_to(theta_perp(phi), J.shape[:-1])
    t = np.einsum("...ij,...j->...i", J, tp)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def integration_curve(model: MotionModel, phi: float, s: float, param_range=(-1.0, 1.0), n_points: int = 256) -> np.ndarray:
    """Points of ``C(phi, s)``: ``Gamma_phi(s theta(phi) + t theta_perp(phi))`` for uniform ``t``.

    These satisfy ``H(phi, x) = s`` because ``H`` pulls ``x`` back by ``Gamma_phi^{-1}``.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    check_phi(model, phi)
    t = np.linspace(param_range[0], param_range[1], n_points)
    line = s * theta(phi)[None, :] + t[:, None] * theta_perp(phi)[None, :]
    return model.forward(phi, line)


# ---------------------------------------------------------------------------
# hypothesis check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisReport:
    model: str
    identity_violation: float
    inverse_violation: float
    jacobian_min: float
    periodicity_violation: float
    periodic_flag: bool
    periodic_consistent: bool
    identity_tol: float
    inverse_tol: float
    periodic_tol: float

    @property
    def passed(self) -> bool:
        return (self.identity_violation <= self.identity_tol
                and self.inverse_violation <= self.inverse_tol
                and self.jacobian_min > 0.0
                and self.periodic_consistent)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["passed"] = self.passed
        return d


def check_hypothesis(model: MotionModel, phis=None, points=None, *, identity_tol=1e-12,
                     inverse_tol=1e-9, periodic_tol=1e-9) -> HypothesisReport:
    """Sampled check of the motion-model requirements; violations are reported, never raised."""
    if phis is None:
        phis = np.linspace(-0.9 * model.epsilon, TWO_PI + 0.9 * model.epsilon, 64)
    if points is None:
        g = np.linspace(-model.length_scale, model.length_scale, 17)
        X, Y = np.meshgrid(g, g)
        points = np.stack([X.ravel(), Y.ravel()], axis=-1)
    phis = np.asarray(phis, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)

    ident = float(np.max(np.linalg.norm(model.forward(0.0, pts) - pts, axis=-1)))
    inv_v = 0.0
    jac_min = math.inf
    per_v = 0.0
    for p in phis:
        inv_v = max(inv_v, float(np.max(np.linalg.norm(model.inverse(p, model.forward(p, pts)) - pts, axis=-1))))
        jac_min = min(jac_min, float(np.min(np.linalg.det(model.jacobian(p, pts)))))
        per_v = max(per_v, float(np.max(np.linalg.norm(model.forward(p + TWO_PI, pts) - model.forward(p, pts), axis=-1))))
    consistent = (per_v <= periodic_tol) if model.periodic else True
    return HypothesisReport(model.name, ident, inv_v, jac_min, per_v, model.periodic, consistent,
                            identity_tol, inverse_tol, periodic_tol)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


def _rot(beta, x):
    c, s = np.cos(beta), np.sin(beta)
    return np.stack([c * x[..., 0] - s * x[..., 1], s * x[..., 0] + c * x[..., 1]], axis=-1)


def _rot_matrix(beta, shape):
    beta = np.asarray(beta, dtype=np.float64)
    beta = np.broadcast_to(beta, np.broadcast_shapes(beta.shape, shape))
    c, s = np.cos(beta), np.sin(beta)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def _bcast_vec(v, x):
    return np.broadcast_to(v, np.broadcast_shapes(v.shape, x.shape)).copy()


def rotation_model(name: str, rate: float, periodic: bool, epsilon: float = DEFAULT_EPSILON) -> MotionModel:
    """``Gamma_phi`` = rotation by ``rate * phi``; then ``H(phi, x) = x . theta((1 + rate) phi)``."""
    k = 1.0 + rate

    def fwd(phi, x):
        return _rot(rate * np.asarray(phi, dtype=np.float64), x)

    def inv(phi, x):
        return _rot(-rate * np.asarray(phi, dtype=np.float64), x)

    def jac(phi, x):
        return _rot_matrix(rate * np.asarray(phi, dtype=np.float64), x.shape[:-1])

    def H(phi, x):
        a = k * np.asarray(phi, dtype=np.float64)
        return x[..., 0] * np.cos(a) + x[..., 1] * np.sin(a)

    def grad_H(phi, x):
        return _bcast_vec(theta(k * np.asarray(phi, dtype=np.float64)), x)

    def dphi_H(phi, x):
        a = k * np.asarray(phi, dtype=np.float64)
        return k * (-x[..., 0] * np.sin(a) + x[..., 1] * np.cos(a))

    def grad_dphi_H(phi, x):
        return _bcast_vec(k * theta_perp(k * np.asarray(phi, dtype=np.float64)), x)

    def det_inv(phi, x):
        return np.ones(np.broadcast_shapes(np.shape(phi), x.shape[:-1]))

    return MotionModel(name, fwd, inv, jac, periodic, epsilon, H, grad_H, dphi_H, grad_dphi_H,
                       det_inv, params={"rate": rate})


def identity_model() -> MotionModel:
    return rotation_model("identity", 0.0, periodic=True)


def counter_rotation_model() -> MotionModel:
    """Object turns against the source at equal speed: ``H = x . theta(2 phi)``."""
    return rotation_model("counter_rotation", 1.0, periodic=True)


def third_rotation_model() -> MotionModel:
    """Object co-rotates at 2/3 of the source speed: ``H = x . theta(phi / 3)``."""
    return rotation_model("third_rotation", -2.0 / 3.0, periodic=False)


def _poly_scale(u, a):
    # u * sum_{j=0}^{4} (a u)^j and its derivative in u
    v = a * u
    g = u * (1.0 + v * (1.0 + v * (1.0 + v * (1.0 + v))))
    dg = 1.0 + v * (2.0 + v * (3.0 + v * (4.0 + 5.0 * v)))
    return g, dg


def _poly_scale_inverse(y, a, tol=1e-13, max_iter=100):
    """Solve ``u * sum_j (a u)^j = y`` per element.

    ``|g(u)| >= 0.67 |u|`` for every real ``a``, so the root lies in
    ``[-1.5|y|, 1.5|y|]``; safeguarded Newton inside that bracket.
    """
    y, a = np.broadcast_arrays(np.asarray(y, dtype=np.float64), np.asarray(a, dtype=np.float64))
    lo = -1.5 * np.abs(y) - 1e-300
    hi = 1.5 * np.abs(y) + 1e-300
    u = y.copy()
    for _ in range(max_iter):
        g, dg = _poly_scale(u, a)
        f = g - y
        hi = np.where(f > 0, u, hi)
        lo = np.where(f <= 0, u, lo)
        step = f / dg
        u_new = u - step
        bad = ~((u_new >= lo) & (u_new <= hi))
        u_new = np.where(bad, 0.5 * (lo + hi), u_new)
        done = np.abs(u_new - u) <= tol * (1.0 + np.abs(u))
        u = u_new
        if np.all(done):
            break
    g, dg = _poly_scale(u, a)
    return u - (g - y) / dg


def nonaffine_model(p: float = 300.0, c1: float = 5e-5, c2: float = 7e-5,
                    epsilon: float = DEFAULT_EPSILON) -> MotionModel:
    """Rotation followed by a particle-dependent polynomial scaling of each coordinate.

    ``Gamma_phi x = S_phi(A_phi x)`` with ``A_phi`` the third-rotation matrix and
    ``S_phi(y)_i = y_i * sum_{j=0}^{4} (a_i y_i)^j``, ``a_i = (5 m_i)^{1/4}``,
    ``m_1 = sin(c1 phi p / pi)``, ``m_2 = sin(c2 phi p / pi)``.  For ``phi < 0``
    the fourth root is extended oddly.
    """
    rate = -2.0 / 3.0

    def coeffs(phi):
        phi = np.asarray(phi, dtype=np.float64)
        m = np.stack([np.sin(c1 * phi * p / math.pi), np.sin(c2 * phi * p / math.pi)], axis=-1)
        return np.sign(m) * np.abs(5.0 * m) ** 0.25

    def fwd(phi, x):
        y = _rot(rate * np.asarray(phi, dtype=np.float64), x)
        g, _ = _poly_scale(y, coeffs(phi))
        return g

    def inv(phi, x):
        u = _poly_scale_inverse(x, coeffs(phi))
        return _rot(-rate * np.asarray(phi, dtype=np.float64), u)

    def jac(phi, x):
        phi = np.asarray(phi, dtype=np.float64)
        y = _rot(rate * phi, x)
        _, dg = _poly_scale(y, coeffs(phi))
        R = _rot_matrix(rate * phi, y.shape[:-1])
        return dg[..., :, None] * R

    def H(phi, x):
        u = _poly_scale_inverse(x, coeffs(phi))
        th = theta(np.asarray(phi, dtype=np.float64) / 3.0)
        return np.sum(u * th, axis=-1)

    def det_inv(phi, x):
        a = coeffs(phi)
        u = _poly_scale_inverse(x, a)
        _, dg = _poly_scale(u, a)
        return 1.0 / np.abs(dg[..., 0] * dg[..., 1])

    return MotionModel("nonaffine", fwd, inv, jac, False, epsilon, H=H, det_inverse=det_inv,
                       params={"p": p, "c1": c1, "c2": c2})


def nonaffine_grad_H(model: MotionModel, phi, x) -> np.ndarray:
    """Jacobian-based ``D_x H`` for the nonaffine model (independent of finite differences)."""
    x = np.asarray(x, dtype=np.float64)
    y = model.inverse(phi, x)
    J = model.jacobian(phi, y)
    th = np.broadcast_to(theta(phi), J.shape[:-1])
    # D_x H = theta^T (D Gamma_phi(Gamma_phi^{-1} x))^{-1}
    return np.linalg.solve(np.swapaxes(J, -1, -2), th[..., None])[..., 0]


_REGISTRY: dict[str, Callable[..., MotionModel]] = {
    "identity": identity_model,
    "counter_rotation": counter_rotation_model,
    "third_rotation": third_rotation_model,
    "nonaffine": nonaffine_model,
}


def register_model(name: str, factory: Callable[..., MotionModel]) -> None:
    _REGISTRY[name] = factory


def get_model(name: str, **params) -> MotionModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown motion model {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)


def model_names() -> list[str]:
    return sorted(_REGISTRY)
