"""Anisotropic norms F, their polars F°, and Wulff-shape geometry.

Every model represents an even, convex, positively 1-homogeneous function
F on R^2 that is smooth away from the origin, together with exact first
and second derivatives, the polar (dual) norm, and the smoothed energy
(F^2 + eps)^(p/2)/p used by the eigenvalue solver.

Supported families:

* ``euclidean``            F(xi) = |xi|
* ``ellipse:a11,a12,a22``  F(xi) = sqrt(xi' A xi) with A symmetric positive
                           definite
* ``lq:q``                 F(xi) = (|x1|^q + |x2|^q)^(1/q), q >= 2
* ``reg:<base>:eps``       F(xi) = sqrt(F_base(xi)^2 + eps |xi|^2), a
                           uniformly elliptic smoothing of the base norm
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "AnisotropyModel",
    "EuclideanNorm",
    "EllipseNorm",
    "LqNorm",
    "RegularizedNorm",
    "ModelError",
    "parse_model",
    "regularized_energy",
    "wulff_polygon",
    "wulff_area",
    "ellipticity_probe",
]

_TWO_PI = 2.0 * math.pi
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ModelError(ValueError):
    """Invalid anisotropy specification (non-SPD matrix, q < 2, ...)."""


def _as_batch(xi):
    """Return (points as (n,2) float array, was_single_vector)."""
    arr = np.asarray(xi, dtype=float)
    if arr.shape == (2,):
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected a 2-vector or an (n, 2) array, got shape {arr.shape}")
    return arr, False


def _unit_directions(n):
    theta = np.arange(n) * (_TWO_PI / n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


class AnisotropyModel:
    """Base class; concrete families override the *_impl methods.

    Instances are immutable after construction and safe to share between
    threads.  ``bounds`` holds norm-equivalence constants (a, b) with
    a|xi| <= F(xi) <= b|xi|; by 1-homogeneity the extrema of F over the
    unit circle certify the global constants.
    """

    name = "abstract"

    def __init__(self):
        self.bounds = self._compute_bounds()

    # -- core evaluators ------------------------------------------------

    def value(self, xi):
        """F(xi).  Accepts a single 2-vector or an (n, 2) batch."""
        arr, single = _as_batch(xi)
        out = self._value_impl(arr)
        return float(out[0]) if single else out

    def gradient(self, xi):
        """F_xi(xi); 0-homogeneous, undefined at the origin.

        Zero inputs raise ``ValueError`` except for the regularized
        family, which returns the zero vector (the smoothed energy has a
        stationary point there).
        """
        arr, single = _as_batch(xi)
        zero = np.all(arr == 0.0, axis=1)
        if np.any(zero):
            raise ValueError(f"gradient of {self.name!r} norm undefined at xi = 0")
        out = self._gradient_impl(arr)
        return out[0] if single else out

    def hessian(self, xi):
        """Second derivative F_xixi(xi) as (..., 2, 2); requires xi != 0."""
        arr, single = _as_batch(xi)
        if np.any(np.all(arr == 0.0, axis=1)):
            raise ValueError(f"hessian of {self.name!r} norm undefined at xi = 0")
        out = self._hessian_impl(arr)
        return out[0] if single else out

    def polar(self, eta):
        """Polar norm F°(eta) = sup_xi <xi, eta> / F(xi)."""
        arr, single = _as_batch(eta)
        out = self._polar_impl(arr)
        return float(out[0]) if single else out

    # -- structure queries ---------------------------------------------

    def quadratic_form(self):
        """Matrix A with F(xi) = sqrt(xi' A xi), or None if F is not of
        that form.  Quadratic models admit a direct linear eigensolve at
        p = 2."""
        return None

    def spec_string(self):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec_string()}>"

    # -- implementation hooks --------------------------------------------

    def _value_impl(self, arr):
        raise NotImplementedError

    def _gradient_impl(self, arr):
        raise NotImplementedError

    def _hessian_impl(self, arr):
        raise NotImplementedError

    def _polar_impl(self, arr):
        return _numeric_polar(self._value_impl, arr)

    def _compute_bounds(self):
        # 256-direction scan plus local golden-section refinement of the
        # two extrema; the unit circle suffices by homogeneity.
        dirs = _unit_directions(256)
        vals = self._value_impl(dirs)
        f = lambda th: float(self._value_impl(np.array([[math.cos(th), math.sin(th)]]))[0])
        step = _TWO_PI / 256
        k_min, k_max = int(np.argmin(vals)), int(np.argmax(vals))
        a = _golden_minimize(f, k_min * step - step, k_min * step + step)
        b = -_golden_minimize(lambda th: -f(th), k_max * step - step, k_max * step + step)
        return (a, b)


def _golden_minimize(f, lo, hi, iters=60):
    """Golden-section minimum value of a unimodal f on [lo, hi]."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return min(f1, f2)


def _numeric_polar(value_fn, eta, n_scan=1024, iters=50):
    """sup over unit directions of <u, eta>/F(u), refined by golden section.

    Valid for 1-homogeneous F (the unit circle attains the sup).  Fully
    vectorized over the rows of eta.
    """
    eta = np.asarray(eta, dtype=float)
    dirs = _unit_directions(n_scan)
    fu = value_fn(dirs)
    ratios = eta @ dirs.T / fu  # (m, n_scan)
    best = np.argmax(ratios, axis=1)
    step = _TWO_PI / n_scan
    lo = best * step - step
    hi = best * step + step

    def g(theta):
        u = np.column_stack([np.cos(theta), np.sin(theta)])
        return np.einsum("ij,ij->i", eta, u) / value_fn(u)

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    g1, g2 = g(x1), g(x2)
    for _ in range(iters):
        take1 = g1 >= g2  # keep the better bracket around the max
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        g1, g2 = g(x1), g(x2)
    return np.maximum(g1, g2)


class EuclideanNorm(AnisotropyModel):
    name = "euclidean"

    def _value_impl(self, arr):
        return np.hypot(arr[:, 0], arr[:, 1])

    def _gradient_impl(self, arr):
        return arr / self._value_impl(arr)[:, None]

    def _hessian_impl(self, arr):
        n = self._value_impl(arr)
        u = arr / n[:, None]
        eye = np.eye(2)[None, :, :]
        return (eye - u[:, :, None] * u[:, None, :]) / n[:, None, None]

    def _polar_impl(self, arr):
        return np.hypot(arr[:, 0], arr[:, 1])

    def quadratic_form(self):
        return np.eye(2)

    def spec_string(self):
        return "euclidean"

    def _compute_bounds(self):
        return (1.0, 1.0)


class EllipseNorm(AnisotropyModel):
    """F(xi) = sqrt(xi' A xi) with A symmetric positive definite."""

    name = "ellipse"

    def __init__(self, a11, a12, a22):
        A = np.array([[a11, a12], [a12, a22]], dtype=float)
        if not (A[0, 0] > 0 and np.linalg.det(A) > 0):
            raise ModelError(
                f"ellipse matrix [[{a11},{a12}],[{a12},{a22}]] is not positive definite"
            )
        self.A = A
        self.A_inv = np.linalg.inv(A)
        super().__init__()

    def _value_impl(self, arr):
        return np.sqrt(np.einsum("ij,jk,ik->i", arr, self.A, arr))

    def _gradient_impl(self, arr):
        return (arr @ self.A.T) / self._value_impl(arr)[:, None]

    def _hessian_impl(self, arr):
        f = self._value_impl(arr)
        ax = arr @ self.A.T
        return self.A[None, :, :] / f[:, None, None] - (
            ax[:, :, None] * ax[:, None, :]
        ) / (f ** 3)[:, None, None]

    def _polar_impl(self, arr):
        return np.sqrt(np.einsum("ij,jk,ik->i", arr, self.A_inv, arr))

    def quadratic_form(self):
        return self.A

    def spec_string(self):
        return f"ellipse:{self.A[0, 0]:g},{self.A[0, 1]:g},{self.A[1, 1]:g}"

    def _compute_bounds(self):
        w = np.linalg.eigvalsh(self.A)
        return (math.sqrt(w[0]), math.sqrt(w[1]))


class LqNorm(AnisotropyModel):
    """F(xi) = (|x1|^q + |x2|^q)^(1/q).

    Restricted to q >= 2: for q < 2 the Hessian blows up on the
    coordinate axes and F leaves C^2(R^2 \\ {0}); the dual range is
    reachable through the polar instead.
    """

    name = "lq"

    def __init__(self, q):
        if not q >= 2.0:
            raise ModelError(f"lq norm requires q >= 2 (got q = {q}); use the polar for q < 2")
        self.q = float(q)
        self.q_dual = self.q / (self.q - 1.0)
        super().__init__()

    def _value_impl(self, arr):
        q = self.q
        return (np.abs(arr[:, 0]) ** q + np.abs(arr[:, 1]) ** q) ** (1.0 / q)

    def _gradient_impl(self, arr):
        q = self.q
        s = np.abs(arr[:, 0]) ** q + np.abs(arr[:, 1]) ** q
        t = np.abs(arr) ** (q - 1.0) * np.sign(arr)
        return s[:, None] ** (1.0 / q - 1.0) * t

    def _hessian_impl(self, arr):
        q = self.q
        s = np.abs(arr[:, 0]) ** q + np.abs(arr[:, 1]) ** q
        t = np.abs(arr) ** (q - 1.0) * np.sign(arr)
        diag = np.zeros((len(arr), 2, 2))
        d = np.abs(arr) ** (q - 2.0)
        diag[:, 0, 0] = d[:, 0]
        diag[:, 1, 1] = d[:, 1]
        outer = t[:, :, None] * t[:, None, :]
        return (q - 1.0) * (
            s[:, None, None] ** (1.0 / q - 1.0) * diag
            - s[:, None, None] ** (1.0 / q - 2.0) * outer
        )

    def _polar_impl(self, arr):
        r = self.q_dual
        return (np.abs(arr[:, 0]) ** r + np.abs(arr[:, 1]) ** r) ** (1.0 / r)

    def quadratic_form(self):
        return np.eye(2) if self.q == 2.0 else None

    def spec_string(self):
        return f"lq:{self.q:g}"


class RegularizedNorm(AnisotropyModel):
    """Elliptic smoothing sqrt(F_base^2 + eps |xi|^2).

    Still an even 1-homogeneous norm (so all duality and Wulff identities
    hold), but with a uniformly positive definite Hessian of F^2 even
    where the base degenerates (e.g. lq on the coordinate axes).  The
    gradient is returned as 0 at the origin instead of raising.
    """

    name = "reg"

    def __init__(self, base: AnisotropyModel, eps: float):
        if not eps > 0:
            raise ModelError(f"regularization eps must be > 0 (got {eps})")
        self.base = base
        self.eps = float(eps)
        super().__init__()

    def gradient(self, xi):
        arr, single = _as_batch(xi)
        out = np.zeros_like(arr)
        nz = ~np.all(arr == 0.0, axis=1)
        if np.any(nz):
            out[nz] = self._gradient_impl(arr[nz])
        return out[0] if single else out

    def _value_impl(self, arr):
        fb = self.base._value_impl(arr)
        return np.sqrt(fb * fb + self.eps * np.einsum("ij,ij->i", arr, arr))

    def _gradient_impl(self, arr):
        fb = self.base._value_impl(arr)
        gb = self.base._gradient_impl(arr)
        g = self._value_impl(arr)
        return (fb[:, None] * gb + self.eps * arr) / g[:, None]

    def _hessian_impl(self, arr):
        # Hess(G) = (Hess(G^2/2) - G_xi G_xi') / G with
        # Hess(G^2/2) = F F_xixi + F_xi F_xi' + eps I.
        fb = self.base._value_impl(arr)
        gb = self.base._gradient_impl(arr)
        hb = self.base._hessian_impl(arr)
        g = self._value_impl(arr)
        gg = self._gradient_impl(arr)
        half_sq = (
            fb[:, None, None] * hb
            + gb[:, :, None] * gb[:, None, :]
            + self.eps * np.eye(2)[None, :, :]
        )
        return (half_sq - gg[:, :, None] * gg[:, None, :]) / g[:, None, None]

    def quadratic_form(self):
        base_q = self.base.quadratic_form()
        if base_q is None:
            return None
        return base_q + self.eps * np.eye(2)

    def spec_string(self):
        return f"reg:{self.base.spec_string()}:{self.eps:g}"


def parse_model(spec: str) -> AnisotropyModel:
    """Build a model from its CLI/config string.

    Grammar: ``euclidean`` | ``ellipse:a11,a12,a22`` | ``lq:q`` |
    ``reg:<base>:eps`` (e.g. ``reg:lq:4:0.01``).
    """
    spec = spec.strip()
    if spec == "euclidean":
        return EuclideanNorm()
    if spec.startswith("ellipse:"):
        parts = spec[len("ellipse:"):].split(",")
        if len(parts) != 3:
            raise ModelError(f"ellipse spec needs a11,a12,a22 (got {spec!r})")
        try:
            a11, a12, a22 = (float(x) for x in parts)
        except ValueError as exc:
            raise ModelError(f"bad ellipse entries in {spec!r}") from exc
        return EllipseNorm(a11, a12, a22)
    if spec.startswith("lq:"):
        try:
            q = float(spec[len("lq:"):])
        except ValueError as exc:
            raise ModelError(f"bad lq exponent in {spec!r}") from exc
        return LqNorm(q)
    if spec.startswith("reg:"):
        body = spec[len("reg:"):]
        base_str, _, eps_str = body.rpartition(":")
        if not base_str:
            raise ModelError(f"reg spec needs reg:<base>:eps (got {spec!r})")
        try:
            eps = float(eps_str)
        except ValueError as exc:
            raise ModelError(f"bad reg eps in {spec!r}") from exc
        return RegularizedNorm(parse_model(base_str), eps)
    raise ModelError(f"unknown model spec {spec!r}")


def regularized_energy(model: AnisotropyModel, p: float, eps: float, xi):
    """Smoothed energy V = (F^2 + eps)^(p/2) / p and its gradient.

    As eps -> 0 this converges to F^p/p together with the gradient
    F^(p-1) F_xi, which is extended by 0 at xi = 0 (valid for p > 1).
    """
    arr, single = _as_batch(xi)
    f = model._value_impl(arr)
    s = f * f + eps
    val = s ** (0.5 * p) / p
    grad = np.zeros_like(arr)
    nz = f > 0.0
    if np.any(nz):
        gf = model._gradient_impl(arr[nz])
        grad[nz] = (s[nz] ** (0.5 * p - 1.0) * f[nz])[:, None] * gf
    if single:
        return float(val[0]), grad[0]
    return val, grad


def wulff_polygon(model: AnisotropyModel, n: int) -> np.ndarray:
    """Boundary of the Wulff shape {F° < 1} sampled at n normal angles.

    Vertex k is F_xi(cos t_k, sin t_k) with t_k = 2 pi k / n; each vertex
    satisfies F°(v) = 1 and the polygon is convex and CCW.
    """
    if n < 8:
        raise ValueError(f"wulff_polygon needs n >= 8 (got {n})")
    return model.gradient(_unit_directions(int(n)))


def wulff_area(model: AnisotropyModel, n: int) -> float:
    """Shoelace area of wulff_polygon(model, n); increases to |W| as the
    angular sampling is (nestedly) refined."""
    v = wulff_polygon(model, n)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ellipticity_probe(model: AnisotropyModel, p: float, samples: int, seed: int = 0,
                      step: float = 1e-6) -> float:
    """Sampled lower bound for the ellipticity constant of F^(p-1) F_xi.

    Probes the quadratic form xi' D[F^(p-1) F_xi](eta) xi over random unit
    (eta, xi) pairs with central differences and returns the smallest
    Rayleigh ratio against |eta|^(p-2) |xi|^2.  A non-positive return
    value signals an invalid (non-elliptic) model; no exception is raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    th = rng.uniform(0.0, _TWO_PI, size=(2, samples))
    eta = np.column_stack([np.cos(th[0]), np.sin(th[0])])
    xi = np.column_stack([np.cos(th[1]), np.sin(th[1])])

    def field(z):
        f = model._value_impl(z)
        return (f ** (p - 1.0))[:, None] * model._gradient_impl(z)

    d = (field(eta + step * xi) - field(eta - step * xi)) / (2.0 * step)
    ratios = np.einsum("ij,ij->i", xi, d)  # |eta| = |xi| = 1
    return float(np.min(ratios))
