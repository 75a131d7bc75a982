"""Right-hand sides F(x, u) of the semilinear problems.

Each source provides the value ``F``, the derivative ``F_u`` and the primitive
``P(x, u) = int_u^0 F(x, s) ds`` used by the energy J.  The built-in families
have closed-form primitives; a user callback falls back to adaptive quadrature.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate

from .errors import ConfigError, QuadratureError


class Source:
    """Base class; subclasses implement ``value``, ``du`` and ``primitive``."""

    name = "source"
    depends_on_u = True
    degenerate = False  # F(x, 0) = 0, which calls for an epsilon ladder

    def value(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def du(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def primitive(self, x: np.ndarray, u: np.ndarray, convention: str = "normalized") -> np.ndarray:
        raise NotImplementedError

    def log_value(self, x, u) -> np.ndarray:
        F = self.value(x, u)
        if np.any(~(F > 0)):
            raise ValueError(f"{self.name}: F is not positive at {int(np.sum(~(F > 0)))} nodes")
        return np.log(F)

    def lower_bound(self) -> float:
        """A positive lower bound of F over u <= 0, or 0 if none is known."""
        return 0.0

    def describe(self) -> dict:
        return {"name": self.name}


@dataclass
class Constant(Source):
    """F(x, u) = c, or a fixed positive nodal field when ``c`` is an array."""

    c: float | np.ndarray = 1.0
    name = "constant"
    depends_on_u = False

    def value(self, x, u):
        return np.broadcast_to(np.asarray(self.c, dtype=float), np.shape(u)).copy()

    def du(self, x, u):
        return np.zeros(np.shape(u))

    def primitive(self, x, u, convention="normalized"):
        return -self.value(x, u) * u

    def lower_bound(self):
        return float(np.min(self.c))

    def describe(self):
        c = self.c if np.ndim(self.c) == 0 else "field"
        return {"name": self.name, "c": c}


@dataclass
class Power(Source):
    """F = lam (-u)^p; degenerate at u = 0 when p > 0."""

    p: float
    lam: float = 1.0
    name = "power"

    @property
    def degenerate(self):
        return self.p > 0

    def value(self, x, u):
        return self.lam * np.maximum(-u, 0.0) ** self.p

    def du(self, x, u):
        return -self.lam * self.p * np.maximum(-u, 0.0) ** (self.p - 1)

    def primitive(self, x, u, convention="normalized"):
        return self.lam * np.maximum(-u, 0.0) ** (self.p + 1) / (self.p + 1)

    def regularized(self, eps: float) -> "Shifted":
        return Shifted(p=self.p, eps=eps, lam=self.lam)

    def describe(self):
        return {"name": self.name, "p": self.p, "lambda": self.lam}


@dataclass
class Shifted(Source):
    """F = lam (eps - u)^p.

    The normalized primitive ``lam((eps-u)^{p+1} - eps^{p+1})/(p+1)`` vanishes at
    ``u = 0``; the raw convention drops the constant.
    """

    p: float
    eps: float
    lam: float = 1.0
    name = "shifted"

    def value(self, x, u):
        return self.lam * (self.eps - u) ** self.p

    def du(self, x, u):
        return -self.lam * self.p * (self.eps - u) ** (self.p - 1)

    def primitive(self, x, u, convention="normalized"):
        top = (self.eps - u) ** (self.p + 1)
        if convention == "normalized":
            top = top - self.eps ** (self.p + 1)
        elif convention != "raw":
            raise ConfigError(f"unknown convention {convention!r}")
        return self.lam * top / (self.p + 1)

    def lower_bound(self):
        return self.lam * self.eps ** self.p if self.p >= 0 else 0.0

    def describe(self):
        return {"name": self.name, "p": self.p, "eps": self.eps, "lambda": self.lam}


@dataclass
class Continuation(Source):
    """F = (1 - s u)^q, the family used to approach the eigenvalue problem."""

    s: float
    q: float
    name = "continuation"

    @property
    def depends_on_u(self):
        return self.s != 0 and self.q != 0

    def value(self, x, u):
        return (1.0 - self.s * u) ** self.q

    def du(self, x, u):
        return -self.s * self.q * (1.0 - self.s * u) ** (self.q - 1)

    def primitive(self, x, u, convention="normalized"):
        if self.s == 0:
            return -np.asarray(u, dtype=float)
        top = (1.0 - self.s * u) ** (self.q + 1)
        if convention == "normalized":
            top = top - 1.0
        return top / (self.s * (self.q + 1))

    def lower_bound(self):
        return 1.0 if self.s >= 0 and self.q >= 0 else 0.0

    def describe(self):
        return {"name": self.name, "s": self.s, "q": self.q}


@dataclass
class Callback(Source):
    """User-supplied F(x, u) with optional derivative and primitive.

    Without ``primitive`` the inner integral of J is evaluated nodewise with
    adaptive quadrature at tolerance 1e-10.
    """

    func: Callable
    dfunc: Callable | None = None
    prim: Callable | None = None
    name = "callback"

    def value(self, x, u):
        return np.asarray(self.func(x, u), dtype=float)

    def du(self, x, u):
        if self.dfunc is not None:
            return np.asarray(self.dfunc(x, u), dtype=float)
        step = 1e-6 * (1.0 + np.abs(u))
        return (self.value(x, u + step) - self.value(x, u - step)) / (2 * step)

    def primitive(self, x, u, convention="normalized"):
        if self.prim is not None:
            return np.asarray(self.prim(x, u), dtype=float)
        out = np.empty(len(u))
        for i, (xi, ui) in enumerate(zip(x, u)):
            val, err = _integrate.quad(lambda s: float(self.func(xi[None, :], np.array([s]))[0]),
                                       ui, 0.0, epsabs=1e-10, epsrel=1e-10, limit=200)
            if not np.isfinite(val) or err > 1e-8 * (1 + abs(val)):
                raise QuadratureError(f"inner integral failed at node {i} (error estimate {err:.2e})")
            out[i] = val
        return out


def parse_source(spec: str, p: float = 1.0, eps: float = 0.0, lam: float = 1.0,
                 s: float = 0.0, q: float | None = None) -> Source:
    """Build a source from a short text form.

    Accepted forms: a number (constant), ``(-u)^p``, ``(eps-u)^p``,
    ``(1-s*u)^q``.  Symbolic exponents and shifts take their values from the
    keyword arguments; literal numbers are also accepted.
    """
    text = spec.replace(" ", "").lower()
    if text.startswith("lambda*"):
        text = text[len("lambda*"):]
    try:
        return Constant(lam * float(text))
    except ValueError:
        pass

    def num(tok, default):
        if tok in ("p", "q", "eps", "s", ""):
            return default
        try:
            return float(tok)
        except ValueError:
            raise ConfigError(f"cannot read {tok!r} in source {spec!r}") from None

    m = re.fullmatch(r"\(-u\)\^?([\w.]*)", text)
    if m:
        return Power(p=num(m.group(1), p), lam=lam)
    m = re.fullmatch(r"\(([\w.]+)-u\)\^?([\w.]*)", text)
    if m:
        e = num(m.group(1), eps)
        if e <= 0:
            raise ConfigError("the shift eps must be positive")
        return Shifted(p=num(m.group(2), p), eps=e, lam=lam)
    m = re.fullmatch(r"\(1-([\w.]+)\*?u\)\^?([\w.]*)", text)
    if m:
        return Continuation(s=num(m.group(1), s), q=num(m.group(2), q if q is not None else p))
    raise ConfigError(f"unrecognized source {spec!r}")
