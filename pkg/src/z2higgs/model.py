"""Action, activity, gauge transformations and Wilson observables.

Energies are kept per positive cell: the oriented-cell sums of the Wilson
action count every positive cell twice, so the coefficients below are 2*beta
and 2*kappa on positive cells, and 4*beta, 4*kappa in the activity.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    beta: float
    kappa: float

    def __post_init__(self):
        for name in ("beta", "kappa"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def rho(g):
    """The sign representation of Z2: 0 -> +1, 1 -> -1."""
    return 1 - 2 * (np.asarray(g).astype(np.int64) & 1)


def _as_bits(x, n):
    x = np.asarray(x, dtype=np.uint8)
    if x.shape != (n,):
        raise ValueError(f"expected a form of length {n}, got shape {x.shape}")
    return x & 1


def dsigma(sigma, geom):
    return geom.d(sigma, 1)


def edge_terms(sigma, phi, geom):
    """sigma(e) - phi(boundary e) in Z2 on each positive edge."""
    ev = geom.edge_vertices
    return (sigma ^ phi[ev[:, 0]] ^ phi[ev[:, 1]]) & 1


def action(sigma, phi, p, geom):
    sigma = _as_bits(sigma, geom.n_cells(1))
    phi = _as_bits(phi, geom.n_cells(0))
    plaq = rho(dsigma(sigma, geom)).sum()
    edge = rho(edge_terms(sigma, phi, geom)).sum()
    return float(-2 * p.beta * plaq - 2 * p.kappa * edge)


def activity(sigma, p, geom):
    sigma = _as_bits(sigma, geom.n_cells(1))
    nb = int(dsigma(sigma, geom).sum())
    ne = int(sigma.sum())
    return math.exp(-4 * p.beta * nb - 4 * p.kappa * ne)


def wilson_line(sigma, phi, gamma, geom):
    """rho(sigma(gamma) - phi(boundary gamma)); pass phi=None for unitary gauge."""
    sigma = _as_bits(sigma, geom.n_cells(1))
    par = 0
    for key in gamma.coeffs:
        par ^= int(sigma[geom.index(*key)])
    if phi is not None and gamma.coeffs:
        phi = _as_bits(phi, geom.n_cells(0))
        for (base, _), c in gamma.boundary().coeffs.items():
            if c % 2:
                par ^= int(phi[geom.index(base, ())])
    return 1 - 2 * par


def gauge_transform(sigma, phi, eta, geom):
    sigma = _as_bits(sigma, geom.n_cells(1))
    phi = _as_bits(phi, geom.n_cells(0))
    eta = _as_bits(eta, geom.n_cells(0))
    ev = geom.edge_vertices
    return sigma ^ eta[ev[:, 0]] ^ eta[ev[:, 1]], phi ^ eta


def local_conditional(sigma, e, p, geom):
    """P(sigma(e) = 1 | rest) in the unitary-gauge measure."""
    sigma = _as_bits(sigma, geom.n_cells(1))
    pe = geom.edge_plaquettes[e]
    pe = pe[pe >= 0]
    pl = geom.plaquette_edges[pe]
    # parity of each plaquette without edge e
    others = (sigma[pl].sum(axis=1) - sigma[e]) % 2
    n_odd = int(others.sum())
    # broken plaquettes: with sigma(e)=0 the odd ones, with 1 the even ones
    log_w0 = -4 * p.beta * n_odd
    log_w1 = -4 * p.beta * (len(pe) - n_odd) - 4 * p.kappa
    return 1.0 / (1.0 + math.exp(log_w0 - log_w1))
