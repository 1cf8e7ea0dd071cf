"""Characteristic functions referenced by tests as `custom_cfs:<name>`."""

import numpy as np


def too_large(t):
    return 1.1 * np.ones_like(np.asarray(t, dtype=float), dtype=complex)


def negative_mass(t):
    # "p.f." 0.7 at 0, 0.2 at +-1, -0.05 at +-2
    t = np.asarray(t, dtype=float)
    return (0.7 + 0.4 * np.cos(t) - 0.1 * np.cos(2 * t)).astype(complex)


def fair_coin(t):
    t = np.asarray(t, dtype=float)
    return 0.5 + 0.5 * np.exp(1j * t)


def shifted_triple(spec, k):
    """c.f. triple of X + k for a built-in spec."""
    from cf_sampler.distributions import CfTriple, cf_derivs, cf_eval

    def phi(t):
        return np.exp(1j * k * np.asarray(t, dtype=float)) * cf_eval(spec, t)

    def dphi(t):
        d1, _ = cf_derivs(spec, t)
        return np.exp(1j * k * np.asarray(t, dtype=float)) * (d1 + 1j * k * cf_eval(spec, t))

    def d2phi(t):
        d1, d2 = cf_derivs(spec, t)
        return np.exp(1j * k * np.asarray(t, dtype=float)) * (d2 + 2j * k * d1 - k * k * cf_eval(spec, t))

    return CfTriple(phi=phi, dphi=dphi, d2phi=d2phi)
