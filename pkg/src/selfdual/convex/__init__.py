"""Convex functions, conjugates, proximal maps and potentials."""

from .base import AffineSplit, Capabilities, ConvexFunction, grid_sup, numeric_conjugate
from .builtins import (AffineIndicator, AffineSupport, BallIndicator, BoxIndicator,
                       ConjugatePair, DeclaredConjugate, L1Norm, NormSquared, NumericConvex,
                       PointIndicator, Quadratic, SeparableSum, Zero)
from .potentials import (ConstantForcing, Forced, GrowthBounds, Sampled, SinusoidForcing,
                         Static, TableForcing, TimeConvexFunction, check_growth,
                         epsilon_perturb, hamiltonian_of_lagrangian, regularize_potential)
from .transforms import (Conjugate, MoreauEnvelope, Perturbed, Scaled, Tilted, perturb,
                         regularize)


def conjugate(f: ConvexFunction, y):
    return f.conjugate(y)


def prox(f: ConvexFunction, lam, x):
    return f.prox(lam, x)


def moreau_envelope(f: ConvexFunction, lam, x):
    return f.moreau_envelope(lam, x)


__all__ = [
    "AffineIndicator", "AffineSplit", "AffineSupport", "BallIndicator", "BoxIndicator",
    "Capabilities", "Conjugate", "ConjugatePair", "DeclaredConjugate", "ConstantForcing",
    "ConvexFunction",
    "Forced", "GrowthBounds", "L1Norm", "MoreauEnvelope", "NormSquared", "NumericConvex",
    "Perturbed", "PointIndicator", "Quadratic", "Sampled", "Scaled", "SeparableSum",
    "SinusoidForcing", "Static", "TableForcing", "Tilted", "TimeConvexFunction", "Zero",
    "check_growth", "conjugate", "epsilon_perturb", "grid_sup", "hamiltonian_of_lagrangian",
    "moreau_envelope", "numeric_conjugate", "perturb", "prox", "regularize",
    "regularize_potential",
]
