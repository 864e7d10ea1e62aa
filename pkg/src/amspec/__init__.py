"""Discrete decompositions of mixed-norm alpha-modulation spaces.

Submodules
----------
lattice     alpha-coverings, frequency / translation lattices, truncations
mixednorm   mixed Lebesgue norms, iterated maximal functions, Peetre estimates
bapu        bump partition and its square-root partition of squares
frame       the truncated tight frame realised on a sampling grid
transform   phi-transform, inverse, sequence and modulation norms
admat       almost-diagonal matrices, Gram matrices and lattice-sum checks
multiplier  Fourier multipliers: symbol classes, matrices, action
csupp       compactly supported spline frames and Neumann inversion
cli         the ``amspec`` command-line front end

The commonly used names are re-exported here; they are imported on first
access so that ``amspec`` itself loads no numerical library.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "errors": ["AmspecError", "PreconditionError", "CoverageGap", "DenominatorUnderflow", "IndexOutOfTruncation",
               "NyquistViolation", "DimensionMismatch", "TargetNotReached", "NoConvergence"],
    "grid": ["Grid", "SampledSignal"],
    "lattice": ["AlphaGeometry", "Truncation", "TFIndex", "default_a", "certify_covering", "select_c1",
                "interior_half_width", "CoverReport"],
    "mixednorm": ["PVec", "mixed_norm", "iterated_max", "maximal_inequality_check", "peetre_check"],
    "bapu": ["BumpProfile", "BapuSystem", "certify_bapu"],
    "coeffs": ["Layout", "CoeffField"],
    "frame": ["TightFrame", "tight_frame_check", "envelope_fit"],
    "panels": ["random_panel", "packet_signal"],
    "transform": ["SpaceParams", "analyze", "synthesize", "seq_norm", "mod_norm", "norm_equivalence_check"],
    "admat": ["AdParams", "OpMatrix", "gram", "frame_matrix", "is_almost_diagonal", "fitted_constant", "compose",
              "apply", "summability_check"],
    "multiplier": ["Symbol", "symbol_class_check", "multiplier_matrix", "multiplier_is_ad", "apply_multiplier"],
    "csupp": ["BSplineGenerator", "KTermApprox", "fit_tau", "fit_all", "build_perturbed_family", "frame_expansion",
              "neumann_invert"],
    "cli": ["RunConfig", "main"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE) + ["__version__"]


def __getattr__(name: str):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'amspec' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
