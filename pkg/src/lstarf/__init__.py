"""Low-rank matrix recovery with the nuclear-minus-Frobenius penalty.

Modules: ``matcore`` (SVD kernels and norms), ``measure`` (operators and
instances), ``ripest`` (isometry constants), ``certify`` (bounds and lemma
oracles), ``solve`` (DC and convex solvers), ``bench`` (experiments) and
``cli``.
"""
__version__ = "0.1.0"
