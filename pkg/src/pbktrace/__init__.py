"""Numerics for the Petersson and opposite-sign Kuznetsov trace formulas.

Modules: numkernel (quadrature, Bessel functions), padic (local orbital
integrals and generalized Kloosterman sums), archimedean (integral
transforms of the test function), formula (geometric sides and the level-11
verification), oracle (point counts on 11a1), cli.
"""

__version__ = "0.1.0"
