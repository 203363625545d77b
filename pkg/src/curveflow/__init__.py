"""Curve shortening flows on implicit and parametric surfaces in R^3.

Flowing finite-volume discretisation of geodesic curvature flow with a
surface-attracting constraint force, asymptotically uniform tangential
redistribution and an adaptive Runge-Kutta-Merson integrator.
"""

__version__ = "0.1.0"
