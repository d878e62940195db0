"""Loop spaces of Kahler manifolds: metric, forms, connection and geodesics on discretized loops."""

__version__ = "0.1.0"
