"""Order-condition analysis and weak-convergence tooling for stochastic
Runge-Kutta methods built on colored rooted trees."""

__version__ = "0.1.0"
