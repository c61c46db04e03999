"""Classical emulation toolkit for damped quadratic Hamiltonians, Riccati/LQR
solvers and block-encoding resource estimates."""

__version__ = "0.1.0"
