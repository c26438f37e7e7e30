"""Least eigenvalue of the rough Laplacian on (1,0)-forms with v ^ v = 0.

On a flat torus the zero connection has a parallel trace-free commuting
field, so the constrained least eigenvalue is 0; excluding constants gives
the first flat Laplacian eigenvalue (2 pi)^2.  Small perturbations move it
quadratically, and the result is compared with a dense eigensolve.

    python demos/least_eigenvalue.py
"""
import numpy as np

from higgslab.bundle import Connection, random_connection
from higgslab.geometry import make_torus
from higgslab.spectral import EigenOptions, dense_least_eigenvalue, least_eigenvalue, random_perturbation


def main():
    g = make_torus(1, (1.0, 1.0), (8, 8))
    zero = Connection.zero(g)
    print(f"A = 0:                    lambda = {least_eigenvalue(zero).lambda_hat:.3e}")
    mz = least_eigenvalue(zero, EigenOptions(exclude_constants=True)).lambda_hat
    print(f"A = 0, mean-zero fields:  lambda = {mz:.6f}   (2 pi)^2 = {(2 * np.pi) ** 2:.6f}")
    for seed in range(3):
        A = random_connection(g, seed, amplitude=1.0)
        print(f"random A #{seed}:              lambda = {least_eigenvalue(A).lambda_hat:.8f}   "
              f"dense = {dense_least_eigenvalue(A):.8f}")

    g4 = make_torus(2, (1.0,) * 4, (8,) * 4)
    print("T^4, A = a small perturbation of 0")
    for eps in (0.005, 0.01, 0.02):
        a = random_perturbation(g4, 0, 2, eps)
        res = least_eigenvalue(Connection(g4, a))
        print(f"  ||a||_L4 = {eps:<6}  lambda = {res.lambda_hat:.3e}  |v^v| = {res.wedge_feasibility:.1e}")


if __name__ == "__main__":
    main()
