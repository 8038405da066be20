"""Higher-order score functions of the standard Gaussian density.

For p = N(0, I_d) the scores are the Hermite tensors

    S1(x) = x
    S2(x) = x x^T - I
    S3(x) = x (x) x (x) x - sum_j (x (x) e_j (x) e_j + e_j (x) x (x) e_j + e_j (x) e_j (x) x)

so that Stein's identity E[f(<b, X>) S_l(X)] = E[f^(l)(<b, X>)] b^(x)l holds
for every l.  S2 carries the sign that makes this identity true.
"""
import numpy as np

from .exceptions import check_dim
from .tensors import SymTensor3, outer3, symmetrize_canonical


def score1(x):
    return np.array(x, dtype=float)


def score2(x):
    x = np.asarray(x, dtype=float)
    return np.outer(x, x) - np.eye(x.shape[0])


def hook_terms(x):
    """The tensor x_i d_jk + x_j d_ik + x_k d_ij."""
    eye = np.eye(x.shape[0])
    return (np.einsum('i,jk->ijk', x, eye)
            + np.einsum('j,ik->ijk', x, eye)
            + np.einsum('k,ij->ijk', x, eye))


def score3(x):
    x = np.asarray(x, dtype=float)
    return SymTensor3(symmetrize_canonical(outer3(x) - hook_terms(x)))


def score3_contract(x, u):
    """S3(x)(I, u, u) = (x.u)^2 x - |u|^2 x - 2 (x.u) u, without building S3(x)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    check_dim(x.shape[0], u)
    xu = x @ u
    return (xu * xu - u @ u) * x - 2.0 * xu * u
