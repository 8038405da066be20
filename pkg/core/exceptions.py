class TensorError(Exception):
    """Base class for numerical failures in the tensor code."""


class DimensionMismatch(TensorError, ValueError):
    pass


class DegenerateIterate(TensorError, ArithmeticError):
    """A power step produced a (numerically) zero contraction."""


class DegenerateOperator(TensorError):
    """Every initialization degenerated, e.g. on the zero tensor."""


class MemoryGuardExceeded(TensorError, ValueError):
    pass


def check_dim(d, *vectors):
    for v in vectors:
        if v.shape[0] != d:
            raise DimensionMismatch(f"expected length {d}, got {v.shape[0]}")
