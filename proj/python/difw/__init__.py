"""Closed-form CPA diffeomorphic warping of [0, 1]."""

from ._difw import (
    DataError,
    InternalError,
    InvalidArgument,
    InvalidState,
    NumericError,
    OutOfDomain,
    align_joint,
    basis_matrix,
    grad_grid,
    integrate_grid,
    sample_prior,
    warp_signal,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "InternalError",
    "InvalidArgument",
    "InvalidState",
    "NumericError",
    "OutOfDomain",
    "align_joint",
    "basis_matrix",
    "grad_grid",
    "integrate_grid",
    "sample_prior",
    "warp_signal",
]
