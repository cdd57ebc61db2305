from .dense import (  # noqa
    ArgumentRangeError,
    DimensionMismatchError,
    EigenResult,
    LinalgError,
    MatrixFileError,
    NonFiniteError,
    ZeroIterateError,
    ZeroVectorError,
    as_matrix,
    as_vector,
    inf_norm_signed,
    iterate_distance,
    load_matrix,
    local_power_iteration,
    make_test_matrix,
    matrix_inf_norm,
    matvec,
    power_step,
    residual_norm,
    save_matrix,
    signed_normalize,
)
