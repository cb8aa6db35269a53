from specfun.gamma import gamma_fn, lgamma, rgamma
from specfun.bessel import (
    SeriesControl,
    DEFAULT_CONTROL,
    MAX_ABS_ARGUMENT,
    bessel_i,
    bessel_j,
    bessel_j_asymptotic,
    bessel_j_int,
    bessel_y,
    bessel_y_asymptotic,
)
from specfun.hypergeometric import hyp2f3
