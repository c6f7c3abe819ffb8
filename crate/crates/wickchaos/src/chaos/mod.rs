//! Chaos expansions in the Hermite-function basis and in kernel form.

pub mod basis;
pub mod hermite;
pub mod hermite_chaos;
pub mod kernel;
pub mod multi_index;
pub mod quadrature;

pub use basis::{BasisMetadata, HermiteBasis};
pub use hermite::{
    gauss_hermite, gauss_legendre, gauss_legendre_on, hermite_function, hermite_functions, hermite_poly,
};
pub use hermite_chaos::{
    brownian_chaos, brownian_chaos_at, dual_action, expectation, hida_norm, singular_white_noise, summability_probe,
    wiener_from_coefficients, wiener_integral_chaos, ChaosProcess, HermiteChaos, Overflow, Truncation,
};
pub use kernel::{gaussian_psd_check, hermite_to_kernel, kernel_to_hermite, KernelChaos, Projection, SymIndex};
pub use multi_index::{factorial_f64, ln_factorial, mi_factorial, two_n_pow, MultiIndex};
pub use quadrature::{Chebyshev, TimeGrid};
