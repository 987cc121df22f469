//! Multivariate polynomials with exact rational or double coefficients, the fixed
//! graded-lex monomial order behind `v(f)`, and the coefficient-norm inequalities for
//! sums and products.

mod coeff;
mod monomial;
mod norms;
mod polynomial;
mod text;

pub use coeff::{rat, rat_from_f64, Coeff, Rational};
pub use monomial::{
    basis_size, monomial_type, monomials_of_degree, monomials_up_to, Monomial, MonomialBasis,
    MonomialType,
};
pub use norms::{
    dot_product_pairing, factor_upper_constant, product_norm_ratio, sum_bound, NormPair,
};
pub use polynomial::{CoefficientVector, FloatPoly, Polynomial, RatPoly, DEFAULT_DEGREE_CAP};
