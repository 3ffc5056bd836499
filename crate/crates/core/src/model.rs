//! Model parameters, the feasible set, the Fokker-Planck flux and its
//! entropy-mobility structures.
//!
//! The macroscopic equation is
//!
//! ```text
//! ∂t r = ∇·[(1 + ε1 r − ε2 b) ∇r + ε3 r ∇b]
//! ```
//!
//! and each [`EntropyPair`] rewrites the bracket as `m(r) ∇u(r) + f` with an
//! entropy variable `u = δE/δr`, a mobility `m` and a remainder `f` that is
//! of second order in the ε's. All functions here are pointwise: gradients
//! are supplied by the caller.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::Field;

/// Volume of the `dim`-dimensional ball of the given diameter.
pub fn ball_volume(dim: u32, diameter: f64) -> Result<f64> {
    let radius = 0.5 * diameter;
    match dim {
        2 => Ok(PI * radius * radius),
        3 => Ok(4.0 / 3.0 * PI * radius * radius * radius),
        _ => Err(Error::invalid("dim", alloc::format!("{dim} is not 2 or 3"))),
    }
}

/// Dimensionless interaction strengths together with the microscopic
/// quantities they were derived from (zero when constructed from ε's
/// directly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n_red: usize,
    pub n_blue: usize,
    pub diam_red: f64,
    pub diam_blue: f64,
    pub dim: u32,
    /// Red-red excluded volume coefficient.
    pub eps1: f64,
    /// Red-obstacle coefficient entering the diffusivity and mobilities.
    pub eps2: f64,
    /// Red-obstacle drift coefficient, always `(dim - 1) * eps2`.
    pub eps3: f64,
}

impl ModelParams {
    /// Coefficients from particle counts and diameters:
    /// `ε1 = 4 (N_r − 1)(d − 1) v_d(ϵ_r)`, `ε2 = 4 N_b v_d(ϵ_rb)`,
    /// `ε3 = (d − 1) ε2` with `ϵ_rb = (ϵ_r + ϵ_b)/2`.
    pub fn derive(n_red: usize, n_blue: usize, diam_red: f64, diam_blue: f64, dim: u32) -> Result<Self> {
        if n_red < 1 {
            return Err(Error::invalid("n_red", "need at least one red particle"));
        }
        if !(diam_red > 0.0 && diam_red.is_finite()) {
            return Err(Error::invalid("diam_red", "must be positive"));
        }
        if !(diam_blue > 0.0 && diam_blue.is_finite()) {
            return Err(Error::invalid("diam_blue", "must be positive"));
        }
        let d = dim as f64;
        let contact = 0.5 * (diam_red + diam_blue);
        let eps1 = 4.0 * (n_red as f64 - 1.0) * (d - 1.0) * ball_volume(dim, diam_red)?;
        let eps2 = 4.0 * n_blue as f64 * ball_volume(dim, contact)?;
        Ok(ModelParams {
            n_red,
            n_blue,
            diam_red,
            diam_blue,
            dim,
            eps1,
            eps2,
            eps3: (d - 1.0) * eps2,
        })
    }

    /// Parameters given directly by `ε1` and `ε2`; `ε3` follows from `dim`.
    pub fn from_eps(eps1: f64, eps2: f64, dim: u32) -> Result<Self> {
        ball_volume(dim, 1.0)?;
        if !(eps1 >= 0.0 && eps1.is_finite()) {
            return Err(Error::invalid("eps1", "must be finite and non-negative"));
        }
        if !(eps2 >= 0.0 && eps2.is_finite()) {
            return Err(Error::invalid("eps2", "must be finite and non-negative"));
        }
        Ok(ModelParams {
            n_red: 0,
            n_blue: 0,
            diam_red: 0.0,
            diam_blue: 0.0,
            dim,
            eps1,
            eps2,
            eps3: (dim as f64 - 1.0) * eps2,
        })
    }

    /// Red-obstacle contact distance `(ϵ_r + ϵ_b)/2`.
    pub fn contact_diameter(&self) -> f64 {
        0.5 * (self.diam_red + self.diam_blue)
    }

    /// Total volume fraction `[N_b v_d(ϵ_b) + N_r v_d(ϵ_r)] / |Ω|`.
    pub fn volume_fraction(&self, domain_area: f64) -> Result<f64> {
        if !(domain_area > 0.0) {
            return Err(Error::invalid("domain_area", "must be positive"));
        }
        let blue = self.n_blue as f64 * ball_volume(self.dim, self.diam_blue)?;
        let red = self.n_red as f64 * ball_volume(self.dim, self.diam_red)?;
        Ok((blue + red) / domain_area)
    }

    pub fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet { params: *self }
    }
}

/// The admissible states `{r ≥ 0, ε1 r + ε2 b ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleSet {
    pub params: ModelParams,
}

impl FeasibleSet {
    /// Remaining free volume `1 − ε1 r − ε2 b`.
    pub fn slack(&self, r: f64, b: f64) -> f64 {
        1.0 - self.params.eps1 * r - self.params.eps2 * b
    }

    pub fn contains(&self, r: f64, b: f64) -> bool {
        r >= 0.0 && self.slack(r, b) >= 0.0
    }

    pub fn contains_interior(&self, r: f64, b: f64) -> bool {
        r > 0.0 && self.slack(r, b) > 0.0
    }

    pub fn contains_field(&self, r: &Field, b: &Field) -> bool {
        r.values()
            .iter()
            .zip(b.values())
            .all(|(&ri, &bi)| self.contains(ri, bi))
    }

    /// Smallest value of `1 − ε1 r − ε2 b` over the cells.
    pub fn min_slack(&self, r: &Field, b: &Field) -> f64 {
        r.values()
            .iter()
            .zip(b.values())
            .map(|(&ri, &bi)| self.slack(ri, bi))
            .fold(f64::INFINITY, f64::min)
    }

    /// The constant `c1 = min (1 − ε2 b)` bounding the first mobility from
    /// below.
    pub fn c1(&self, b: &Field) -> f64 {
        b.values()
            .iter()
            .map(|&bi| 1.0 - self.params.eps2 * bi)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Choice of entropy-mobility structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyPair {
    /// `E1 = ∫ r(log r − 1) + ε1 r²/2 + ε3 r b`, `m1 = r(1 − ε2 b)`.
    Pair1,
    /// `E2 = ∫ r[log(r/(1 − ε1 r − ε3 b)) − 1]`, `m2 = r(1 − ε1 r − ε2 b)`.
    Pair2,
    /// The family `E3 = ∫ r[log(r/(1 − α ε1 r − ε3 b)) − 1]`,
    /// `m3 = r(1 − β ε1 r − ε2 b)` with `2α − β = 1`.
    Pair3 { alpha: f64, beta: f64 },
}

impl EntropyPair {
    pub fn pair3(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || (2.0 * alpha - beta - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "pair3",
                alloc::format!("(alpha, beta) = ({alpha}, {beta}) violates 2 alpha - beta = 1"),
            ));
        }
        Ok(EntropyPair::Pair3 { alpha, beta })
    }

    /// The member with the first pair's mobility (`β = 0`, `α = 1/2`).
    pub fn pair3_default() -> Self {
        EntropyPair::Pair3 { alpha: 0.5, beta: 0.0 }
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> &'static str {
        match self {
            EntropyPair::Pair1 => "E1",
            EntropyPair::Pair2 => "E2",
            EntropyPair::Pair3 { .. } => "E3",
        }
    }

    /// `(α, β)` for the bounded-entropy members; `None` for the first pair.
    fn bounded(&self) -> Option<(f64, f64)> {
        match *self {
            EntropyPair::Pair1 => None,
            EntropyPair::Pair2 => Some((1.0, 1.0)),
            EntropyPair::Pair3 { alpha, beta } => Some((alpha, beta)),
        }
    }

    fn domain_check(&self, quantity: &'static str, r: f64, b: f64, p: &ModelParams) -> Result<f64> {
        let err = Error::Domain { quantity, r, b };
        if !(r > 0.0) || !r.is_finite() || !b.is_finite() {
            return Err(err);
        }
        match self.bounded() {
            None => Ok(1.0),
            Some((alpha, _)) => {
                let slack = 1.0 - alpha * p.eps1 * r - p.eps3 * b;
                if slack > 0.0 {
                    Ok(slack)
                } else {
                    Err(err)
                }
            }
        }
    }

    /// Whether `(r, b)` lies in the natural domain of this pair's entropy.
    pub fn in_domain(&self, r: f64, b: f64, p: &ModelParams) -> bool {
        self.domain_check("entropy", r, b, p).is_ok()
    }

    /// Entropy density `e(r; b)`.
    pub fn entropy_density(&self, r: f64, b: f64, p: &ModelParams) -> Result<f64> {
        let slack = self.domain_check("entropy density", r, b, p)?;
        Ok(match self.bounded() {
            None => r * (r.ln() - 1.0) + 0.5 * p.eps1 * r * r + p.eps3 * r * b,
            Some(_) => r * ((r / slack).ln() - 1.0),
        })
    }

    /// Entropy variable `u = ∂e/∂r`.
    pub fn entropy_variable(&self, r: f64, b: f64, p: &ModelParams) -> Result<f64> {
        let slack = self.domain_check("entropy variable", r, b, p)?;
        Ok(match self.bounded() {
            None => r.ln() + p.eps1 * r + p.eps3 * b,
            Some((alpha, _)) => r.ln() - slack.ln() + alpha * p.eps1 * r / slack,
        })
    }

    /// `∂u/∂r`, the second derivative of the entropy density.
    pub fn entropy_variable_dr(&self, r: f64, b: f64, p: &ModelParams) -> Result<f64> {
        let slack = self.domain_check("entropy variable", r, b, p)?;
        Ok(match self.bounded() {
            None => 1.0 / r + p.eps1,
            Some((alpha, _)) => {
                let a = alpha * p.eps1;
                1.0 / r + 2.0 * a / slack + a * a * r / (slack * slack)
            }
        })
    }

    /// `∂u/∂b`.
    pub fn entropy_variable_db(&self, r: f64, b: f64, p: &ModelParams) -> Result<f64> {
        let slack = self.domain_check("entropy variable", r, b, p)?;
        Ok(match self.bounded() {
            None => p.eps3,
            Some((alpha, _)) => p.eps3 / slack + alpha * p.eps1 * r * p.eps3 / (slack * slack),
        })
    }

    /// Gradient of the entropy variable by the chain rule.
    pub fn entropy_gradient(&self, r: f64, grad_r: f64, b: f64, grad_b: f64, p: &ModelParams) -> Result<f64> {
        Ok(self.entropy_variable_dr(r, b, p)? * grad_r + self.entropy_variable_db(r, b, p)? * grad_b)
    }

    /// Mobility `m(r; b)`. Not clamped: negative values flag states outside
    /// the feasible set.
    pub fn mobility(&self, r: f64, b: f64, p: &ModelParams) -> f64 {
        match self.bounded() {
            None => r * (1.0 - p.eps2 * b),
            Some((_, beta)) => r * (1.0 - beta * p.eps1 * r - p.eps2 * b),
        }
    }

    /// Remainder `f` in `agf_flux = m ∇u + f`.
    ///
    /// Exact for the first pair. For the second pair this is the printed
    /// second-order truncation, so the decomposition holds up to `O(ε³)`.
    /// For the family it is defined as the exact difference.
    pub fn higher_order_flux(&self, r: f64, grad_r: f64, b: f64, grad_b: f64, p: &ModelParams) -> Result<f64> {
        let (e1, e2, e3) = (p.eps1, p.eps2, p.eps3);
        match self {
            EntropyPair::Pair1 => Ok(r * b * (e1 * e2 * grad_r + e2 * e3 * grad_b)),
            EntropyPair::Pair2 => {
                Ok(-e1 * r * r * (e1 * grad_r + e3 * grad_b) + (e2 - e3) * r * b * (2.0 * e1 * grad_r + e3 * grad_b))
            }
            EntropyPair::Pair3 { .. } => {
                let gu = self.entropy_gradient(r, grad_r, b, grad_b, p)?;
                Ok(agf_flux(r, grad_r, b, grad_b, p) - self.mobility(r, b, p) * gu)
            }
        }
    }
}

/// The Fokker-Planck flux `(1 + ε1 r − ε2 b) ∇r + ε3 r ∇b`; its divergence
/// is `∂t r`.
pub fn agf_flux(r: f64, grad_r: f64, b: f64, grad_b: f64, p: &ModelParams) -> f64 {
    (1.0 + p.eps1 * r - p.eps2 * b) * grad_r + p.eps3 * r * grad_b
}

/// First-order asymptotic equilibrium `1 + ε3 (1 − b)`.
pub fn asymptotic_equilibrium(b: &Field, p: &ModelParams) -> Field {
    b.map(|bi| 1.0 + p.eps3 * (1.0 - bi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn eps(e1: f64, e2: f64, e3: f64) -> ModelParams {
        ModelParams {
            eps3: e3,
            ..ModelParams::from_eps(e1, e2, 2).unwrap()
        }
    }

    #[test]
    fn derive_figure_one_parameters() {
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        // ε1 = 99 π 1e-4, ε2 = 500 π 0.0125²
        assert_relative_eq!(p.eps1, 99.0 * PI * 1e-4, max_relative = 1e-14);
        assert_relative_eq!(p.eps2, 500.0 * PI * 0.0125 * 0.0125, max_relative = 1e-14);
        assert!((p.eps1 - 0.031102).abs() < 1e-6);
        assert!((p.eps2 - 0.245437).abs() < 1e-6);
        assert_eq!(p.eps3, p.eps2);
        let phi = p.volume_fraction(1.0).unwrap();
        assert!((phi - 0.0962).abs() < 1e-4, "{phi}");
    }

    #[test]
    fn derive_degenerate_and_three_dimensional() {
        let p = ModelParams::derive(1, 0, 0.01, 0.015, 2).unwrap();
        assert_eq!((p.eps1, p.eps2, p.eps3), (0.0, 0.0, 0.0));
        assert_relative_eq!(p.volume_fraction(1.0).unwrap(), PI * 0.25e-4, max_relative = 1e-14);

        let q = ModelParams::derive(10, 20, 0.1, 0.2, 3).unwrap();
        assert_relative_eq!(q.eps1, 4.0 * 9.0 * 2.0 * PI * 1e-3 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(q.eps3, 2.0 * q.eps2);
        assert!(ModelParams::derive(10, 20, 0.1, 0.2, 4).is_err());
        assert!(ModelParams::derive(0, 20, 0.1, 0.2, 2).is_err());
        assert!(ModelParams::derive(10, 20, 0.0, 0.2, 2).is_err());
    }

    #[test]
    fn volume_fraction_of_unit_disk() {
        let p = ModelParams::derive(1, 0, 1.0, 1.0, 2).unwrap();
        assert_relative_eq!(p.volume_fraction(1.0).unwrap(), PI / 4.0);
        assert!(p.volume_fraction(0.0).is_err());
    }

    #[test]
    fn entropy_density_examples() {
        let zero = eps(0.0, 0.0, 0.0);
        assert_eq!(EntropyPair::Pair1.entropy_density(1.0, 0.0, &zero).unwrap(), -1.0);
        assert_eq!(EntropyPair::Pair2.entropy_density(1.0, 0.0, &zero).unwrap(), -1.0);
        let p = eps(0.2, 0.0, 0.1);
        assert_relative_eq!(
            EntropyPair::Pair1.entropy_density(1.0, 1.0, &p).unwrap(),
            -0.8,
            max_relative = 1e-15
        );
    }

    #[test]
    fn entropy_variable_examples() {
        let zero = eps(0.0, 0.0, 0.0);
        assert_eq!(EntropyPair::Pair1.entropy_variable(1.0, 0.0, &zero).unwrap(), 0.0);
        let p = eps(0.1, 0.0, 0.2);
        let u = EntropyPair::Pair1.entropy_variable(2.0, 0.5, &p).unwrap();
        assert!((u - 0.99315).abs() < 1e-5);
        assert_relative_eq!(u, 2f64.ln() + 0.3, max_relative = 1e-15);
    }

    #[test]
    fn domain_violations_are_errors() {
        let p = eps(0.5, 0.5, 0.5);
        assert!(EntropyPair::Pair1.entropy_density(0.0, 0.0, &p).is_err());
        assert!(EntropyPair::Pair1.entropy_variable(-1.0, 0.0, &p).is_err());
        // 1 − 0.5·1.5 − 0.5·0.5 = 0
        assert!(EntropyPair::Pair2.entropy_density(1.5, 0.5, &p).is_err());
        assert!(EntropyPair::Pair2.entropy_variable(1.0, 2.0, &p).is_err());
        // α = 1/2 keeps the same state admissible
        assert!(EntropyPair::pair3_default().entropy_density(1.5, 0.5, &p).is_ok());
    }

    #[test]
    fn pair3_constraint() {
        assert!(EntropyPair::pair3(0.5, 0.0).is_ok());
        assert!(EntropyPair::pair3(1.0, 1.0).is_ok());
        assert!(EntropyPair::pair3(0.75, 0.5).is_ok());
        assert!(EntropyPair::pair3(0.5, 0.5).is_err());
        assert!(EntropyPair::pair3(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn mobility_examples() {
        let p = eps(0.1, 0.3, 0.3);
        for pair in [EntropyPair::Pair1, EntropyPair::Pair2, EntropyPair::pair3_default()] {
            assert_eq!(pair.mobility(0.0, 0.7, &p), 0.0);
        }
        let zero = eps(0.0, 0.0, 0.0);
        assert_eq!(EntropyPair::Pair1.mobility(1.0, 0.0, &zero), 1.0);
        // ε1 r + ε2 b = 0.1·4 + 0.3·2 = 1
        assert!(EntropyPair::Pair2.mobility(4.0, 2.0, &p).abs() < 1e-15);
    }

    #[test]
    fn higher_order_flux_examples() {
        let p = eps(0.1, 0.1, 0.1);
        assert_relative_eq!(
            EntropyPair::Pair1.higher_order_flux(1.0, 1.0, 1.0, 0.0, &p).unwrap(),
            0.01,
            max_relative = 1e-14
        );
        let no_obstacles = eps(0.3, 0.0, 0.0);
        assert_eq!(
            EntropyPair::Pair1
                .higher_order_flux(1.3, 0.7, 0.4, -2.0, &no_obstacles)
                .unwrap(),
            0.0
        );
        let point_reds = eps(0.0, 0.2, 0.2);
        assert_eq!(
            EntropyPair::Pair2
                .higher_order_flux(1.3, 0.7, 0.4, -2.0, &point_reds)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn agf_flux_examples() {
        let zero = eps(0.0, 0.0, 0.0);
        assert_eq!(agf_flux(0.7, 1.3, 0.2, 5.0, &zero), 1.3);
        let p = eps(0.2, 0.1, 0.15);
        assert_relative_eq!(agf_flux(1.0, 0.0, 0.4, 1.0, &p), 0.15);
    }

    #[test]
    fn asymptotic_equilibrium_has_unit_mass() {
        let g = Grid1D::unit(64).unwrap();
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        let b = Field::cell_averages(g, &|x: f64| 0.3 * (4.0 * x * x + 3.0)).unwrap();
        let r = asymptotic_equilibrium(&b, &p);
        assert!((r.mass() - 1.0).abs() < 1e-13);
        let flat = asymptotic_equilibrium(&Field::constant(g, 1.0), &p);
        assert!(flat.values().iter().all(|&v| v == 1.0));
        let none = asymptotic_equilibrium(&b, &eps(0.1, 0.0, 0.0));
        assert!(none.values().iter().all(|&v| v == 1.0));
    }

    /// Pair2 decomposition residual at fixed state, all ε scaled together.
    fn pair2_residual(scale: f64) -> f64 {
        let p = eps(0.8 * scale, 1.1 * scale, 1.1 * scale);
        let (r, gr, b, gb) = (1.2, -0.7, 0.9, 1.3);
        let pair = EntropyPair::Pair2;
        let lhs = pair.mobility(r, b, &p) * pair.entropy_gradient(r, gr, b, gb, &p).unwrap()
            + pair.higher_order_flux(r, gr, b, gb, &p).unwrap();
        (lhs - agf_flux(r, gr, b, gb, &p)).abs()
    }

    #[test]
    fn pair2_decomposition_is_third_order() {
        let scales = [0.1, 0.05, 0.025, 0.0125];
        let xs: alloc::vec::Vec<f64> = scales.iter().map(|s: &f64| s.ln()).collect();
        let ys: alloc::vec::Vec<f64> = scales.iter().map(|&s| pair2_residual(s).ln()).collect();
        let slope = crate::diagnostics::least_squares(&xs, &ys).unwrap().slope;
        assert!(slope >= 2.7, "slope {slope}");
    }

    fn feasible_state() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64)> {
        // (ε1, ε2, r, b, grad_r, grad_b) with ε1 r + ε2 b ≤ 0.9
        (
            0.0..0.3f64,
            0.0..0.3f64,
            0.05..2.0f64,
            0.0..1.5f64,
            -3.0..3.0f64,
            -3.0..3.0f64,
        )
            .prop_filter("feasible", |(e1, e2, r, b, _, _)| e1 * r + e2 * b < 0.9)
    }

    fn all_pairs() -> [EntropyPair; 4] {
        [
            EntropyPair::Pair1,
            EntropyPair::Pair2,
            EntropyPair::pair3_default(),
            EntropyPair::Pair3 { alpha: 0.75, beta: 0.5 },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn entropy_variable_is_derivative_of_density((e1, e2, r, b, _, _) in feasible_state()) {
            let p = eps(e1, e2, e2);
            let dr = 1e-5 * r;
            for pair in all_pairs() {
                let fd = (pair.entropy_density(r + dr, b, &p).unwrap()
                    - pair.entropy_density(r - dr, b, &p).unwrap()) / (2.0 * dr);
                let u = pair.entropy_variable(r, b, &p).unwrap();
                prop_assert!((fd - u).abs() <= 1e-6 * u.abs().max(1.0), "{:?}: {} vs {}", pair, fd, u);

                let fd2 = (pair.entropy_variable(r + dr, b, &p).unwrap()
                    - pair.entropy_variable(r - dr, b, &p).unwrap()) / (2.0 * dr);
                let d2 = pair.entropy_variable_dr(r, b, &p).unwrap();
                prop_assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0));

                let db = 1e-6;
                let fdb = (pair.entropy_variable(r, b + db, &p).unwrap()
                    - pair.entropy_variable(r, b - db, &p).unwrap()) / (2.0 * db);
                let ub = pair.entropy_variable_db(r, b, &p).unwrap();
                prop_assert!((fdb - ub).abs() <= 1e-6 * ub.abs().max(1.0));
            }
        }

        #[test]
        fn entropy_density_is_strictly_convex((e1, e2, r, b, _, _) in feasible_state()) {
            let p = eps(e1, e2, e2);
            let dr = 1e-3 * r;
            for pair in all_pairs() {
                let c = pair.entropy_density(r + dr, b, &p).unwrap()
                    - 2.0 * pair.entropy_density(r, b, &p).unwrap()
                    + pair.entropy_density(r - dr, b, &p).unwrap();
                prop_assert!(c > 0.0, "{:?} second difference {}", pair, c);
            }
        }

        #[test]
        fn pair1_decomposition_is_exact((e1, e2, r, b, gr, gb) in feasible_state()) {
            let p = eps(e1, e2, e2);
            let pair = EntropyPair::Pair1;
            let lhs = pair.mobility(r, b, &p) * pair.entropy_gradient(r, gr, b, gb, &p).unwrap()
                + pair.higher_order_flux(r, gr, b, gb, &p).unwrap();
            let rhs = agf_flux(r, gr, b, gb, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
        }

        #[test]
        fn pair3_decomposition_is_exact((e1, e2, r, b, gr, gb) in feasible_state()) {
            let p = eps(e1, e2, e2);
            let pair = EntropyPair::pair3_default();
            let lhs = pair.mobility(r, b, &p) * pair.entropy_gradient(r, gr, b, gb, &p).unwrap()
                + pair.higher_order_flux(r, gr, b, gb, &p).unwrap();
            let rhs = agf_flux(r, gr, b, gb, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn eps3_follows_dimension(n_red in 1usize..500, n_blue in 0usize..500, dr in 1e-3..0.05f64, db in 1e-3..0.05f64, dim in 2u32..4) {
            let p = ModelParams::derive(n_red, n_blue, dr, db, dim).unwrap();
            prop_assert_eq!(p.eps3, (dim as f64 - 1.0) * p.eps2);
        }
    }
}
