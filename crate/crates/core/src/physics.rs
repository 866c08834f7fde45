//! Physical parameters: viscosity laws, body forces and density bounds.

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::grid::GridSpec;
use crate::operators::Averaging;

/// Spacing of the scan used to bound the viscosity on `[m, M]`.
pub const VISCOSITY_SCAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityLaw {
    Constant {
        mu0: f64,
    },
    /// `a + b ρ`
    Affine {
        a: f64,
        b: f64,
    },
    /// `a exp(b ρ)`
    Exponential {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityBounds {
    /// Smallest viscosity on the density range.
    pub mu_min: f64,
    /// Largest `|μ'|` on the density range.
    pub mu_prime_max: f64,
}

impl ViscosityLaw {
    pub fn value(&self, rho: f64) -> f64 {
        match *self {
            ViscosityLaw::Constant { mu0 } => mu0,
            ViscosityLaw::Affine { a, b } => a + b * rho,
            ViscosityLaw::Exponential { a, b } => a * (b * rho).exp(),
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match *self {
            ViscosityLaw::Constant { .. } => 0.0,
            ViscosityLaw::Affine { b, .. } => b,
            ViscosityLaw::Exponential { a, b } => a * b * (b * rho).exp(),
        }
    }

    /// Scans `[m, M]` with endpoints included; fails if `μ ≤ 0` anywhere,
    /// citing the scan point of smallest viscosity.
    pub fn bounds(&self, m: f64, big_m: f64) -> Result<ViscosityBounds> {
        if !(m <= big_m) {
            return Err(Error::invalid(format!("density range [{m}, {big_m}] is empty")));
        }
        let steps = ((big_m - m) / VISCOSITY_SCAN_STEP).ceil().max(1.0) as usize;
        let mut mu_min = f64::INFINITY;
        let mut argmin = m;
        let mut dmax = 0.0f64;
        for k in 0..=steps {
            let rho = if k == steps { big_m } else { m + k as f64 * VISCOSITY_SCAN_STEP };
            let mu = self.value(rho);
            if !mu.is_finite() {
                return Err(Error::Viscosity(format!("μ({rho}) = {mu} is not finite")));
            }
            if mu < mu_min {
                mu_min = mu;
                argmin = rho;
            }
            dmax = dmax.max(self.derivative(rho).abs());
        }
        if !(mu_min > 0.0) {
            return Err(Error::Viscosity(format!("μ({argmin}) = {mu_min} ≤ 0 on [{m}, {big_m}]")));
        }
        Ok(ViscosityBounds { mu_min, mu_prime_max: dmax })
    }
}

/// Body force presets. Time averages over a step are evaluated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingSpec {
    Zero,
    Constant {
        value: [f64; 3],
    },
    /// Downward along the last axis with magnitude `g`.
    Gravity {
        g: f64,
    },
    /// `t * value`
    Ramp {
        value: [f64; 3],
    },
    /// `f_i = a_i sin(ω t + phase) s_i(x)` with `s_i = sin(kπ x_{i+1} / L)`,
    /// or `s_i = 1` when `k = 0`.
    Sinusoid {
        amplitude: [f64; 3],
        omega: f64,
        phase: f64,
        mode: usize,
    },
}

impl ForcingSpec {
    fn spatial(&self, grid: &GridSpec, comp: usize, x: [f64; 3]) -> f64 {
        match *self {
            ForcingSpec::Sinusoid { mode, .. } if mode > 0 => {
                let a = (comp + 1) % grid.dim;
                (mode as f64 * std::f64::consts::PI * x[a] / grid.extent[a]).sin()
            }
            _ => 1.0,
        }
    }

    fn base(&self, grid: &GridSpec, comp: usize) -> f64 {
        match *self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Constant { value } | ForcingSpec::Ramp { value } => value[comp],
            ForcingSpec::Gravity { g } => {
                if comp + 1 == grid.dim {
                    -g
                } else {
                    0.0
                }
            }
            ForcingSpec::Sinusoid { amplitude, .. } => amplitude[comp],
        }
    }

    pub fn value(&self, grid: &GridSpec, comp: usize, x: [f64; 3], t: f64) -> f64 {
        let temporal = match *self {
            ForcingSpec::Ramp { .. } => t,
            ForcingSpec::Sinusoid { omega, phase, .. } => (omega * t + phase).sin(),
            _ => 1.0,
        };
        self.base(grid, comp) * temporal * self.spatial(grid, comp, x)
    }

    /// Exact mean of `f` over `[t0, t1]` at `x`.
    pub fn time_average(&self, grid: &GridSpec, comp: usize, x: [f64; 3], t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return self.value(grid, comp, x, t0);
        }
        let temporal = match *self {
            ForcingSpec::Ramp { .. } => 0.5 * (t0 + t1),
            ForcingSpec::Sinusoid { omega, phase, .. } if omega != 0.0 => {
                ((omega * t0 + phase).cos() - (omega * t1 + phase).cos()) / (omega * (t1 - t0))
            }
            ForcingSpec::Sinusoid { phase, .. } => phase.sin(),
            _ => 1.0,
        };
        self.base(grid, comp) * temporal * self.spatial(grid, comp, x)
    }

    /// Face field of `f((k+1)τ) := τ⁻¹ ∫_{kτ}^{(k+1)τ} f`.
    pub fn step_average(&self, grid: &GridSpec, t0: f64, t1: f64) -> VectorField {
        VectorField::from_fn(grid, |c, x| self.time_average(grid, c, x, t0, t1))
    }

    /// Same average by three-point Gauss quadrature in time.
    pub fn step_average_quadrature(&self, grid: &GridSpec, t0: f64, t1: f64) -> VectorField {
        let (nodes, weights) = gauss3(t0, t1);
        VectorField::from_fn(grid, |c, x| {
            nodes.iter().zip(&weights).map(|(&t, &w)| w * self.value(grid, c, x, t)).sum::<f64>() / (t1 - t0)
        })
    }

    /// `∫_0^t ‖f(s)‖² ds` with the discrete face norm, five Gauss points per step.
    pub fn l2_time_norm_sq(&self, grid: &GridSpec, t: f64, tau: f64) -> f64 {
        if matches!(self, ForcingSpec::Zero) || t <= 0.0 {
            return 0.0;
        }
        let steps = (t / tau).round().max(1.0) as usize;
        let dt = t / steps as f64;
        let mut total = 0.0;
        for k in 0..steps {
            let (nodes, weights) = gauss5(k as f64 * dt, (k + 1) as f64 * dt);
            for (&s, &w) in nodes.iter().zip(&weights) {
                let f = VectorField::from_fn(grid, |c, x| self.value(grid, c, x, s));
                total += w * f.l2_sq();
            }
        }
        total
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForcingSpec::Zero => true,
            ForcingSpec::Constant { value } | ForcingSpec::Ramp { value } => value.iter().all(|&v| v == 0.0),
            ForcingSpec::Gravity { g } => *g == 0.0,
            ForcingSpec::Sinusoid { amplitude, .. } => amplitude.iter().all(|&v| v == 0.0),
        }
    }
}

fn gauss3(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let x = (0.6f64).sqrt();
    ([m - r * x, m, m + r * x], [r * 5.0 / 9.0, r * 8.0 / 9.0, r * 5.0 / 9.0])
}

fn gauss5(a: f64, b: f64) -> ([f64; 5], [f64; 5]) {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let x1 = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let x2 = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let w0 = 128.0 / 225.0;
    let w1 = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    ([m - r * x2, m - r * x1, m, m + r * x1, m + r * x2], [r * w2, r * w1, r * w0, r * w1, r * w2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Mass diffusivity.
    pub theta: f64,
    /// Lower density bound `m`.
    pub rho_min: f64,
    /// Upper density bound `M`.
    pub rho_max: f64,
    pub viscosity: ViscosityLaw,
    pub averaging: Averaging,
    pub forcing: ForcingSpec,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<ViscosityBounds> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max.is_finite()) {
            return Err(Error::invalid(format!(
                "density bounds need 0 < m <= M, got m = {}, M = {}",
                self.rho_min, self.rho_max
            )));
        }
        self.viscosity.bounds(self.rho_min, self.rho_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_law_with_negative_values_fails() {
        let law = ViscosityLaw::Affine { a: 1.0, b: -2.0 };
        match law.bounds(0.4, 0.6) {
            Err(Error::Viscosity(msg)) => assert!(msg.starts_with("μ(0.6) = -0.19999"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let ok = ViscosityLaw::Affine { a: 1.0, b: -0.5 }.bounds(0.4, 0.6).unwrap();
        assert!((ok.mu_min - 0.7).abs() < 1e-12);
        assert_eq!(ok.mu_prime_max, 0.5);
    }

    #[test]
    fn exponential_bounds_match_endpoints() {
        let law = ViscosityLaw::Exponential { a: 0.5, b: 1.5 };
        let b = law.bounds(0.9, 1.1).unwrap();
        assert!((b.mu_min - 0.5 * (1.35f64).exp()).abs() < 1e-14);
        assert!((b.mu_prime_max - 0.75 * (1.65f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn closed_form_average_matches_quadrature() {
        let g = GridSpec::uniform(2, 4, 1.0).unwrap();
        let f = ForcingSpec::Sinusoid { amplitude: [1.0, -0.5, 0.0], omega: 3.0, phase: 0.2, mode: 2 };
        let a = f.step_average(&g, 0.1, 0.15);
        let b = f.step_average_quadrature(&g, 0.1, 0.15);
        let d = a.add_scaled(-1.0, &b).l2_sq().sqrt();
        assert!(d < 1e-10, "{d}");
        let r = ForcingSpec::Ramp { value: [0.0, 2.0, 0.0] };
        let ra = r.step_average(&g, 0.2, 0.4);
        assert!((ra.get(1, [1, 1, 0]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn forcing_time_norm_of_ramp_is_exact() {
        let g = GridSpec::uniform(2, 4, 1.0).unwrap();
        let r = ForcingSpec::Ramp { value: [0.0, 1.0, 0.0] };
        let faces = VectorField::from_fn(&g, |c, _| if c == 1 { 1.0 } else { 0.0 }).l2_sq();
        let n = r.l2_time_norm_sq(&g, 0.5, 0.1);
        assert!((n - faces * 0.125 / 3.0).abs() < 1e-14);
    }
}
