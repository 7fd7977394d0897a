//! Closed-form predictors for population size, convergence time,
//! evaluation counts and speed-ups.
//!
//! Logarithms without a stated base are natural; the proportional forms take
//! an explicit constant that the harness fits to measurements.

use serde::Serialize;

use crate::error::{Error, Result};

/// Above this inheritance probability the inheritance models are not trusted.
pub const INHERITANCE_VALIDITY_LIMIT: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FacetwiseParams {
    pub k: usize,
    pub m: usize,
    /// sigma_BB / d.
    pub noise_to_signal: f64,
    pub alpha: f64,
    pub c_n: f64,
    pub c_t: f64,
    pub fitness_variance: f64,
    pub noise_variance: f64,
    pub p_i: f64,
}

impl FacetwiseParams {
    pub fn new(k: usize, m: usize) -> Self {
        FacetwiseParams {
            k,
            m,
            noise_to_signal: 1.0,
            alpha: 1.0 / m.max(2) as f64,
            c_n: 1.0,
            c_t: 1.0,
            fitness_variance: 1.0,
            noise_variance: 0.0,
            p_i: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.fitness_variance < 0.0 || self.noise_variance < 0.0 {
            return Err(Error::InvalidArgument("variances must be non-negative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "failure probability must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.p_i) {
            return Err(Error::InvalidArgument(format!(
                "inheritance probability must be in [0, 1], got {}",
                self.p_i
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PopulationSizePrediction {
    /// `constant * 2^k * (sigma_BB/d) * m * ln m`.
    pub proportional: f64,
    /// `-c_n * ln(alpha) * 2^k * sigma_f^2 * (1 + p_i)`.
    pub with_inheritance: f64,
}

pub fn predicted_population_size(
    params: &FacetwiseParams,
    constant: f64,
) -> Result<PopulationSizePrediction> {
    params.validate()?;
    let two_k = 2f64.powi(params.k as i32);
    let m = params.m as f64;
    Ok(PopulationSizePrediction {
        proportional: constant * two_k * params.noise_to_signal * m * m.ln(),
        with_inheritance: -params.c_n
            * params.alpha.ln()
            * two_k
            * params.fitness_variance
            * (1.0 + params.p_i),
    })
}

/// `c_t * sqrt(m k) * sqrt(1 + sigma_N^2 / sigma_f^2)`.
pub fn predicted_convergence_time(params: &FacetwiseParams) -> Result<f64> {
    if params.fitness_variance <= 0.0 {
        return Err(Error::InvalidArgument("fitness variance must be positive".into()));
    }
    if params.noise_variance < 0.0 {
        return Err(Error::InvalidArgument("noise variance must be non-negative".into()));
    }
    Ok(params.c_t
        * ((params.m * params.k) as f64).sqrt()
        * (1.0 + params.noise_variance / params.fitness_variance).sqrt())
}

/// `n + n (t_c - 1)(1 - p_i)`: the initial population is always evaluated.
pub fn predicted_nfe_inheritance(n: f64, t_c: f64, p_i: f64) -> Result<f64> {
    if t_c < 1.0 {
        return Err(Error::InvalidArgument(format!("convergence time must be >= 1, got {t_c}")));
    }
    Ok(n + n * (t_c - 1.0) * (1.0 - p_i))
}

/// Evaluations with inheritance relative to none: `(1 + p)^1.5 (1 - p)`.
pub fn fe_ratio(p_i: f64) -> f64 {
    (1.0 + p_i).powf(1.5) * (1.0 - p_i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InheritanceSpeedup {
    pub speedup: f64,
    /// False for `p_i >= 0.95`, where the model is not reliable.
    pub valid: bool,
}

pub fn speedup_inheritance(p_i: f64) -> Result<InheritanceSpeedup> {
    if !(0.0..1.0).contains(&p_i) {
        return Err(Error::InvalidArgument(format!(
            "inheritance speed-up needs p_i in [0, 1), got {p_i}"
        )));
    }
    Ok(InheritanceSpeedup {
        speedup: 1.0 / fe_ratio(p_i),
        valid: p_i < INHERITANCE_VALIDITY_LIMIT,
    })
}

/// `c * sqrt(k) * ln m`.
pub fn speedup_mutation(k: usize, m: usize, c: f64) -> f64 {
    c * (k as f64).sqrt() * (m as f64).ln()
}

/// `constant * (sigma_BB/d) * sqrt(k) * 2^k * m^1.5 * ln m` for eCGA.
pub fn predicted_nfe_ecga(k: usize, m: usize, noise_to_signal: f64, constant: f64) -> f64 {
    let m = m as f64;
    constant * noise_to_signal * (k as f64).sqrt() * 2f64.powi(k as i32) * m.powf(1.5) * m.ln()
}

/// `constant * 2^k * m^1.5` for the selectomutative GA.
pub fn predicted_nfe_mutation(k: usize, m: usize, constant: f64) -> f64 {
    constant * 2f64.powi(k as i32) * (m as f64).powf(1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MutationScaling {
    /// `2^k m^1.05`.
    pub lower: f64,
    /// `2^k m^1.5`.
    pub nominal: f64,
    /// `2^k m^2.1`.
    pub upper: f64,
    /// Evaluations spent by the mutation itself: `(2^k - 1) m`.
    pub mutation_evaluations: f64,
}

pub fn scaling_bounds_mutation(k: usize, m: usize) -> MutationScaling {
    let two_k = 2f64.powi(k as i32);
    let mf = m as f64;
    MutationScaling {
        lower: two_k * mf.powf(1.05),
        nominal: two_k * mf.powf(1.5),
        upper: two_k * mf.powf(2.1),
        mutation_evaluations: (two_k - 1.0) * mf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Grid search then golden-section refinement, independent of any closed form.
    fn numeric_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let steps = 10_000;
        let mut best = lo;
        for i in 0..=steps {
            let x = lo + (hi - lo) * i as f64 / steps as f64;
            if f(x) > f(best) {
                best = x;
            }
        }
        let h = (hi - lo) / steps as f64;
        let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn fe_ratio_maximum_at_one_fifth() {
        assert_eq!(fe_ratio(0.0), 1.0);
        assert_eq!(fe_ratio(1.0), 0.0);
        let arg = numeric_argmax(fe_ratio, 0.0, 1.0);
        assert!((arg - 0.2).abs() < 1e-6, "{arg}");
        assert!((fe_ratio(0.2) - 1.0516).abs() < 1e-3);
        assert!((speedup_inheritance(0.2).unwrap().speedup - 0.95).abs() < 5e-3);
    }

    #[test]
    fn fe_ratio_monotone_pieces() {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for w in grid.windows(2) {
            if w[1] <= 0.2 {
                assert!(fe_ratio(w[1]) > fe_ratio(w[0]));
            } else if w[0] >= 0.2 {
                assert!(fe_ratio(w[1]) < fe_ratio(w[0]));
            }
        }
    }

    #[test]
    fn speedup_is_reciprocal_and_flags_validity() {
        for i in 0..1000 {
            let p = i as f64 / 1000.0;
            let s = speedup_inheritance(p).unwrap();
            assert!((s.speedup * fe_ratio(p) - 1.0).abs() < 1e-12);
            assert_eq!(s.valid, p < 0.95);
        }
        assert_eq!(speedup_inheritance(0.0).unwrap().speedup, 1.0);
        assert!(speedup_inheritance(1.0).is_err());
    }

    #[test]
    fn population_size_forms() {
        let mut p = FacetwiseParams::new(4, 10);
        p.alpha = 0.1;
        let base = predicted_population_size(&p, 1.0).unwrap();
        assert!((base.with_inheritance - 16.0 * 10f64.ln()).abs() < 1e-9);
        assert!((base.with_inheritance - 36.84).abs() < 0.01);
        p.p_i = 1.0;
        let full = predicted_population_size(&p, 1.0).unwrap();
        assert!((full.with_inheritance / base.with_inheritance - 2.0).abs() < 1e-12);

        let m = 7usize;
        let small = predicted_population_size(&FacetwiseParams::new(4, m), 1.0).unwrap();
        let big = predicted_population_size(&FacetwiseParams::new(4, 2 * m), 1.0).unwrap();
        let expected = 2.0 * (2.0 * m as f64).ln() / (m as f64).ln();
        assert!((big.proportional / small.proportional - expected).abs() < 1e-12);

        p.alpha = 1.0;
        assert!(predicted_population_size(&p, 1.0).is_err());
    }

    #[test]
    fn convergence_time_laws() {
        let mut p = FacetwiseParams::new(4, 10);
        p.c_t = 2.0;
        let quiet = predicted_convergence_time(&p).unwrap();
        assert!((quiet - 2.0 * 40f64.sqrt()).abs() < 1e-12);
        p.noise_variance = p.fitness_variance;
        assert!((predicted_convergence_time(&p).unwrap() / quiet - 2f64.sqrt()).abs() < 1e-12);
        let mut q = FacetwiseParams::new(4, 40);
        q.c_t = 2.0;
        assert!((predicted_convergence_time(&q).unwrap() / quiet - 2.0).abs() < 1e-12);
        p.fitness_variance = 0.0;
        assert!(predicted_convergence_time(&p).is_err());
    }

    #[test]
    fn nfe_with_inheritance() {
        assert_eq!(predicted_nfe_inheritance(1000.0, 10.0, 0.0).unwrap(), 10_000.0);
        assert_eq!(predicted_nfe_inheritance(1000.0, 10.0, 1.0).unwrap(), 1000.0);
        assert_eq!(predicted_nfe_inheritance(1000.0, 10.0, 0.5).unwrap(), 5500.0);
        assert!(predicted_nfe_inheritance(1000.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn mutation_speedup_laws() {
        let base = speedup_mutation(4, 10, 1.3);
        assert!((speedup_mutation(16, 10, 1.3) / base - 2.0).abs() < 1e-12);
        assert!((speedup_mutation(4, 100, 1.3) / base - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_bounds_are_ordered() {
        for m in 1..200 {
            let b = scaling_bounds_mutation(4, m);
            assert!(b.lower <= b.nominal && b.nominal <= b.upper);
        }
        assert_eq!(scaling_bounds_mutation(4, 10).mutation_evaluations, 150.0);
    }

    #[test]
    fn ecga_over_mutation_prediction_is_sqrt_k_log_m() {
        // The ratio divided by sqrt(k) ln m must be constant over the grid.
        let mut ratios = Vec::new();
        for k in 2..=6 {
            for m in [2usize, 5, 10, 40, 100] {
                let r = predicted_nfe_ecga(k, m, 1.0, 1.0) / predicted_nfe_mutation(k, m, 1.0);
                ratios.push(r / speedup_mutation(k, m, 1.0));
            }
        }
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9);
        }
    }
}
