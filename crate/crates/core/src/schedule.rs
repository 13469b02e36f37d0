//! Noise schedule and the deterministic DDIM update.
//!
//! `alpha_bars[t]` is the cumulative product of `1 - beta_i` for `i <= t`,
//! with `alpha_bars[0] = 1` so the final step lands on the clean sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LatentGrid;
use crate::scalar::Scalar;

/// How the noise term of the DDIM update is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdimForm {
    /// `sqrt(a_prev/a_t)·z + (sqrt(1/a_prev - 1) - sqrt(1/a_t - 1))·eps`.
    #[default]
    Unscaled,
    /// Same with the noise term multiplied by `sqrt(a_prev)`, which keeps every
    /// intermediate state on the forward-diffusion marginal.
    Scaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,
    alpha_bars: Vec<T>,
    form: DdimForm,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Linear betas from `beta_start` to `beta_end` inclusive over `steps`
    /// inference steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        for (name, b) in [("beta_start", beta_start), ("beta_end", beta_end)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Schedule(format!("{name} = {b} is outside (0, 1)")));
            }
        }
        if beta_start > beta_end {
            return Err(Error::Schedule(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let betas: Vec<T> = (0..steps)
            .map(|i| {
                let frac = if steps == 1 {
                    0.0
                } else {
                    i as f64 / (steps - 1) as f64
                };
                T::of(beta_start + (beta_end - beta_start) * frac)
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(T::one());
        let mut acc = T::one();
        for &b in &betas {
            acc = acc * (T::one() - b);
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alpha_bars,
            form: DdimForm::default(),
        })
    }

    /// Builds a schedule from cumulative values `alpha_bars[0..=T]`.
    ///
    /// `alpha_bars[0]` must be 1 and the sequence non-increasing inside
    /// `(0, 1]`. Flat stretches are accepted here (they make the DDIM step an
    /// identity), so the derived betas lie in `[0, 1)`.
    pub fn from_alpha_bars(alpha_bars: Vec<T>) -> Result<Self> {
        if alpha_bars.len() < 2 {
            return Err(Error::Schedule("need at least one step".into()));
        }
        if alpha_bars[0] != T::one() {
            return Err(Error::Schedule("alpha_bars[0] must equal 1".into()));
        }
        for (t, pair) in alpha_bars.windows(2).enumerate() {
            let (prev, cur) = (pair[0], pair[1]);
            if !(cur > T::zero() && cur <= T::one()) {
                return Err(Error::Schedule(format!(
                    "alpha_bars[{}] = {cur} is outside (0, 1]",
                    t + 1
                )));
            }
            if cur > prev {
                return Err(Error::Schedule(format!(
                    "alpha_bars increases at step {}",
                    t + 1
                )));
            }
        }
        let betas = alpha_bars
            .windows(2)
            .map(|p| T::one() - p[1] / p[0])
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            form: DdimForm::default(),
        })
    }

    pub fn with_form(mut self, form: DdimForm) -> Self {
        self.form = form;
        self
    }

    pub fn form(&self) -> DdimForm {
        self.form
    }

    /// Number of inference steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars
    }

    /// Cumulative alpha at timestep `t` (`0 ..= T`).
    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bars[t]
    }

    fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }

    /// Coefficients `(a, b)` with `z_{t-1} = a·z_t + b·eps`.
    pub fn ddim_coefficients(&self, t: usize) -> Result<(T, T)> {
        self.check_timestep(t)?;
        Ok(ddim_coefficients(
            self.alpha_bars[t - 1],
            self.alpha_bars[t],
            self.form,
        ))
    }
}

/// Coefficients of the DDIM update between cumulative alphas `alpha_prev`
/// (at `t-1`) and `alpha_t`.
pub fn ddim_coefficients<T: Scalar>(alpha_prev: T, alpha_t: T, form: DdimForm) -> (T, T) {
    let one = T::one();
    let a = (alpha_prev / alpha_t).sqrt();
    let b = (one / alpha_prev - one).sqrt() - (one / alpha_t - one).sqrt();
    match form {
        DdimForm::Unscaled => (a, b),
        DdimForm::Scaled => (a, alpha_prev.sqrt() * b),
    }
}

/// One deterministic DDIM step from `z_t` to `z_{t-1}` given the noise
/// prediction `eps_hat`.
pub fn ddim_step<T: Scalar>(
    z_t: &LatentGrid<T>,
    eps_hat: &LatentGrid<T>,
    t: usize,
    sched: &NoiseSchedule<T>,
) -> Result<LatentGrid<T>> {
    eps_hat.ensure_shape(z_t.shape())?;
    let (a, b) = sched.ddim_coefficients(t)?;
    z_t.ensure_finite("ddim_step z_t")?;
    eps_hat.ensure_finite("ddim_step eps_hat")?;
    z_t.zip_map(eps_hat, |z, e| a * z + b * e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_beta_product() {
        let s = NoiseSchedule::<f64>::linear(3, 0.1, 0.1).unwrap();
        assert_eq!(s.betas(), &[0.1, 0.1, 0.1]);
        assert!((s.alpha_bar(3) - 0.729).abs() < 1e-15);
    }

    #[test]
    fn single_step() {
        let s = NoiseSchedule::<f64>::linear(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::<f64>::linear(0, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::<f64>::linear(5, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::<f64>::linear(5, 0.1, 1.0).is_err());
        assert!(NoiseSchedule::<f64>::linear(5, 0.3, 0.2).is_err());
    }

    #[test]
    fn linear_endpoints_are_inclusive() {
        let s = NoiseSchedule::<f64>::linear(50, 0.00085, 0.012).unwrap();
        assert_eq!(s.betas()[0], 0.00085);
        assert!((s.betas()[49] - 0.012).abs() < 1e-18);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        // sqrt(0.81/0.25) + sqrt(1/0.81 - 1) - sqrt(1/0.25 - 1)
        let expected = 1.8 + (0.234_567_901_234_567_9_f64).sqrt() - 3f64.sqrt();
        assert!((expected - 0.552_271).abs() < 1e-6);
        let s = NoiseSchedule::from_alpha_bars(vec![1.0, 0.81, 0.25]).unwrap();
        let z = LatentGrid::filled(1, 1, 1, 1.0);
        let out = ddim_step(&z, &z, 2, &s).unwrap();
        assert!((out.get(0, 0, 0) - expected).abs() < 1e-14);
    }

    #[test]
    fn flat_schedule_is_identity() {
        let s = NoiseSchedule::from_alpha_bars(vec![1.0, 0.5, 0.5]).unwrap();
        let z = LatentGrid::from_fn(2, 3, 1, |r, c, _| (r * 3 + c) as f64 - 2.5);
        let e = z.map(|v| v * 7.0 + 1.0);
        let out = ddim_step(&z, &e, 2, &s).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn zero_noise_rescales() {
        let s = NoiseSchedule::<f64>::linear(10, 0.01, 0.02).unwrap();
        let z = LatentGrid::filled(2, 2, 1, 3.0);
        let out = ddim_step(&z, &LatentGrid::zeros(2, 2, 1), 4, &s).unwrap();
        let k = (s.alpha_bar(3) / s.alpha_bar(4)).sqrt();
        assert_eq!(out.get(1, 1, 0), 3.0 * k);
    }

    #[test]
    fn step_errors() {
        let s = NoiseSchedule::<f64>::linear(4, 0.1, 0.2).unwrap();
        let z = LatentGrid::zeros(2, 2, 1);
        assert!(matches!(
            ddim_step(&z, &LatentGrid::zeros(2, 3, 1), 1, &s),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ddim_step(&z, &z, 0, &s),
            Err(Error::TimestepOutOfRange { .. })
        ));
        assert!(matches!(
            ddim_step(&z, &z, 5, &s),
            Err(Error::TimestepOutOfRange { .. })
        ));
        let mut bad = z.clone();
        bad.as_mut_slice()[0] = f64::INFINITY;
        assert!(matches!(
            ddim_step(&bad, &z, 1, &s),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn scaled_form_stays_on_marginal() {
        let s = NoiseSchedule::<f64>::linear(20, 0.01, 0.2)
            .unwrap()
            .with_form(DdimForm::Scaled);
        // z_t = sqrt(a_t) x0 + sqrt(1 - a_t) eps must map to the t-1 marginal.
        let (x0, eps) = (0.7, -1.3);
        let t = 11;
        let z = s.alpha_bar(t).sqrt() * x0 + (1.0 - s.alpha_bar(t)).sqrt() * eps;
        let (a, b) = s.ddim_coefficients(t).unwrap();
        let want = s.alpha_bar(t - 1).sqrt() * x0 + (1.0 - s.alpha_bar(t - 1)).sqrt() * eps;
        assert!((a * z + b * eps - want).abs() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let s = NoiseSchedule::<f32>::linear(3, 0.1, 0.1).unwrap();
        assert!((s.alpha_bar(3) - 0.729).abs() < 1e-6);
    }
}
