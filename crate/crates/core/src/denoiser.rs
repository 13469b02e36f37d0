//! Per-crop noise predictors.
//!
//! Synthetic denoisers steer every crop towards a procedural target pattern
//! `G`, which makes whole trajectories analytically checkable. The sampler
//! applies the DDIM update itself, so a denoiser only predicts noise.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::signed_uniform_at;
use crate::{Grid, Schedule};

/// Procedural target content, evaluated at absolute panorama coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    /// `intercept + slope · column`, identical on every row and channel.
    HorizontalRamp {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `±amplitude` squares of side `cell`.
    Checkerboard { cell: usize, amplitude: f64 },
    /// Value noise on a lattice of spacing `period`, smoothstep-interpolated,
    /// independent per channel.
    SmoothNoise {
        seed: u64,
        period: usize,
        amplitude: f64,
    },
}

impl Default for Pattern {
    fn default() -> Self {
        Pattern::SmoothNoise {
            seed: 7,
            period: 16,
            amplitude: 1.0,
        }
    }
}

impl Pattern {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Pattern::HorizontalRamp { slope, intercept } => {
                slope.is_finite() && intercept.is_finite()
            }
            Pattern::Checkerboard { cell, amplitude } => cell > 0 && amplitude.is_finite(),
            Pattern::SmoothNoise {
                period, amplitude, ..
            } => period > 0 && amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Denoiser(format!(
                "invalid pattern parameters: {self:?}"
            )))
        }
    }

    /// Pattern value at absolute `(row, col, ch)`.
    pub fn value(&self, row: usize, col: usize, ch: usize) -> f64 {
        match *self {
            Pattern::HorizontalRamp { slope, intercept } => intercept + slope * col as f64,
            Pattern::Checkerboard { cell, amplitude } => {
                if (row / cell + col / cell).is_multiple_of(2) {
                    amplitude
                } else {
                    -amplitude
                }
            }
            Pattern::SmoothNoise {
                seed,
                period,
                amplitude,
            } => {
                let lattice = |lr: usize, lc: usize| {
                    let key = ((ch as u64) << 48) ^ ((lr as u64) << 24) ^ lc as u64;
                    signed_uniform_at(seed, key)
                };
                let (lr, lc) = (row / period, col / period);
                let fy = smoothstep((row % period) as f64 / period as f64);
                let fx = smoothstep((col % period) as f64 / period as f64);
                let top = lerp(lattice(lr, lc), lattice(lr, lc + 1), fx);
                let bottom = lerp(lattice(lr + 1, lc), lattice(lr + 1, lc + 1), fx);
                amplitude * lerp(top, bottom, fy)
            }
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Samples `pattern` on a `height × width × channels` grid whose first column
/// sits at panorama column `x_offset`.
pub fn sample_pattern(
    pattern: &Pattern,
    x_offset: usize,
    shape: (usize, usize, usize),
) -> Result<Grid> {
    pattern.validate()?;
    let (h, w, c) = shape;
    Ok(Grid::from_fn(h, w, c, |row, col, ch| {
        pattern.value(row, x_offset + col, ch)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    /// Returns the unique noise making `z_t` a forward diffusion of the target
    /// sampled at the crop's panorama offset.
    #[default]
    ExactNoise,
    /// As `ExactNoise` but the target is sampled in crop-local coordinates, so
    /// neighboring crops disagree on their overlap.
    CropAnchored,
    /// Returns a constant grid.
    Constant,
    /// Forwards to a registered host callback.
    External,
}

/// How strongly the clean estimate is tied to the target.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorMode {
    /// Clean estimate is exactly the target: `x0 = G`.
    #[default]
    Strict,
    /// Clean estimate keeps a fraction of the current latent:
    /// `x0 = (1 - retain)·G + retain·z_t`, with `retain` in `[0, 1)`.
    Retain { retain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    pub target: Option<Pattern>,
    pub anchor: AnchorMode,
    /// Output value of the `constant` kind.
    pub constant: f64,
    /// Opaque conditioning token, forwarded to external denoisers.
    pub condition: String,
    /// Busy-wait per call, in microseconds.
    pub simulated_cost_us: u64,
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::ExactNoise,
            target: Some(Pattern::default()),
            anchor: AnchorMode::Strict,
            constant: 0.0,
            condition: String::new(),
            simulated_cost_us: 0,
        }
    }
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DenoiserKind::ExactNoise | DenoiserKind::CropAnchored => match &self.target {
                Some(p) => p.validate()?,
                None => {
                    return Err(Error::Denoiser(format!(
                        "{:?} denoiser needs a target pattern",
                        self.kind
                    )))
                }
            },
            DenoiserKind::Constant if !self.constant.is_finite() => {
                return Err(Error::Denoiser("constant must be finite".into()))
            }
            _ => {}
        }
        if let AnchorMode::Retain { retain } = self.anchor {
            if !(0.0..1.0).contains(&retain) {
                return Err(Error::Denoiser(format!(
                    "retain {retain} is outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn simulated_cost(&self) -> Duration {
        Duration::from_micros(self.simulated_cost_us)
    }
}

/// Predicts the noise component of a crop latent.
pub trait Denoiser: Send + Sync {
    /// Noise estimate for crop latent `z_t` whose left edge sits at panorama
    /// column `x_offset`.
    fn predict_noise(
        &self,
        z_t: &Grid,
        t: usize,
        x_offset: usize,
        sched: &Schedule,
    ) -> Result<Grid>;

    /// Serial denoisers are never called concurrently.
    fn is_serial(&self) -> bool {
        false
    }
}

/// The in-process synthetic denoisers (`exact_noise`, `crop_anchored`,
/// `constant`).
#[derive(Debug, Clone)]
pub struct SyntheticDenoiser {
    spec: DenoiserSpec,
}

impl SyntheticDenoiser {
    pub fn new(spec: DenoiserSpec) -> Result<Self> {
        if spec.kind == DenoiserKind::External {
            return Err(Error::Denoiser(
                "external denoiser requires a registered callback".into(),
            ));
        }
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn target(&self, x_offset: usize, shape: (usize, usize, usize)) -> Result<Grid> {
        let pattern = self.spec.target.as_ref().expect("validated");
        let origin = match self.spec.kind {
            DenoiserKind::CropAnchored => 0,
            _ => x_offset,
        };
        sample_pattern(pattern, origin, shape)
    }
}

impl Denoiser for SyntheticDenoiser {
    fn predict_noise(
        &self,
        z_t: &Grid,
        t: usize,
        x_offset: usize,
        sched: &Schedule,
    ) -> Result<Grid> {
        if t == 0 || t > sched.steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                steps: sched.steps(),
            });
        }
        spin(self.spec.simulated_cost());
        let (h, w, c) = z_t.shape();
        if self.spec.kind == DenoiserKind::Constant {
            return Ok(Grid::filled(h, w, c, self.spec.constant));
        }
        let target = self.target(x_offset, z_t.shape())?;
        let clean = match self.spec.anchor {
            AnchorMode::Strict => target,
            AnchorMode::Retain { retain } => {
                target.zip_map(z_t, |g, z| (1.0 - retain) * g + retain * z)?
            }
        };
        let alpha = sched.alpha_bar(t);
        let (signal, sigma) = (alpha.sqrt(), (1.0 - alpha).sqrt());
        let residual = z_t.zip_map(&clean, |z, x0| z - signal * x0)?;
        if sigma == 0.0 {
            if residual.as_slice().iter().all(|&r| r == 0.0) {
                return Ok(residual);
            }
            return Err(Error::Denoiser(format!(
                "alpha_bar at t={t} is 1 but the latent is not the clean target"
            )));
        }
        Ok(residual.map(|r| r / sigma))
    }
}

fn spin(cost: Duration) {
    if cost.is_zero() {
        return;
    }
    let start = Instant::now();
    while start.elapsed() < cost {
        std::hint::spin_loop();
    }
}
