//! Proxy coherence metrics and run timing.

use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::neighbor_shift;
use crate::grid::LatentGrid;
use crate::scalar::Scalar;
use crate::tiler::TilePlan;

/// Horizontal discontinuity at crop edges relative to the rest of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamReport {
    /// Interior crop edges of the mode-0 plan, in panorama columns.
    pub boundary_columns: Vec<usize>,
    pub boundary_discontinuity: f64,
    pub background_discontinuity: f64,
    pub seam_ratio: f64,
}

/// CSV row form of [`SeamReport`]; boundary columns are `;`-separated.
#[derive(Debug, Serialize)]
pub struct SeamRow {
    pub boundary_columns: String,
    pub boundary_discontinuity: f64,
    pub background_discontinuity: f64,
    pub seam_ratio: f64,
}

impl SeamReport {
    pub fn to_row(&self) -> SeamRow {
        SeamRow {
            boundary_columns: self
                .boundary_columns
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            boundary_discontinuity: self.boundary_discontinuity,
            background_discontinuity: self.background_discontinuity,
            seam_ratio: self.seam_ratio,
        }
    }
}

/// Mean absolute difference between columns `c - 1` and `c`, for `c` in
/// `1..width`, averaged over rows and channels. Index 0 is unused.
fn column_differences<T: Scalar>(z: &LatentGrid<T>) -> Vec<f64> {
    let (h, w, c) = z.shape();
    let mut diffs = vec![0.0; w];
    for row in 0..h {
        let r = z.row(row);
        for col in 1..w {
            for ch in 0..c {
                diffs[col] += (r[col * c + ch] - r[(col - 1) * c + ch]).abs().as_f64();
            }
        }
    }
    let n = (h * c) as f64;
    diffs.iter_mut().for_each(|d| *d /= n);
    diffs
}

/// Seam statistics of a composed panorama.
///
/// A difference column `c` (between columns `c - 1` and `c`) counts as
/// boundary when it lies within one column of a crop edge of `plans[0]`. A
/// constant image, or one without interior edges, has ratio 1. When the
/// background is perfectly flat but the boundary is not, the ratio saturates at
/// `f64::MAX`.
pub fn seam_report<T: Scalar>(z: &LatentGrid<T>, plans: &[TilePlan<T>]) -> Result<SeamReport> {
    if z.width() < 2 {
        return Err(Error::Config(
            "seam report needs a panorama at least 2 wide".into(),
        ));
    }
    let plan = plans
        .first()
        .ok_or_else(|| Error::Config("seam report needs at least one plan".into()))?;
    let edges = plan.edge_columns();
    let diffs = column_differences(z);
    let (mut boundary, mut background) = (Vec::new(), Vec::new());
    for (col, &d) in diffs.iter().enumerate().skip(1) {
        if edges.iter().any(|&e| col.abs_diff(e) <= 1) {
            boundary.push(d);
        } else {
            background.push(d);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (b, g) = (mean(&boundary), mean(&background));
    let seam_ratio = if boundary.is_empty() || (b == 0.0 && g == 0.0) {
        1.0
    } else if g == 0.0 {
        f64::MAX
    } else {
        b / g
    };
    Ok(SeamReport {
        boundary_columns: edges,
        boundary_discontinuity: b,
        background_discontinuity: g,
        seam_ratio,
    })
}

/// Sum over adjacent pairs of the squared difference between a crop's left
/// overlap and its left neighbor at the same panorama columns.
pub fn overlap_residual<T: Scalar>(crops: &[LatentGrid<T>], plan: &TilePlan<T>) -> Result<T> {
    if crops.len() != plan.len() {
        return Err(Error::Fusion(format!(
            "{} crops for a plan of {} windows",
            crops.len(),
            plan.len()
        )));
    }
    let mut total = T::zero();
    for i in 1..plan.len() {
        let (left, win) = (&plan.windows[i - 1], &plan.windows[i]);
        if win.left_mask.is_empty() {
            continue;
        }
        let shift = neighbor_shift(left, win)?;
        let (a, b) = (&crops[i - 1], &crops[i]);
        a.ensure_shape((left.crop_h, left.crop_w, b.channels()))?;
        b.ensure_shape((win.crop_h, win.crop_w, a.channels()))?;
        for row in 0..win.crop_h {
            for col in win.left_mask.columns() {
                for ch in 0..b.channels() {
                    let d = a.get(row, col + shift, ch) - b.get(row, col, ch);
                    total = total + d * d;
                }
            }
        }
    }
    Ok(total)
}

/// Timing and call accounting of one pipeline run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTiming {
    /// Input timestep of each step, in execution order (`T` down to 1).
    pub timesteps: Vec<usize>,
    pub step_seconds: Vec<f64>,
    pub crops_per_step: Vec<usize>,
    pub denoiser_calls: usize,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct TimingRow {
    pub timestep: usize,
    pub crop_count: usize,
    pub wall_clock_s: f64,
}

impl RunTiming {
    pub fn push_step(&mut self, t: usize, crops: usize, calls: usize, elapsed: Duration) {
        self.timesteps.push(t);
        self.crops_per_step.push(crops);
        self.step_seconds.push(elapsed.as_secs_f64());
        self.denoiser_calls += calls;
    }

    pub fn rows(&self) -> Vec<TimingRow> {
        self.timesteps
            .iter()
            .zip(&self.crops_per_step)
            .zip(&self.step_seconds)
            .map(|((&timestep, &crop_count), &wall_clock_s)| TimingRow {
                timestep,
                crop_count,
                wall_clock_s,
            })
            .collect()
    }

    pub fn mean_crops_per_step(&self) -> f64 {
        if self.crops_per_step.is_empty() {
            return 0.0;
        }
        self.crops_per_step.iter().sum::<usize>() as f64 / self.crops_per_step.len() as f64
    }
}

/// Runs `run` `repetitions` times serially and returns the run with the
/// median total wall clock (lower median for even counts).
pub fn time_run<F>(mut run: F, repetitions: usize) -> Result<RunTiming>
where
    F: FnMut() -> Result<RunTiming>,
{
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let mut runs = (0..repetitions)
        .map(|_| run())
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.total_seconds.total_cmp(&b.total_seconds));
    Ok(runs.swap_remove((repetitions - 1) / 2))
}
