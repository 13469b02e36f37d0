//! Parameter sweeps: the view-stride timing benchmark and one-factor
//! ablations over tau, lambda, view stride and cross stride.

use serde::Serialize;

use crate::error::Result;
use crate::fusion::FusionVariant;
use crate::metrics::time_run;
use crate::pipeline::{Pipeline, RunConfig};

/// View strides swept by default.
pub const DEFAULT_VIEW_STRIDES: [usize; 7] = [4, 8, 16, 24, 32, 40, 48];
/// Lambda values swept by default.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.1, 1.0, 10.0, 80.0, 100.0];

/// CSV header: `view_stride,cross_stride,interleave,variant,crops_per_step,denoiser_calls,median_seconds,seam_ratio`
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub view_stride: usize,
    pub cross_stride: usize,
    pub interleave: usize,
    pub variant: FusionVariant,
    pub crops_per_step: f64,
    pub denoiser_calls: usize,
    pub median_seconds: f64,
    pub seam_ratio: f64,
}

/// Copy of `base` with the given view stride; the cross stride is clamped so
/// it never exceeds the view stride.
pub fn with_view_stride(base: &RunConfig, view_stride: usize) -> RunConfig {
    RunConfig {
        view_stride,
        cross_stride: base.cross_stride.min(view_stride),
        ..base.clone()
    }
}

/// Times the pipeline at each view stride, keeping the median of
/// `repetitions` runs.
pub fn bench(
    base: &RunConfig,
    view_strides: &[usize],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    view_strides
        .iter()
        .map(|&s_v| {
            let cfg = with_view_stride(base, s_v);
            let pipeline = Pipeline::new(cfg.clone())?;
            let mut seam_ratio = 0.0;
            let timing = time_run(
                || {
                    let out = pipeline.generate_panorama()?;
                    seam_ratio = out.seam.seam_ratio;
                    Ok(out.timing)
                },
                repetitions,
            )?;
            Ok(BenchRow {
                view_stride: s_v,
                cross_stride: cfg.cross_stride,
                interleave: cfg.interleave,
                variant: cfg.fusion.variant,
                crops_per_step: timing.mean_crops_per_step(),
                denoiser_calls: timing.denoiser_calls,
                median_seconds: timing.total_seconds,
                seam_ratio,
            })
        })
        .collect()
}

/// Whether call counts never increase as the view stride grows.
pub fn calls_are_monotone(rows: &[BenchRow]) -> bool {
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.view_stride);
    sorted
        .windows(2)
        .all(|p| p[1].denoiser_calls <= p[0].denoiser_calls)
}

/// CSV header: `parameter,value,variant,seam_ratio,residual_at_tau,final_residual,denoiser_calls,seconds`
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub parameter: &'static str,
    pub value: f64,
    pub variant: FusionVariant,
    pub seam_ratio: f64,
    /// Fused overlap residual of the crops composed into the latent at tau.
    pub residual_at_tau: f64,
    /// Overlap residual of the last step's crops.
    pub final_residual: f64,
    pub denoiser_calls: usize,
    pub seconds: f64,
}

/// Grids for [`ablate`]; an empty list skips that parameter.
#[derive(Debug, Clone, Default)]
pub struct AblationGrid {
    pub taus: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub view_strides: Vec<usize>,
    pub cross_strides: Vec<usize>,
}

impl AblationGrid {
    /// Tau at 0, T/4, T/2, 3T/4 and T, the default lambdas, the default view
    /// strides and cross strides `s_v / d` for `d` in 1, 2, 3, 5, 7 and `s_v`.
    pub fn defaults(base: &RunConfig) -> Self {
        let steps = base.schedule.steps;
        let s_v = base.view_stride;
        let mut cross: Vec<usize> = [1, 2, 3, 5, 7, s_v]
            .iter()
            .map(|d| (s_v / d).max(1))
            .collect();
        cross.sort_unstable();
        cross.dedup();
        Self {
            taus: vec![0, steps / 4, steps / 2, 3 * steps / 4, steps],
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            view_strides: DEFAULT_VIEW_STRIDES
                .iter()
                .copied()
                .filter(|&v| v <= base.crop_width)
                .collect(),
            cross_strides: cross,
        }
    }
}

fn ablation_row(parameter: &'static str, value: f64, cfg: RunConfig) -> Result<AblationRow> {
    let tau = cfg.tau();
    let out = Pipeline::new(cfg.clone())?.generate_panorama()?;
    Ok(AblationRow {
        parameter,
        value,
        variant: cfg.fusion.variant,
        seam_ratio: out.seam.seam_ratio,
        residual_at_tau: out.residual_at(tau).unwrap_or(f64::NAN),
        final_residual: out.trace.last().map_or(f64::NAN, |s| s.residual_fused),
        denoiser_calls: out.timing.denoiser_calls,
        seconds: out.timing.total_seconds,
    })
}

/// One-factor-at-a-time sweep around `base`, preceded by a baseline
/// reference row.
pub fn ablate(base: &RunConfig, grid: &AblationGrid) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let mut reference = base.clone();
    reference.fusion.variant = FusionVariant::Baseline;
    rows.push(ablation_row("baseline", 0.0, reference)?);
    for &tau in &grid.taus {
        let mut cfg = base.clone();
        cfg.fusion.tau = Some(tau);
        rows.push(ablation_row("tau", tau as f64, cfg)?);
    }
    for &lambda in &grid.lambdas {
        let mut cfg = base.clone();
        cfg.fusion.lambda = lambda;
        rows.push(ablation_row("lambda", lambda, cfg)?);
    }
    for &s_v in &grid.view_strides {
        rows.push(ablation_row(
            "view_stride",
            s_v as f64,
            with_view_stride(base, s_v),
        )?);
    }
    for &s_r in &grid.cross_strides {
        let cfg = RunConfig {
            cross_stride: s_r.min(base.view_stride),
            ..base.clone()
        };
        rows.push(ablation_row("cross_stride", cfg.cross_stride as f64, cfg)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ScheduleConfig;

    fn tiny() -> RunConfig {
        RunConfig {
            pano_height: 2,
            pano_width: 24,
            channels: 1,
            crop_height: 2,
            crop_width: 8,
            view_stride: 4,
            cross_stride: 2,
            interleave: 2,
            schedule: ScheduleConfig {
                steps: 6,
                ..ScheduleConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn bench_rows_cover_strides() {
        let rows = bench(&tiny(), &[2, 4, 8], 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].cross_stride, 2);
        assert!(calls_are_monotone(&rows));
    }

    #[test]
    fn ablation_has_one_row_per_setting() {
        let base = tiny();
        let grid = AblationGrid::defaults(&base);
        let rows = ablate(&base, &grid).unwrap();
        let expected = 1
            + grid.taus.len()
            + grid.lambdas.len()
            + grid.view_strides.len()
            + grid.cross_strides.len();
        assert_eq!(rows.len(), expected);
        assert_eq!(rows[0].variant, FusionVariant::Baseline);
    }
}
