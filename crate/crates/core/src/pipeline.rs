//! End-to-end panorama and twin-pair generation.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserKind, DenoiserSpec, SyntheticDenoiser};
use crate::error::{Error, Result};
use crate::external::{ExternalCallback, ExternalDenoiser, ExternalHandle};
use crate::fusion::{
    fuse_crop_pair, fuse_weighted_average, twin_fusion_sweep, FusionConfig, FusionVariant,
};
use crate::metrics::{overlap_residual, seam_report, RunTiming, SeamReport};
use crate::noise::gaussian_field;
use crate::schedule::{ddim_step, DdimForm};
use crate::tiler::{build_all_plans, build_tile_plan, crop, mode_for_timestep, TileGeometry};
use crate::{Grid, Plan, Schedule, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub form: DdimForm,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            beta_start: 0.00085,
            beta_end: 0.012,
            form: DdimForm::Unscaled,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<Schedule> {
        Ok(Schedule::linear(self.steps, self.beta_start, self.beta_end)?.with_form(self.form))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Panorama,
    TwinPair,
}

/// Complete description of a run. Dimensions and strides are in latent cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pano_height: usize,
    pub pano_width: usize,
    pub channels: usize,
    pub crop_height: usize,
    pub crop_width: usize,
    pub schedule: ScheduleConfig,
    pub view_stride: usize,
    pub cross_stride: usize,
    pub interleave: usize,
    pub fusion: FusionConfig,
    pub denoiser: DenoiserSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pano_height: 64,
            pano_width: 256,
            channels: 4,
            crop_height: 64,
            crop_width: 64,
            schedule: ScheduleConfig::default(),
            view_stride: 16,
            cross_stride: 8,
            interleave: 2,
            fusion: FusionConfig::default(),
            denoiser: DenoiserSpec::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            mode: RunMode::Panorama,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn geometry(&self) -> TileGeometry {
        TileGeometry {
            pano_h: self.pano_height,
            pano_w: self.pano_width,
            crop_h: self.crop_height,
            crop_w: self.crop_width,
            view_stride: self.view_stride,
            cross_stride: self.cross_stride,
            interleave: self.interleave,
        }
    }

    pub fn tau(&self) -> usize {
        self.fusion.tau_for(self.schedule.steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be at least 1".into()));
        }
        if self.crop_width > self.pano_width || self.crop_height > self.pano_height {
            return Err(Error::Config(format!(
                "crop {}x{} exceeds panorama {}x{}",
                self.crop_height, self.crop_width, self.pano_height, self.pano_width
            )));
        }
        if self.cross_stride > self.view_stride {
            return Err(Error::Config(format!(
                "cross stride {} exceeds view stride {}",
                self.cross_stride, self.view_stride
            )));
        }
        self.geometry().validate()?;
        self.schedule.build()?;
        self.fusion.validate(self.schedule.steps)?;
        self.denoiser.validate()?;
        Ok(())
    }
}

/// Diagnostics of one sampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Input timestep; the step produces the latent at `t - 1`.
    pub t: usize,
    pub mode_k: usize,
    pub crops: usize,
    /// Overlap residual of the raw per-crop predictions.
    pub residual_raw: f64,
    /// Overlap residual after pairwise fusion (equal to raw when inactive).
    pub residual_fused: f64,
}

#[derive(Debug, Clone)]
pub struct PanoramaOutput {
    pub latent: Grid,
    pub seam: SeamReport,
    pub timing: RunTiming,
    pub trace: Vec<StepTrace>,
}

impl PanoramaOutput {
    /// Fused overlap residual of the crop set composed into the latent at
    /// timestep `t_out`.
    pub fn residual_at(&self, t_out: usize) -> Option<f64> {
        self.trace
            .iter()
            .find(|s| s.t == t_out + 1)
            .map(|s| s.residual_fused)
    }
}

#[derive(Debug, Clone)]
pub struct TwinPairOutput {
    pub first: Grid,
    pub second_raw: Grid,
    pub second_fused: Grid,
    /// Overlap width in columns (`crop_width - view_stride`).
    pub overlap: usize,
    /// Per step (T down to 1): overlap L2 mismatch of raw and fused second
    /// crop against the first crop, after the step.
    pub mismatch_raw: Vec<f64>,
    pub mismatch_fused: Vec<f64>,
    pub timing: RunTiming,
}

impl TwinPairOutput {
    pub fn final_mismatch_raw(&self) -> f64 {
        overlap_mismatch(&self.first, &self.second_raw, self.overlap)
    }

    pub fn final_mismatch_fused(&self) -> f64 {
        overlap_mismatch(&self.first, &self.second_fused, self.overlap)
    }

    /// Mismatch trace keyed by the timestep each step produced.
    pub fn mismatch_rows(&self) -> Vec<MismatchRow> {
        let steps = self.mismatch_raw.len();
        self.mismatch_raw
            .iter()
            .zip(&self.mismatch_fused)
            .enumerate()
            .map(|(i, (&raw, &fused))| MismatchRow {
                timestep: steps - i - 1,
                raw,
                fused,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchRow {
    pub timestep: usize,
    pub raw: f64,
    pub fused: f64,
}

/// L2 distance between the right `overlap` columns of `left` and the left
/// `overlap` columns of `right`.
pub fn overlap_mismatch(left: &Grid, right: &Grid, overlap: usize) -> f64 {
    let (h, w, c) = left.shape();
    let mut acc = 0.0;
    for row in 0..h {
        for col in 0..overlap {
            for ch in 0..c {
                let d = left.get(row, w - overlap + col, ch) - right.get(row, col, ch);
                acc += d * d;
            }
        }
    }
    acc.sqrt()
}

/// A validated run configuration plus the optional host denoiser.
pub struct Pipeline {
    cfg: RunConfig,
    external: Option<Arc<ExternalDenoiser>>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            external: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Routes `external` denoiser calls through `callback`. Only one callback
    /// may be registered per pipeline.
    pub fn register_external_denoiser(
        &mut self,
        callback: ExternalCallback,
    ) -> Result<ExternalHandle> {
        if self.external.is_some() {
            return Err(Error::External("a callback is already registered".into()));
        }
        let ext = Arc::new(ExternalDenoiser::new(
            callback,
            self.cfg.denoiser.condition.clone(),
        ));
        self.external = Some(Arc::clone(&ext));
        Ok(ExternalHandle::new(ext))
    }

    fn denoiser(&self) -> Result<Arc<dyn Denoiser>> {
        match self.cfg.denoiser.kind {
            DenoiserKind::External => match &self.external {
                Some(ext) => Ok(Arc::clone(ext) as Arc<dyn Denoiser>),
                None => Err(Error::Denoiser(
                    "external denoiser selected but no callback registered".into(),
                )),
            },
            _ => Ok(Arc::new(SyntheticDenoiser::new(self.cfg.denoiser.clone())?)),
        }
    }

    pub fn run(&self) -> Result<RunOutput> {
        match self.cfg.mode {
            RunMode::Panorama => self.generate_panorama().map(RunOutput::Panorama),
            RunMode::TwinPair => self.generate_twin_pair().map(RunOutput::TwinPair),
        }
    }

    pub fn generate_panorama(&self) -> Result<PanoramaOutput> {
        let cfg = &self.cfg;
        let sched = cfg.schedule.build()?;
        let steps = sched.steps();
        let plans: Vec<Plan> = build_all_plans(cfg.geometry(), cfg.fusion.weighting)?;
        let denoiser = self.denoiser()?;
        let stepper = CropStepper::new(denoiser.as_ref(), &sched, cfg.workers)?;
        let shape = (cfg.pano_height, cfg.pano_width, cfg.channels);
        let fixed_ref = cfg.fusion.variant == FusionVariant::TwinFixedReference;

        let mut z = gaussian_field(cfg.seed, shape.0, shape.1, shape.2);
        // Unfused shadow trajectory supplying the constant references.
        let mut shadow = fixed_ref.then(|| z.clone());
        let mut timing = RunTiming::default();
        let mut trace = Vec::with_capacity(steps);
        let run_start = Instant::now();

        for t in (1..=steps).rev() {
            let step_start = Instant::now();
            let calls_before = stepper.calls();
            let plan = &plans[mode_for_timestep(t, cfg.interleave)];
            let denoised = stepper.step_crops(&z, plan, t)?;
            let refs = match shadow.as_mut() {
                Some(sz) => {
                    let raw = stepper.step_crops(sz, plan, t)?;
                    *sz = compose(plan, &raw, shape)?;
                    Some(raw)
                }
                None => None,
            };
            let fused = twin_fusion_sweep(&denoised, plan, &cfg.fusion, t, steps, refs.as_deref())?;
            trace.push(StepTrace {
                t,
                mode_k: plan.mode_k,
                crops: plan.len(),
                residual_raw: overlap_residual(&denoised, plan)?,
                residual_fused: overlap_residual(&fused, plan)?,
            });
            z = compose(plan, &fused, shape)?;
            timing.push_step(
                t,
                plan.len(),
                stepper.calls() - calls_before,
                step_start.elapsed(),
            );
        }
        timing.total_seconds = run_start.elapsed().as_secs_f64();
        let seam = seam_report(&z, &plans)?;
        Ok(PanoramaOutput {
            latent: z,
            seam,
            timing,
            trace,
        })
    }

    /// Two crops sharing their overlap noise: the first and the raw second are
    /// denoised independently; the fused second is pulled towards the first
    /// crop's trajectory while fusion is active.
    pub fn generate_twin_pair(&self) -> Result<TwinPairOutput> {
        let cfg = &self.cfg;
        let sched = cfg.schedule.build()?;
        let steps = sched.steps();
        let overlap = cfg.crop_width - cfg.view_stride;
        if overlap == 0 {
            return Err(Error::Config(
                "twin pair needs crops that overlap (view stride < crop width)".into(),
            ));
        }
        let geometry = TileGeometry {
            pano_h: cfg.crop_height,
            pano_w: cfg.crop_width + cfg.view_stride,
            crop_h: cfg.crop_height,
            crop_w: cfg.crop_width,
            view_stride: cfg.view_stride,
            cross_stride: cfg.view_stride,
            interleave: 1,
        };
        let plan: Plan = build_tile_plan(geometry, 0, cfg.fusion.weighting)?;
        let (w1, w2) = (&plan.windows[0], &plan.windows[1]);
        let denoiser = self.denoiser()?;
        let stepper = CropStepper::new(denoiser.as_ref(), &sched, 1)?;

        let noise = gaussian_field(cfg.seed, geometry.pano_h, geometry.pano_w, cfg.channels);
        let mut first = crop(&noise, w1)?;
        let mut second_raw = crop(&noise, w2)?;
        let mut second_fused = second_raw.clone();
        let lambda = cfg.fusion.lambda;
        let mut timing = RunTiming::default();
        let (mut mismatch_raw, mut mismatch_fused) = (Vec::new(), Vec::new());
        let run_start = Instant::now();

        for t in (1..=steps).rev() {
            let step_start = Instant::now();
            let calls_before = stepper.calls();
            first = stepper.step_one(&first, w1, t)?;
            second_raw = stepper.step_one(&second_raw, w2, t)?;
            let own = stepper.step_one(&second_fused, w2, t)?;
            second_fused = if cfg.fusion.active_at(t, steps) {
                let anchor = match cfg.fusion.variant {
                    FusionVariant::TwinFixedReference => &second_raw,
                    _ => &own,
                };
                fuse_crop_pair(&first, w1, anchor, w2, lambda)?
            } else {
                own
            };
            mismatch_raw.push(overlap_mismatch(&first, &second_raw, overlap));
            mismatch_fused.push(overlap_mismatch(&first, &second_fused, overlap));
            timing.push_step(t, 2, stepper.calls() - calls_before, step_start.elapsed());
        }
        timing.total_seconds = run_start.elapsed().as_secs_f64();
        Ok(TwinPairOutput {
            first,
            second_raw,
            second_fused,
            overlap,
            mismatch_raw,
            mismatch_fused,
            timing,
        })
    }
}

pub enum RunOutput {
    Panorama(PanoramaOutput),
    TwinPair(TwinPairOutput),
}

fn compose(plan: &Plan, crops: &[Grid], shape: (usize, usize, usize)) -> Result<Grid> {
    let pairs: Vec<(&Window, &Grid)> = plan.windows.iter().zip(crops).collect();
    fuse_weighted_average(&pairs, shape)
}

/// Crops, predicts and DDIM-steps crops, optionally on a worker pool.
struct CropStepper<'a> {
    denoiser: &'a dyn Denoiser,
    sched: &'a Schedule,
    pool: Option<rayon::ThreadPool>,
    calls: AtomicUsize,
}

impl<'a> CropStepper<'a> {
    fn new(denoiser: &'a dyn Denoiser, sched: &'a Schedule, workers: usize) -> Result<Self> {
        let pool = if workers > 1 && !denoiser.is_serial() {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            denoiser,
            sched,
            pool,
            calls: AtomicUsize::new(0),
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn step_one(&self, z: &Grid, win: &Window, t: usize) -> Result<Grid> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let eps = self
            .denoiser
            .predict_noise(z, t, win.x_offset, self.sched)
            .map_err(|e| Error::DenoiserCall {
                crop: win.index,
                t,
                source: Box::new(e),
            })?;
        ddim_step(z, &eps, t, self.sched)
    }

    /// Results come back in window order regardless of scheduling.
    fn step_crops(&self, pano: &Grid, plan: &Plan, t: usize) -> Result<Vec<Grid>> {
        let work = |win: &Window| self.step_one(&crop(pano, win)?, win, t);
        match &self.pool {
            Some(pool) => pool.install(|| plan.windows.par_iter().map(work).collect()),
            None => plan.windows.iter().map(work).collect(),
        }
    }
}
