//! Crop fusion.
//!
//! Two strategies reconcile overlapping crops:
//!
//! - the weighted average, which pastes every crop back into the panorama and
//!   divides by the accumulated weights;
//! - pairwise crop fusion, the closed-form minimizer of
//!   `‖n − v‖² + λ‖f − v‖²` over the cells of a crop's left overlap, where `n`
//!   is the left neighbor's value at the same panorama column and `f` the
//!   crop's own prediction (its "anchor"). The minimizer is
//!   `(n + λ·f) / (1 + λ)` on the overlap and `f` elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LatentGrid;
use crate::scalar::Scalar;
use crate::tiler::{CropWindow, TilePlan};

pub use crate::tiler::Weighting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    /// Weighted average only.
    Baseline,
    /// Left-to-right pairwise fusion, then the weighted average.
    #[default]
    Twin,
    /// Pairwise fusion anchored to a separately supplied reference trajectory
    /// instead of each crop's own prediction.
    TwinFixedReference,
}

/// Which version of the left neighbor a crop is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSource {
    /// The neighbor after its own fusion (progressive sweep).
    #[default]
    Optimized,
    /// The neighbor's raw prediction.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub variant: FusionVariant,
    pub lambda: f64,
    /// Fusion runs while `t > tau`; `None` means `T / 2`.
    pub tau: Option<usize>,
    pub weighting: Weighting,
    pub neighbor: NeighborSource,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            variant: FusionVariant::Twin,
            lambda: 1.0,
            tau: None,
            weighting: Weighting::Uniform,
            neighbor: NeighborSource::Optimized,
        }
    }
}

impl FusionConfig {
    pub fn tau_for(&self, steps: usize) -> usize {
        self.tau.unwrap_or(steps / 2)
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Fusion(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.tau_for(steps) > steps {
            return Err(Error::Fusion(format!(
                "tau {} exceeds step count {steps}",
                self.tau_for(steps)
            )));
        }
        Ok(())
    }

    /// Whether pairwise fusion runs at timestep `t`.
    pub fn active_at(&self, t: usize, steps: usize) -> bool {
        self.variant != FusionVariant::Baseline && t > self.tau_for(steps)
    }
}

/// Column shift from crop `win` to its left neighbor, checked so every
/// left-overlap cell has a partner inside the neighbor.
pub(crate) fn neighbor_shift<T: Scalar>(
    neighbor_win: &CropWindow<T>,
    win: &CropWindow<T>,
) -> Result<usize> {
    if win.x_offset <= neighbor_win.x_offset {
        return Err(Error::Fusion(format!(
            "neighbor at column {} is not left of crop at column {}",
            neighbor_win.x_offset, win.x_offset
        )));
    }
    let shift = win.x_offset - neighbor_win.x_offset;
    if win.left_mask.columns().end + shift > neighbor_win.crop_w {
        return Err(Error::Fusion(format!(
            "left overlap of crop {} extends past neighbor {}",
            win.index, neighbor_win.index
        )));
    }
    Ok(shift)
}

/// Closed-form pairwise fusion of crop `win` against its left neighbor.
///
/// On the left-overlap cells the result is `(n + λ·f) / (1 + λ)` with `n` the
/// neighbor value at the same panorama column and `f` the anchor; all other
/// cells copy the anchor.
pub fn fuse_crop_pair<T: Scalar>(
    neighbor: &LatentGrid<T>,
    neighbor_win: &CropWindow<T>,
    anchor: &LatentGrid<T>,
    win: &CropWindow<T>,
    lambda: T,
) -> Result<LatentGrid<T>> {
    if !(lambda >= T::zero() && lambda.is_finite()) {
        return Err(Error::Fusion(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if win.left_mask.is_empty() {
        return Err(Error::Fusion(format!(
            "crop {} has no left overlap to fuse",
            win.index
        )));
    }
    let channels = anchor.channels();
    anchor.ensure_shape((win.crop_h, win.crop_w, channels))?;
    neighbor.ensure_shape((neighbor_win.crop_h, neighbor_win.crop_w, channels))?;
    if neighbor_win.crop_h != win.crop_h {
        return Err(Error::Fusion("neighbor and crop heights differ".into()));
    }
    let shift = neighbor_shift(neighbor_win, win)?;
    let denom = T::one() + lambda;
    let mut out = anchor.clone();
    for row in 0..win.crop_h {
        for col in win.left_mask.columns() {
            for ch in 0..channels {
                let n = neighbor.get(row, col + shift, ch);
                let f = anchor.get(row, col, ch);
                out.set(row, col, ch, (n + lambda * f) / denom);
            }
        }
    }
    Ok(out)
}

/// Composes crops into a panorama of `pano_shape` by per-cell weighted
/// averaging. Crops are accumulated in slice order.
pub fn fuse_weighted_average<T: Scalar>(
    crops: &[(&CropWindow<T>, &LatentGrid<T>)],
    pano_shape: (usize, usize, usize),
) -> Result<LatentGrid<T>> {
    let (h, w, c) = pano_shape;
    if crops.is_empty() {
        return Err(Error::Fusion("no crops to compose".into()));
    }
    let mut num = LatentGrid::<T>::zeros(h, w, c);
    let mut den = vec![T::zero(); h * w];
    for (win, tile) in crops {
        if win.end() > w || win.crop_h > h {
            return Err(Error::OutOfBounds {
                offset: win.x_offset,
                width: win.crop_w,
                pano_width: w,
            });
        }
        tile.ensure_shape((win.crop_h, win.crop_w, c))?;
        let acc = num.as_mut_slice();
        for row in 0..win.crop_h {
            let src = tile.row(row);
            for col in 0..win.crop_w {
                let weight = win.weight_at(row, col);
                let pc = win.x_offset + col;
                den[row * w + pc] = den[row * w + pc] + weight;
                let base = (row * w + pc) * c;
                for ch in 0..c {
                    acc[base + ch] = acc[base + ch] + weight * src[col * c + ch];
                }
            }
        }
    }
    let acc = num.as_mut_slice();
    for row in 0..h {
        for col in 0..w {
            let d = den[row * w + col];
            if d <= T::zero() {
                return Err(Error::ZeroWeight { row, col });
            }
            let base = (row * w + col) * c;
            for v in &mut acc[base..base + c] {
                *v = *v / d;
            }
        }
    }
    Ok(num)
}

/// Progressive left-to-right fusion of one timestep's denoised crops.
///
/// Returns the inputs unchanged when fusion is inactive at `t`. Otherwise crop
/// 1 passes through and each later crop is fused against its left neighbor
/// (already fused, unless [`NeighborSource::Raw`]). The anchor is the crop's
/// own prediction, or `fixed_refs[i]` for [`FusionVariant::TwinFixedReference`].
pub fn twin_fusion_sweep<T: Scalar>(
    denoised: &[LatentGrid<T>],
    plan: &TilePlan<T>,
    cfg: &FusionConfig,
    t: usize,
    steps: usize,
    fixed_refs: Option<&[LatentGrid<T>]>,
) -> Result<Vec<LatentGrid<T>>> {
    if denoised.len() != plan.len() {
        return Err(Error::Fusion(format!(
            "{} crops for a plan of {} windows",
            denoised.len(),
            plan.len()
        )));
    }
    if !cfg.active_at(t, steps) {
        return Ok(denoised.to_vec());
    }
    let anchors = match cfg.variant {
        FusionVariant::TwinFixedReference => {
            let refs = fixed_refs.ok_or_else(|| {
                Error::Fusion("fixed-reference fusion needs reference crops".into())
            })?;
            if refs.len() != plan.len() {
                return Err(Error::Fusion(format!(
                    "{} reference crops for a plan of {} windows",
                    refs.len(),
                    plan.len()
                )));
            }
            refs
        }
        _ => denoised,
    };
    let lambda = T::of(cfg.lambda);
    let mut out: Vec<LatentGrid<T>> = Vec::with_capacity(denoised.len());
    out.push(denoised[0].clone());
    for i in 1..plan.len() {
        let win = &plan.windows[i];
        if win.left_mask.is_empty() {
            out.push(denoised[i].clone());
            continue;
        }
        let neighbor = match cfg.neighbor {
            NeighborSource::Optimized => &out[i - 1],
            NeighborSource::Raw => &denoised[i - 1],
        };
        let fused = fuse_crop_pair(neighbor, &plan.windows[i - 1], &anchors[i], win, lambda)?;
        out.push(fused);
    }
    Ok(out)
}
