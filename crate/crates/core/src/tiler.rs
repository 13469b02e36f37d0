//! Horizontal sliding-window crop layouts, their overlap masks, and the
//! interleaved layouts used by cross sampling.
//!
//! A plan for sampling mode `k` places crops at `k·s_r + j·s_v` (taken modulo
//! the view stride, so every mode is a shifted copy of mode 0), clamps an extra
//! crop to each panorama edge when the shifted layout leaves a margin, and
//! drops duplicate offsets.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LatentGrid;
use crate::scalar::Scalar;

/// Per-cell blending weights of a crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Horizontal Gaussian bump centred on the crop, sigma = width / 4.
    Gaussian,
}

/// Binary mask selecting a contiguous band of crop columns on every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMask {
    width: usize,
    columns: Range<usize>,
}

impl ColumnMask {
    pub fn new(width: usize, columns: Range<usize>) -> Self {
        assert!(columns.start <= columns.end && columns.end <= width);
        if columns.is_empty() {
            return Self::empty(width);
        }
        Self { width, columns }
    }

    pub fn empty(width: usize) -> Self {
        Self {
            width,
            columns: 0..0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> Range<usize> {
        self.columns.clone()
    }

    pub fn count(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn contains(&self, col: usize) -> bool {
        self.columns.contains(&col)
    }

    /// Dense `height × width` 0/1 rendering of the mask.
    pub fn to_binary(&self, height: usize) -> Vec<Vec<u8>> {
        let row: Vec<u8> = (0..self.width).map(|c| self.contains(c) as u8).collect();
        vec![row; height]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropWindow<T> {
    /// 1-based position within its plan.
    pub index: usize,
    pub x_offset: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    /// Columns `[0, crop_w - s_v)`; empty on the first crop.
    pub left_mask: ColumnMask,
    /// Columns `[s_v, crop_w)`; empty on the last crop.
    pub right_mask: ColumnMask,
    /// Row-major `crop_h × crop_w` blending weights.
    pub weight: Vec<T>,
}

impl<T: Scalar> CropWindow<T> {
    pub fn end(&self) -> usize {
        self.x_offset + self.crop_w
    }

    pub fn contains_column(&self, col: usize) -> bool {
        col >= self.x_offset && col < self.end()
    }

    #[inline]
    pub fn weight_at(&self, row: usize, col: usize) -> T {
        self.weight[row * self.crop_w + col]
    }
}

/// Panorama and crop geometry shared by every sampling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGeometry {
    pub pano_h: usize,
    pub pano_w: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub view_stride: usize,
    pub cross_stride: usize,
    pub interleave: usize,
}

impl TileGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.crop_w == 0 || self.crop_h == 0 {
            return Err(Error::Tiling("crop dimensions must be positive".into()));
        }
        if self.crop_w > self.pano_w {
            return Err(Error::Tiling(format!(
                "crop width {} exceeds panorama width {}",
                self.crop_w, self.pano_w
            )));
        }
        if self.crop_h != self.pano_h {
            return Err(Error::Tiling(format!(
                "crop height {} must equal panorama height {} (horizontal tiling only)",
                self.crop_h, self.pano_h
            )));
        }
        if self.view_stride == 0 || self.view_stride > self.crop_w {
            return Err(Error::Tiling(format!(
                "view stride {} must lie in 1..={}",
                self.view_stride, self.crop_w
            )));
        }
        if self.cross_stride == 0 {
            return Err(Error::Tiling("cross stride must be at least 1".into()));
        }
        if self.interleave == 0 {
            return Err(Error::Tiling("interleave count must be at least 1".into()));
        }
        Ok(())
    }

    /// Crop offsets for sampling mode `mode_k`, strictly increasing.
    pub fn offsets(&self, mode_k: usize) -> Result<Vec<usize>> {
        self.validate()?;
        if mode_k >= self.interleave {
            return Err(Error::Tiling(format!(
                "mode {mode_k} out of range for interleave count {}",
                self.interleave
            )));
        }
        let max_off = self.pano_w - self.crop_w;
        let shift = (mode_k * self.cross_stride) % self.view_stride;
        let mut offsets = Vec::new();
        if shift > 0 {
            offsets.push(0);
        }
        offsets.extend((shift..=max_off).step_by(self.view_stride));
        if offsets.last().is_none_or(|&last| last < max_off) {
            offsets.push(max_off);
        }
        offsets.dedup();
        Ok(offsets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan<T> {
    pub mode_k: usize,
    pub windows: Vec<CropWindow<T>>,
    pub geometry: TileGeometry,
}

impl<T: Scalar> TilePlan<T> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn view_stride(&self) -> usize {
        self.geometry.view_stride
    }

    /// Interior crop edges in panorama columns (excluding 0 and the width).
    pub fn edge_columns(&self) -> Vec<usize> {
        let pano_w = self.geometry.pano_w;
        let mut edges: Vec<usize> = self
            .windows
            .iter()
            .flat_map(|w| [w.x_offset, w.end()])
            .filter(|&c| c > 0 && c < pano_w)
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

/// Builds the crop layout for sampling mode `mode_k`.
pub fn build_tile_plan<T: Scalar>(
    geometry: TileGeometry,
    mode_k: usize,
    weighting: Weighting,
) -> Result<TilePlan<T>> {
    let offsets = geometry.offsets(mode_k)?;
    let (h, w, s_v) = (geometry.crop_h, geometry.crop_w, geometry.view_stride);
    let weight = crop_weights::<T>(h, w, weighting);
    let n = offsets.len();
    let windows = offsets
        .into_iter()
        .enumerate()
        .map(|(i, x_offset)| CropWindow {
            index: i + 1,
            x_offset,
            crop_h: h,
            crop_w: w,
            left_mask: if i == 0 {
                ColumnMask::empty(w)
            } else {
                ColumnMask::new(w, 0..w - s_v)
            },
            right_mask: if i + 1 == n {
                ColumnMask::empty(w)
            } else {
                ColumnMask::new(w, s_v..w)
            },
            weight: weight.clone(),
        })
        .collect();
    Ok(TilePlan {
        mode_k,
        windows,
        geometry,
    })
}

/// One plan per sampling mode `0..interleave`.
pub fn build_all_plans<T: Scalar>(
    geometry: TileGeometry,
    weighting: Weighting,
) -> Result<Vec<TilePlan<T>>> {
    (0..geometry.interleave)
        .map(|k| build_tile_plan(geometry, k, weighting))
        .collect()
}

fn crop_weights<T: Scalar>(h: usize, w: usize, weighting: Weighting) -> Vec<T> {
    match weighting {
        Weighting::Uniform => vec![T::one(); h * w],
        Weighting::Gaussian => {
            let centre = (w as f64 - 1.0) / 2.0;
            let sigma = w as f64 / 4.0;
            let row: Vec<T> = (0..w)
                .map(|c| {
                    let d = c as f64 - centre;
                    T::of((-d * d / (2.0 * sigma * sigma)).exp())
                })
                .collect();
            row.iter().copied().cycle().take(h * w).collect()
        }
    }
}

/// Sampling mode for timestep `t` with `r` interleaved layouts.
pub fn mode_for_timestep(t: usize, r: usize) -> usize {
    debug_assert!(r >= 1);
    t % r.max(1)
}

fn check_window<T: Scalar>(pano: &LatentGrid<T>, win: &CropWindow<T>) -> Result<()> {
    if win.end() > pano.width() || win.crop_h > pano.height() {
        return Err(Error::OutOfBounds {
            offset: win.x_offset,
            width: win.crop_w,
            pano_width: pano.width(),
        });
    }
    Ok(())
}

/// Copies the window's sub-grid out of the panorama.
pub fn crop<T: Scalar>(pano: &LatentGrid<T>, win: &CropWindow<T>) -> Result<LatentGrid<T>> {
    check_window(pano, win)?;
    let c = pano.channels();
    let mut data = Vec::with_capacity(win.crop_h * win.crop_w * c);
    for row in 0..win.crop_h {
        let start = win.x_offset * c;
        data.extend_from_slice(&pano.row(row)[start..start + win.crop_w * c]);
    }
    LatentGrid::new(win.crop_h, win.crop_w, c, data)
}

/// Writes `tile` back into the panorama at the window's position.
pub fn paste<T: Scalar>(
    pano: &mut LatentGrid<T>,
    tile: &LatentGrid<T>,
    win: &CropWindow<T>,
) -> Result<()> {
    check_window(pano, win)?;
    tile.ensure_shape((win.crop_h, win.crop_w, pano.channels()))?;
    let c = pano.channels();
    let (pw, span) = (pano.width(), win.crop_w * c);
    let dst = pano.as_mut_slice();
    for row in 0..win.crop_h {
        let start = (row * pw + win.x_offset) * c;
        dst[start..start + span].copy_from_slice(tile.row(row));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(pano_w: usize, crop_w: usize, s_v: usize, s_r: usize, r: usize) -> TileGeometry {
        TileGeometry {
            pano_h: 2,
            pano_w,
            crop_h: 2,
            crop_w,
            view_stride: s_v,
            cross_stride: s_r,
            interleave: r,
        }
    }

    fn offsets(plan: &TilePlan<f64>) -> Vec<usize> {
        plan.windows.iter().map(|w| w.x_offset).collect()
    }

    #[test]
    fn mode_zero_layout() {
        let plan = build_tile_plan::<f64>(geom(256, 64, 16, 8, 2), 0, Weighting::Uniform).unwrap();
        assert_eq!(offsets(&plan), (0..=192).step_by(16).collect::<Vec<_>>());
        assert_eq!(plan.len(), (256 - 64) / 16 + 1);
    }

    #[test]
    fn shifted_layout_clamps_both_edges() {
        let plan = build_tile_plan::<f64>(geom(256, 64, 16, 8, 2), 1, Weighting::Uniform).unwrap();
        let mut want = vec![0];
        want.extend((8..=184).step_by(16));
        want.push(192);
        assert_eq!(offsets(&plan), want);
    }

    #[test]
    fn single_crop_has_no_masks() {
        let plan = build_tile_plan::<f64>(geom(64, 64, 16, 8, 1), 0, Weighting::Uniform).unwrap();
        assert_eq!(plan.len(), 1);
        assert!(plan.windows[0].left_mask.is_empty());
        assert!(plan.windows[0].right_mask.is_empty());
    }

    #[test]
    fn masks_follow_view_stride() {
        let plan = build_tile_plan::<f64>(geom(40, 16, 4, 2, 1), 0, Weighting::Uniform).unwrap();
        let mid = &plan.windows[1];
        assert_eq!(mid.left_mask.columns(), 0..12);
        assert_eq!(mid.right_mask.columns(), 4..16);
        assert!(plan.windows[0].left_mask.is_empty());
        assert!(plan.windows.last().unwrap().right_mask.is_empty());
        assert_eq!(mid.left_mask.to_binary(2)[1][11], 1);
        assert_eq!(mid.left_mask.to_binary(2)[1][12], 0);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let bad = [
            geom(32, 64, 16, 8, 1),
            geom(256, 64, 0, 8, 1),
            geom(256, 64, 65, 8, 1),
            geom(256, 64, 16, 0, 1),
            geom(256, 64, 16, 8, 0),
        ];
        for g in bad {
            assert!(
                build_tile_plan::<f64>(g, 0, Weighting::Uniform).is_err(),
                "{g:?}"
            );
        }
        assert!(build_tile_plan::<f64>(geom(256, 64, 16, 8, 2), 2, Weighting::Uniform).is_err());
        let mut tall = geom(256, 64, 16, 8, 1);
        tall.pano_h = 4;
        assert!(build_tile_plan::<f64>(tall, 0, Weighting::Uniform).is_err());
    }

    #[test]
    fn cross_stride_equal_to_view_stride_is_fixed_mapping() {
        let g = geom(256, 64, 16, 16, 2);
        let a = build_tile_plan::<f64>(g, 0, Weighting::Uniform).unwrap();
        let b = build_tile_plan::<f64>(g, 1, Weighting::Uniform).unwrap();
        assert_eq!(a.windows, b.windows);
    }

    #[test]
    fn gaussian_weights_are_positive_and_peak_in_the_middle() {
        let plan = build_tile_plan::<f64>(geom(64, 16, 8, 4, 1), 0, Weighting::Gaussian).unwrap();
        let w = &plan.windows[0];
        assert!(w.weight.iter().all(|&v| v > 0.0));
        assert!(w.weight_at(1, 7) > w.weight_at(1, 0));
        assert_eq!(w.weight_at(0, 3), w.weight_at(1, 3));
    }

    #[test]
    fn mode_cycles() {
        assert_eq!(mode_for_timestep(17, 2), 1);
        assert_eq!(mode_for_timestep(50, 3), 2);
        assert!((0..100).all(|t| mode_for_timestep(t, 1) == 0));
    }

    #[test]
    fn crop_slices_columns() {
        let pano = LatentGrid::new(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let plan = build_tile_plan::<f64>(
            TileGeometry {
                pano_h: 1,
                pano_w: 4,
                crop_h: 1,
                crop_w: 2,
                view_stride: 1,
                cross_stride: 1,
                interleave: 1,
            },
            0,
            Weighting::Uniform,
        )
        .unwrap();
        assert_eq!(
            crop(&pano, &plan.windows[1]).unwrap().as_slice(),
            &[2.0, 3.0]
        );
    }

    #[test]
    fn whole_panorama_crop_is_identity() {
        let pano = LatentGrid::<f64>::from_fn(2, 8, 3, |r, c, ch| (r + 2 * c + 5 * ch) as f64);
        let plan = build_tile_plan::<f64>(geom(8, 8, 4, 1, 1), 0, Weighting::Uniform).unwrap();
        assert_eq!(crop(&pano, &plan.windows[0]).unwrap(), pano);
    }

    #[test]
    fn out_of_bounds_window() {
        let pano = LatentGrid::<f64>::zeros(2, 8, 1);
        let mut win = build_tile_plan::<f64>(geom(8, 4, 4, 1, 1), 0, Weighting::Uniform)
            .unwrap()
            .windows[1]
            .clone();
        win.x_offset = 5;
        assert!(matches!(crop(&pano, &win), Err(Error::OutOfBounds { .. })));
    }

    proptest! {
        #[test]
        fn paste_of_crop_is_identity(seed in 0u64..1000, off in 0usize..9) {
            let pano = LatentGrid::<f64>::from_fn(2, 12, 2, |r, c, ch| {
                ((seed as usize * 31 + r * 7 + c * 3 + ch) % 17) as f64 * 0.37
            });
            let mut win = build_tile_plan::<f64>(geom(12, 4, 4, 1, 1), 0, Weighting::Uniform)
                .unwrap().windows[0].clone();
            win.x_offset = off;
            let tile = crop(&pano, &win).unwrap();
            let mut copy = LatentGrid::zeros(2, 12, 2);
            paste(&mut copy, &tile, &win).unwrap();
            for r in 0..2 { for c in off..off + 4 { for ch in 0..2 {
                prop_assert_eq!(copy.get(r, c, ch).to_bits(), pano.get(r, c, ch).to_bits());
            }}}
        }

        #[test]
        fn plans_cover_and_align(
            crop_w in 1usize..48,
            extra in 0usize..200,
            s_v_seed in 0usize..1000,
            s_r in 1usize..40,
            r in 1usize..6,
        ) {
            let s_v = 1 + s_v_seed % crop_w;
            let g = geom(crop_w + extra, crop_w, s_v, s_r, r);
            for k in 0..r {
                let plan = build_tile_plan::<f64>(g, k, Weighting::Uniform).unwrap();
                let mut covered = vec![false; g.pano_w];
                for w in &plan.windows {
                    prop_assert!(w.end() <= g.pano_w);
                    covered[w.x_offset..w.end()].iter_mut().for_each(|c| *c = true);
                }
                prop_assert!(covered.iter().all(|&c| c));
                for pair in plan.windows.windows(2) {
                    let gap = pair[1].x_offset - pair[0].x_offset;
                    prop_assert!(gap > 0 && gap <= s_v);
                }
            }
        }

        #[test]
        fn window_count_non_increasing_in_view_stride(crop_w in 2usize..40, extra in 0usize..120) {
            let counts: Vec<usize> = (1..=crop_w)
                .map(|s_v| build_tile_plan::<f64>(geom(crop_w + extra, crop_w, s_v, 1, 1), 0, Weighting::Uniform).unwrap().len())
                .collect();
            prop_assert!(counts.windows(2).all(|p| p[1] <= p[0]));
        }
    }
}
