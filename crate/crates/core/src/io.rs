//! Output files.
//!
//! Raw grid format (`.pnf`): the magic `PNF1`, then `u32` height, width and
//! channels (little-endian), then every value as a little-endian `f64` in
//! row-major `(row, column, channel)` order.
//!
//! Images are 8-bit binary PNM after a per-channel min-max map to `[0, 255]`
//! (a channel with zero range maps to 0): one channel becomes a P5 graymap,
//! three or more become a P6 pixmap of the first three channels, and two
//! channels a P5 of channel 0.
//!
//! CSV headers:
//! - seam report: `boundary_columns,boundary_discontinuity,background_discontinuity,seam_ratio`
//! - timing: `timestep,crop_count,wall_clock_s`

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{RunTiming, SeamReport};
use crate::Grid;

pub const RAW_MAGIC: &[u8; 4] = b"PNF1";

pub fn encode_raw(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + grid.len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    for dim in [grid.height(), grid.width(), grid.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> std::result::Result<Grid, String> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err("missing PNF1 header".into());
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != h * w * c * 8 {
        return Err(format!(
            "payload has {} bytes, expected {} for {h}x{w}x{c}",
            body.len(),
            h * w * c * 8
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Grid::new(h, w, c, data).map_err(|e| e.to_string())
}

pub fn write_raw(path: &Path, grid: &Grid) -> Result<()> {
    fs::write(path, encode_raw(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Min-max maps channel `ch` to bytes, row-major.
fn channel_bytes(grid: &Grid, ch: usize) -> Vec<u8> {
    let c = grid.channels();
    let values = || grid.as_slice().iter().skip(ch).step_by(c);
    let lo = values().cloned().fold(f64::INFINITY, f64::min);
    let hi = values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Encodes the grid as P5 or P6; returns the bytes and the file extension.
pub fn encode_pnm(grid: &Grid) -> (Vec<u8>, &'static str) {
    let (h, w, c) = grid.shape();
    if c >= 3 {
        let planes: Vec<Vec<u8>> = (0..3).map(|ch| channel_bytes(grid, ch)).collect();
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for i in 0..h * w {
            out.extend(planes.iter().map(|p| p[i]));
        }
        (out, "ppm")
    } else {
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(channel_bytes(grid, 0));
        (out, "pgm")
    }
}

/// Writes the image next to `stem`, choosing `.pgm` or `.ppm`.
pub fn write_pnm(stem: &Path, grid: &Grid) -> Result<PathBuf> {
    let (bytes, ext) = encode_pnm(grid);
    let path = stem.with_extension(ext);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Serializes rows to a CSV string (header included).
pub fn csv_string<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Files produced by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub raw: PathBuf,
    pub image: PathBuf,
    pub seam_csv: Option<PathBuf>,
    pub timing_csv: Option<PathBuf>,
}

/// Writes `<dir>/<name>.pnf`, the image, and the CSV reports when given.
pub fn write_outputs(
    dir: &Path,
    name: &str,
    grid: &Grid,
    seam: Option<&SeamReport>,
    timing: Option<&RunTiming>,
) -> Result<WrittenFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = dir.join(name);
    let raw = stem.with_extension("pnf");
    write_raw(&raw, grid)?;
    let image = write_pnm(&stem, grid)?;
    let seam_csv = match seam {
        Some(report) => {
            let path = dir.join(format!("{name}_seam.csv"));
            write_csv(&path, [report.to_row()])?;
            Some(path)
        }
        None => None,
    };
    let timing_csv = match timing {
        Some(t) => {
            let path = dir.join(format!("{name}_timing.csv"));
            write_csv(&path, t.rows())?;
            Some(path)
        }
        None => None,
    };
    Ok(WrittenFiles {
        raw,
        image,
        seam_csv,
        timing_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_range_maps_to_zero() {
        let g = Grid::filled(1, 1, 1, 0.0);
        let (bytes, ext) = encode_pnm(&g);
        assert_eq!(ext, "pgm");
        assert_eq!(bytes, b"P5\n1 1\n255\n\0");
    }

    #[test]
    fn linear_map() {
        let g = Grid::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let (bytes, _) = encode_pnm(&g);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 85, 170, 255]);
    }

    #[test]
    fn colour_uses_first_three_channels() {
        let g = Grid::from_fn(1, 2, 4, |_, c, ch| (c * (ch + 1)) as f64);
        let (bytes, ext) = encode_pnm(&g);
        assert_eq!(ext, "ppm");
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(px, &[0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn header_layout() {
        let g = Grid::new(1, 2, 3, vec![0.5; 6]).unwrap();
        let bytes = encode_raw(&g);
        assert_eq!(&bytes[..4], b"PNF1");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(&bytes[16..24], &0.5f64.to_le_bytes());
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_raw(b"nope").is_err());
        let mut bytes = encode_raw(&Grid::zeros(1, 1, 1));
        bytes.pop();
        assert!(decode_raw(&bytes).is_err());
    }

    #[test]
    fn write_outputs_creates_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::from_fn(2, 3, 1, |r, c, _| (r + c) as f64);
        let files =
            write_outputs(dir.path(), "pano", &g, None, Some(&RunTiming::default())).unwrap();
        assert_eq!(read_raw(&files.raw).unwrap(), g);
        assert!(files.image.ends_with("pano.pgm"));
        let timing = fs::read_to_string(files.timing_csv.unwrap()).unwrap();
        assert!(timing.is_empty() || timing.starts_with("timestep"));
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = read_raw(Path::new("/nonexistent/dir/x.pnf")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.pnf"));
    }

    proptest! {
        #[test]
        fn raw_round_trip_is_bit_exact(
            h in 1usize..4, w in 1usize..5, c in 1usize..3,
            seed in any::<u64>(),
        ) {
            let g = Grid::from_fn(h, w, c, |r, col, ch| {
                let x = seed.wrapping_mul(6364136223846793005).wrapping_add((r * 97 + col * 13 + ch) as u64);
                (x >> 11) as f64 * 1e-12 - 4.0e3
            });
            let back = decode_raw(&encode_raw(&g)).unwrap();
            prop_assert!(back.as_slice().iter().zip(g.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
