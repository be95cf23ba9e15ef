use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{imageops, GrayImage, Rgb, RgbImage};

use crate::images::{list_pngs, open_gray, open_rgb, stem};

/// Gap between panels and around the border, in pixels.
pub const MARGIN: u32 = 4;
const BACKDROP: Rgb<u8> = Rgb([255, 255, 255]);

/// Row order of the grid: vehicle-resampled outputs, then all-resampled.
const ROWS: [&str; 2] = ["vehicles", "all"];

/// Grid size for panels of `(width, height)` laid out in `cols × rows`.
pub fn grid_dims((pw, ph): (u32, u32), cols: u32, rows: u32) -> (u32, u32) {
    (cols * pw + (cols + 1) * MARGIN, rows * ph + (rows + 1) * MARGIN)
}

fn to_rgb(img: &GrayImage) -> RgbImage {
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let v = img.get_pixel(x, y).0[0];
        Rgb([v, v, v])
    })
}

/// Outputs of each mode directory grouped by source stem, in filename order.
fn outputs(run: &Path) -> Result<BTreeMap<String, [Vec<PathBuf>; 2]>> {
    let mut by_source: BTreeMap<String, [Vec<PathBuf>; 2]> = BTreeMap::new();
    for (row, mode) in ROWS.iter().enumerate() {
        for path in list_pngs(&run.join(mode))? {
            let name = stem(&path);
            let Some((source, _)) = name.rsplit_once('_') else {
                continue;
            };
            by_source.entry(source.to_string()).or_default()[row].push(path);
        }
    }
    Ok(by_source)
}

/// One grid per source: the source RGB image first, then the
/// vehicle-resampled outputs on the top row and the all-resampled outputs
/// on the row below. Returns the written paths.
pub fn run(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let groups = outputs(run_dir)?;
    if groups.is_empty() {
        bail!(
            "{} holds no translate outputs (expected vehicles/ or all/ subdirectories)",
            run_dir.display()
        );
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut written = Vec::new();
    for (source, rows) in groups {
        let src_path = run_dir.join("sources").join(format!("{source}.png"));
        let src = open_rgb(&src_path)?;
        let panel = src.dimensions();
        let cols = 1 + rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
        let (gw, gh) = grid_dims(panel, cols, ROWS.len() as u32);
        let mut grid = RgbImage::from_pixel(gw, gh, BACKDROP);
        let at = |col: u32, row: u32| {
            (
                i64::from(MARGIN + col * (panel.0 + MARGIN)),
                i64::from(MARGIN + row * (panel.1 + MARGIN)),
            )
        };
        let (x, y) = at(0, 0);
        imageops::replace(&mut grid, &src, x, y);
        for (r, files) in rows.iter().enumerate() {
            for (c, path) in files.iter().enumerate() {
                let img = to_rgb(&open_gray(path)?);
                if img.dimensions() != panel {
                    bail!("{} is {:?}, expected {:?}", path.display(), img.dimensions(), panel);
                }
                let (x, y) = at(c as u32 + 1, r as u32);
                imageops::replace(&mut grid, &img, x, y);
            }
        }
        let path = out_dir.join(format!("{source}.png"));
        grid.save(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    println!("{} gallery grids in {}", written.len(), out_dir.display());
    Ok(written)
}
