//! 8-bit grayscale image dumps and side-by-side figure grids.

use std::path::Path;

use crate::error::{Error, Result};

/// Converts values to 8-bit gray, mapping `[0, scale]` onto `[0, 255]`.
pub fn to_gray(values: &[f32], scale: f32) -> Vec<u8> {
    let s = if scale > 0.0 { scale } else { 1.0 };
    values.iter().map(|v| ((v / s).clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn save_gray_png(path: &Path, size: usize, values: &[f32], scale: f32) -> Result<()> {
    if values.len() != size * size {
        return Err(Error::Shape(format!("{} values for a {size}x{size} image", values.len())));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let img = image::GrayImage::from_raw(size as u32, size as u32, to_gray(values, scale))
        .expect("buffer length checked above");
    img.save(path)?;
    Ok(())
}

/// One panel of a grid: a square plane and the value mapped to white.
pub struct Panel<'a> {
    pub values: &'a [f32],
    pub scale: f32,
}

/// Writes rows of equally sized square panels as one PNG, with a 2-pixel
/// gap between panels.
pub fn save_grid(path: &Path, size: usize, rows: &[Vec<Panel<'_>>]) -> Result<()> {
    const GAP: usize = 2;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(Error::InvalidValue("empty image grid".into()));
    }
    let w = cols * size + (cols - 1) * GAP;
    let h = rows.len() * size + (rows.len() - 1) * GAP;
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for (r, row) in rows.iter().enumerate() {
        for (c, panel) in row.iter().enumerate() {
            if panel.values.len() != size * size {
                return Err(Error::Shape(format!("panel ({r}, {c}) has {} values", panel.values.len())));
            }
            let gray = to_gray(panel.values, panel.scale);
            for (p, v) in gray.into_iter().enumerate() {
                let x = c * (size + GAP) + p % size;
                let y = r * (size + GAP) + p / size;
                img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    img.save(path)?;
    Ok(())
}
