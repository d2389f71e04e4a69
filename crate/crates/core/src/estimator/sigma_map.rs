use serde::Serialize;

use super::cnn::{NoiseClassifier, SigmaSpace, TILE};
use crate::error::{GcpError, Result};
use crate::image::PlanarImage;
use crate::parallel::Execution;

/// Tile origins along one axis: multiples of the tile size, with the last
/// tile pushed flush against the border.
fn axis_origins(extent: usize, tile: usize) -> Vec<usize> {
    if extent <= tile {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..extent - tile + 1).step_by(tile).collect();
    if *v.last().unwrap() != extent - tile {
        v.push(extent - tile);
    }
    v
}

/// Placement of classifier tiles over an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub tile: usize,
    pub row_origins: Vec<usize>,
    pub col_origins: Vec<usize>,
}

impl TileGrid {
    pub fn new(height: usize, width: usize) -> Self {
        Self::with_tile(height, width, TILE)
    }

    pub fn with_tile(height: usize, width: usize, tile: usize) -> Self {
        Self {
            height,
            width,
            tile,
            row_origins: axis_origins(height, tile),
            col_origins: axis_origins(width, tile),
        }
    }

    pub fn rows(&self) -> usize {
        self.row_origins.len()
    }

    pub fn cols(&self) -> usize {
        self.col_origins.len()
    }

    /// Tile holding pixel `(row, col)`; where flush tiles overlap, the
    /// earlier one.
    pub fn tile_of(&self, row: usize, col: usize) -> (usize, usize) {
        (
            (row / self.tile).min(self.rows() - 1),
            (col / self.tile).min(self.cols() - 1),
        )
    }

    /// Copies a tile out of `plane`, replicating edge pixels when the image
    /// is smaller than one tile.
    pub fn extract(&self, plane: &[f64], tile_row: usize, tile_col: usize) -> Vec<f64> {
        let (r0, c0) = (self.row_origins[tile_row], self.col_origins[tile_col]);
        let mut out = Vec::with_capacity(self.tile * self.tile);
        for r in 0..self.tile {
            let rr = (r0 + r).min(self.height - 1);
            for c in 0..self.tile {
                let cc = (c0 + c).min(self.width - 1);
                out.push(plane[rr * self.width + cc]);
            }
        }
        out
    }
}

/// Per-tile noise levels, raw and after 3x3 neighbourhood averaging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaMap {
    pub grid: TileGrid,
    pub space: SigmaSpace,
    /// Predicted class per tile, row-major.
    pub classes: Vec<usize>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl SigmaMap {
    /// Builds a map from per-tile predictions; the smoothed value of a tile
    /// is the mean raw value over its 3x3 neighbourhood, clipped at the
    /// borders.
    pub fn from_raw(grid: TileGrid, space: SigmaSpace, classes: Vec<usize>, raw: Vec<f64>) -> Result<Self> {
        let (rows, cols) = (grid.rows(), grid.cols());
        if raw.len() != rows * cols || classes.len() != raw.len() {
            return Err(GcpError::mismatch(format!(
                "{rows}x{cols} tiles need {} values",
                rows * cols
            )));
        }
        let mut smoothed = Vec::with_capacity(raw.len());
        for r in 0..rows {
            for c in 0..cols {
                let (mut sum, mut n) = (0.0, 0usize);
                for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                    for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                        sum += raw[rr * cols + cc];
                        n += 1;
                    }
                }
                smoothed.push(sum / n as f64);
            }
        }
        Ok(Self {
            grid,
            space,
            classes,
            raw,
            smoothed,
        })
    }

    /// Smoothed sigma governing a patch whose top-left pixel is `(row, col)`.
    pub fn sigma_at(&self, row: usize, col: usize) -> f64 {
        let (tr, tc) = self.grid.tile_of(row, col);
        self.smoothed[tr * self.grid.cols() + tc]
    }
}

/// Classifies every tile of the image's green plane and smooths the result.
pub fn estimate_sigma_map(img: &PlanarImage, net: &NoiseClassifier, exec: Execution) -> Result<SigmaMap> {
    let grid = TileGrid::new(img.height(), img.width());
    let green = img.green_plane();
    let tiles: Vec<(usize, usize)> = (0..grid.rows())
        .flat_map(|r| (0..grid.cols()).map(move |c| (r, c)))
        .collect();
    let predictions = exec.install(|| {
        exec.map(&tiles, |&(r, c)| {
            net.classify_tile(&grid.extract(&green, r, c)).map(|(class, _)| class)
        })
    });
    let classes = predictions.into_iter().collect::<Result<Vec<_>>>()?;
    let raw = classes.iter().map(|&c| net.grid().values()[c]).collect();
    SigmaMap::from_raw(grid, net.grid().space(), classes, raw)
}

/// Exact and within-one-class agreement rates between label vectors.
pub fn approximate_accuracy(predicted: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(GcpError::mismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok((1.0, 1.0));
    }
    let n = truth.len() as f64;
    let exact = predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / n;
    let approx = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.abs_diff(**t) <= 1)
        .count() as f64
        / n;
    Ok((exact, approx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SigmaGrid;
    use crate::image::ChannelSemantics;

    fn map_from(rows: usize, cols: usize, raw: Vec<f64>) -> SigmaMap {
        let grid = TileGrid::new(rows * TILE, cols * TILE);
        let n = raw.len();
        SigmaMap::from_raw(grid, SigmaSpace::Srgb, vec![0; n], raw).unwrap()
    }

    #[test]
    fn tiling_geometry() {
        let g = TileGrid::new(300, 128);
        assert_eq!(g.row_origins, vec![0, 128, 172]);
        assert_eq!(g.col_origins, vec![0]);
        assert_eq!(g.tile_of(299, 5), (2, 0));
        assert_eq!(g.tile_of(200, 0), (1, 0));
        assert_eq!(TileGrid::new(50, 50).row_origins, vec![0]);
        assert_eq!(TileGrid::new(256, 256).row_origins, vec![0, 128]);
    }

    #[test]
    fn small_images_replicate_edges() {
        let g = TileGrid::new(2, 3);
        let plane = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = g.extract(&plane, 0, 0);
        assert_eq!(t.len(), TILE * TILE);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[TILE - 1], 3.0);
        assert_eq!(t[TILE * TILE - 1], 6.0);
    }

    #[test]
    fn nine_neighbour_average() {
        let mut raw = vec![10.0; 9];
        raw[4] = 20.0;
        let m = map_from(3, 3, raw);
        assert!((m.smoothed[4] - 100.0 / 9.0).abs() < 1e-12);
        // corner sees four tiles
        assert!((m.smoothed[0] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn single_and_uniform() {
        let m = map_from(1, 1, vec![30.0]);
        assert_eq!(m.smoothed, vec![30.0]);
        let m = map_from(2, 4, vec![5.0; 8]);
        assert!(m.smoothed.iter().all(|&s| s == 5.0));
    }

    #[test]
    fn estimate_uses_green_only() {
        let net = NoiseClassifier::seeded(SigmaGrid::srgb(), 2);
        let a = PlanarImage::from_fn(200, 140, 3, ChannelSemantics::Srgb, |c, r, col| {
            ((c * 31 + r * 7 + col * 3) % 256) as f64
        })
        .unwrap();
        let mut b = a.clone();
        b.plane_mut(0).iter_mut().for_each(|v| *v = 255.0 - *v);
        b.plane_mut(2).iter_mut().for_each(|v| *v = 0.0);
        let ma = estimate_sigma_map(&a, &net, Execution::Sequential).unwrap();
        let mb = estimate_sigma_map(&b, &net, Execution::Parallel).unwrap();
        assert_eq!(ma, mb);
        assert_eq!((ma.grid.rows(), ma.grid.cols()), (2, 2));
    }

    #[test]
    fn accuracy_rates() {
        assert_eq!(approximate_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), (1.0, 1.0));
        assert_eq!(approximate_accuracy(&[2, 3, 0], &[1, 2, 1]).unwrap(), (0.0, 1.0));
        assert_eq!(approximate_accuracy(&[5, 2], &[1, 2]).unwrap(), (0.5, 0.5));
        assert!(approximate_accuracy(&[1], &[1, 2]).is_err());
    }
}
