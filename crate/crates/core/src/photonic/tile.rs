//! Splitting large inputs into 28×28 tiles and stitching tile outputs.
//!
//! Each tile carries a halo read from its neighbours (zeros outside the
//! image), so convolving a tile without padding yields exactly the interior
//! of the un-tiled "same" convolution.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TILE: usize = 28;

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    /// Top-left corner of the tile's core in the image.
    pub origin: (usize, usize),
    /// `C × (tile + 2·halo) × (tile + 2·halo)`.
    pub data: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchMap {
    pub image_size: (usize, usize),
    pub tile: usize,
    pub halo: usize,
    pub grid: (usize, usize),
}

pub fn tile_count(h: usize, w: usize, tile: usize) -> usize {
    h.div_ceil(tile) * w.div_ceil(tile)
}

pub fn tile_input(image: &Tensor, tile: usize, halo: usize) -> Result<(Vec<Tile>, StitchMap)> {
    image.expect_rank(3, "tile_input")?;
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    if h == 0 || w == 0 || tile == 0 {
        return Err(Error::param("tile_input", "image and tile extents must be positive"));
    }
    let grid = (h.div_ceil(tile), w.div_ceil(tile));
    let side = tile + 2 * halo;
    let mut tiles = Vec::with_capacity(grid.0 * grid.1);
    for row in 0..grid.0 {
        for col in 0..grid.1 {
            let (y0, x0) = (row * tile, col * tile);
            let data = Tensor::from_fn([c, side, side], |i| {
                let ch = i / (side * side);
                let ty = (i / side) % side;
                let tx = i % side;
                let iy = (y0 + ty).checked_sub(halo);
                let ix = (x0 + tx).checked_sub(halo);
                match (iy, ix) {
                    (Some(y), Some(x)) if y < h && x < w => image.at3(ch, y, x),
                    _ => 0.0,
                }
            });
            tiles.push(Tile {
                row,
                col,
                origin: (y0, x0),
                data,
            });
        }
    }
    Ok((
        tiles,
        StitchMap {
            image_size: (h, w),
            tile,
            halo,
            grid,
        },
    ))
}

impl StitchMap {
    /// Reassembles per-tile outputs of shape `C'×tile×tile` (the valid
    /// convolution of each haloed tile), cropping ragged edges.
    pub fn stitch(&self, outputs: &[Tensor]) -> Result<Tensor> {
        if outputs.len() != self.grid.0 * self.grid.1 {
            return Err(Error::shape("stitch", &[outputs.len()], &[self.grid.0 * self.grid.1]));
        }
        let c = outputs.first().map_or(0, |t| t.shape()[0]);
        let (h, w) = self.image_size;
        let mut out = Tensor::zeros([c, h, w]);
        for (i, t) in outputs.iter().enumerate() {
            if t.shape() != [c, self.tile, self.tile] {
                return Err(Error::shape("stitch tile", t.shape(), &[c, self.tile, self.tile]));
            }
            let (y0, x0) = ((i / self.grid.1) * self.tile, (i % self.grid.1) * self.tile);
            let buf = out.data_mut();
            for ch in 0..c {
                for y in 0..self.tile.min(h - y0) {
                    for x in 0..self.tile.min(w - x0) {
                        buf[(ch * h + y0 + y) * w + x0 + x] = t.at3(ch, y, x);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::ops::conv_forward;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn tile_counts() {
        assert_eq!(tile_count(224, 224, TILE), 64);
        assert_eq!(tile_count(28, 28, TILE), 1);
        assert_eq!(tile_count(56, 56, TILE), 4);
    }

    #[test]
    fn single_tile_identity_stitch() {
        let mut r = rng::stream(0, &[]);
        let img = Tensor::from_fn([2, 28, 28], |_| r.random_range(0.0..1.0));
        let (tiles, map) = tile_input(&img, TILE, 0).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(map.stitch(&[tiles[0].data.clone()]).unwrap(), img);
    }

    #[test]
    fn stitched_conv_matches_untiled() {
        let mut r = rng::stream(1, &[]);
        for &(h, w) in &[(56, 56), (30, 45)] {
            let img = Tensor::from_fn([2, h, w], |_| r.random_range(-1.0..1.0));
            let wt = Tensor::from_fn([3, 2, 3, 3], |_| r.random_range(-1.0..1.0));
            let b = Tensor::from_fn([3], |_| r.random_range(-1.0..1.0));
            let full = conv_forward(&img, &wt, &b, 1, 1).unwrap();
            let (tiles, map) = tile_input(&img, TILE, 1).unwrap();
            let outs: Vec<_> = tiles.iter().map(|t| conv_forward(&t.data, &wt, &b, 1, 0).unwrap()).collect();
            let stitched = map.stitch(&outs).unwrap();
            assert!(crate::tensor::max_relative_error(stitched.data(), full.data(), 1e-12) <= 1e-9);
        }
    }
}
