//! Grayscale morphology with square kernels and edge replication.
//!
//! A square structuring element separates into a horizontal and a vertical
//! pass, so erosion and dilation run in O(k) per pixel instead of O(k^2).
//! Edge replication is equivalent to clamping the window to the image
//! domain: replicated values are duplicates, which min/max ignore.

use ndarray::Array2;

use crate::error::{Error, Result};

fn check_kernel(kernel_size: usize) -> Result<usize> {
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "morphology kernel must be odd and >= 1, got {kernel_size}"
        )));
    }
    Ok(kernel_size / 2)
}

fn filter_1d_rows<F: Fn(f32, f32) -> f32 + Copy>(
    src: &Array2<f32>,
    radius: usize,
    pick: F,
    init: f32,
) -> Array2<f32> {
    let (h, w) = src.dim();
    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            let mut acc = init;
            for xi in lo..=hi {
                acc = pick(acc, src[[y, xi]]);
            }
            out[[y, x]] = acc;
        }
    }
    out
}

fn filter_1d_cols<F: Fn(f32, f32) -> f32 + Copy>(
    src: &Array2<f32>,
    radius: usize,
    pick: F,
    init: f32,
) -> Array2<f32> {
    let (h, w) = src.dim();
    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            let mut acc = init;
            for yi in lo..=hi {
                acc = pick(acc, src[[yi, x]]);
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Min filter over a `kernel_size` square window.
pub fn erode(map: &Array2<f32>, kernel_size: usize) -> Result<Array2<f32>> {
    let radius = check_kernel(kernel_size)?;
    let rows = filter_1d_rows(map, radius, f32::min, f32::INFINITY);
    Ok(filter_1d_cols(&rows, radius, f32::min, f32::INFINITY))
}

/// Max filter over a `kernel_size` square window.
pub fn dilate(map: &Array2<f32>, kernel_size: usize) -> Result<Array2<f32>> {
    let radius = check_kernel(kernel_size)?;
    let rows = filter_1d_rows(map, radius, f32::max, f32::NEG_INFINITY);
    Ok(filter_1d_cols(&rows, radius, f32::max, f32::NEG_INFINITY))
}

/// Grayscale opening: `iterations` erosions followed by `iterations`
/// dilations.
pub fn opening(map: &Array2<f32>, kernel_size: usize, iterations: usize) -> Result<Array2<f32>> {
    check_kernel(kernel_size)?;
    let mut out = map.clone();
    for _ in 0..iterations {
        out = erode(&out, kernel_size)?;
    }
    for _ in 0..iterations {
        out = dilate(&out, kernel_size)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive O(k^2) reference used to pin the separable implementation.
    pub fn brute_force_opening(
        map: &Array2<f32>,
        kernel_size: usize,
        iterations: usize,
    ) -> Array2<f32> {
        let radius = kernel_size / 2;
        let window = |src: &Array2<f32>, y: usize, x: usize, min: bool| {
            let (h, w) = src.dim();
            let mut acc = if min { f32::INFINITY } else { f32::NEG_INFINITY };
            for dy in -(radius as isize)..=radius as isize {
                for dx in -(radius as isize)..=radius as isize {
                    let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    acc = if min {
                        acc.min(src[[yy, xx]])
                    } else {
                        acc.max(src[[yy, xx]])
                    };
                }
            }
            acc
        };
        let apply = |src: &Array2<f32>, min: bool| {
            let (h, w) = src.dim();
            Array2::from_shape_fn((h, w), |(y, x)| window(src, y, x, min))
        };
        let mut out = map.clone();
        for _ in 0..iterations {
            out = apply(&out, true);
        }
        for _ in 0..iterations {
            out = apply(&out, false);
        }
        out
    }

    #[test]
    fn constant_map_is_unchanged() {
        let map = Array2::from_elem((10, 14), 0.42f32);
        let out = opening(&map, 3, 1).unwrap();
        assert_eq!(out, map);
    }

    #[test]
    fn isolated_pixel_is_suppressed() {
        let mut map = Array2::from_elem((9, 9), 0.1f32);
        map[[4, 4]] = 1.0;
        let out = opening(&map, 3, 1).unwrap();
        // The spike cannot survive erosion; it collapses to the surround.
        assert_eq!(out[[4, 4]], 0.1);
        assert_eq!(out, Array2::from_elem((9, 9), 0.1f32));
    }

    #[test]
    fn solid_block_interior_preserved_and_matches_oracle() {
        let mut map = Array2::from_elem((16, 16), 0.0f32);
        for y in 5..10 {
            for x in 5..10 {
                map[[y, x]] = 1.0;
            }
        }
        let out = opening(&map, 3, 1).unwrap();
        let oracle = brute_force_opening(&map, 3, 1);
        assert_eq!(out, oracle);
        // 5x5 block survives a 3x3 opening intact.
        assert_eq!(out[[7, 7]], 1.0);
        assert_eq!(out[[5, 5]], 1.0);
    }

    #[test]
    fn random_maps_match_brute_force_exactly() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let map = Array2::from_shape_fn((16, 16), |_| rng.random::<f32>());
            for k in [1usize, 3, 5] {
                let out = opening(&map, k, 1).unwrap();
                let oracle = brute_force_opening(&map, k, 1);
                assert_eq!(out, oracle, "kernel {k}");
            }
        }
    }

    #[test]
    fn opening_is_idempotent() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
        for _ in 0..10 {
            let map = Array2::from_shape_fn((16, 16), |_| rng.random::<f32>());
            let once = opening(&map, 3, 1).unwrap();
            let twice = opening(&once, 3, 1).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn opening_anti_extensive_on_interior() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(79);
        let map = Array2::from_shape_fn((16, 16), |_| rng.random::<f32>());
        let out = opening(&map, 3, 1).unwrap();
        for y in 1..15 {
            for x in 1..15 {
                assert!(out[[y, x]] <= map[[y, x]]);
            }
        }
    }

    #[test]
    fn even_kernel_is_rejected() {
        let map = Array2::zeros((4, 4));
        assert!(erode(&map, 2).is_err());
        assert!(dilate(&map, 4).is_err());
        assert!(opening(&map, 0, 1).is_err());
    }
}
