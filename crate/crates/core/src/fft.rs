//! Multi-dimensional complex FFT over interleaved, voxel-major buffers.
//!
//! A buffer holds `m` components per voxel, voxel index `k0 + N k1 + N^2 k2`
//! (axis 0 fastest), so the element of component `c` at voxel `v` sits at
//! `v * m + c`. Each axis is transformed by gathering its lines into
//! contiguous rows, running the 1D transform on the rows in parallel, and
//! scattering back. Transforms are unnormalized in both directions.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Minimum number of elements handed to one rayon task.
const TASK_ELEMS: usize = 1 << 14;

/// Lines gathered per task.
const LINE_TILE: usize = 32;

/// Rows scattered per task.
const ROW_TILE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone)]
pub struct FftEngine {
    side: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine")
            .field("side", &self.side)
            .field("dim", &self.dim)
            .finish()
    }
}

impl FftEngine {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        FftEngine {
            side: grid.side(),
            dim: grid.dim(),
            forward: planner.plan_fft_forward(grid.side()),
            inverse: planner.plan_fft_inverse(grid.side()),
        }
    }

    /// In-place transform of all `m` components. `scratch` is resized as needed.
    pub fn transform(
        &self,
        data: &mut [Complex64],
        m: usize,
        dir: Direction,
        scratch: &mut Vec<Complex64>,
    ) {
        let n = self.side;
        debug_assert_eq!(data.len(), m * n.pow(self.dim as u32));
        let fft = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let mut inner = m;
        for _ in 0..self.dim {
            transform_axis(data, scratch, n, inner, fft);
            inner *= n;
        }
    }
}

fn rows_per_task(n: usize) -> usize {
    (TASK_ELEMS / n).max(1)
}

fn transform_axis(
    data: &mut [Complex64],
    scratch: &mut Vec<Complex64>,
    n: usize,
    inner: usize,
    fft: &Arc<dyn Fft<f64>>,
) {
    if inner == 1 {
        data.par_chunks_mut(n * rows_per_task(n))
            .for_each(|rows| fft.process(rows));
        return;
    }
    let block = n * inner;
    scratch.resize(data.len(), Complex64::new(0.0, 0.0));
    // Gather LINE_TILE neighbouring lines at a time so every source read is
    // a short contiguous run, then transform them while they are hot.
    {
        let src: &[Complex64] = data;
        scratch
            .par_chunks_mut(n * LINE_TILE)
            .enumerate()
            .for_each(|(tile, out)| {
                let first = tile * LINE_TILE;
                let count = out.len() / n;
                for t in 0..n {
                    for l in 0..count {
                        let line = first + l;
                        out[l * n + t] = src[(line / inner) * block + line % inner + t * inner];
                    }
                }
                fft.process(out);
            });
    }
    // Scatter ROW_TILE rows of equal stride together so reads from the line
    // buffer are contiguous as well.
    let lines: &[Complex64] = scratch;
    data.par_chunks_mut(inner * ROW_TILE)
        .enumerate()
        .for_each(|(tile, rows)| {
            let first = tile * ROW_TILE;
            let count = rows.len() / inner;
            for j in 0..inner {
                for r in 0..count {
                    let row = first + r;
                    let (outer, t) = (row / n, row % n);
                    rows[r * inner + j] = lines[(outer * inner + j) * n + t];
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(data: &[Complex64], n: usize, dim: usize, m: usize) -> Vec<Complex64> {
        let total = n.pow(dim as u32);
        let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
        for k in 0..total {
            for b in 0..total {
                let mut phase = 0.0;
                let (mut kk, mut bb) = (k, b);
                for _ in 0..dim {
                    phase += ((kk % n) * (bb % n)) as f64;
                    kk /= n;
                    bb /= n;
                }
                let w = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase / n as f64);
                for c in 0..m {
                    out[k * m + c] += data[b * m + c] * w;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_3d_interleaved() {
        let grid = Grid::new(3, 3).unwrap();
        let m = 2;
        let data: Vec<Complex64> = (0..27 * m)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let expected = naive_dft(&data, 3, 3, m);
        let mut got = data.clone();
        let mut scratch = Vec::new();
        FftEngine::new(&grid).transform(&mut got, m, Direction::Forward, &mut scratch);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }
}
