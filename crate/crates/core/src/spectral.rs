//! FFT plumbing: separable 1D/2D transforms and a reusable convolver.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Boundary, GridShape};
use crate::kernels::DiscreteKernel;

struct Plans {
    shape: GridShape,
    row: [Arc<dyn Fft<f64>>; 2],
    col: Option<[Arc<dyn Fft<f64>>; 2]>,
    scratch: Vec<Complex64>,
    column: Vec<Complex64>,
}

impl Plans {
    fn new(shape: GridShape) -> Self {
        let mut planner = FftPlanner::new();
        let [nx, ny] = shape.extents();
        let row = [planner.plan_fft_forward(nx), planner.plan_fft_inverse(nx)];
        let col = (shape.dimension() == 2).then(|| [planner.plan_fft_forward(ny), planner.plan_fft_inverse(ny)]);
        Self {
            shape,
            row,
            col,
            scratch: Vec::new(),
            column: vec![Complex64::default(); ny],
        }
    }

    /// Unnormalized transform; the inverse direction is scaled by `1/len`.
    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        let dir = usize::from(inverse);
        let [nx, ny] = self.shape.extents();
        let fft = &self.row[dir];
        let need = fft.get_inplace_scratch_len();
        if self.scratch.len() < need {
            self.scratch.resize(need, Complex64::default());
        }
        fft.process_with_scratch(data, &mut self.scratch[..need]);
        if let Some(col) = &self.col {
            let fft = &col[dir];
            let need = fft.get_inplace_scratch_len();
            if self.scratch.len() < need {
                self.scratch.resize(need, Complex64::default());
            }
            for x in 0..nx {
                for y in 0..ny {
                    self.column[y] = data[y * nx + x];
                }
                fft.process_with_scratch(&mut self.column, &mut self.scratch[..need]);
                for y in 0..ny {
                    data[y * nx + x] = self.column[y];
                }
            }
        }
        if inverse {
            let scale = 1.0 / (nx * ny) as f64;
            data.iter_mut().for_each(|z| *z *= scale);
        }
    }
}

/// In-place DFT of a row-major array on `shape`. The inverse is normalized.
pub fn fft_in_place(data: &mut [Complex64], shape: GridShape, inverse: bool) {
    assert_eq!(data.len(), shape.len(), "buffer does not match grid");
    Plans::new(shape).run(data, inverse);
}

/// Applies `v -> K * v` repeatedly on a fixed grid with cached plans and spectrum.
///
/// Periodic boundaries convolve circularly. The absorbing variant zero-pads by
/// the kernel radius and divides by the convolved indicator of the domain, so
/// each row of effective weights is renormalized to one.
pub struct Convolver {
    shape: GridShape,
    work_shape: GridShape,
    boundary: Boundary,
    spectrum: Vec<Complex64>,
    plans: Plans,
    buffer: Vec<Complex64>,
    row_mass: Option<Vec<f64>>,
}

impl Convolver {
    pub fn new(kernel: &DiscreteKernel, shape: GridShape, boundary: Boundary) -> Result<Self> {
        let work_shape = match boundary {
            Boundary::Periodic => {
                kernel.check_fits(shape)?;
                shape
            }
            Boundary::AbsorbingRenormalized => {
                if kernel.dimension() != shape.dimension() {
                    kernel.check_fits(shape)?;
                }
                let r = kernel.radius();
                if r > shape.min_extent() {
                    return Err(Error::Shape(format!(
                        "truncation radius {r} exceeds the grid extent {}",
                        shape.min_extent()
                    )));
                }
                match shape {
                    GridShape::Line(n) => GridShape::Line(n + r),
                    GridShape::Plane(nx, ny) => GridShape::Plane(nx + r, ny + r),
                }
            }
        };
        let mut plans = Plans::new(work_shape);
        let mut spectrum: Vec<Complex64> =
            kernel.embed(work_shape)?.into_iter().map(|w| Complex64::new(w, 0.0)).collect();
        plans.run(&mut spectrum, false);
        let mut conv = Self {
            shape,
            work_shape,
            boundary,
            spectrum,
            plans,
            buffer: vec![Complex64::default(); work_shape.len()],
            row_mass: None,
        };
        if boundary == Boundary::AbsorbingRenormalized {
            let ones = vec![1.0; shape.len()];
            let mut mass = vec![0.0; shape.len()];
            conv.raw(&ones, &mut mass);
            conv.row_mass = Some(mass);
        }
        Ok(conv)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Writes `K * input` into `out`.
    pub fn apply(&mut self, input: &[f64], out: &mut [f64]) {
        self.raw(input, out);
        if let Some(mass) = &self.row_mass {
            out.iter_mut().zip(mass).for_each(|(o, m)| *o /= m);
        }
    }

    fn raw(&mut self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.shape.len());
        assert_eq!(out.len(), self.shape.len());
        let [nx, ny] = self.shape.extents();
        let wx = self.work_shape.extents()[0];
        self.buffer.iter_mut().for_each(|z| *z = Complex64::default());
        for y in 0..ny {
            for x in 0..nx {
                self.buffer[y * wx + x].re = input[y * nx + x];
            }
        }
        self.plans.run(&mut self.buffer, false);
        self.buffer.iter_mut().zip(&self.spectrum).for_each(|(z, k)| *z *= k);
        self.plans.run(&mut self.buffer, true);
        for y in 0..ny {
            for x in 0..nx {
                out[y * nx + x] = self.buffer[y * wx + x].re;
            }
        }
    }
}
