use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::PiecewiseAffine;
use crate::partition2d::Slice2D;
use crate::scalar::Scalar;

use super::{descriptors_at, ComplexityConfig, DescriptorTriple};

/// Uniform `resolution × resolution` grid over a box in slice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        GridSpec {
            x_range: (-half_width, half_width),
            y_range: (-half_width, half_width),
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        let (w, h) = (self.x_range.1 - self.x_range.0, self.y_range.1 - self.y_range.0);
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput("degenerate grid box".into()));
        }
        Ok(())
    }

    /// Slice coordinates of cell `(ix, iy)`.
    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        let step = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64;
        (step(self.x_range, ix), step(self.y_range, iy))
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }
}

/// Row-major (`iy` outer, `ix` inner) table of descriptor triples.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid<T> {
    pub spec: GridSpec,
    pub cells: Vec<DescriptorTriple<T>>,
}

impl<T: Scalar> DescriptorGrid<T> {
    pub fn get(&self, ix: usize, iy: usize) -> &DescriptorTriple<T> {
        &self.cells[iy * self.spec.resolution + ix]
    }

    pub fn psi(&self) -> Vec<T> {
        self.cells.iter().map(|c| c.psi).collect()
    }

    pub fn nu(&self) -> Vec<T> {
        self.cells.iter().map(|c| c.nu).collect()
    }

    pub fn delta(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.delta).collect()
    }

    /// CSV with header `ix,iy,x,y,psi,nu,delta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ix,iy,x,y,psi,nu,delta")?;
        let n = self.spec.resolution;
        for (k, c) in self.cells.iter().enumerate() {
            let (ix, iy) = (k % n, k / n);
            let (x, y) = self.spec.point(ix, iy);
            writeln!(w, "{ix},{iy},{x},{y},{},{},{}", c.psi, c.nu, c.delta)?;
        }
        Ok(())
    }
}

/// Evaluates ψ, ν, δ at every grid point of `slice`, using `workers` threads.
/// The output does not depend on `workers`.
pub fn descriptor_grid<T: Scalar, M: PiecewiseAffine<T>>(
    map: &M,
    slice: &Slice2D<T>,
    spec: &GridSpec,
    cfg: &ComplexityConfig<T>,
    workers: usize,
) -> Result<DescriptorGrid<T>> {
    spec.validate()?;
    crate::error::check_dim(map.input_dim(), slice.ambient_dim(), "slice dimension")?;
    let n = spec.resolution;
    let eval = |k: usize| {
        let (x, y) = spec.point(k % n, k / n);
        let z = slice.embed(T::lit(x), T::lit(y));
        descriptors_at(map, &z, cfg)
    };
    let cells = crate::parallel::map_indexed(workers, spec.len(), eval)?;
    Ok(DescriptorGrid {
        spec: spec.clone(),
        cells,
    })
}
