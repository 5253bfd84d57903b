use crate::datasets::beta_pdf;
use crate::density::DensityOnGrid;

pub(crate) fn beta_density(m: usize, a: f64, b: f64) -> DensityOnGrid {
    DensityOnGrid::from_fn(m, |t| beta_pdf(a, b, t)).unwrap()
}
