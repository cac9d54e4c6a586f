//! Benchmark fixtures shared by the criterion targets.

use mpradon::opnorm::{Cutoffs, GridSpec};
use mpradon::{BumpSpec, DilationScheme, DyadicKernel, ParamLattice, Shape, SurfaceMap, UniformGrid};

/// Two-parameter product kernel with cancellative factors.
pub fn product_kernel(bound: u32) -> DyadicKernel {
    let bump = BumpSpec::product(&[Shape::Deriv(1), Shape::Deriv(1)], 0.5).expect("bump");
    DyadicKernel::uniform(DilationScheme::product(2), ParamLattice::product(2), bump, bound).expect("kernel")
}

/// Translation `x - t` on a 1-D grid, as used by the decay fits.
pub fn convolution_piece_inputs(n: usize) -> (SurfaceMap, BumpSpec, DilationScheme, Cutoffs, GridSpec) {
    let surface = SurfaceMap::closed_form("shift", 1, 1, &["x1 - t1"]).expect("surface");
    let bump = BumpSpec::product(&[Shape::Poly(1)], 0.5).expect("bump");
    let grid = GridSpec { x: UniformGrid::cube(1, -2.0, 2.0, n), t_panels: 32, t_order: 8 };
    (surface, bump, DilationScheme::isotropic(1), Cutoffs::inner_half(2.0), grid)
}
