//! Random in-plane rotation with optional X/Y mirroring and axis swap, used
//! to build the Siamese branch's input.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::Result;
use crate::rng::{self, Rng};
use crate::types::PointCloud;

/// The draw that defines a transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDraw {
    pub theta: f64,
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub matrix: [[f64; 3]; 3],
    pub draw: TransformDraw,
}

impl RigidTransform {
    pub fn identity() -> Self {
        transform_from_draw(0.0, true, true, true)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `R·p`, i.e. one row of `X·Rᵀ`.
    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [0, 1, 2].map(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2])
    }
}

/// `Rot(θ) · Mirror(a, b, c)`.
pub fn transform_from_draw(theta: f64, a: bool, b: bool, c: bool) -> RigidTransform {
    let sa = if a { 1.0 } else { -1.0 };
    let sb = if b { 1.0 } else { -1.0 };
    let (cf, nc) = if c { (1.0, 0.0) } else { (0.0, 1.0) };
    let mirror = [
        [sa * cf, sb * nc, 0.0],
        [sa * nc, sb * cf, 0.0],
        [0.0, 0.0, 1.0],
    ];
    let (s, co) = theta.sin_cos();
    let rot = [[co, -s, 0.0], [s, co, 0.0], [0.0, 0.0, 1.0]];
    let mut matrix = [[0.0; 3]; 3];
    for (i, row) in matrix.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|l| rot[i][l] * mirror[l][j]).sum();
        }
    }
    RigidTransform {
        matrix,
        draw: TransformDraw { theta, a, b, c },
    }
}

/// Draws θ ~ U(0, 2π), then fair bits a, b, c, in that order.
pub fn sample_transform_with(rng: &mut Rng) -> RigidTransform {
    let theta = rng.random::<f64>() * 2.0 * PI;
    let a = rng.random_bool(0.5);
    let b = rng.random_bool(0.5);
    let c = rng.random_bool(0.5);
    transform_from_draw(theta, a, b, c)
}

pub fn sample_transform(seed: u64) -> RigidTransform {
    sample_transform_with(&mut rng::rng_for(seed, &[rng::stream::AUGMENT]))
}

/// `X̃ = X·Rᵀ` on xyz; colours and labels are kept.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> Result<PointCloud> {
    cloud.with_xyz(cloud.xyz().iter().map(|&p| t.apply_point(p)).collect())
}
