//! Deterministic part-labelled synthetic shapes.
//!
//! Each family is an analytic union of simple surfaces with exact part
//! boundaries. Points are spread over parts in proportion to surface area
//! (at least one per part) and sampled uniformly on each part's surface.
//! Shapes keep a fixed canonical pose.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::format::Sample;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::types::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    /// Two spheres of different size joined by a rod: K = 3.
    Barbell,
    /// Cuboid top on four cuboid legs: K = 2.
    Table,
    /// Cylindrical body, conical nose and four planar fins: K = 3.
    Rocket,
}

impl ShapeFamily {
    pub fn num_parts(self) -> usize {
        match self {
            ShapeFamily::Barbell => 3,
            ShapeFamily::Table => 2,
            ShapeFamily::Rocket => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Barbell => "barbell",
            ShapeFamily::Table => "table",
            ShapeFamily::Rocket => "rocket",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "barbell" => Ok(ShapeFamily::Barbell),
            "table" => Ok(ShapeFamily::Table),
            "rocket" | "rocket-like" => Ok(ShapeFamily::Rocket),
            other => Err(Error::validation(format!("unknown shape family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub family: ShapeFamily,
    pub points_per_shape: usize,
    pub num_shapes: usize,
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Attach a per-part base color with small noise as rgb.
    pub colored: bool,
}

impl SyntheticSpec {
    pub fn new(family: ShapeFamily, num_shapes: usize, points_per_shape: usize, seed: u64) -> Self {
        SyntheticSpec {
            family,
            points_per_shape,
            num_shapes,
            jitter_sigma: 0.0,
            seed,
            colored: false,
        }
    }
}

/// Axis-aligned box given by center and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub center: [f64; 3],
    pub half: [f64; 3],
}

impl Cuboid {
    fn face_areas(&self) -> [f64; 6] {
        let [a, b, c] = self.half;
        let (xy, xz, yz) = (4.0 * a * b, 4.0 * a * c, 4.0 * b * c);
        // -x, +x, -y, +y, -z, +z
        [yz, yz, xz, xz, xy, xy]
    }

    fn sample_face(&self, face: usize, rng: &mut Rng) -> [f64; 3] {
        let axis = face / 2;
        let sign = if face.is_multiple_of(2) { -1.0 } else { 1.0 };
        let mut p = [0.0; 3];
        for (d, v) in p.iter_mut().enumerate() {
            *v = if d == axis {
                self.center[d] + sign * self.half[d]
            } else {
                self.center[d] + self.half[d] * rng.random_range(-1.0..=1.0)
            };
        }
        p
    }
}

/// Exact geometry of one generated shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeGeometry {
    /// Spheres centered on the x axis; the rod is the lateral surface of a
    /// cylinder around the x axis spanning `rod_x`.
    Barbell {
        left_center: f64,
        left_radius: f64,
        right_center: f64,
        right_radius: f64,
        rod_radius: f64,
        rod_x: [f64; 2],
    },
    /// Part 0 is the full surface of `top`; part 1 the side and bottom faces
    /// of each leg.
    Table { top: Cuboid, legs: [Cuboid; 4] },
    /// Body: lateral surface of radius `radius` over `0 <= z <= body_height`
    /// plus the bottom disk. Nose: cone from `body_height` to the apex at
    /// `body_height + nose_height`. Fins: rectangles in the planes x = 0 and
    /// y = 0 spanning radius `radius..radius + fin_span` and
    /// `0 <= z <= fin_height`.
    Rocket {
        radius: f64,
        body_height: f64,
        nose_height: f64,
        fin_span: f64,
        fin_height: f64,
    },
}

impl ShapeGeometry {
    fn random(family: ShapeFamily, rng: &mut Rng) -> Self {
        match family {
            ShapeFamily::Barbell => {
                let half_len: f64 = rng.random_range(1.8..2.4);
                let left_radius: f64 = rng.random_range(0.9..1.1);
                let right_radius: f64 = rng.random_range(0.55..0.7);
                let rod_radius: f64 = rng.random_range(0.25..0.32);
                let left_center = -half_len;
                let right_center = half_len;
                let rod_x = [
                    left_center + (left_radius * left_radius - rod_radius * rod_radius).sqrt(),
                    right_center - (right_radius * right_radius - rod_radius * rod_radius).sqrt(),
                ];
                ShapeGeometry::Barbell {
                    left_center,
                    left_radius,
                    right_center,
                    right_radius,
                    rod_radius,
                    rod_x,
                }
            }
            ShapeFamily::Table => {
                let hx = rng.random_range(1.0..1.5);
                let hy = rng.random_range(0.6..1.0);
                let thick = rng.random_range(0.05..0.1);
                let height = rng.random_range(0.8..1.2);
                let leg = rng.random_range(0.06..0.1);
                let top = Cuboid {
                    center: [0.0, 0.0, height + thick],
                    half: [hx, hy, thick],
                };
                let leg_half_h = height / 2.0;
                let (lx, ly) = (hx - leg, hy - leg);
                let mk = |x: f64, y: f64| Cuboid {
                    center: [x, y, leg_half_h],
                    half: [leg, leg, leg_half_h],
                };
                ShapeGeometry::Table {
                    top,
                    legs: [mk(-lx, -ly), mk(lx, -ly), mk(-lx, ly), mk(lx, ly)],
                }
            }
            ShapeFamily::Rocket => ShapeGeometry::Rocket {
                radius: rng.random_range(0.25..0.35),
                body_height: rng.random_range(1.8..2.4),
                nose_height: rng.random_range(0.5..0.8),
                fin_span: rng.random_range(0.25..0.4),
                fin_height: rng.random_range(0.4..0.6),
            },
        }
    }

    fn part_areas(&self) -> Vec<f64> {
        match *self {
            ShapeGeometry::Barbell {
                left_radius,
                right_radius,
                rod_radius,
                rod_x,
                ..
            } => {
                let cap = |r: f64| {
                    let h = r - (r * r - rod_radius * rod_radius).sqrt();
                    4.0 * PI * r * r - 2.0 * PI * r * h
                };
                vec![
                    cap(left_radius),
                    cap(right_radius),
                    2.0 * PI * rod_radius * (rod_x[1] - rod_x[0]),
                ]
            }
            ShapeGeometry::Table { top, legs } => {
                let top_area: f64 = top.face_areas().iter().sum();
                let leg_area: f64 = legs.iter().map(|l| leg_faces(l).1).sum();
                vec![top_area, leg_area]
            }
            ShapeGeometry::Rocket {
                radius,
                body_height,
                nose_height,
                fin_span,
                fin_height,
            } => {
                let body = 2.0 * PI * radius * body_height + PI * radius * radius;
                let slant = (radius * radius + nose_height * nose_height).sqrt();
                let nose = PI * radius * slant;
                // both sides of four fins
                let fins = 8.0 * fin_span * fin_height;
                vec![body, nose, fins]
            }
        }
    }

    fn sample_part(&self, part: usize, rng: &mut Rng) -> [f64; 3] {
        match *self {
            ShapeGeometry::Barbell {
                left_center,
                left_radius,
                right_center,
                right_radius,
                rod_radius,
                rod_x,
            } => match part {
                0 | 1 => {
                    let (center, radius, toward_rod) = if part == 0 {
                        (left_center, left_radius, 1.0)
                    } else {
                        (right_center, right_radius, -1.0)
                    };
                    loop {
                        let d = unit_vector(rng);
                        // the cap covered by the rod is interior
                        let covered = d[1] * d[1] * radius * radius
                            + d[2] * d[2] * radius * radius
                            < rod_radius * rod_radius
                            && d[0] * toward_rod > 0.0;
                        if !covered {
                            return [center + radius * d[0], radius * d[1], radius * d[2]];
                        }
                    }
                }
                _ => {
                    let t = rng.random_range(0.0..2.0 * PI);
                    let x = rng.random_range(rod_x[0]..=rod_x[1]);
                    [x, rod_radius * t.cos(), rod_radius * t.sin()]
                }
            },
            ShapeGeometry::Table { top, legs } => {
                if part == 0 {
                    let face = pick_weighted(&top.face_areas(), rng);
                    top.sample_face(face, rng)
                } else {
                    let areas: Vec<f64> = legs.iter().map(|l| leg_faces(l).1).collect();
                    let leg = &legs[pick_weighted(&areas, rng)];
                    let (faces, _) = leg_faces(leg);
                    let fa = leg.face_areas();
                    let weights: Vec<f64> = faces.iter().map(|&f| fa[f]).collect();
                    leg.sample_face(faces[pick_weighted(&weights, rng)], rng)
                }
            }
            ShapeGeometry::Rocket {
                radius,
                body_height,
                nose_height,
                fin_span,
                fin_height,
            } => match part {
                0 => {
                    let lateral = 2.0 * PI * radius * body_height;
                    let disk = PI * radius * radius;
                    let t = rng.random_range(0.0..2.0 * PI);
                    if rng.random_range(0.0..lateral + disk) < lateral {
                        let z = rng.random_range(0.0..=body_height);
                        [radius * t.cos(), radius * t.sin(), z]
                    } else {
                        let r = radius * rng.random::<f64>().sqrt();
                        [r * t.cos(), r * t.sin(), 0.0]
                    }
                }
                1 => {
                    // area density on a cone grows linearly toward the base
                    let s: f64 = rng.random::<f64>().sqrt();
                    let t = rng.random_range(0.0..2.0 * PI);
                    let r = radius * s;
                    let z = body_height + nose_height * (1.0 - s);
                    [r * t.cos(), r * t.sin(), z]
                }
                _ => {
                    let fin = rng.random_range(0..4usize);
                    let d = radius + rng.random_range(0.0..=fin_span);
                    let z = rng.random_range(0.0..=fin_height);
                    match fin {
                        0 => [d, 0.0, z],
                        1 => [-d, 0.0, z],
                        2 => [0.0, d, z],
                        _ => [0.0, -d, z],
                    }
                }
            },
        }
    }
}

/// Visible faces of a table leg (all but the top) and their total area.
fn leg_faces(leg: &Cuboid) -> ([usize; 5], f64) {
    let faces = [0, 1, 2, 3, 4];
    let a = leg.face_areas();
    (faces, faces.iter().map(|&f| a[f]).sum())
}

fn unit_vector(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn pick_weighted(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Splits `n` points over parts proportionally to `areas` (largest
/// remainder), guaranteeing one point per part.
fn allocate(n: usize, areas: &[f64]) -> Vec<usize> {
    let k = areas.len();
    let spare = n - k;
    let total: f64 = areas.iter().sum();
    let exact: Vec<f64> = areas.iter().map(|a| a / total * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = spare - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

const PART_COLORS: [[f64; 3]; 3] = [[0.85, 0.2, 0.2], [0.2, 0.75, 0.3], [0.2, 0.3, 0.85]];

/// One shape with its exact geometry.
pub fn generate_shape(spec: &SyntheticSpec, index: usize) -> Result<(PointCloud, ShapeGeometry)> {
    let k = spec.family.num_parts();
    if spec.points_per_shape < k {
        return Err(Error::validation(format!(
            "{} points cannot cover the {} parts of a {}",
            spec.points_per_shape, k, spec.family
        )));
    }
    if !(spec.jitter_sigma >= 0.0 && spec.jitter_sigma.is_finite()) {
        return Err(Error::validation("jitter_sigma must be non-negative"));
    }
    let mut rng = rng::rng_for(spec.seed, &[rng::stream::SYNTHETIC, index as u64]);
    let geometry = ShapeGeometry::random(spec.family, &mut rng);
    let counts = allocate(spec.points_per_shape, &geometry.part_areas());
    let jitter = Normal::new(0.0, spec.jitter_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::validation(e.to_string()))?;

    let n = spec.points_per_shape;
    let mut xyz = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (part, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let mut p = geometry.sample_part(part, &mut rng);
            if spec.jitter_sigma > 0.0 {
                for v in &mut p {
                    *v += jitter.sample(&mut rng);
                }
            }
            xyz.push(p);
            labels.push(part);
        }
    }
    let rgb = spec.colored.then(|| {
        labels
            .iter()
            .map(|&l| {
                let base = PART_COLORS[l % PART_COLORS.len()];
                base.map(|c: f64| (c + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
            })
            .collect()
    });
    Ok((PointCloud::new(xyz, rgb, labels, k)?, geometry))
}

/// Generates `num_shapes` clouds; identical for identical specs.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<PointCloud>> {
    (0..spec.num_shapes)
        .map(|i| generate_shape(spec, i).map(|(c, _)| c))
        .collect()
}

/// Generated clouds wrapped as named dataset samples.
pub fn generate_samples(spec: &SyntheticSpec) -> Result<Vec<Sample>> {
    Ok(generate_synthetic(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, cloud)| Sample {
            name: format!("{}_{:04}", spec.family, i),
            category: spec.family.to_string(),
            cloud,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barbell_has_three_parts_each_populated() {
        let spec = SyntheticSpec::new(ShapeFamily::Barbell, 3, 64, 1);
        for c in generate_synthetic(&spec).unwrap() {
            assert_eq!(c.num_classes(), 3);
            assert_eq!(c.present_labels(), vec![0, 1, 2]);
            assert_eq!(c.len(), 64);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticSpec::new(ShapeFamily::Rocket, 2, 50, 9);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let spec = SyntheticSpec::new(ShapeFamily::Barbell, 1, 2, 0);
        assert!(matches!(generate_synthetic(&spec), Err(Error::Validation(_))));
        let spec = SyntheticSpec::new(ShapeFamily::Barbell, 1, 3, 0);
        assert!(generate_synthetic(&spec).is_ok());
    }

    #[test]
    fn allocation_is_exact_and_covering() {
        for n in [3, 4, 10, 257] {
            let c = allocate(n, &[5.0, 1.0, 0.001]);
            assert_eq!(c.iter().sum::<usize>(), n);
            assert!(c.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn colored_shapes_carry_rgb() {
        let spec = SyntheticSpec {
            colored: true,
            ..SyntheticSpec::new(ShapeFamily::Table, 1, 40, 3)
        };
        let c = &generate_synthetic(&spec).unwrap()[0];
        assert_eq!(c.num_features(), 6);
        assert!(c.rgb().unwrap().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
