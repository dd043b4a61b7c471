//! Finite-difference checks of the loss gradients on small instances.

use super::{mask_of, random_cloud, small_params};
use wsseg::augment::{apply_transform, transform_from_draw};
use wsseg::encoder::{forward, forward_recorded, EncoderParams, Tape};
use wsseg::graph::{apply_link_constraints, knn_weights, AffinityGraph, GraphParams};
use wsseg::losses::{mil_loss, seg_loss, siamese_loss, smooth_loss};
use wsseg::types::one_hot;
use wsseg::{Matrix, PointCloud, SampleLevelLabel};

pub const H: f64 = 1e-5;
pub const MAX_REL: f64 = 1e-4;
/// Denominator floor: parameters whose gradient is below this in both
/// estimates are compared in absolute terms.
pub const FLOOR: f64 = 1e-6;

pub struct Instance {
    pub cloud: PointCloud,
    pub aug: PointCloud,
    pub params: EncoderParams,
    pub graph: AffinityGraph,
    pub label: SampleLevelLabel,
    pub mask: wsseg::LabelMask,
}

pub fn instance(seed: u64) -> Instance {
    let cloud = random_cloud(seed, 10, 3, false);
    let t = transform_from_draw(0.7, true, false, true);
    let aug = apply_transform(&cloud, &t).unwrap();
    let mask = mask_of(10, &[0, 1, 2, 5]);
    let g = knn_weights(
        &cloud,
        &GraphParams {
            k: 3,
            eta: 0.5,
            symmetrize: true,
            use_rgb: true,
        },
    )
    .unwrap();
    let graph = apply_link_constraints(&g, &mask, cloud.labels()).unwrap();
    let label = SampleLevelLabel::new(vec![true, false, true]).unwrap();
    Instance {
        cloud,
        aug,
        params: small_params(seed, 3, 3),
        graph,
        label,
        mask,
    }
}

#[derive(Clone, Copy)]
pub enum Term {
    Seg,
    Mil,
    Sia,
    Smo,
    Total,
}

const LAMBDA: [f64; 3] = [0.7, 1.3, 0.4];

pub fn value(inst: &Instance, p: &EncoderParams, term: Term) -> f64 {
    let z = forward(p, &inst.cloud).unwrap();
    let onehot = one_hot(inst.cloud.labels(), 3).unwrap();
    let seg = || seg_loss(&z, &onehot, &inst.mask).unwrap().value;
    let mil = || mil_loss(&z, &inst.label).unwrap().value;
    let sia = || {
        let za = forward(p, &inst.aug).unwrap();
        siamese_loss(&z, &za).unwrap().value
    };
    let smo = || smooth_loss(&z, &inst.graph).unwrap().value;
    match term {
        Term::Seg => seg(),
        Term::Mil => mil(),
        Term::Sia => sia(),
        Term::Smo => smo(),
        Term::Total => seg() + LAMBDA[0] * mil() + LAMBDA[1] * sia() + LAMBDA[2] * smo(),
    }
}

pub fn analytic(inst: &Instance, term: Term) -> Vec<f64> {
    let p = &inst.params;
    let mut tape = Tape::new();
    let z = forward_recorded(p, &inst.cloud, &mut tape).unwrap();
    let mut aug_tape = Tape::new();
    let za = forward_recorded(p, &inst.aug, &mut aug_tape).unwrap();
    let onehot = one_hot(inst.cloud.labels(), 3).unwrap();
    let (n, k) = (z.rows(), z.cols());
    let mut dz = Matrix::zeros(n, k);
    let mut dza = Matrix::zeros(n, k);
    let weights = match term {
        Term::Seg => [1.0, 0.0, 0.0, 0.0],
        Term::Mil => [0.0, 1.0, 0.0, 0.0],
        Term::Sia => [0.0, 0.0, 1.0, 0.0],
        Term::Smo => [0.0, 0.0, 0.0, 1.0],
        Term::Total => [1.0, LAMBDA[0], LAMBDA[1], LAMBDA[2]],
    };
    let add = |acc: &mut Matrix, g: &Matrix, w: f64| {
        let mut g = g.clone();
        g.scale(w);
        acc.add_assign(&g);
    };
    add(&mut dz, &seg_loss(&z, &onehot, &inst.mask).unwrap().grad, weights[0]);
    add(&mut dz, &mil_loss(&z, &inst.label).unwrap().grad, weights[1]);
    let s = siamese_loss(&z, &za).unwrap();
    add(&mut dz, &s.grad_a, weights[2]);
    add(&mut dza, &s.grad_b, weights[2]);
    add(&mut dz, &smooth_loss(&z, &inst.graph).unwrap().grad, weights[3]);
    let mut g = tape.backward(&dz).unwrap();
    g.axpy(1.0, &aug_tape.backward(&dza).unwrap());
    g.to_flat()
}

pub fn max_rel_error(seed: u64, term: Term) -> f64 {
    let inst = instance(seed);
    let a = analytic(&inst, term);
    let base = inst.params.to_flat();
    let mut worst: f64 = 0.0;
    let mut p = inst.params.clone();
    for (j, &g) in a.iter().enumerate() {
        let mut x = base.clone();
        x[j] = base[j] + H;
        p.set_flat(&x).unwrap();
        let up = value(&inst, &p, term);
        x[j] = base[j] - H;
        p.set_flat(&x).unwrap();
        let down = value(&inst, &p, term);
        let fd = (up - down) / (2.0 * H);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    worst
}

