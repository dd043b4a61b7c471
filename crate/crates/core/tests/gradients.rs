//! Analytic parameter gradients against central finite differences.

mod common;

use common::fd::{max_rel_error, Term, FLOOR, H, MAX_REL};
use common::{mask_of, random_cloud, small_params};
use wsseg::encoder::{forward, forward_recorded, EncoderParams, Tape};
use wsseg::losses::seg_loss;
use wsseg::types::one_hot;

#[test]
fn segmentation_gradient_matches_finite_differences() {
    let e = max_rel_error(11, Term::Seg);
    assert!(e < MAX_REL, "max relative error {e}");
}

#[test]
fn mil_gradient_matches_finite_differences() {
    let e = max_rel_error(12, Term::Mil);
    assert!(e < MAX_REL, "max relative error {e}");
}

#[test]
fn siamese_gradient_matches_finite_differences() {
    let e = max_rel_error(13, Term::Sia);
    assert!(e < MAX_REL, "max relative error {e}");
}

#[test]
fn smoothness_gradient_matches_finite_differences() {
    let e = max_rel_error(14, Term::Smo);
    assert!(e < MAX_REL, "max relative error {e}");
}

#[test]
fn total_gradient_matches_finite_differences() {
    let e = max_rel_error(15, Term::Total);
    assert!(e < MAX_REL, "max relative error {e}");
}

#[test]
fn colored_input_gradient_matches_finite_differences() {
    let cloud = random_cloud(21, 10, 3, true);
    let params = small_params(21, 6, 3);
    let onehot = one_hot(cloud.labels(), 3).unwrap();
    let mask = mask_of(10, &[0, 3, 4, 9]);
    let mut tape = Tape::new();
    let z = forward_recorded(&params, &cloud, &mut tape).unwrap();
    let a = tape
        .backward(&seg_loss(&z, &onehot, &mask).unwrap().grad)
        .unwrap()
        .to_flat();
    let base = params.to_flat();
    let mut p = params.clone();
    let f = |p: &EncoderParams| seg_loss(&forward(p, &cloud).unwrap(), &onehot, &mask).unwrap().value;
    for (j, &g) in a.iter().enumerate() {
        let mut x = base.clone();
        x[j] += H;
        p.set_flat(&x).unwrap();
        let up = f(&p);
        x[j] -= 2.0 * H;
        p.set_flat(&x).unwrap();
        let fd = (up - f(&p)) / (2.0 * H);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(FLOOR);
        assert!(rel < MAX_REL, "param {j}: analytic {g}, numeric {fd}");
    }
}
