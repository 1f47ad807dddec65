//! Focal loss against cross-entropy across confidence levels.

use rational_attention::model::objective::{cross_entropy, focal_loss};

fn main() {
    println!("{:>6} {:>10} {:>10} {:>10}", "p", "ce", "focal", "ratio");
    for p in [0.05, 0.2, 0.5, 0.8, 0.95, 0.999] {
        let ce = cross_entropy(p);
        let fl = focal_loss(p, 0.75, 2.0).unwrap();
        println!("{p:>6} {ce:>10.5} {fl:>10.5} {:>10.4}", fl / ce);
    }
    assert_eq!(focal_loss(0.3, 1.0, 0.0).unwrap(), cross_entropy(0.3));
}
