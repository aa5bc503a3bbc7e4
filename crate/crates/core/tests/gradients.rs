mod support;

use support::gradsuite::{composed_ok, encoder_report, joint_loss_report, primitive_report, primitives, SEEDS};

#[test]
fn every_primitive() {
    for (name, op) in primitives() {
        for seed in 0..SEEDS {
            let r = primitive_report(op, seed);
            assert!(r.ok(), "{name}, seed {seed}: {r:?}");
        }
    }
}

#[test]
fn encoder_at_toy_size() {
    for seed in 0..SEEDS {
        let r = encoder_report(seed);
        assert!(composed_ok(&r), "encoder seed {seed}: {r:?}");
    }
}

#[test]
fn joint_loss_at_toy_size() {
    for seed in 0..SEEDS {
        let r = joint_loss_report(seed);
        assert!(composed_ok(&r), "joint loss seed {seed}: {r:?}");
    }
}
