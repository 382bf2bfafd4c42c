mod common;

use common::grad_cases::{self, Case, SEEDS, TOLERANCE};

fn check(name: &str, case: Case) {
    for seed in 0..SEEDS {
        let err = case(seed);
        assert!(err <= TOLERANCE, "{name}: seed {seed} relative error {err:e}");
    }
}

#[test]
fn conv2d_gradients() {
    check("conv2d", grad_cases::conv2d);
}

#[test]
fn conv3d_gradients() {
    check("conv3d", grad_cases::conv3d);
}

#[test]
fn residual_block_gradients() {
    check("residual_block", grad_cases::residual_block);
}

#[test]
fn upsample_gradients() {
    check("upsample", grad_cases::upsample);
}

#[test]
fn softmax_gradients() {
    check("softmax", grad_cases::softmax);
}

#[test]
fn soft_argmin_gradients() {
    check("soft_argmin", grad_cases::soft_argmin_case);
}

#[test]
fn matchability_gradients() {
    check("matchability", grad_cases::matchability);
}

#[test]
fn cost_volume_gradients() {
    check("cost_volume", grad_cases::cost_volume);
}

#[test]
fn disparity_loss_gradients() {
    check("disparity_loss", grad_cases::disparity_loss_case);
}

#[test]
fn nsce_loss_gradients() {
    check("nsce_loss", grad_cases::nsce_loss_case);
}

#[test]
fn smoothness_loss_gradients() {
    check("smoothness_loss", grad_cases::smoothness_case);
}

#[test]
fn total_loss_gradients_through_the_network() {
    check("total_loss", grad_cases::total_loss_case);
}
