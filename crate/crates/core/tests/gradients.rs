mod common;

use common::gradcheck;

#[test]
fn elementwise_and_structural_ops() {
    gradcheck::elementwise_and_structural_ops();
}

#[test]
fn distribution_ops() {
    gradcheck::distribution_ops();
}

#[test]
fn affine_mlp_and_gated_cell_parameters() {
    gradcheck::affine_mlp_and_gated_cell_parameters();
}

#[test]
fn composed_a2c_losses() {
    gradcheck::composed_a2c_losses();
}
