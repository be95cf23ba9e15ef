#[path = "support/gradcheck.rs"]
mod gradcheck;

const TRIALS: u64 = 60;
const TOL: f64 = 1e-4;

#[test]
fn coadain_input_and_parameter_gradients() {
    let worst = gradcheck::coadain_worst(TRIALS);
    assert!(worst < TOL, "{worst:.3e}");
}

#[test]
fn image_recon_gradient() {
    let worst = gradcheck::image_recon_worst(TRIALS);
    assert!(worst < TOL, "{worst:.3e}");
}

#[test]
fn latent_recon_gradients() {
    let worst = gradcheck::latent_recon_worst(TRIALS);
    assert!(worst < TOL, "{worst:.3e}");
}

#[test]
fn adversarial_gradients() {
    let worst = gradcheck::adversarial_worst(TRIALS);
    assert!(worst < TOL, "{worst:.3e}");
}

#[test]
fn ocdp_gradients_below_the_clamp() {
    let worst = gradcheck::ocdp_worst(TRIALS);
    assert!(worst < TOL, "{worst:.3e}");
}

#[test]
fn ocdp_gradients_in_the_clamped_regime() {
    assert!(gradcheck::ocdp_clamped_ok(TRIALS));
}
