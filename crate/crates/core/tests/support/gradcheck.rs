//! Analytic gradients against central finite differences at f64. Each check
//! runs `trials` random cases of at most 8×8 pixels and 3 components and
//! returns the worst relative error seen.

use coadain::coadain::{coadain_backward, coadain_forward, CoAdaINParams, ComponentMask, StyleCode, StyleCodeSet};
use coadain::objectives::{
    adversarial_losses, image_recon_loss_grad, latent_recon_loss, ocdp_loss, Role, OCDP_CLAMP_MAX, OCDP_EPS,
};
use coadain::FeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;

fn random_map(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> FeatureMap<f64> {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-2.0..2.0))
}

fn random_mask(h: usize, w: usize, k: usize, rng: &mut ChaCha8Rng) -> ComponentMask {
    let labels = (0..h * w).map(|_| rng.random_range(0..k) as u16).collect();
    ComponentMask::new(h, w, k, labels).unwrap()
}

fn random_set(k: usize, d: usize, rng: &mut ChaCha8Rng) -> StyleCodeSet<f64> {
    let codes = (0..k)
        .map(|i| StyleCode::new(i, (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    StyleCodeSet::new(codes).unwrap()
}

/// `(channels, height, width, components)`.
fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    (
        rng.random_range(1..4),
        rng.random_range(2..9),
        rng.random_range(2..9),
        rng.random_range(1..4),
    )
}

/// Central differences of `f` at `x`, one coordinate at a time.
fn numeric(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let up = f(&probe);
            probe[i] = orig - STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)` over the whole gradient vector.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn coadain_worst(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let (c, h, w, k) = dims(&mut rng);
        let x = random_map(c, h, w, &mut rng);
        let mask = random_mask(h, w, k, &mut rng);
        let mean: Vec<f64> = (0..k * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let std: Vec<f64> = (0..k * c).map(|_| rng.random_range(0.2..2.0)).collect();
        let weights: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = CoAdaINParams::new(k, c, mean.clone(), std.clone()).unwrap();
        let loss = |x: &FeatureMap<f64>, p: &CoAdaINParams<f64>| {
            let (y, _) = coadain_forward(x, &mask, p).unwrap();
            dot(y.data(), &weights)
        };

        let (_, state) = coadain_forward(&x, &mask, &params).unwrap();
        let grad_out = FeatureMap::new(c, h, w, weights.clone()).unwrap();
        let (gx, gp) = coadain_backward(&grad_out, state).unwrap();

        let nx = numeric(x.data(), |v| {
            loss(&FeatureMap::new(c, h, w, v.to_vec()).unwrap(), &params)
        });
        let nm = numeric(&mean, |m| {
            loss(&x, &CoAdaINParams::new(k, c, m.to_vec(), std.clone()).unwrap())
        });
        let ns = numeric(&std, |s| {
            loss(&x, &CoAdaINParams::new(k, c, mean.clone(), s.to_vec()).unwrap())
        });
        worst = worst
            .max(relative_error(gx.data(), &nx))
            .max(relative_error(&gp.target_mean, &nm))
            .max(relative_error(&gp.target_std, &ns));
    }
    worst
}

pub fn image_recon_worst(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let (c, h, w, _) = dims(&mut rng);
        let recon = random_map(c, h, w, &mut rng);
        let original = random_map(c, h, w, &mut rng);
        let (_, g) = image_recon_loss_grad(&recon, &original).unwrap();
        let n = numeric(recon.data(), |v| {
            image_recon_loss_grad(&FeatureMap::new(c, h, w, v.to_vec()).unwrap(), &original)
                .unwrap()
                .0
        });
        worst = worst.max(relative_error(g.data(), &n));
    }
    worst
}

pub fn latent_recon_worst(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
        let (c, h, w, k) = dims(&mut rng);
        let d = rng.random_range(1..6);
        let content_rt = random_map(c, h, w, &mut rng);
        let content = random_map(c, h, w, &mut rng);
        let mask = random_mask(h, w, k, &mut rng);
        let rt = random_set(k, d, &mut rng);
        let sampled = random_set(k, d, &mut rng);
        let out = latent_recon_loss(&content_rt, &content, &rt, &sampled, &mask).unwrap();

        let n = numeric(content_rt.data(), |v| {
            let m = FeatureMap::new(c, h, w, v.to_vec()).unwrap();
            latent_recon_loss(&m, &content, &rt, &sampled, &mask).unwrap().content
        });
        worst = worst.max(relative_error(out.grad_content.data(), &n));
        for i in 0..k {
            let n = numeric(&rt.get(i).values, |v| {
                let set = rt.with_code(StyleCode::new(i, v.to_vec()).unwrap()).unwrap();
                latent_recon_loss(&content_rt, &content, &set, &sampled, &mask)
                    .unwrap()
                    .style
            });
            worst = worst.max(relative_error(&out.grad_styles[i], &n));
        }
    }
    worst
}

pub fn adversarial_worst(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let scales = rng.random_range(1..4);
        let maps: Vec<FeatureMap<f64>> = (0..scales).map(|s| random_map(1, 8 >> s, 8 >> s, &mut rng)).collect();
        for (role, real) in [
            (Role::Generator, true),
            (Role::Discriminator, true),
            (Role::Discriminator, false),
        ] {
            let (_, grads) = adversarial_losses(&maps, role, real).unwrap();
            for s in 0..scales {
                let (c, h, w) = maps[s].shape();
                let n = numeric(maps[s].data(), |v| {
                    let mut probe = maps.clone();
                    probe[s] = FeatureMap::new(c, h, w, v.to_vec()).unwrap();
                    adversarial_losses(&probe, role, real).unwrap().0
                });
                worst = worst.max(relative_error(grads[s].data(), &n));
            }
        }
    }
    worst
}

/// Below the clamp. Also verifies the value is `d_S / (d_I + eps)`.
pub fn ocdp_worst(trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let (c, h, w, k) = dims(&mut rng);
        let d = rng.random_range(1..6);
        let component = rng.random_range(0..k);
        let out1 = random_map(c, h, w, &mut rng);
        let out2 = random_map(c, h, w, &mut rng);
        let mut region: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.5)).collect();
        region[0] = true;
        let s1 = random_set(k, d, &mut rng);
        let s2 = random_set(k, d, &mut rng);
        let o = ocdp_loss(&out1, &out2, &region, &s1, &s2, component).unwrap().unwrap();
        if o.clamped || (o.value - o.style_distance / (o.image_distance + OCDP_EPS)).abs() > 1e-12 {
            return f64::INFINITY;
        }

        let value = |a: &FeatureMap<f64>, b: &FeatureMap<f64>, x: &StyleCodeSet<f64>, y: &StyleCodeSet<f64>| {
            ocdp_loss(a, b, &region, x, y, component).unwrap().unwrap().value
        };
        let map = |v: &[f64]| FeatureMap::new(c, h, w, v.to_vec()).unwrap();
        let code =
            |set: &StyleCodeSet<f64>, v: &[f64]| set.with_code(StyleCode::new(component, v.to_vec()).unwrap()).unwrap();
        let v1 = &s1.get(component).values;
        let v2 = &s2.get(component).values;
        worst = worst
            .max(relative_error(
                o.grad_out1.data(),
                &numeric(out1.data(), |v| value(&map(v), &out2, &s1, &s2)),
            ))
            .max(relative_error(
                o.grad_out2.data(),
                &numeric(out2.data(), |v| value(&out1, &map(v), &s1, &s2)),
            ))
            .max(relative_error(
                &o.grad_style1,
                &numeric(v1, |v| value(&out1, &out2, &code(&s1, v), &s2)),
            ))
            .max(relative_error(
                &o.grad_style2,
                &numeric(v2, |v| value(&out1, &out2, &s1, &code(&s2, v))),
            ));
    }
    worst
}

/// Near-identical outputs: the value sits at the clamp and both the analytic
/// and the numeric gradient vanish.
pub fn ocdp_clamped_ok(trials: u64) -> bool {
    (0..trials).all(|trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let (c, h, w, k) = dims(&mut rng);
        let out1 = random_map(c, h, w, &mut rng);
        let out2 = out1.map(|v| v + 1e-9);
        let region = vec![true; h * w];
        let s1 = random_set(k, 4, &mut rng);
        let s2 = random_set(k, 4, &mut rng);
        let o = ocdp_loss(&out1, &out2, &region, &s1, &s2, 0).unwrap().unwrap();
        let n = numeric(out1.data(), |v| {
            let m = FeatureMap::new(c, h, w, v.to_vec()).unwrap();
            ocdp_loss(&m, &out2, &region, &s1, &s2, 0).unwrap().unwrap().value
        });
        o.clamped
            && o.value == OCDP_CLAMP_MAX
            && o.grad_out1.data().iter().all(|&g| g == 0.0)
            && o.grad_style1.iter().all(|&g| g == 0.0)
            && n.iter().all(|&g| g == 0.0)
    })
}
