use coadain::coadain::{ComponentMask, StyleCodeSet};
use coadain::datasets::Sample;
use coadain::metrics::{
    activation_stats, diversity_protocol, fid_protocol, frechet_distance, lpips_distance, ActivationStats,
    DiversityConfig, DiversityMode, FeatureExtractor, FidConfig, RealThermal, Translator, DEFAULT_EXTRACTOR_SEED,
};
use coadain::{FeatureMap, ImageTensor, Modality, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn thermal(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageTensor {
    let data = (0..h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    ImageTensor::new(Modality::Thermal, FeatureMap::new(1, h, w, data).unwrap()).unwrap()
}

fn extractor() -> FeatureExtractor {
    FeatureExtractor::seeded(1, DEFAULT_EXTRACTOR_SEED)
}

/// Straight-line reference: normalise, diff, square, average, sum.
fn lpips_reference(x: &ImageTensor, y: &ImageTensor, ex: &FeatureExtractor) -> f64 {
    let fx = ex.features(x).unwrap();
    let fy = ex.features(y).unwrap();
    let mut total = 0.0;
    for (a, b) in fx.iter().zip(&fy) {
        let (c, h, w) = a.shape();
        let mut layer = 0.0;
        for yy in 0..h {
            for xx in 0..w {
                let na: f64 = (0..c).map(|k| (a.get(k, yy, xx) as f64).powi(2)).sum::<f64>().sqrt() + 1e-10;
                let nb: f64 = (0..c).map(|k| (b.get(k, yy, xx) as f64).powi(2)).sum::<f64>().sqrt() + 1e-10;
                for k in 0..c {
                    let d = a.get(k, yy, xx) as f64 / na - b.get(k, yy, xx) as f64 / nb;
                    layer += d * d;
                }
            }
        }
        total += layer / (h * w) as f64;
    }
    total
}

#[test]
fn lpips_is_a_pseudo_metric_matching_the_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ex = extractor();
    let x = thermal(16, 32, &mut rng);
    let y = thermal(16, 32, &mut rng);
    assert_eq!(lpips_distance(&x, &x, &ex, None).unwrap(), 0.0);
    let dxy = lpips_distance(&x, &y, &ex, None).unwrap();
    assert_eq!(dxy, lpips_distance(&y, &x, &ex, None).unwrap());
    assert!(dxy > 0.0);
    assert!((dxy - lpips_reference(&x, &y, &ex)).abs() < 1e-12 * (1.0 + dxy));
    let small = thermal(8, 32, &mut rng);
    assert!(lpips_distance(&x, &small, &ex, None).is_err());
    assert!(lpips_distance(&x, &y, &ex, Some(&[true; 10])).is_err());
}

#[test]
fn masked_lpips_ignores_pixels_outside_the_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ex = extractor();
    let x = thermal(16, 32, &mut rng);
    let y = thermal(16, 32, &mut rng);
    let mask: Vec<bool> = (0..16 * 32).map(|p| (p / 32) > 5 && (p % 32) < 12).collect();
    let base = lpips_distance(&x, &y, &ex, Some(&mask)).unwrap();
    let mut x2 = x.clone();
    let mut y2 = y.clone();
    for (p, &m) in mask.iter().enumerate() {
        if !m {
            x2.pixels.data_mut()[p] = rng.random_range(-1.0..1.0);
            y2.pixels.data_mut()[p] = rng.random_range(-1.0..1.0);
        }
    }
    assert_eq!(base, lpips_distance(&x2, &y2, &ex, Some(&mask)).unwrap());
    assert!(lpips_distance(&x, &y, &ex, Some(&vec![false; 16 * 32])).is_err());
}

#[test]
fn extractor_is_deterministic_and_round_trips() {
    let a = extractor();
    let b = extractor();
    assert_eq!(a.descriptor(), b.descriptor());
    assert_ne!(
        a.descriptor().weights_hash,
        FeatureExtractor::seeded(1, 7).descriptor().weights_hash
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extractor.safetensors");
    a.save(&path).unwrap();
    let loaded = FeatureExtractor::load(&path).unwrap();
    assert_eq!(loaded.descriptor(), a.descriptor());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = thermal(16, 32, &mut rng);
    assert_eq!(loaded.embed(&x).unwrap(), a.embed(&x).unwrap());
}

#[test]
fn activation_stats_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ex = extractor();
    let x = thermal(16, 32, &mut rng);
    let y = thermal(16, 32, &mut rng);
    let same = activation_stats([&x, &x, &x], &ex).unwrap();
    assert!(same.covariance.iter().all(|&c| c.abs() < 1e-18));
    assert!(activation_stats([&x], &ex).is_err());

    let two = activation_stats([&x, &y], &ex).unwrap();
    let (ex_, ey) = (ex.embed(&x).unwrap(), ex.embed(&y).unwrap());
    let d = ex_.len();
    for i in 0..d {
        assert!((two.mean[i] - 0.5 * (ex_[i] + ey[i])).abs() < 1e-12);
        for j in 0..d {
            let direct = 0.5 * (ex_[i] - ey[i]) * (ex_[j] - ey[j]);
            assert!((two.covariance[i * d + j] - direct).abs() < 1e-12);
        }
    }

    let images: Vec<ImageTensor> = (0..6).map(|_| thermal(16, 32, &mut rng)).collect();
    let forward = activation_stats(images.iter(), &ex).unwrap();
    let backward = activation_stats(images.iter().rev(), &ex).unwrap();
    for (a, b) in forward
        .mean
        .iter()
        .zip(&backward.mean)
        .chain(forward.covariance.iter().zip(&backward.covariance))
    {
        assert!((a - b).abs() < 1e-10);
    }
}

fn random_stats(d: usize, rng: &mut ChaCha8Rng) -> ActivationStats {
    let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    // B B^T is positive semidefinite
    let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum();
        }
    }
    ActivationStats::new(mean, cov, 10).unwrap()
}

#[test]
fn frechet_self_distance_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [1, 3, 8] {
        let p = random_stats(d, &mut rng);
        assert!(frechet_distance(&p, &p).unwrap() < 1e-8);
    }
    // rank-deficient covariance from fewer samples than dimensions
    let ex = extractor();
    let images: Vec<ImageTensor> = (0..5).map(|_| thermal(16, 32, &mut rng)).collect();
    let s = activation_stats(images.iter(), &ex).unwrap();
    assert!(frechet_distance(&s, &s).unwrap() < 1e-8);
}

#[test]
fn frechet_diagonal_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let mp: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mq: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vp: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..3.0)).collect();
        let vq: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..3.0)).collect();
        let diag = |v: &[f64]| {
            let mut m = vec![0.0; 9];
            for i in 0..3 {
                m[i * 4] = v[i];
            }
            m
        };
        let p = ActivationStats::new(mp.clone(), diag(&vp), 5).unwrap();
        let q = ActivationStats::new(mq.clone(), diag(&vq), 5).unwrap();
        let closed: f64 = (0..3)
            .map(|i| (mp[i] - mq[i]).powi(2) + (vp[i].sqrt() - vq[i].sqrt()).powi(2))
            .sum();
        assert!((frechet_distance(&p, &q).unwrap() - closed).abs() < 1e-8);
    }
}

#[test]
fn frechet_symmetric_and_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let p = random_stats(d, &mut rng);
        let q = random_stats(d, &mut rng);
        let pq = frechet_distance(&p, &q).unwrap();
        let qp = frechet_distance(&q, &p).unwrap();
        assert!(pq >= 0.0);
        assert!((pq - qp).abs() < 1e-8 * (1.0 + pq));
    }
}

fn sources(n: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    (0..n)
        .map(|i| {
            let mut labels = vec![1u16; 16 * 32];
            labels[5 * 32 + 5] = 0;
            let rgb = FeatureMap::from_fn(3, 16, 32, |_, _, _| rng.random_range(-1.0f32..1.0));
            Sample {
                stem: format!("s{i}"),
                rgb: ImageTensor::new(Modality::Rgb, rgb).unwrap(),
                thermal: thermal(16, 32, &mut rng),
                mask: ComponentMask::new(16, 32, 2, labels).unwrap(),
            }
        })
        .collect()
}

/// Ignores the styles: every translation of a source is identical.
struct StyleBlind;

impl Translator for StyleBlind {
    fn style_shape(&self) -> (usize, usize) {
        (2, 4)
    }

    fn translate(&self, source: &Sample, _styles: &StyleCodeSet) -> Result<ImageTensor> {
        ImageTensor::new(Modality::Thermal, source.rgb.pixels.leading_channels(1))
    }
}

#[test]
fn diversity_of_a_style_blind_model_is_zero() {
    let src = sources(100);
    let ex = extractor();
    for mode in [DiversityMode::All, DiversityMode::VehicleOnly] {
        let r = diversity_protocol(&StyleBlind, &src, &ex, mode, &DiversityConfig::default()).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.counters.pair_evaluations, 1000);
        assert_eq!(r.counters.sources, 100);
        assert_eq!(r.counters.translations, 2000);
    }
    let err = diversity_protocol(
        &StyleBlind,
        &src[..2],
        &ex,
        DiversityMode::All,
        &DiversityConfig::default(),
    );
    assert!(err.is_err());
}

#[test]
fn fid_of_real_against_real_is_zero() {
    let src = sources(12);
    let ex = extractor();
    let r = fid_protocol(&RealThermal { style_shape: (2, 4) }, &src, &ex, &FidConfig::default()).unwrap();
    assert!(r.mean < 1e-6, "{}", r.mean);
    assert_eq!(r.std, 0.0);
    assert_eq!(r.counters.sampling_passes, 3);
    assert_eq!(r.counters.translations, 36);
    assert!(fid_protocol(&StyleBlind, &[], &ex, &FidConfig::default()).is_err());
}

#[test]
fn reports_append_to_csv() {
    let src = sources(4);
    let ex = extractor();
    let cfg = DiversityConfig {
        num_sources: 4,
        num_pairs: 8,
        ..Default::default()
    };
    let r = diversity_protocol(&StyleBlind, &src, &ex, DiversityMode::All, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    r.append_csv(&path).unwrap();
    r.append_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("protocol,"));
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["counters"]["pair_evaluations"], 8);
}
