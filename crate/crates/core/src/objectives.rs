//! Training objectives: reconstruction, latent reconstruction, least-squares
//! adversarial terms and the object-centered diversity penalty (ocdp).
//!
//! Every loss returns its value together with the gradients the trainer
//! needs. All functions are generic over the float width so the gradients can
//! be checked at 64-bit precision.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coadain::{ComponentMask, StyleCodeSet};
use crate::error::{Error, Result};
use crate::tensor::{cast, FeatureMap, Scalar};

/// Added to the masked image distance before inverting it.
pub const OCDP_EPS: f64 = 1e-6;
/// Upper bound on the ocdp value; gradients vanish once it is reached.
pub const OCDP_CLAMP_MAX: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_image_recon: f64,
    pub w_content_recon: f64,
    pub w_style_recon: f64,
    pub w_adv: f64,
    pub w_ocdp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_image_recon: 10.0,
            w_content_recon: 1.0,
            w_style_recon: 1.0,
            w_adv: 1.0,
            w_ocdp: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            w_image_recon: 0.0,
            w_content_recon: 0.0,
            w_style_recon: 0.0,
            w_adv: 0.0,
            w_ocdp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = [
            ("w_image_recon", self.w_image_recon),
            ("w_content_recon", self.w_content_recon),
            ("w_style_recon", self.w_style_recon),
            ("w_adv", self.w_adv),
            ("w_ocdp", self.w_ocdp),
        ]
        .iter()
        .filter(|(_, w)| !(w.is_finite() && *w >= 0.0))
        .map(|(n, w)| format!("{n} must be a finite nonnegative number, got {w}"))
        .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }
}

#[inline]
fn sign<T: Scalar>(d: T) -> T {
    if d > T::zero() {
        T::one()
    } else if d < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean absolute difference and its gradient with respect to `a`.
fn l1_mean<T: Scalar>(a: &[T], b: &[T]) -> (T, Vec<T>) {
    let n = cast::<T>(a.len() as f64);
    let mut sum = T::zero();
    let grad = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            sum = sum + d.abs();
            sign(d) / n
        })
        .collect();
    (sum / n, grad)
}

/// Mean absolute error between a reconstruction and its original.
pub fn image_recon_loss<T: Scalar>(recon: &FeatureMap<T>, original: &FeatureMap<T>) -> Result<T> {
    image_recon_loss_grad(recon, original).map(|(v, _)| v)
}

/// As [`image_recon_loss`], with the gradient with respect to `recon`.
pub fn image_recon_loss_grad<T: Scalar>(recon: &FeatureMap<T>, original: &FeatureMap<T>) -> Result<(T, FeatureMap<T>)> {
    recon.check_same_shape(original, "image reconstruction")?;
    let (v, g) = l1_mean(recon.data(), original.data());
    let (c, h, w) = recon.shape();
    Ok((v, FeatureMap::new(c, h, w, g)?))
}

#[derive(Clone, Debug)]
pub struct LatentRecon<T = f32> {
    pub content: T,
    pub style: T,
    /// Gradient of the content term with respect to the re-encoded content;
    /// the gradient for the original content is its negation.
    pub grad_content: FeatureMap<T>,
    /// Gradient of the style term with respect to each re-encoded code.
    pub grad_styles: Vec<Vec<T>>,
}

/// Content and style reconstruction terms. The style term averages over the
/// components that have pixels in `mask`; absent components are skipped.
pub fn latent_recon_loss<T: Scalar>(
    content_rt: &FeatureMap<T>,
    content: &FeatureMap<T>,
    styles_rt: &StyleCodeSet<T>,
    styles_sampled: &StyleCodeSet<T>,
    mask: &ComponentMask,
) -> Result<LatentRecon<T>> {
    content_rt.check_same_shape(content, "content reconstruction")?;
    if styles_rt.len() != styles_sampled.len() || styles_rt.len() != mask.num_components() {
        return Err(Error::dim(format!(
            "style sets of {} and {} codes for a {}-component mask",
            styles_rt.len(),
            styles_sampled.len(),
            mask.num_components()
        )));
    }
    if styles_rt.dim() != styles_sampled.dim() {
        return Err(Error::dim("style codes of different dimension"));
    }
    let (content_loss, gc) = l1_mean(content_rt.data(), content.data());
    let (c, h, w) = content_rt.shape();
    let counts = mask.pixel_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    let n_present = cast::<T>(present.len() as f64);
    let mut style_loss = T::zero();
    let mut grad_styles = vec![vec![T::zero(); styles_rt.dim()]; styles_rt.len()];
    for &i in &present {
        let (v, g) = l1_mean(&styles_rt.get(i).values, &styles_sampled.get(i).values);
        style_loss = style_loss + v / n_present;
        grad_styles[i] = g.into_iter().map(|x| x / n_present).collect();
    }
    Ok(LatentRecon {
        content: content_loss,
        style: style_loss,
        grad_content: FeatureMap::new(c, h, w, gc)?,
        grad_styles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

/// Least-squares GAN objective: mean over scales of the mean squared distance
/// of every patch logit to its target (1 for real, 0 for fake). The generator
/// always targets "real". Returns the value and per-scale logit gradients.
pub fn adversarial_losses<T: Scalar>(
    logit_maps: &[FeatureMap<T>],
    role: Role,
    target_real: bool,
) -> Result<(T, Vec<FeatureMap<T>>)> {
    if logit_maps.is_empty() {
        return Err(Error::invalid("adversarial loss needs at least one logit map"));
    }
    if role == Role::Generator && !target_real {
        return Err(Error::invalid("the generator objective targets real logits"));
    }
    let target = if target_real { T::one() } else { T::zero() };
    let scales = cast::<T>(logit_maps.len() as f64);
    let two = cast::<T>(2.0);
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(logit_maps.len());
    for map in logit_maps {
        let n = cast::<T>(map.data().len() as f64);
        let mut sum = T::zero();
        for &l in map.data() {
            sum = sum + (l - target) * (l - target);
        }
        total = total + sum / (n * scales);
        grads.push(map.map(|l| two * (l - target) / (n * scales)));
    }
    Ok((total, grads))
}

/// Value and gradients of the object-centered diversity penalty.
#[derive(Clone, Debug)]
pub struct Ocdp<T = f32> {
    pub value: T,
    pub image_distance: T,
    pub style_distance: T,
    pub clamped: bool,
    pub grad_out1: FeatureMap<T>,
    pub grad_out2: FeatureMap<T>,
    pub grad_style1: Vec<T>,
    pub grad_style2: Vec<T>,
}

/// `d_S / (d_I + eps)`, clamped at [`OCDP_CLAMP_MAX`], where `d_I` is the mean
/// absolute difference of the two outputs over the pixels of `mask_component`
/// and `d_S` the mean absolute difference of the codes of `component`.
///
/// Returns `Ok(None)` when the mask is empty: the term is absent, not zero.
pub fn ocdp_loss<T: Scalar>(
    out1: &FeatureMap<T>,
    out2: &FeatureMap<T>,
    mask_component: &[bool],
    s1: &StyleCodeSet<T>,
    s2: &StyleCodeSet<T>,
    component: usize,
) -> Result<Option<Ocdp<T>>> {
    out1.check_same_shape(out2, "ocdp outputs")?;
    if mask_component.len() != out1.plane_len() {
        return Err(Error::dim(format!(
            "ocdp mask has {} pixels, outputs have {}",
            mask_component.len(),
            out1.plane_len()
        )));
    }
    if s1.len() != s2.len() || s1.dim() != s2.dim() || component >= s1.len() {
        return Err(Error::dim("ocdp style sets do not match"));
    }
    if s1 == s2 {
        return Err(Error::invalid("ocdp needs two different style sets"));
    }
    let pixels = mask_component.iter().filter(|&&m| m).count();
    if pixels == 0 {
        return Ok(None);
    }
    let channels = out1.channels();
    let norm = cast::<T>((pixels * channels) as f64);
    let mut d_i = T::zero();
    for c in 0..channels {
        for ((&a, &b), &m) in out1.plane(c).iter().zip(out2.plane(c)).zip(mask_component) {
            if m {
                d_i = d_i + (a - b).abs();
            }
        }
    }
    d_i = d_i / norm;
    let (d_s, grad_ds) = l1_mean(&s1.get(component).values, &s2.get(component).values);
    let eps = cast::<T>(OCDP_EPS);
    let clamp = cast::<T>(OCDP_CLAMP_MAX);
    let raw = d_s / (d_i + eps);
    let clamped = raw >= clamp;
    let value = if clamped { clamp } else { raw };
    let (dl_ddi, dl_dds) = if clamped {
        (T::zero(), T::zero())
    } else {
        (-d_s / ((d_i + eps) * (d_i + eps)), T::one() / (d_i + eps))
    };
    let (h, w) = out1.spatial_dims();
    let mut grad_out1 = FeatureMap::zeros(channels, h, w);
    for c in 0..channels {
        let g = grad_out1.plane_mut(c);
        for (p, (&a, &b)) in out1.plane(c).iter().zip(out2.plane(c)).enumerate() {
            if mask_component[p] {
                g[p] = dl_ddi * sign(a - b) / norm;
            }
        }
    }
    let grad_out2 = grad_out1.map(|g| -g);
    let grad_style1: Vec<T> = grad_ds.iter().map(|&g| dl_dds * g).collect();
    let grad_style2 = grad_style1.iter().map(|&g| -g).collect();
    Ok(Some(Ocdp {
        value,
        image_distance: d_i,
        style_distance: d_s,
        clamped,
        grad_out1,
        grad_out2,
        grad_style1,
        grad_style2,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stream {
    /// RGB to thermal.
    #[serde(rename = "a2b")]
    AtoB,
    /// Thermal to RGB.
    #[serde(rename = "b2a")]
    BtoA,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::AtoB => "a2b",
            Stream::BtoA => "b2a",
        })
    }
}

/// Raw generator loss terms of one stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamTerms {
    pub image_recon: f64,
    pub content_recon: f64,
    pub style_recon: f64,
    pub adv: f64,
    /// `None` when the term was not computed (ablated, or no vehicle pixels).
    pub ocdp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub stream: Stream,
    pub role: Role,
    pub term: String,
    pub value: f64,
    pub weight: f64,
}

/// Per-term values with their weights, and the weighted total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub entries: Vec<LossEntry>,
    pub generator_total: f64,
    pub discriminator_total: f64,
}

impl LossReport {
    /// Flat `role/stream/term -> value` record, plus the totals.
    pub fn to_record(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            let role = match e.role {
                Role::Generator => "gen",
                Role::Discriminator => "dis",
            };
            out.insert(format!("{role}/{}/{}", e.stream, e.term), e.value);
        }
        out.insert("gen/total".into(), self.generator_total);
        out.insert("dis/total".into(), self.discriminator_total);
        out
    }

    pub fn value(&self, role: Role, stream: Stream, term: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.role == role && e.stream == stream && e.term == term)
            .map(|e| e.value)
    }

    /// Appends discriminator terms (real and fake halves per stream).
    pub fn with_discriminator_terms(mut self, terms: &[(Stream, &str, f64)], w_adv: f64) -> Result<Self> {
        for &(stream, term, value) in terms {
            if !value.is_finite() {
                return Err(Error::Numeric(format!("dis/{stream}/{term}")));
            }
            self.entries.push(LossEntry {
                stream,
                role: Role::Discriminator,
                term: term.to_string(),
                value,
                weight: w_adv,
            });
            self.discriminator_total += w_adv * value;
        }
        Ok(self)
    }
}

/// Weighted sum of both streams' generator terms.
pub fn total_generator_loss(streams: &[(Stream, StreamTerms)], weights: &LossWeights) -> Result<LossReport> {
    weights.validate()?;
    let mut entries = Vec::new();
    let mut total = 0.0;
    for (stream, t) in streams {
        let mut items = vec![
            ("image_recon", t.image_recon, weights.w_image_recon),
            ("content_recon", t.content_recon, weights.w_content_recon),
            ("style_recon", t.style_recon, weights.w_style_recon),
            ("adv", t.adv, weights.w_adv),
        ];
        if let Some(o) = t.ocdp {
            items.push(("ocdp", o, weights.w_ocdp));
        }
        for (term, value, weight) in items {
            if !value.is_finite() {
                return Err(Error::Numeric(format!("gen/{stream}/{term}")));
            }
            total += weight * value;
            entries.push(LossEntry {
                stream: *stream,
                role: Role::Generator,
                term: term.to_string(),
                value,
                weight,
            });
        }
    }
    Ok(LossReport {
        entries,
        generator_total: total,
        discriminator_total: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coadain::StyleCode;

    fn set(codes: Vec<Vec<f64>>) -> StyleCodeSet<f64> {
        StyleCodeSet::new(
            codes
                .into_iter()
                .enumerate()
                .map(|(i, v)| StyleCode::new(i, v).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn image_recon_basics() {
        let a = FeatureMap::<f64>::from_fn(2, 3, 3, |c, y, x| (c + y + x) as f64 * 0.1);
        assert_eq!(image_recon_loss(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.5);
        assert!((image_recon_loss(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let c = FeatureMap::<f64>::zeros(1, 3, 3);
        assert!(image_recon_loss(&a, &c).is_err());
    }

    #[test]
    fn latent_recon_skips_absent_components() {
        let c = FeatureMap::<f64>::zeros(2, 2, 2);
        let mask = ComponentMask::uniform(2, 2, 2, 1);
        let rt = set(vec![vec![5.0, 5.0], vec![1.0, 2.0]]);
        let sampled = set(vec![vec![0.0, 0.0], vec![1.5, 1.0]]);
        let r = latent_recon_loss(&c, &c, &rt, &sampled, &mask).unwrap();
        assert_eq!(r.content, 0.0);
        assert!((r.style - 0.75).abs() < 1e-12);
        assert_eq!(r.grad_styles[0], vec![0.0, 0.0]);
        let same = latent_recon_loss(&c, &c, &rt, &rt, &mask).unwrap();
        assert_eq!((same.content, same.style), (0.0, 0.0));
    }

    #[test]
    fn adversarial_satisfied_and_unsatisfied() {
        let ones = vec![
            FeatureMap::<f64>::filled(1, 2, 2, 1.0),
            FeatureMap::filled(1, 1, 1, 1.0),
        ];
        assert_eq!(adversarial_losses(&ones, Role::Generator, true).unwrap().0, 0.0);
        let zeros = vec![FeatureMap::<f64>::zeros(1, 2, 2), FeatureMap::zeros(1, 1, 1)];
        assert_eq!(adversarial_losses(&zeros, Role::Generator, true).unwrap().0, 1.0);
        assert_eq!(adversarial_losses(&zeros, Role::Discriminator, false).unwrap().0, 0.0);
        assert!(adversarial_losses::<f64>(&[], Role::Generator, true).is_err());
        assert!(adversarial_losses(&zeros, Role::Generator, false).is_err());
    }

    #[test]
    fn ocdp_identical_outputs_hit_the_clamp() {
        let out = FeatureMap::<f64>::filled(1, 2, 2, 0.3);
        let mask = vec![true, true, false, false];
        let s1 = set(vec![vec![0.25, 0.25], vec![0.0, 0.0]]);
        let s2 = set(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let r = ocdp_loss(&out, &out, &mask, &s1, &s2, 0).unwrap().unwrap();
        assert!(r.clamped);
        assert_eq!(r.value, OCDP_CLAMP_MAX);
        assert!(r.grad_out1.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ocdp_direct_arithmetic() {
        let out1 = FeatureMap::<f64>::filled(1, 2, 2, 0.5);
        let mut out2 = FeatureMap::<f64>::zeros(1, 2, 2);
        // outside the mask: irrelevant
        out2.set(0, 1, 1, 9.0);
        let mask = vec![true, true, true, false];
        let s1 = set(vec![vec![0.25, -0.25], vec![1.0, 1.0]]);
        let s2 = set(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let r = ocdp_loss(&out1, &out2, &mask, &s1, &s2, 0).unwrap().unwrap();
        assert!((r.image_distance - 0.5).abs() < 1e-15);
        assert!((r.style_distance - 0.25).abs() < 1e-15);
        assert!((r.value - 0.25 / (0.5 + 1e-6)).abs() < 1e-12);
        assert!((r.value - 0.5).abs() < 1e-5);
        // doubling the style difference doubles the loss
        let s1x2 = set(vec![vec![0.5, -0.5], vec![1.0, 1.0]]);
        let r2 = ocdp_loss(&out1, &out2, &mask, &s1x2, &s2, 0).unwrap().unwrap();
        assert!((r2.value - 2.0 * r.value).abs() < 1e-12);
    }

    #[test]
    fn ocdp_empty_mask_is_absent() {
        let out = FeatureMap::<f64>::zeros(1, 2, 2);
        let s1 = set(vec![vec![1.0]]);
        let s2 = set(vec![vec![0.0]]);
        assert!(ocdp_loss(&out, &out, &[false; 4], &s1, &s2, 0).unwrap().is_none());
        assert!(ocdp_loss(&out, &out, &[true; 4], &s1, &s1, 0).is_err());
    }

    #[test]
    fn weighted_totals() {
        let terms = StreamTerms {
            image_recon: 0.2,
            content_recon: 0.1,
            style_recon: 0.3,
            adv: 0.4,
            ocdp: Some(2.0),
        };
        let streams = [
            (Stream::AtoB, terms.clone()),
            (Stream::BtoA, StreamTerms { ocdp: None, ..terms }),
        ];
        assert_eq!(
            total_generator_loss(&streams, &LossWeights::zero())
                .unwrap()
                .generator_total,
            0.0
        );
        let only_adv = LossWeights {
            w_adv: 3.0,
            ..LossWeights::zero()
        };
        let r = total_generator_loss(&streams, &only_adv).unwrap();
        assert!((r.generator_total - 3.0 * 0.8).abs() < 1e-12);
        let r = total_generator_loss(&streams, &LossWeights::default()).unwrap();
        let hand = 2.0 * (10.0 * 0.2 + 0.1 + 0.3 + 0.4) + 2.0;
        assert!((r.generator_total - hand).abs() < 1e-12);
        assert_eq!(r.to_record()["gen/a2b/ocdp"], 2.0);
        assert!(!r.to_record().contains_key("gen/b2a/ocdp"));
    }

    #[test]
    fn nan_term_is_named() {
        let t = StreamTerms {
            adv: f64::NAN,
            ..Default::default()
        };
        let err = total_generator_loss(&[(Stream::BtoA, t)], &LossWeights::default()).unwrap_err();
        assert!(err.to_string().contains("gen/b2a/adv"), "{err}");
    }
}
