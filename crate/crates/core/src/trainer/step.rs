use super::TrainState;
use crate::coadain::{ComponentMask, StyleCode, StyleCodeSet};
use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::nets::{check_inputs, ContentCache, ContentCode, GeneratorCache, ParamGroup, StyleCache};
use crate::nn::Param;
use crate::objectives::{
    adversarial_losses, image_recon_loss_grad, latent_recon_loss, ocdp_loss, total_generator_loss, LatentRecon,
    LossReport, Ocdp, Role, Stream, StreamTerms,
};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// Forward state of one translation direction for one sample.
struct Pass {
    source: Modality,
    index: usize,
    content_cache: ContentCache,
    style_caches: Vec<Option<StyleCache>>,
    recon_cache: GeneratorCache,
    recon_grad: FeatureMap,
    fake: ImageTensor,
    fake_cache: GeneratorCache,
    reenc_content_cache: ContentCache,
    reenc_style_caches: Vec<Option<StyleCache>>,
    latent: LatentRecon,
    ocdp: Option<(GeneratorCache, Ocdp)>,
    image_recon: f32,
    adv: f32,
}

impl Pass {
    fn stream(&self) -> Stream {
        match self.source {
            Modality::Rgb => Stream::AtoB,
            Modality::Thermal => Stream::BtoA,
        }
    }
}

fn scaled(x: &FeatureMap, s: f32) -> FeatureMap {
    x.map(|v| v * s)
}

fn finite(value: f32, what: impl FnOnce() -> String) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(what()))
    }
}

fn forward_pass(state: &mut TrainState, image: &ImageTensor, mask: &ComponentMask, index: usize) -> Result<Pass> {
    let source = image.modality;
    let target = source.other();
    let cfg = state.model.config.clone();
    check_inputs(&cfg, image, mask, source)?;
    let ocdp_active =
        source == Modality::Rgb && state.config.loss_weights.w_ocdp > 0.0 && mask.contains(cfg.vehicle_component);

    let sampled = StyleCodeSet::sample(cfg.num_components, cfg.style_dim, state.rng());
    let resampled = if ocdp_active {
        let code = StyleCode::sample(cfg.vehicle_component, cfg.style_dim, state.rng());
        Some(sampled.with_code(code)?)
    } else {
        None
    };

    let src = state.model.nets(source);
    let tgt = state.model.nets(target);
    let (content, content_cache): (ContentCode, _) = src.content.forward_train(image, mask)?;
    let (styles, style_caches) = src.style.forward_train(image, mask)?;
    let (recon, recon_cache) = src.generator.forward_train(&content, mask, &styles, None)?;
    let (image_recon, recon_grad) = image_recon_loss_grad(&recon.pixels, &image.pixels)?;

    let (fake, fake_cache) = tgt.generator.forward_train(&content, mask, &sampled, None)?;
    let (content_rt, reenc_content_cache) = tgt.content.forward_train(&fake, mask)?;
    let (styles_rt, reenc_style_caches) = tgt.style.forward_train(&fake, mask)?;
    let latent = latent_recon_loss(&content_rt.features, &content.features, &styles_rt, &sampled, mask)?;

    let ocdp = match resampled {
        Some(resampled) => {
            let (fake2, cache2) = tgt.generator.forward_train(&content, mask, &resampled, None)?;
            let region = mask.component(cfg.vehicle_component);
            ocdp_loss(
                &fake.pixels,
                &fake2.pixels,
                &region,
                &sampled,
                &resampled,
                cfg.vehicle_component,
            )?
            .map(|o| (cache2, o))
        }
        None => None,
    };
    Ok(Pass {
        source,
        index,
        content_cache,
        style_caches,
        recon_cache,
        recon_grad,
        fake,
        fake_cache,
        reenc_content_cache,
        reenc_style_caches,
        latent,
        ocdp,
        image_recon,
        adv: 0.0,
    })
}

fn zero_group(state: &mut TrainState, group: ParamGroup) {
    state
        .model
        .visit_group_mut(group, &mut |_, p: &mut Param| p.zero_grad());
}

/// One discriminator update followed by one generator update.
///
/// `batch_a[i]` contributes its RGB image and `batch_b[i]` its thermal image;
/// the two batches are unrelated scenes. Style codes are drawn from the
/// state's RNG, so the step is a deterministic function of the state and the
/// batches. A non-finite loss aborts the step with an error naming the term.
pub fn train_step(state: &mut TrainState, batch_a: &[&Sample], batch_b: &[&Sample]) -> Result<LossReport> {
    if batch_a.is_empty() || batch_a.len() != batch_b.len() {
        return Err(Error::invalid(format!(
            "batches of {} and {} samples; both must be equal and non-empty",
            batch_a.len(),
            batch_b.len()
        )));
    }
    let weights = state.config.loss_weights.clone();
    let inv_batch = 1.0 / batch_a.len() as f32;
    let real = |m: Modality, i: usize| match m {
        Modality::Rgb => &batch_a[i].rgb,
        Modality::Thermal => &batch_b[i].thermal,
    };

    let mut passes = Vec::with_capacity(2 * batch_a.len());
    for i in 0..batch_a.len() {
        passes.push(forward_pass(state, &batch_a[i].rgb, &batch_a[i].mask, i)?);
        passes.push(forward_pass(state, &batch_b[i].thermal, &batch_b[i].mask, i)?);
    }
    for p in &passes {
        let s = p.stream();
        finite(p.image_recon, || format!("gen/{s}/image_recon"))?;
        finite(p.latent.content, || format!("gen/{s}/content_recon"))?;
        finite(p.latent.style, || format!("gen/{s}/style_recon"))?;
        if let Some((_, o)) = &p.ocdp {
            finite(o.value, || format!("gen/{s}/ocdp"))?;
        }
    }

    // discriminator update on detached fakes
    zero_group(state, ParamGroup::Discriminator);
    let mut dis_terms = Vec::new();
    for p in &passes {
        let target = p.source.other();
        let disc = &mut state.model.nets_mut(target).discriminator;
        let mut halves = [0.0f32; 2];
        for (h, (image, is_real)) in [(real(target, p.index), true), (&p.fake, false)]
            .into_iter()
            .enumerate()
        {
            let (logits, cache) = disc.forward_train(image)?;
            let (loss, grads) = adversarial_losses(&logits, Role::Discriminator, is_real)?;
            let grads: Vec<FeatureMap> = grads.iter().map(|g| scaled(g, inv_batch)).collect();
            disc.backward(cache, &grads, false)?;
            halves[h] = loss * inv_batch;
        }
        dis_terms.push((p.stream(), halves));
    }
    let mut dis_report = Vec::new();
    for stream in [Stream::AtoB, Stream::BtoA] {
        let (r, f) = dis_terms
            .iter()
            .filter(|(s, _)| *s == stream)
            .fold((0.0f64, 0.0f64), |(r, f), (_, h)| (r + h[0] as f64, f + h[1] as f64));
        dis_report.push((stream, "real", r));
        dis_report.push((stream, "fake", f));
    }
    for &(s, t, v) in &dis_report {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("dis/{s}/{t}")));
        }
    }
    let (discriminator_opt, model) = (&mut state.discriminator_opt, &mut state.model);
    discriminator_opt.step(|f| model.visit_group_mut(ParamGroup::Discriminator, f))?;

    // generator update against the refreshed discriminators
    zero_group(state, ParamGroup::Generator);
    let w_adv = weights.w_adv as f32;
    let mut fake_grads = Vec::with_capacity(passes.len());
    for p in &mut passes {
        let disc = &mut state.model.nets_mut(p.source.other()).discriminator;
        let (logits, cache) = disc.forward_train(&p.fake)?;
        let (loss, grads) = adversarial_losses(&logits, Role::Generator, true)?;
        finite(loss, || format!("gen/{}/adv", p.stream()))?;
        p.adv = loss;
        let grads: Vec<FeatureMap> = grads.iter().map(|g| scaled(g, w_adv * inv_batch)).collect();
        fake_grads.push(disc.backward(cache, &grads, true)?.expect("image gradient requested"));
    }
    zero_group(state, ParamGroup::Discriminator);

    let w_img = weights.w_image_recon as f32 * inv_batch;
    let w_content = weights.w_content_recon as f32 * inv_batch;
    let w_style = weights.w_style_recon as f32 * inv_batch;
    let w_ocdp = weights.w_ocdp as f32 * inv_batch;
    let mut stream_terms = vec![
        (Stream::AtoB, StreamTerms::default()),
        (Stream::BtoA, StreamTerms::default()),
    ];
    let mut ocdp_counts = [0usize; 2];
    for (p, mut g_fake) in passes.into_iter().zip(fake_grads) {
        let slot = match p.stream() {
            Stream::AtoB => 0,
            Stream::BtoA => 1,
        };
        let terms = &mut stream_terms[slot].1;
        terms.image_recon += (p.image_recon * inv_batch) as f64;
        terms.content_recon += (p.latent.content * inv_batch) as f64;
        terms.style_recon += (p.latent.style * inv_batch) as f64;
        terms.adv += (p.adv * inv_batch) as f64;

        let target = p.source.other();
        let tgt = state.model.nets_mut(target);
        let grad_content_rt = scaled(&p.latent.grad_content, w_content);
        let grad_styles_rt: Vec<Vec<f32>> = p
            .latent
            .grad_styles
            .iter()
            .map(|g| g.iter().map(|v| v * w_style).collect())
            .collect();
        if let Some(g) = tgt.content.backward(p.reenc_content_cache, &grad_content_rt, true)? {
            g_fake.add_assign(&g);
        }
        if let Some(g) = tgt.style.backward(p.reenc_style_caches, &grad_styles_rt, true)? {
            g_fake.add_assign(&g);
        }
        let mut second = None;
        if let Some((cache2, o)) = p.ocdp {
            g_fake.add_assign(&scaled(&o.grad_out1, w_ocdp));
            *terms.ocdp.get_or_insert(0.0) += o.value as f64;
            ocdp_counts[slot] += 1;
            second = Some((cache2, scaled(&o.grad_out2, w_ocdp)));
        }
        let (mut g_content, _) = tgt.generator.backward(p.fake_cache, &g_fake)?;
        if let Some((cache2, g2)) = second {
            let (g, _) = tgt.generator.backward(cache2, &g2)?;
            g_content.add_assign(&g);
        }

        let src = state.model.nets_mut(p.source);
        let (g, g_styles) = src.generator.backward(p.recon_cache, &scaled(&p.recon_grad, w_img))?;
        g_content.add_assign(&g);
        g_content.add_assign(&scaled(&p.latent.grad_content, -w_content));
        src.content.backward(p.content_cache, &g_content, false)?;
        src.style.backward(p.style_caches, &g_styles, false)?;
    }
    for (slot, (_, terms)) in stream_terms.iter_mut().enumerate() {
        if let Some(o) = terms.ocdp.as_mut() {
            *o /= ocdp_counts[slot] as f64;
        }
    }
    let report = total_generator_loss(&stream_terms, &weights)?.with_discriminator_terms(&dis_report, 1.0)?;
    let (generator_opt, model) = (&mut state.generator_opt, &mut state.model);
    generator_opt.step(|f| model.visit_group_mut(ParamGroup::Generator, f))?;
    state.iteration += 1;
    Ok(report)
}
