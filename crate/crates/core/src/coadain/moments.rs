use crate::coadain::mask::ComponentMask;
use crate::error::{Error, Result};
use crate::tensor::{cast, FeatureMap, Scalar};

/// Per-component, per-channel mean and population variance of a feature map.
///
/// Rows are components, columns are channels (`K × C`, row-major). A component
/// with no pixels has `pixel_count == 0`; its entries are zero and must be
/// treated as invalid, which [`MaskedMoments::mean`] and
/// [`MaskedMoments::var`] do by returning `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMoments<T = f32> {
    num_components: usize,
    channels: usize,
    mean: Vec<T>,
    var: Vec<T>,
    pixel_count: Vec<usize>,
}

impl<T: Scalar> MaskedMoments<T> {
    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> &[usize] {
        &self.pixel_count
    }

    pub fn is_valid(&self, component: usize) -> bool {
        self.pixel_count[component] > 0
    }

    pub fn mean(&self, component: usize, channel: usize) -> Option<T> {
        self.is_valid(component)
            .then(|| self.mean[component * self.channels + channel])
    }

    pub fn var(&self, component: usize, channel: usize) -> Option<T> {
        self.is_valid(component)
            .then(|| self.var[component * self.channels + channel])
    }

    /// Raw `K × C` means; entries of invalid components are zero.
    pub fn means(&self) -> &[T] {
        &self.mean
    }

    /// Raw `K × C` variances; entries of invalid components are zero.
    pub fn vars(&self) -> &[T] {
        &self.var
    }
}

pub(crate) fn check_mask_matches<T: Scalar>(x: &FeatureMap<T>, mask: &ComponentMask) -> Result<()> {
    if x.spatial_dims() != mask.spatial_dims() {
        return Err(Error::dim(format!(
            "mask is {:?} but features are {:?}",
            mask.spatial_dims(),
            x.spatial_dims()
        )));
    }
    Ok(())
}

/// Mean and biased variance of every channel over each component's pixels.
pub fn masked_moments<T: Scalar>(x: &FeatureMap<T>, mask: &ComponentMask) -> Result<MaskedMoments<T>> {
    check_mask_matches(x, mask)?;
    let k = mask.num_components();
    let c = x.channels();
    let labels = mask.labels();
    let pixel_count = mask.pixel_counts();
    let mut mean = vec![T::zero(); k * c];
    let mut var = vec![T::zero(); k * c];
    let mut acc = vec![T::zero(); k];
    for ch in 0..c {
        let plane = x.plane(ch);
        acc.iter_mut().for_each(|a| *a = T::zero());
        for (&v, &l) in plane.iter().zip(labels) {
            acc[l as usize] = acc[l as usize] + v;
        }
        for i in 0..k {
            if pixel_count[i] > 0 {
                mean[i * c + ch] = acc[i] / cast::<T>(pixel_count[i] as f64);
            }
        }
        acc.iter_mut().for_each(|a| *a = T::zero());
        for (&v, &l) in plane.iter().zip(labels) {
            let d = v - mean[l as usize * c + ch];
            acc[l as usize] = acc[l as usize] + d * d;
        }
        for i in 0..k {
            if pixel_count[i] > 0 {
                var[i * c + ch] = acc[i] / cast::<T>(pixel_count[i] as f64);
            }
        }
    }
    Ok(MaskedMoments {
        num_components: k,
        channels: c,
        mean,
        var,
        pixel_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_row_component() {
        let x = FeatureMap::new(1, 2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let mask = ComponentMask::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
        let m = masked_moments(&x, &mask).unwrap();
        assert_eq!(m.mean(0, 0), Some(1.5));
        assert_eq!(m.var(0, 0), Some(0.25));
        assert_eq!(m.mean(1, 0), Some(3.5));
        assert_eq!(m.var(1, 0), Some(0.25));
    }

    #[test]
    fn constant_input_has_zero_variance() {
        let x = FeatureMap::<f32>::filled(3, 4, 4, 5.0);
        let labels = (0..16).map(|i| (i % 3) as u16).collect();
        let mask = ComponentMask::new(4, 4, 4, labels).unwrap();
        let m = masked_moments(&x, &mask).unwrap();
        for i in 0..3 {
            for c in 0..3 {
                assert_eq!(m.mean(i, c), Some(5.0));
                assert_eq!(m.var(i, c), Some(0.0));
            }
        }
        assert!(!m.is_valid(3));
        assert_eq!(m.mean(3, 0), None);
        assert_eq!(m.pixel_count().iter().sum::<usize>(), 16);
    }

    #[test]
    fn single_component_is_instance_statistics() {
        let x = FeatureMap::<f64>::from_fn(2, 3, 3, |c, y, x| ((c + 1) * (y * 3 + x)) as f64 * 0.3 - 1.0);
        let mask = ComponentMask::uniform(3, 3, 1, 0);
        let m = masked_moments(&x, &mask).unwrap();
        for c in 0..2 {
            let p = x.plane(c);
            let mu = p.iter().sum::<f64>() / 9.0;
            let var = p.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 9.0;
            assert!((m.mean(0, c).unwrap() - mu).abs() < 1e-12);
            assert!((m.var(0, c).unwrap() - var).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let x = FeatureMap::<f32>::zeros(1, 2, 2);
        let mask = ComponentMask::uniform(2, 3, 1, 0);
        assert!(matches!(masked_moments(&x, &mask), Err(Error::Dimension(_))));
    }
}
