use crate::tensor::FeatureMap;

pub fn relu(x: &FeatureMap) -> FeatureMap {
    x.map(|v| v.max(0.0))
}

/// `y` is the forward output.
pub fn relu_backward(y: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
    y.zip_map(grad, |y, g| if y > 0.0 { g } else { 0.0 })
        .expect("relu gradient shape")
}

pub fn leaky_relu(x: &FeatureMap, slope: f32) -> FeatureMap {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// `y` is the forward output; its sign equals the input's.
pub fn leaky_relu_backward(y: &FeatureMap, grad: &FeatureMap, slope: f32) -> FeatureMap {
    y.zip_map(grad, |y, g| if y > 0.0 { g } else { slope * g })
        .expect("leaky relu gradient shape")
}

pub fn tanh(x: &FeatureMap) -> FeatureMap {
    x.map(f32::tanh)
}

pub fn tanh_backward(y: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
    y.zip_map(grad, |y, g| g * (1.0 - y * y)).expect("tanh gradient shape")
}
