/// Negative-side slope used throughout the scorer.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

/// Multiplies `grad` by the activation's derivative at the pre-activation
/// `x`. The derivative at exactly 0 is `slope`.
pub fn leaky_relu_backward(x: &[f64], grad: &[f64], slope: f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), grad.len());
    x.iter().zip(grad).map(|(&v, &g)| if v > 0.0 { g } else { slope * g }).collect()
}
