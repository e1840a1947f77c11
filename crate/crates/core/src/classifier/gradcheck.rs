use super::network::Network;
use crate::Result;

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Largest element-wise relative error over all parameters.
    pub max_relative_error: f64,
    /// The same maximum per parameter tensor.
    pub per_tensor: Vec<f64>,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic cross-entropy gradients with central differences,
/// in training mode (batch statistics).
pub fn gradient_check(net: &Network<f64>, x: &[f64], labels: &[usize]) -> Result<GradientReport> {
    let (_, _, grads) = net.loss_and_grads(x, labels)?;
    let mut probe = net.clone();
    let mut per_tensor = Vec::with_capacity(grads.len());
    let mut checked = 0;
    for (k, g) in grads.iter().enumerate() {
        let mut worst = 0.0f64;
        for (i, &analytic) in g.iter().enumerate() {
            let orig = probe.params()[k][i];
            probe.params_mut()[k][i] = orig + FD_STEP;
            let up = probe.loss(x, labels)?;
            probe.params_mut()[k][i] = orig - FD_STEP;
            let down = probe.loss(x, labels)?;
            probe.params_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic, numeric, 1e-7));
            checked += 1;
        }
        per_tensor.push(worst);
    }
    Ok(GradientReport {
        max_relative_error: per_tensor.iter().copied().fold(0.0, f64::max),
        per_tensor,
        checked,
    })
}
