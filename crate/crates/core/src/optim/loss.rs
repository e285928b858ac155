//! Supervision losses and their per-pixel adjoints.
//!
//! Every loss is a mean over supervised pixels. Adjoints are exact
//! derivatives of the returned value.

use serde::{Deserialize, Serialize};

use crate::buffers::Rgb;
use crate::error::{Error, Result};

/// Relative weights of the depth and transmittance terms; the color term
/// has unit weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub depth: f64,
    pub transmittance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 0.005,
            transmittance: 1000.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.depth >= 0.0 && self.transmittance >= 0.0 && self.depth.is_finite() && self.transmittance.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("loss weights must be finite and non-negative: {self:?}")))
        }
    }
}

/// How the transmittance trace before the expected surface is penalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmittanceForm {
    /// `sum_i ((1 - T_i) m_i)^2 / sum_i m_i`: zero when space in front of
    /// the surface is empty.
    #[default]
    Emptiness,
    /// `||T m||_2` taken verbatim.
    Literal,
}

/// Mean squared color error over supervised pixels and channels.
pub fn loss_rgb(rendered: &[Rgb], target: &[Rgb], mask: &[bool]) -> Result<(f64, Vec<Rgb>)> {
    same_len(rendered.len(), target.len())?;
    same_len(rendered.len(), mask.len())?;
    let n = mask.iter().filter(|&&m| m).count();
    let mut adj = vec![[0.0; 3]; rendered.len()];
    if n == 0 {
        return Ok((0.0, adj));
    }
    let scale = 1.0 / (3 * n) as f64;
    let mut sum = 0.0;
    for i in 0..rendered.len() {
        if !mask[i] {
            continue;
        }
        for ch in 0..3 {
            let d = rendered[i][ch] - target[i][ch];
            sum += d * d;
            adj[i][ch] = 2.0 * d * scale;
        }
    }
    Ok((sum * scale, adj))
}

/// Mean squared z-depth error over supervised pixels.
pub fn loss_depth(rendered: &[f64], target: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    same_len(rendered.len(), target.len())?;
    same_len(rendered.len(), mask.len())?;
    let n = mask.iter().filter(|&&m| m).count();
    let mut adj = vec![0.0; rendered.len()];
    if n == 0 {
        return Ok((0.0, adj));
    }
    let scale = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..rendered.len() {
        if mask[i] {
            let d = rendered[i] - target[i];
            sum += d * d;
            adj[i] = 2.0 * d * scale;
        }
    }
    Ok((sum * scale, adj))
}

/// Transmittance penalty of one ray with samples at `sample_t` in front of
/// the expected hit distance `z_hat`, written into `adj` (unscaled).
pub(crate) fn transmittance_pixel(
    trace: &[f64],
    sample_t: impl Fn(usize) -> f64,
    z_hat: f64,
    form: TransmittanceForm,
    adj: &mut [f64],
) -> f64 {
    adj.fill(0.0);
    let before = (0..trace.len()).take_while(|&i| sample_t(i) < z_hat).count();
    if before == 0 {
        return 0.0;
    }
    match form {
        TransmittanceForm::Emptiness => {
            let norm = 1.0 / before as f64;
            let mut sum = 0.0;
            for i in 0..before {
                let e = 1.0 - trace[i];
                sum += e * e;
                adj[i] = -2.0 * e * norm;
            }
            sum * norm
        }
        TransmittanceForm::Literal => {
            let norm = trace[..before].iter().map(|t| t * t).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..before {
                    adj[i] = trace[i] / norm;
                }
            }
            norm
        }
    }
}

/// Mean over supervised pixels of the per-ray transmittance penalty.
///
/// `z_hat` holds the expected hit as distance along each ray (convert
/// z-depth by dividing by the ray's camera-z per unit distance). Samples
/// with `t_i < z_hat` are the ones in front of the surface.
pub fn loss_transmittance(
    traces: &[Vec<f64>],
    sample_t: &[Vec<f64>],
    z_hat: &[f64],
    mask: &[bool],
    form: TransmittanceForm,
) -> Result<(f64, Vec<Vec<f64>>)> {
    same_len(traces.len(), sample_t.len())?;
    same_len(traces.len(), z_hat.len())?;
    same_len(traces.len(), mask.len())?;
    let n = mask.iter().filter(|&&m| m).count();
    let mut adj: Vec<Vec<f64>> = traces.iter().map(|t| vec![0.0; t.len()]).collect();
    if n == 0 {
        return Ok((0.0, adj));
    }
    let scale = 1.0 / n as f64;
    let mut sum = 0.0;
    for p in 0..traces.len() {
        if !mask[p] {
            continue;
        }
        same_len(traces[p].len(), sample_t[p].len())?;
        let ts = &sample_t[p];
        sum += transmittance_pixel(&traces[p], |i| ts[i], z_hat[p], form, &mut adj[p]);
        for a in adj[p].iter_mut() {
            *a *= scale;
        }
    }
    Ok((sum * scale, adj))
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::shape(a, b))
    }
}
