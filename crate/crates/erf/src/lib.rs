//! Effective receptive fields: the input-gradient magnitude of one output
//! location, summed over classes and input channels and max-normalized.

pub mod pgm;

use std::path::Path;
use std::sync::Arc;

use lkm_core::unet::Model;
use lkm_tensor::{Tape, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ErfError {
    #[error("target error: {0}")]
    Target(String),
    #[error(transparent)]
    Model(#[from] lkm_core::Error),
    #[error(transparent)]
    Tensor(#[from] lkm_tensor::TensorError),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Center,
    /// Spatial coordinates, one per axis.
    At(Vec<usize>),
}

impl std::str::FromStr for Target {
    type Err = ErfError;

    /// `center` or comma-separated coordinates such as `12,40`.
    fn from_str(s: &str) -> Result<Self, ErfError> {
        if s == "center" {
            return Ok(Target::Center);
        }
        s.split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(Target::At)
            .map_err(|_| ErfError::Target(format!("expected `center` or `y,x`, got {s:?}")))
    }
}

impl Target {
    pub fn resolve(&self, extents: &[usize]) -> Result<Vec<usize>, ErfError> {
        match self {
            Target::Center => Ok(extents.iter().map(|&e| e / 2).collect()),
            Target::At(c) if c.len() == extents.len() && c.iter().zip(extents).all(|(c, e)| c < e) => Ok(c.clone()),
            Target::At(c) => Err(ErfError::Target(format!("{c:?} is outside {extents:?}"))),
        }
    }
}

/// Normalized magnitude grid over the input's spatial extents.
#[derive(Clone, Debug, PartialEq)]
pub struct ErfMap {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ErfMap {
    fn normalized(shape: Vec<usize>, mut values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
        Self { shape, values }
    }

    /// Pixels strictly above `threshold` (relative to the maximum of 1).
    pub fn support(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v > threshold).collect()
    }

    pub fn support_count(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v > threshold).count()
    }

    /// Linear 0..255 quantization.
    pub fn quantized(&self) -> Vec<u8> {
        self.values.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Unnormalized `Σ_channels |∂(Σ_classes f(x)[:, target]) / ∂x|` for an
/// arbitrary map `f: [C_in, spatial..] → [K, spatial'..]`.
pub fn raw_erf<F>(f: F, input: &Tensor, target: &Target) -> Result<Vec<f64>, ErfError>
where
    F: Fn(&Tensor) -> Result<Tensor, lkm_core::Error>,
{
    let tape = Tape::new();
    let x = tape.watch(input);
    let y = f(&x)?;
    let spatial = &y.shape()[1..];
    let at = target.resolve(spatial)?;
    let pixels: usize = spatial.iter().product();
    let offset = at.iter().zip(spatial).fold(0, |acc, (&c, &e)| acc * e + c);
    let index: Vec<usize> = (0..y.shape()[0]).map(|k| k * pixels + offset).collect();
    let n = index.len();
    let picked = y.gather(Arc::new(index), &[n]).sum_all();
    let grad = tape
        .backward(&picked)?
        .get_data(&x)
        .unwrap_or_else(|| vec![0.0; input.numel()]);
    let (c, px) = (input.shape()[0], input.numel() / input.shape()[0]);
    Ok((0..px).map(|i| (0..c).map(|ch| grad[ch * px + i].abs()).sum()).collect())
}

/// ERF of an arbitrary map, averaged over `inputs` before normalization.
pub fn erf_of<F>(f: F, inputs: &[Tensor], target: &Target) -> Result<ErfMap, ErfError>
where
    F: Fn(&Tensor) -> Result<Tensor, lkm_core::Error>,
{
    let first = inputs.first().ok_or_else(|| ErfError::Target("no inputs".into()))?;
    let mut acc = vec![0.0; first.numel() / first.shape()[0]];
    for x in inputs {
        for (a, v) in acc.iter_mut().zip(raw_erf(&f, x, target)?) {
            *a += v;
        }
    }
    let n = inputs.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Ok(ErfMap::normalized(first.shape()[1..].to_vec(), acc))
}

pub fn compute_erf(model: &Model, input: &Tensor, target: &Target) -> Result<ErfMap, ErfError> {
    erf_of(|x| model.forward(x), std::slice::from_ref(input), target)
}

pub fn compute_erf_averaged(model: &Model, inputs: &[Tensor], target: &Target) -> Result<ErfMap, ErfError> {
    erf_of(|x| model.forward(x), inputs, target)
}

/// Write the map as a greymap; volumes export their middle slice.
pub fn export_erf(map: &ErfMap, path: &Path) -> Result<(), ErfError> {
    let q = map.quantized();
    match map.shape[..] {
        [h, w] => pgm::write_pgm(path, w, h, &q),
        [d, h, w] => pgm::write_pgm(path, w, h, &q[d / 2 * h * w..(d / 2 + 1) * h * w]),
        _ => Err(ErfError::Format(format!("cannot export a map of shape {:?}", map.shape))),
    }
}
