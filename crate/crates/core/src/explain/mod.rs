//! GradCAM over the conv2 feature maps and saliency replay.

mod replay;

pub use replay::{
    replay_term, saliency_replay_loss, ReplayBuffer, ReplayConfig, ReplayEntry, CONFIDENCE_THRESHOLD,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mode, Tape, Tensor};
use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::models::Network;

/// Normalized saliency at feature-map resolution plus an input-resolution copy.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub upsampled: Vec<f64>,
    pub up_height: usize,
    pub up_width: usize,
}

/// `ReLU(Σ_k α_k A^k)` scaled to max 1, with `α_k` the spatial mean of the
/// gradient for channel `k`. Inputs are `channels x h x w`, channel-major.
pub fn gradcam_from(acts: &[f64], grads: &[f64], channels: usize, h: usize, w: usize) -> Result<Vec<f64>> {
    let want = channels * h * w;
    if acts.len() != want {
        return Err(Error::dim("activation length", want, acts.len()));
    }
    if grads.len() != want {
        return Err(Error::dim("gradient length", want, grads.len()));
    }
    let alpha = channel_weights(grads, channels, h * w);
    let mut map = vec![0.0; h * w];
    for (k, a) in alpha.iter().enumerate() {
        map.iter_mut()
            .zip(&acts[k * h * w..(k + 1) * h * w])
            .for_each(|(m, v)| *m += a * v);
    }
    map.iter_mut().for_each(|m| *m = m.max(0.0));
    normalize_max(&mut map);
    Ok(map)
}

pub(crate) fn channel_weights(grads: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    (0..channels)
        .map(|k| grads[k * plane..(k + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect()
}

fn normalize_max(map: &mut [f64]) {
    let max = map.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        map.iter_mut().for_each(|m| *m /= max);
    }
}

/// Conv2 activations and the gradient of `log P(target)` with respect to
/// them, for one image in eval mode. Parameters are only read.
pub(crate) fn features_and_grads(net: &Network, image: &LabeledImage, target: usize) -> Result<(Vec<f64>, Vec<f64>, [usize; 3])> {
    if target > 1 {
        return Err(Error::Usage(format!("GradCAM target class {target} outside {{0, 1}}")));
    }
    let batch = Tensor::new(
        vec![1, image.channels, image.height, image.width],
        image.pixels.clone(),
    )?;
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(image.source_index as u64);
    let fwd = net.forward(&mut tape, &batch, Mode::Eval, &mut rng)?;
    let shape = tape.shape(fwd.features).to_vec();
    let acts = tape.value(fwd.features).to_vec();
    let picked = tape.pick(fwd.log_probs, target)?;
    let grads = tape.backward(picked)?;
    let g = grads
        .wrt(fwd.features)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; acts.len()]);
    Ok((acts, g, [shape[1], shape[2], shape[3]]))
}

/// GradCAM for `target` on the last convolutional layer.
pub fn gradcam(net: &Network, image: &LabeledImage, target: usize) -> Result<SaliencyMap> {
    let (acts, grads, [c, h, w]) = features_and_grads(net, image, target)?;
    let values = gradcam_from(&acts, &grads, c, h, w)?;
    let upsampled = bilinear_upsample(&values, h, w, image.height, image.width)?;
    Ok(SaliencyMap {
        height: h,
        width: w,
        values,
        upsampled,
        up_height: image.height,
        up_width: image.width,
    })
}

/// Separable bilinear interpolation with corner alignment.
pub fn bilinear_upsample(map: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
    if h == 0 || w == 0 {
        return Err(Error::dim("source map size", 1, 0));
    }
    if map.len() != h * w {
        return Err(Error::dim("source map length", h * w, map.len()));
    }
    if out_h < h {
        return Err(Error::dim("target height", h, out_h));
    }
    if out_w < w {
        return Err(Error::dim("target width", w, out_w));
    }
    let coords = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                if n_in == 1 || n_out == 1 {
                    return (0, 0, 0.0);
                }
                let s = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                let lo = (s.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = coords(h, out_h);
    let xs = coords(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = map[y0 * w + x0] * (1.0 - fx) + map[y0 * w + x1] * fx;
            let bot = map[y1 * w + x0] * (1.0 - fx) + map[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(out)
}
