use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{Camera, FrustumGrid};
use crate::render::LineDrawing;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayerSpec {
    pub channels: usize,
    pub dropout: bool,
}

/// Architecture of the U-net. Every layer is a 4x4 stride-2 (de)convolution:
/// the encoder halves the resolution per layer and the decoder doubles it.
/// The decoder list excludes the final layer, which always produces
/// `2 * slices` channels at `slices x slices`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_resolution: usize,
    pub encoder: Vec<usize>,
    pub decoder: Vec<DecoderLayerSpec>,
    pub slices: usize,
    /// Resolutions at which a decoder output is concatenated with the
    /// encoder output of equal resolution.
    pub skips: Vec<usize>,
    /// Concatenate a `slices`-channel prediction with the second encoder
    /// layer's output.
    pub updater: bool,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
}

fn dec(channels: usize, dropout: bool) -> DecoderLayerSpec {
    DecoderLayerSpec { channels, dropout }
}

impl NetworkSpec {
    /// 256^2 drawings to 64^3 frustum grids.
    pub fn full() -> Self {
        NetworkSpec {
            input_resolution: 256,
            encoder: vec![64, 128, 256, 512, 512, 512, 512, 512],
            decoder: vec![dec(512, true), dec(512, true), dec(512, false), dec(512, false), dec(256, false)],
            slices: 64,
            skips: vec![2, 4, 8, 16, 32],
            updater: false,
            leaky_slope: 0.2,
            dropout_rate: 0.5,
        }
    }

    /// 64^2 drawings to 16^3 frustum grids, channel widths divided by four.
    pub fn toy() -> Self {
        NetworkSpec {
            input_resolution: 64,
            encoder: vec![16, 32, 64, 128, 128, 128],
            decoder: vec![dec(128, true), dec(128, true), dec(64, false)],
            slices: 16,
            skips: vec![2, 4, 8],
            updater: false,
            leaky_slope: 0.2,
            dropout_rate: 0.5,
        }
    }

    pub fn with_updater(mut self, updater: bool) -> Self {
        self.updater = updater;
        self
    }

    pub fn output_channels(&self) -> usize {
        2 * self.slices
    }

    /// Resolution at which an updater injects its prediction.
    pub fn injection_resolution(&self) -> usize {
        self.input_resolution / 4
    }

    fn encoder_resolution(&self, j: usize) -> usize {
        self.input_resolution >> (j + 1)
    }

    fn decoder_resolution(&self, i: usize) -> usize {
        self.encoder_resolution(self.encoder.len() - 1) << (i + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("network spec: {m}")));
        if self.encoder.len() < 3 {
            return bad("at least three encoder layers are required".into());
        }
        if self.encoder.iter().chain(self.decoder.iter().map(|d| &d.channels)).any(|c| *c == 0) {
            return bad("zero-width layer".into());
        }
        let depth = self.encoder.len();
        if self.input_resolution == 0 || self.input_resolution % (1 << depth) != 0 {
            return bad(format!("input resolution {} is not halvable through {depth} layers", self.input_resolution));
        }
        let out = self.encoder_resolution(depth - 1) << (self.decoder.len() + 1);
        if out != self.slices {
            return bad(format!("decoder ends at {out}x{out}, expected {s}x{s}", s = self.slices));
        }
        for r in &self.skips {
            let in_dec = (0..self.decoder.len()).any(|i| self.decoder_resolution(i) == *r);
            let in_enc = (0..depth).any(|j| self.encoder_resolution(j) == *r);
            if !in_dec || !in_enc {
                return bad(format!("skip at resolution {r} has no matching encoder/decoder pair"));
            }
        }
        if self.updater && self.injection_resolution() != self.slices {
            return bad(format!(
                "updater injects {}x{} slices at a {}x{} feature map",
                self.slices,
                self.slices,
                self.injection_resolution(),
                self.injection_resolution()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) || self.leaky_slope < 0.0 {
            return bad("dropout rate must lie in [0,1) and the leaky slope be non-negative".into());
        }
        Ok(())
    }
}

/// A named parameter or statistics buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
struct ConvIdx {
    w: usize,
    b: usize,
    cout: usize,
}

#[derive(Clone, Copy, Debug)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Clone, Debug)]
struct EncLayer {
    conv: ConvIdx,
    bn: Option<BnIdx>,
}

#[derive(Clone, Debug)]
struct DecLayer {
    conv: ConvIdx,
    bn: BnIdx,
    dropout: bool,
    skip: Option<usize>,
}

/// U-net weights plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    buffers: Vec<Param<T>>,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    last: ConvIdx,
}

struct EncTape<T> {
    x_shape: [usize; 4],
    cols: Vec<T>,
    bn: Option<BnCache<T>>,
    y: Tensor<T>,
}

struct DecTape<T> {
    x: Tensor<T>,
    bn: BnCache<T>,
    mask: Option<Vec<T>>,
    y: Tensor<T>,
}

/// Activations saved by a training forward pass.
pub struct Tape<T> {
    enc: Vec<EncTape<T>>,
    dec: Vec<DecTape<T>>,
    last_x: Tensor<T>,
}

/// Parameter gradients, aligned with [`Network::params`].
pub type Grads<T> = Vec<Vec<T>>;

impl<T: Real> Network<T> {
    /// Fresh network: kernels from N(0, 0.02), zero biases, unit batch-norm scales.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut params: Vec<Param<T>> = Vec::new();
        let mut buffers: Vec<Param<T>> = Vec::new();
        let add = |list: &mut Vec<Param<T>>, name: String, shape: Vec<usize>, f: &mut dyn FnMut() -> f64| {
            let n = shape.iter().product();
            list.push(Param { name, shape, value: (0..n).map(|_| T::lit(f())).collect() });
            list.len() - 1
        };
        let mut conv = |params: &mut Vec<Param<T>>, name: &str, shape: [usize; 4], cout: usize| {
            let w = add(params, format!("{name}.weight"), shape.to_vec(), &mut || normal.sample(&mut rng));
            let b = add(params, format!("{name}.bias"), vec![cout], &mut || 0.0);
            ConvIdx { w, b, cout }
        };
        let bn = |params: &mut Vec<Param<T>>, buffers: &mut Vec<Param<T>>, name: &str, c: usize| {
            let mk = |name: String, v: f64| Param { name, shape: vec![c], value: vec![T::lit(v); c] };
            params.push(mk(format!("{name}.gamma"), 1.0));
            params.push(mk(format!("{name}.beta"), 0.0));
            buffers.push(mk(format!("{name}.running_mean"), 0.0));
            buffers.push(mk(format!("{name}.running_var"), 1.0));
            BnIdx { gamma: params.len() - 2, beta: params.len() - 1, mean: buffers.len() - 2, var: buffers.len() - 1 }
        };

        let mut enc = Vec::new();
        let mut cin = 1;
        for (j, &cout) in spec.encoder.iter().enumerate() {
            if j == 2 && spec.updater {
                cin += spec.slices;
            }
            let c = conv(&mut params, &format!("enc{j}.conv"), [cout, cin, 4, 4], cout);
            let b = (j > 0).then(|| bn(&mut params, &mut buffers, &format!("enc{j}.bn"), cout));
            enc.push(EncLayer { conv: c, bn: b });
            cin = cout;
        }
        let mut dec = Vec::new();
        for (i, d) in spec.decoder.iter().enumerate() {
            let c = conv(&mut params, &format!("dec{i}.deconv"), [cin, d.channels, 4, 4], d.channels);
            let b = bn(&mut params, &mut buffers, &format!("dec{i}.bn"), d.channels);
            let res = spec.decoder_resolution(i);
            let skip = spec
                .skips
                .contains(&res)
                .then(|| (0..spec.encoder.len()).find(|j| spec.encoder_resolution(*j) == res))
                .flatten();
            dec.push(DecLayer { conv: c, bn: b, dropout: d.dropout, skip });
            cin = d.channels + skip.map_or(0, |j| spec.encoder[j]);
        }
        let out = spec.output_channels();
        let last = conv(&mut params, "out.deconv", [cin, out, 4, 4], out);
        Ok(Network { spec, params, buffers, enc, dec, last })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Param<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Param<T>] {
        &mut self.buffers
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copy in another precision (e.g. for gradient checks).
    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |p: &Param<T>| Param {
            name: p.name.clone(),
            shape: p.shape.clone(),
            value: p.value.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        };
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(conv).collect(),
            buffers: self.buffers.iter().map(conv).collect(),
            enc: self.enc.clone(),
            dec: self.dec.clone(),
            last: self.last,
        }
    }

    fn check_inputs(&self, x: &Tensor<T>, injected: Option<&Tensor<T>>) -> Result<()> {
        let r = self.spec.input_resolution;
        if x.shape[1..] != [1, r, r] {
            return Err(Error::SizeMismatch(format!("input {:?}, network expects [_, 1, {r}, {r}]", x.shape)));
        }
        match (self.spec.updater, injected) {
            (true, Some(inj)) => {
                let s = self.spec.slices;
                if inj.shape != [x.batch(), s, s, s] {
                    return Err(Error::SizeMismatch(format!(
                        "injected prediction {:?}, expected [{}, {s}, {s}, {s}]",
                        inj.shape,
                        x.batch()
                    )));
                }
            }
            (true, None) => return Err(Error::SizeMismatch("updater needs an injected prediction".into())),
            (false, Some(_)) => return Err(Error::SizeMismatch("single-view network takes no injection".into())),
            (false, None) => {}
        }
        Ok(())
    }

    /// Inference pass (running batch-norm statistics, no dropout); returns logits.
    pub fn forward(&self, x: &Tensor<T>, injected: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.check_inputs(x, injected)?;
        Ok(self.run(x, injected, None).0)
    }

    /// Training pass (batch statistics, dropout from `rng`); returns logits and
    /// the activations needed by [`Network::backward`].
    pub fn forward_train(
        &self,
        x: &Tensor<T>,
        injected: Option<&Tensor<T>>,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_inputs(x, injected)?;
        let (y, tape) = self.run(x, injected, Some(rng));
        Ok((y, tape.expect("training pass records a tape")))
    }

    fn p(&self, i: usize) -> &[T] {
        &self.params[i].value
    }

    fn run(&self, x: &Tensor<T>, injected: Option<&Tensor<T>>, mut rng: Option<&mut dyn RngCore>) -> (Tensor<T>, Option<Tape<T>>) {
        let train = rng.is_some();
        let slope = self.spec.leaky_slope;
        let mut enc_tape = Vec::new();
        let mut outs: Vec<Tensor<T>> = Vec::new();
        let mut h = x.clone();
        for (j, layer) in self.enc.iter().enumerate() {
            if j == 2 {
                if let Some(inj) = injected {
                    h = Tensor::concat_channels(&h, inj).expect("checked shapes");
                }
            }
            let (z, cols) = conv_forward(&h, self.p(layer.conv.w), self.p(layer.conv.b), layer.conv.cout);
            let (z, bn) = match layer.bn {
                Some(b) if train => {
                    let (z, c) = batchnorm_forward_train(&z, self.p(b.gamma), self.p(b.beta));
                    (z, Some(c))
                }
                Some(b) => (
                    batchnorm_forward_eval(&z, self.p(b.gamma), self.p(b.beta), &self.buffers[b.mean].value, &self.buffers[b.var].value),
                    None,
                ),
                None => (z, None),
            };
            let y = leaky_forward(&z, slope);
            if train {
                enc_tape.push(EncTape { x_shape: h.shape, cols, bn, y: y.clone() });
            }
            outs.push(y.clone());
            h = y;
        }
        let mut dec_tape = Vec::new();
        for layer in &self.dec {
            let z = deconv_forward(&h, self.p(layer.conv.w), self.p(layer.conv.b), layer.conv.cout);
            let b = layer.bn;
            let (z, bn) = if train {
                let (z, c) = batchnorm_forward_train(&z, self.p(b.gamma), self.p(b.beta));
                (z, Some(c))
            } else {
                (batchnorm_forward_eval(&z, self.p(b.gamma), self.p(b.beta), &self.buffers[b.mean].value, &self.buffers[b.var].value), None)
            };
            let (z, mask) = match rng.as_deref_mut() {
                Some(r) if layer.dropout => {
                    let (z, m) = dropout_forward(&z, self.spec.dropout_rate, r);
                    (z, Some(m))
                }
                _ => (z, None),
            };
            let y = leaky_forward(&z, 0.0);
            let next = match layer.skip {
                Some(j) => Tensor::concat_channels(&y, &outs[j]).expect("skip resolutions validated"),
                None => y.clone(),
            };
            if let Some(bn) = bn {
                dec_tape.push(DecTape { x: h, bn, mask, y });
            }
            h = next;
        }
        let logits = deconv_forward(&h, self.p(self.last.w), self.p(self.last.b), self.last.cout);
        let tape = train.then(|| Tape { enc: enc_tape, dec: dec_tape, last_x: h });
        (logits, tape)
    }

    /// Parameter gradients for the upstream gradient `dlogits`.
    pub fn backward(&self, tape: &Tape<T>, dlogits: &Tensor<T>) -> Grads<T> {
        let mut grads: Grads<T> = self.params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        let slope = self.spec.leaky_slope;
        let put = |grads: &mut Grads<T>, idx: usize, g: Vec<T>| {
            for (a, b) in grads[idx].iter_mut().zip(g) {
                *a += b;
            }
        };
        let g = deconv_backward(dlogits, &tape.last_x, self.p(self.last.w), true);
        put(&mut grads, self.last.w, g.dw);
        put(&mut grads, self.last.b, g.db);
        let mut dh = g.dx.expect("requested");
        let mut denc: Vec<Option<Tensor<T>>> = vec![None; self.enc.len()];
        let add_enc = |denc: &mut Vec<Option<Tensor<T>>>, j: usize, t: Tensor<T>| match &mut denc[j] {
            Some(acc) => acc.add_assign(&t),
            slot => *slot = Some(t),
        };
        for (layer, t) in self.dec.iter().zip(&tape.dec).rev() {
            let dy = match layer.skip {
                Some(j) => {
                    let (dy, ds) = dh.split_channels(layer.conv.cout);
                    add_enc(&mut denc, j, ds);
                    dy
                }
                None => dh,
            };
            let mut dz = leaky_backward(&dy, &t.y, 0.0);
            if let Some(mask) = &t.mask {
                dz = dropout_backward(&dz, mask);
            }
            let (dz, dgamma, dbeta) = batchnorm_backward(&dz, &t.bn, self.p(layer.bn.gamma));
            put(&mut grads, layer.bn.gamma, dgamma);
            put(&mut grads, layer.bn.beta, dbeta);
            let g = deconv_backward(&dz, &t.x, self.p(layer.conv.w), true);
            put(&mut grads, layer.conv.w, g.dw);
            put(&mut grads, layer.conv.b, g.db);
            dh = g.dx.expect("requested");
        }
        let last = self.enc.len() - 1;
        add_enc(&mut denc, last, dh);
        for j in (0..self.enc.len()).rev() {
            let layer = &self.enc[j];
            let t = &tape.enc[j];
            let Some(dy) = denc[j].take() else { continue };
            let mut dz = leaky_backward(&dy, &t.y, slope);
            if let (Some(b), Some(cache)) = (layer.bn, &t.bn) {
                let (d, dgamma, dbeta) = batchnorm_backward(&dz, cache, self.p(b.gamma));
                put(&mut grads, b.gamma, dgamma);
                put(&mut grads, b.beta, dbeta);
                dz = d;
            }
            let g = conv_backward(&dz, &t.cols, self.p(layer.conv.w), t.x_shape, j > 0);
            put(&mut grads, layer.conv.w, g.dw);
            put(&mut grads, layer.conv.b, g.db);
            if let Some(dx) = g.dx {
                let dx = if j == 2 && self.spec.updater { dx.split_channels(self.spec.encoder[1]).0 } else { dx };
                add_enc(&mut denc, j - 1, dx);
            }
        }
        grads
    }

    /// Folds the batch statistics of a training pass into the running estimates.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        let m = T::lit(BN_MOMENTUM);
        let keep = T::one() - m;
        let stats = self
            .enc
            .iter()
            .zip(&tape.enc)
            .filter_map(|(l, t)| Some((l.bn?, t.bn.as_ref()?)))
            .chain(self.dec.iter().zip(&tape.dec).map(|(l, t)| (l.bn, &t.bn)))
            .map(|(b, c)| (b, c.mean.clone(), c.var_unbiased.clone()))
            .collect::<Vec<_>>();
        for (b, mean, var) in stats {
            for (r, v) in self.buffers[b.mean].value.iter_mut().zip(mean) {
                *r = keep * *r + m * v;
            }
            for (r, v) in self.buffers[b.var].value.iter_mut().zip(var) {
                *r = keep * *r + m * v;
            }
        }
    }
}

/// Drawings as a `[n, 1, r, r]` ink tensor.
pub fn drawings_to_tensor<T: Real>(drawings: &[&LineDrawing], resolution: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros([drawings.len(), 1, resolution, resolution]);
    for (i, d) in drawings.iter().enumerate() {
        if d.width != resolution || d.height != resolution {
            return Err(Error::SizeMismatch(format!(
                "drawing {}x{}, network expects {resolution}x{resolution}",
                d.width, d.height
            )));
        }
        for (dst, v) in t.sample_mut(i).iter_mut().zip(&d.ink) {
            *dst = T::lit(*v as f64);
        }
    }
    Ok(t)
}

/// Frustum grids as a `[n, slices, rows, cols]` tensor of probabilities.
pub fn frustums_to_tensor<T: Real>(grids: &[&FrustumGrid]) -> Result<Tensor<T>> {
    let dims = grids.first().map(|g| g.dims()).ok_or_else(|| Error::SizeMismatch("no frustum grids".into()))?;
    let mut t = Tensor::zeros([grids.len(), dims[0], dims[1], dims[2]]);
    for (i, g) in grids.iter().enumerate() {
        if g.dims() != dims {
            return Err(Error::SizeMismatch(format!("frustum {:?} vs {:?}", g.dims(), dims)));
        }
        for (dst, v) in t.sample_mut(i).iter_mut().zip(g.values()) {
            *dst = T::lit(*v as f64);
        }
    }
    Ok(t)
}

impl Network<f32> {
    /// Occupancy probabilities in the network frustum of `camera`.
    pub fn predict(&self, drawing: &LineDrawing, camera: &Camera, injected: Option<&FrustumGrid>) -> Result<FrustumGrid> {
        let inj = injected.map(|g| [g]);
        Ok(self.predict_batch(&[drawing], &[*camera], inj.as_ref().map(|a| &a[..]))?.remove(0))
    }

    /// Batched [`Network::predict`].
    pub fn predict_batch(
        &self,
        drawings: &[&LineDrawing],
        cameras: &[Camera],
        injected: Option<&[&FrustumGrid]>,
    ) -> Result<Vec<FrustumGrid>> {
        if drawings.len() != cameras.len() || injected.is_some_and(|i| i.len() != drawings.len()) {
            return Err(Error::SizeMismatch("drawings, cameras and injections must pair up".into()));
        }
        let s = self.spec.slices;
        let x = drawings_to_tensor(drawings, self.spec.input_resolution)?;
        let inj = match injected {
            Some(grids) => {
                if let Some(g) = grids.iter().find(|g| g.dims() != [s, s, s]) {
                    return Err(Error::SizeMismatch(format!("injected frustum {:?}, expected {s}^3", g.dims())));
                }
                Some(frustums_to_tensor(grids)?)
            }
            None => None,
        };
        let probs = paired_softmax(&self.forward(&x, inj.as_ref())?);
        cameras
            .iter()
            .enumerate()
            .map(|(i, cam)| {
                let (near, far) = cam.depth_range(&cam.implied_frame())?;
                FrustumGrid::new(*cam, near, far, [s, s, s], probs.sample(i).iter().map(|v| v.clamp(0.0, 1.0)).collect())
            })
            .collect()
    }
}
