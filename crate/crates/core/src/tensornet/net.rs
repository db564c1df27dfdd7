//! Forward and backward passes over a [`NetworkSpec`].

use super::layers::{
    apply_mask, conv_backward, conv_forward, dropout_mask, leaky_relu, leaky_relu_backward, linear_backward,
    linear_forward, mp2_forward, pool_backward, softmax, softmax_xent,
};
use super::spec::{LayerSpec, NetworkSpec, Shape};
use super::ssmp::{ssmp_forward, ssmp_plan, PoolPlan, SsmpStrategy};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Dropout off. Stochastic pooling stays random in both modes.
    Eval,
}

/// Key of the random streams used by one forward pass. Each layer derives
/// its own stream from this key and its index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
    pub sample: u64,
    pub replica: u64,
}

impl NoiseKey {
    fn stream(&self, domain: Domain, layer: usize) -> Stream {
        Stream::new(self.seed, domain, &[layer as u64, self.epoch, self.step, self.sample, self.replica])
    }
}

/// Random state a layer used during one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerNoise<T> {
    None,
    Pool(PoolPlan),
    Mask(Vec<T>),
}

/// Where the random state of a forward pass comes from.
#[derive(Clone, Copy, Debug)]
pub enum Noise<'a, T> {
    Keyed(NoiseKey),
    /// Reuse the state recorded in an earlier trace.
    Replay(&'a [LayerNoise<T>]),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Output of each layer. A leaky ReLU takes over the buffer of the layer
    /// before it, which is left empty.
    acts: Vec<Tensor<T>>,
    argmax: Vec<Vec<u32>>,
    pub noise: Vec<LayerNoise<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn logits(&self) -> &[T] {
        self.acts.last().map(|t| t.data()).unwrap_or(&[])
    }
}

/// A network: a validated spec and its parameters. Every convolution and
/// linear layer owns a weight tensor followed by a bias tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    /// Index into `params` of each layer's weight tensor.
    slots: Vec<Option<usize>>,
    params: Vec<Tensor<T>>,
}

fn placeholder<T: Scalar>() -> Tensor<T> {
    Tensor::zeros(&[0])
}

impl<T: Scalar> Network<T> {
    /// He-initialised network: weights `N(0, 2 / fan_in)`, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let params = shapes
            .iter()
            .map(|(layer, kind, shape)| {
                if *kind == "bias" {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                let mut rng = Stream::new(seed, Domain::Init, &[*layer as u64]);
                let data = (0..shape.iter().product::<usize>()).map(|_| T::from_f64(std * rng.normal())).collect();
                Tensor::new(shape.clone(), data).expect("shape product matches")
            })
            .collect();
        Self::from_params(spec, params)
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        let expected = spec.param_shapes()?;
        if expected.len() != params.len() {
            return Err(Error::shape(format!("spec needs {} parameter tensors, got {}", expected.len(), params.len())));
        }
        let mut slots = vec![None; spec.layers.len()];
        for (k, ((layer, kind, shape), p)) in expected.iter().zip(&params).enumerate() {
            if p.shape() != shape.as_slice() {
                return Err(Error::shape(format!("layer {layer} {kind}: expected {shape:?}, got {:?}", p.shape())));
            }
            if *kind == "weight" {
                slots[*layer] = Some(k);
            }
        }
        let shapes = spec.shapes()?;
        Ok(Self { spec, shapes, slots, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn set_ssmp_strategy(&mut self, strategy: SsmpStrategy) {
        self.spec.ssmp_strategy = strategy;
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor<T>> {
        self.params
    }

    /// Names of the parameter tensors, such as `layer0.weight`.
    pub fn param_names(&self) -> Vec<String> {
        self.spec
            .param_shapes()
            .expect("validated spec")
            .into_iter()
            .map(|(layer, kind, _)| format!("layer{layer}.{kind}"))
            .collect()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            slots: self.slots.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn layer_params(&self, layer: usize) -> (&Tensor<T>, &Tensor<T>) {
        let k = self.slots[layer].expect("parametrised layer");
        (&self.params[k], &self.params[k + 1])
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode, noise: Noise<'_, T>) -> Result<Trace<T>> {
        let expected = [self.spec.input_channels, self.spec.grid, self.spec.grid];
        if x.shape() != expected {
            return Err(Error::shape(format!("network input must be {expected:?}, got {:?}", x.shape())));
        }
        let n = self.spec.layers.len();
        if let Noise::Replay(recorded) = noise {
            if recorded.len() != n {
                return Err(Error::InvalidInput("replayed noise does not match the network".into()));
            }
        }
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut argmax = vec![Vec::new(); n];
        let mut noises = Vec::with_capacity(n);
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let mut layer_noise = LayerNoise::None;
            let y = match *layer {
                LayerSpec::Conv { .. } => {
                    let (w, b) = self.layer_params(i);
                    conv_forward(input, w, b)?
                }
                LayerSpec::LeakyRelu { slope } => {
                    let mut y = match i {
                        0 => x.clone(),
                        _ if matches!(self.spec.layers[i - 1], LayerSpec::LeakyRelu { .. }) => acts[i - 1].clone(),
                        _ => std::mem::replace(&mut acts[i - 1], placeholder()),
                    };
                    leaky_relu(y.data_mut(), T::from_f64(slope));
                    y
                }
                LayerSpec::MaxPool2 => {
                    let (y, idx) = mp2_forward(input)?;
                    argmax[i] = idx;
                    y
                }
                LayerSpec::Ssmp { alpha } => {
                    let plan = match noise {
                        Noise::Replay(recorded) => match &recorded[i] {
                            LayerNoise::Pool(p) => p.clone(),
                            _ => return Err(Error::InvalidInput(format!("no recorded pooling plan for layer {i}"))),
                        },
                        Noise::Keyed(key) => {
                            let (_, h, w) = input.dims3()?;
                            let mut rng = key.stream(Domain::Ssmp, i);
                            let strategy = self.spec.ssmp_strategy;
                            let epoch = key.epoch as usize;
                            PoolPlan {
                                rows: ssmp_plan(h, alpha, strategy, epoch, &mut rng)?,
                                cols: ssmp_plan(w, alpha, strategy, epoch, &mut rng)?,
                            }
                        }
                    };
                    let (y, idx) = ssmp_forward(input, &plan)?;
                    argmax[i] = idx;
                    layer_noise = LayerNoise::Pool(plan);
                    y
                }
                LayerSpec::Dropout { p } => {
                    let mut y = input.clone();
                    if mode == Mode::Train && p > 0.0 {
                        let mask = match noise {
                            Noise::Replay(recorded) => match &recorded[i] {
                                LayerNoise::Mask(m) if m.len() == y.len() => m.clone(),
                                _ => {
                                    return Err(Error::InvalidInput(format!("no recorded dropout mask for layer {i}")))
                                }
                            },
                            Noise::Keyed(key) => dropout_mask(y.len(), p, &mut key.stream(Domain::Dropout, i)),
                        };
                        apply_mask(y.data_mut(), &mask);
                        layer_noise = LayerNoise::Mask(mask);
                    }
                    y
                }
                LayerSpec::Linear { outputs } => {
                    let (w, b) = self.layer_params(i);
                    Tensor::new(vec![outputs], linear_forward(input.data(), w, b)?)?
                }
            };
            acts.push(y);
            noises.push(layer_noise);
        }
        Ok(Trace { acts, argmax, noise: noises })
    }

    /// Adds the parameter gradients of a scalar loss to `grads`, given the
    /// gradient of that loss with respect to the logits.
    pub fn backward(&self, x: &Tensor<T>, trace: &Trace<T>, grad_logits: &[T], grads: &mut [Tensor<T>]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::shape("gradient buffers do not match the parameters"));
        }
        let n = self.spec.layers.len();
        let mut g = Tensor::new(vec![grad_logits.len()], grad_logits.to_vec())?;
        for i in (0..n).rev() {
            let input = if i == 0 { x } else { &trace.acts[i - 1] };
            let in_shape: Vec<usize> = match i {
                0 => x.shape().to_vec(),
                _ => match self.shapes[i - 1] {
                    Shape::Map(c, h, w) => vec![c, h, w],
                    Shape::Flat(len) => vec![len],
                },
            };
            let need_gx = i > 0;
            g = match self.spec.layers[i] {
                LayerSpec::Conv { .. } => {
                    let k = self.slots[i].expect("conv weights");
                    let (gw, rest) = grads[k..].split_at_mut(1);
                    let mut gx = need_gx.then(|| Tensor::zeros(&in_shape));
                    conv_backward(input, &self.params[k], &g, gw[0].data_mut(), rest[0].data_mut(), gx.as_mut())?;
                    match gx {
                        Some(gx) => gx,
                        None => return Ok(()),
                    }
                }
                LayerSpec::LeakyRelu { slope } => {
                    leaky_relu_backward(trace.acts[i].data(), g.data_mut(), T::from_f64(slope));
                    g
                }
                LayerSpec::MaxPool2 | LayerSpec::Ssmp { .. } => {
                    let mut gx = Tensor::zeros(&in_shape);
                    pool_backward(g.data(), &trace.argmax[i], &mut gx);
                    gx
                }
                LayerSpec::Dropout { .. } => {
                    if let LayerNoise::Mask(mask) = &trace.noise[i] {
                        apply_mask(g.data_mut(), mask);
                    }
                    g
                }
                LayerSpec::Linear { .. } => {
                    let k = self.slots[i].expect("linear weights");
                    let (gw, rest) = grads[k..].split_at_mut(1);
                    let mut gx = need_gx.then(|| Tensor::zeros(&in_shape));
                    linear_backward(
                        input.data(),
                        &self.params[k],
                        g.data(),
                        gw[0].data_mut(),
                        rest[0].data_mut(),
                        gx.as_mut().map(|t| t.data_mut()),
                    );
                    match gx {
                        Some(gx) => gx,
                        None => return Ok(()),
                    }
                }
            };
        }
        Ok(())
    }

    /// Forward pass, cross-entropy against `label`, and backward pass.
    /// Returns the loss and the predicted probabilities.
    pub fn loss_and_grad(
        &self,
        x: &Tensor<T>,
        label: usize,
        mode: Mode,
        noise: Noise<'_, T>,
        grads: &mut [Tensor<T>],
    ) -> Result<(T, Vec<T>)> {
        let trace = self.forward(x, mode, noise)?;
        let (loss, probs, g) = softmax_xent(trace.logits(), label)?;
        self.backward(x, &trace, &g, grads)?;
        Ok((loss, probs))
    }

    /// Class probabilities of one stochastic evaluation pass.
    pub fn predict(&self, x: &Tensor<T>, key: NoiseKey) -> Result<Vec<T>> {
        let trace = self.forward(x, Mode::Eval, Noise::Keyed(key))?;
        Ok(softmax(trace.logits()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Network<f64> {
        let spec = NetworkSpec::parse("8C3-MP2-12C3-SSMP1.5-drop0.2-Output", 2, 12, 4).unwrap();
        Network::new(spec, 5).unwrap()
    }

    fn input(seed: u64) -> Tensor<f64> {
        let mut rng = Stream::new(seed, Domain::Test, &[]);
        Tensor::new(vec![2, 12, 12], (0..288).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn init_is_keyed_and_biases_zero() {
        let a = toy();
        assert_eq!(a, toy());
        assert!(a.params()[1].data().iter().all(|&v| v == 0.0));
        let w = a.params()[0].data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!(var > 0.02 && var < 0.25, "{var}");
        assert_eq!(a.param_names()[2], "layer3.weight");
    }

    #[test]
    fn forward_is_pure_given_key() {
        let net = toy();
        let x = input(1);
        let key = NoiseKey { seed: 3, epoch: 1, step: 2, sample: 3, replica: 0 };
        let a = net.forward(&x, Mode::Train, Noise::Keyed(key)).unwrap();
        let b = net.forward(&x, Mode::Train, Noise::Keyed(key)).unwrap();
        assert_eq!(a.logits(), b.logits());
        let c = net.forward(&x, Mode::Train, Noise::Replay(&a.noise)).unwrap();
        assert_eq!(a.logits(), c.logits());
        assert_eq!(a.logits().len(), 4);
    }

    #[test]
    fn eval_skips_dropout() {
        let net = toy();
        let trace = net.forward(&input(2), Mode::Eval, Noise::Keyed(NoiseKey::default())).unwrap();
        assert!(trace.noise.iter().all(|n| !matches!(n, LayerNoise::Mask(_))));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let net = toy();
        let x = Tensor::<f64>::zeros(&[2, 11, 12]);
        assert!(net.forward(&x, Mode::Eval, Noise::Keyed(NoiseKey::default())).is_err());
    }

    #[test]
    fn mismatched_params_rejected() {
        let net = toy();
        let mut params = net.clone().into_params();
        params.pop();
        assert!(Network::from_params(net.spec().clone(), params).is_err());
    }
}
