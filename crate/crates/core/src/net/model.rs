//! The surrogate network: parameters, forward pass with a tape, and the
//! matching backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rainfall::N_BINS;

use super::layers::{
    concat_channels, conv3x3_backward_into, conv3x3_forward, dense_backward_into, dense_raw, leaky_relu_backward_inplace,
    leaky_relu_inplace, maxpool2_backward_raw, maxpool2_raw, split_channels, upsample2_backward_raw, upsample2_raw, Dims,
};
use super::tensor::{Scalar, Tensor};
use super::{ModelConfig, LATENT, RAIN_CHANNELS, RAIN_EMBED};

/// A named weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    /// Weight at params[w], bias at params[w + 1].
    Conv { w: usize, cout: usize, act: bool },
    Pool,
    Up,
    /// Appends the rain embedding on the channel axis.
    Concat,
}

/// Index of the rain embedding weight; its bias follows.
const RAIN_W: usize = 0;

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    nodes: Vec<Node>,
}

/// Activations recorded by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    /// xs[i] feeds node i; the last entry is the network output.
    xs: Vec<Vec<T>>,
    dims: Vec<Dims>,
    pool_args: Vec<Vec<u8>>,
    rain_in: Vec<T>,
    /// Rain embedding after activation.
    rain_out: Vec<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.xs.last().expect("tape has an output")
    }
}

/// Per-parameter gradient buffers, aligned with [`Network::params`].
pub type Grads<T> = Vec<Vec<T>>;

fn layout(config: &ModelConfig) -> (Vec<(String, Vec<usize>, f64)>, Vec<Node>) {
    // (name, shape, init std); biases get std 0
    let mut specs: Vec<(String, Vec<usize>, f64)> = Vec::new();
    let mut nodes = Vec::new();
    let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();

    specs.push(("rain.weight".into(), vec![RAIN_EMBED, N_BINS], he(N_BINS)));
    specs.push(("rain.bias".into(), vec![RAIN_EMBED], 0.0));

    let conv = |specs: &mut Vec<(String, Vec<usize>, f64)>, name: String, cin: usize, cout: usize, std: f64| {
        let w = specs.len();
        specs.push((format!("{name}.weight"), vec![3, 3, cin, cout], std));
        specs.push((format!("{name}.bias"), vec![cout], 0.0));
        w
    };

    let widths = config.stage_widths().to_vec();
    let n = widths.len();
    let mut c = config.in_channels;
    for (s, &width) in widths.iter().enumerate() {
        for j in 0..3 {
            let w = conv(&mut specs, format!("enc{s}.conv{j}"), c, width, he(9 * c));
            nodes.push(Node::Conv { w, cout: width, act: true });
            c = width;
        }
        nodes.push(Node::Pool);
    }
    nodes.push(Node::Concat);
    c += RAIN_CHANNELS;
    for s in 0..n {
        nodes.push(Node::Up);
        let width = widths[n - 1 - s];
        for j in 0..2 {
            let w = conv(&mut specs, format!("dec{s}.conv{j}"), c, width, he(9 * c));
            nodes.push(Node::Conv { w, cout: width, act: true });
            c = width;
        }
    }
    let w = conv(&mut specs, "head".into(), c, 1, (1.0 / (9 * c) as f64).sqrt());
    nodes.push(Node::Conv { w, cout: 1, act: false });
    (specs, nodes)
}

impl<T: Scalar> Network<T> {
    /// He-normal weights from a seeded stream, zero biases; the linear head
    /// uses unit-gain scaling.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, nodes) = layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = specs
            .into_iter()
            .map(|(name, shape, std)| {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        T::lit(z * std)
                    })
                    .collect();
                Ok(Param { name, value: Tensor::from_vec(&shape, data)? })
            })
            .collect::<Result<_>>()?;
        Ok(Network { config: config.clone(), params, nodes })
    }

    /// Rebuilds a network from stored tensors, checking names and shapes.
    pub fn from_params(config: &ModelConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let (specs, nodes) = layout(config);
        if specs.len() != params.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", specs.len(), params.len())));
        }
        for ((name, shape, _), p) in specs.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Shape(format!(
                    "tensor `{}` {:?} where `{name}` {shape:?} was expected",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Network { config: config.clone(), params, nodes })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Param<T>> {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
            nodes: self.nodes.clone(),
        }
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params.iter().map(|p| vec![T::zero(); p.value.len()]).collect()
    }

    fn check_inputs(&self, terrain: &[T], rain: &[T]) -> Result<()> {
        let p = self.config.patch_size;
        if rain.len() != N_BINS {
            return Err(Error::Shape(format!("rain vector has {} entries, expected {N_BINS}", rain.len())));
        }
        if terrain.len() != p * p * self.config.in_channels {
            return Err(Error::Shape(format!(
                "terrain patch has {} values, expected {p}x{p}x{}",
                terrain.len(),
                self.config.in_channels
            )));
        }
        Ok(())
    }

    fn run(&self, terrain: &[T], rain: &[T], keep: bool) -> Result<Tape<T>> {
        self.check_inputs(terrain, rain)?;
        let slope = T::lit(self.config.leaky_slope);
        let p = self.config.patch_size;

        let mut rain_out = dense_raw(rain, self.params[RAIN_W].value.data(), self.params[RAIN_W + 1].value.data());
        leaky_relu_inplace(&mut rain_out, slope);

        let mut d = Dims::new(p, p, self.config.in_channels);
        let mut x = terrain.to_vec();
        let mut tape = Tape { xs: Vec::new(), dims: Vec::new(), pool_args: Vec::new(), rain_in: rain.to_vec(), rain_out };
        for node in &self.nodes {
            let (y, dy, arg) = match *node {
                Node::Conv { w, cout, act } => {
                    let mut y = conv3x3_forward(&x, d, self.params[w].value.data(), self.params[w + 1].value.data(), cout);
                    if act {
                        leaky_relu_inplace(&mut y, slope);
                    }
                    (y, Dims::new(d.h, d.w, cout), Vec::new())
                }
                Node::Pool => {
                    let (y, arg) = maxpool2_raw(&x, d);
                    (y, Dims::new(d.h / 2, d.w / 2, d.c), arg)
                }
                Node::Up => (upsample2_raw(&x, d), Dims::new(d.h * 2, d.w * 2, d.c), Vec::new()),
                Node::Concat => {
                    debug_assert_eq!((d.h, d.w), (LATENT, LATENT));
                    (concat_channels(&x, d.c, &tape.rain_out, RAIN_CHANNELS), Dims::new(d.h, d.w, d.c + RAIN_CHANNELS), Vec::new())
                }
            };
            if keep {
                tape.xs.push(x);
                tape.dims.push(d);
                tape.pool_args.push(arg);
            }
            x = y;
            d = dy;
        }
        tape.xs.push(x);
        tape.dims.push(d);
        if cfg!(debug_assertions) && !tape.output().iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite activation in forward pass".into()));
        }
        Ok(tape)
    }

    /// Forward pass keeping every activation for [`Network::backward`].
    /// `terrain` is patch x patch x 5 interleaved; `rain` has 12 entries.
    pub fn forward(&self, terrain: &[T], rain: &[T]) -> Result<Tape<T>> {
        self.run(terrain, rain, true)
    }

    /// Forward pass returning only the patch x patch depth map.
    pub fn predict(&self, terrain: &[T], rain: &[T]) -> Result<Vec<T>> {
        let mut tape = self.run(terrain, rain, false)?;
        Ok(tape.xs.pop().expect("output"))
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub fn backward(&self, tape: &Tape<T>, dout: &[T], grads: &mut Grads<T>) -> Result<()> {
        if tape.xs.len() != self.nodes.len() + 1 {
            return Err(Error::Invalid("tape was recorded without activations".into()));
        }
        if dout.len() != tape.output().len() {
            return Err(Error::Shape(format!("output gradient has {} values, expected {}", dout.len(), tape.output().len())));
        }
        let slope = T::lit(self.config.leaky_slope);
        let mut g = dout.to_vec();
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let (x, d) = (&tape.xs[i], tape.dims[i]);
            g = match *node {
                Node::Conv { w, cout, act } => {
                    if act {
                        leaky_relu_backward_inplace(&tape.xs[i + 1], &mut g, slope);
                    }
                    let (dw, rest) = grads[w..].split_first_mut().expect("weight grad");
                    let db = &mut rest[0];
                    match conv3x3_backward_into(x, d, self.params[w].value.data(), cout, &g, dw, db, i > 0) {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                Node::Pool => maxpool2_backward_raw(&g, &tape.pool_args[i], d),
                Node::Up => upsample2_backward_raw(&g, d),
                Node::Concat => {
                    let (gx, mut ge) = split_channels(&g, d.c, RAIN_CHANNELS);
                    leaky_relu_backward_inplace(&tape.rain_out, &mut ge, slope);
                    let (dw, rest) = grads[RAIN_W..].split_first_mut().expect("rain grad");
                    dense_backward_into(&tape.rain_in, self.params[RAIN_W].value.data(), &ge, dw, &mut rest[0], false);
                    gx
                }
            };
        }
        Ok(())
    }
}
