//! Parameter registry and the basic layers shared by every network.

use ogrg_tensor::{init, BatchNormState, Real, Tensor};
use rand::RngCore;

use crate::error::{CoreError, Result};

/// Standard deviation for projection and embedding weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Trained by the optimizer.
    Param,
    /// Saved with the model but not trained (batch-norm running statistics).
    Buffer,
}

/// Named tensors in creation order.
pub struct Store<T: Real> {
    entries: Vec<(String, Tensor<T>, Kind)>,
}

impl<T: Real> Default for Store<T> {
    fn default() -> Self {
        Store { entries: Vec::new() }
    }
}

impl<T: Real> Store<T> {
    pub fn entries(&self) -> &[(String, Tensor<T>, Kind)] {
        &self.entries
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        self.entries
            .iter()
            .filter(|e| e.2 == Kind::Param)
            .map(|e| e.1.clone())
            .collect()
    }

    pub fn named_params(&self) -> Vec<(&str, &Tensor<T>)> {
        self.entries
            .iter()
            .filter(|e| e.2 == Kind::Param)
            .map(|e| (e.0.as_str(), &e.1))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|e| e.0 == name).map(|e| &e.1)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&self) {
        for (_, t, _) in &self.entries {
            t.zero_grad();
        }
    }

    /// Copies every entry's values (a restorable snapshot).
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.entries.iter().map(|e| e.1.to_vec()).collect()
    }

    pub fn restore(&self, snapshot: &[Vec<T>]) {
        for (e, v) in self.entries.iter().zip(snapshot) {
            e.1.data_mut().copy_from_slice(v);
        }
    }

    /// Overwrites entry `name` with `values`.
    pub fn assign(&self, name: &str, shape: &[usize], values: &[T]) -> Result<()> {
        let t = self
            .get(name)
            .ok_or_else(|| CoreError::Contract(format!("no parameter named {name}")))?;
        if t.shape() != shape {
            return Err(CoreError::Contract(format!(
                "parameter {name} has shape {:?}, got {shape:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }

    fn push(&mut self, name: String, t: Tensor<T>, kind: Kind) -> Tensor<T> {
        assert!(self.get(&name).is_none(), "duplicate parameter {name}");
        self.entries.push((name, t.clone(), kind));
        t
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    TruncNormal(f64),
    /// He-normal (truncated) for a given fan-in.
    He(usize),
    Zeros,
    Ones,
}

/// Creates and registers named parameters under a path prefix.
pub struct Scope<'a, T: Real> {
    store: &'a mut Store<T>,
    rng: &'a mut dyn RngCore,
    prefix: String,
}

impl<'a, T: Real> Scope<'a, T> {
    pub fn new(store: &'a mut Store<T>, rng: &'a mut dyn RngCore) -> Self {
        Scope {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Scope<'_, T> {
        Scope {
            prefix: self.path(name),
            store: &mut *self.store,
            rng: &mut *self.rng,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::TruncNormal(std) => init::trunc_normal(&mut *self.rng, n, std),
            Init::He(fan_in) => init::trunc_normal(&mut *self.rng, n, (2.0 / fan_in as f64).sqrt()),
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
        };
        let t = Tensor::param(data, shape).expect("shape matches data");
        let path = self.path(name);
        self.store.push(path, t, Kind::Param)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Tensor<T> {
        let t = Tensor::full(shape, T::lit(value));
        let path = self.path(name);
        self.store.push(path, t, Kind::Buffer)
    }
}

/// `y = x·W + b` over the last axis; `W` is `[in, out]`.
pub struct Linear<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(s: &mut Scope<T>, d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            weight: s.param("weight", &[d_in, d_out], Init::TruncNormal(INIT_STD)),
            bias: bias.then(|| s.param("bias", &[d_out], Init::Zeros)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.matmul(&self.weight)?;
        Ok(match &self.bias {
            Some(b) => y.add(b)?,
            None => y,
        })
    }
}

pub struct Conv2d<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Real> Conv2d<T> {
    /// He-initialized `k×k` convolution with "same" padding for odd `k`.
    pub fn new(s: &mut Scope<T>, c_in: usize, c_out: usize, k: usize, stride: usize, bias: bool) -> Self {
        Conv2d {
            weight: s.param("weight", &[c_out, c_in, k, k], Init::He(c_in * k * k)),
            bias: bias.then(|| s.param("bias", &[c_out], Init::Zeros)),
            stride,
            pad: k / 2,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(&self.weight, self.bias.as_ref(), self.stride, self.pad)?)
    }
}

pub struct BatchNorm2d<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(s: &mut Scope<T>, channels: usize) -> Self {
        BatchNorm2d {
            gamma: s.param("gamma", &[channels], Init::Ones),
            beta: s.param("beta", &[channels], Init::Zeros),
            running_mean: s.buffer("running_mean", &[channels], 0.0),
            running_var: s.buffer("running_var", &[channels], 1.0),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        Ok(x.batchnorm2d(
            &self.gamma,
            &self.beta,
            BatchNormState {
                running_mean: &self.running_mean,
                running_var: &self.running_var,
                momentum: T::lit(Self::MOMENTUM),
                eps: T::lit(Self::EPS),
                train,
            },
        )?)
    }
}

pub struct LayerNorm<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(s: &mut Scope<T>, dim: usize) -> Self {
        LayerNorm {
            gamma: s.param("gamma", &[dim], Init::Ones),
            beta: s.param("beta", &[dim], Init::Zeros),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.layernorm(&self.gamma, &self.beta, T::lit(1e-5))?)
    }
}

/// Convolution (no bias) → batch norm → ReLU.
pub struct ConvBnRelu<T: Real> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Real> ConvBnRelu<T> {
    pub fn new(s: &mut Scope<T>, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        ConvBnRelu {
            conv: Conv2d::new(&mut s.sub("conv"), c_in, c_out, k, stride, false),
            bn: BatchNorm2d::new(&mut s.sub("bn"), c_out),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        Ok(self.bn.forward(&self.conv.forward(x)?, train)?.relu())
    }
}

/// Two 3×3 conv/BN layers with an identity shortcut.
pub struct BasicBlock<T: Real> {
    pub first: ConvBnRelu<T>,
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Real> BasicBlock<T> {
    pub fn new(s: &mut Scope<T>, channels: usize) -> Self {
        BasicBlock {
            first: ConvBnRelu::new(&mut s.sub("a"), channels, channels, 3, 1),
            conv: Conv2d::new(&mut s.sub("b.conv"), channels, channels, 3, 1, false),
            bn: BatchNorm2d::new(&mut s.sub("b.bn"), channels),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let h = self.first.forward(x, train)?;
        let h = self.bn.forward(&self.conv.forward(&h)?, train)?;
        Ok(h.add(x)?.relu())
    }
}

/// `[B, C, H, W]` → `[B, H·W, C]`.
pub fn to_tokens<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let &[b, c, h, w] = x.shape() else {
        return Err(CoreError::Contract(format!("expected [B, C, H, W], got {:?}", x.shape())));
    };
    Ok(x.reshape(&[b, c, h * w])?.permute(&[0, 2, 1])?)
}

/// `[B, H·W, C]` → `[B, C, H, W]`.
pub fn to_map<T: Real>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let &[b, n, c] = x.shape() else {
        return Err(CoreError::Contract(format!("expected [B, N, C], got {:?}", x.shape())));
    };
    if n != h * w {
        return Err(CoreError::Contract(format!("{n} tokens do not form a {h}x{w} map")));
    }
    Ok(x.permute(&[0, 2, 1])?.reshape(&[b, c, h, w])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scope_paths_and_kinds() {
        let mut store = Store::<f32>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        {
            let mut s = Scope::new(&mut store, &mut rng);
            let mut enc = s.sub("enc");
            BatchNorm2d::new(&mut enc.sub("bn"), 3);
            Linear::new(&mut s.sub("head"), 4, 2, true);
        }
        let names: Vec<&str> = store.entries().iter().map(|e| e.0.as_str()).collect();
        assert_eq!(
            names,
            ["enc.bn.gamma", "enc.bn.beta", "enc.bn.running_mean", "enc.bn.running_var", "head.weight", "head.bias"]
        );
        assert_eq!(store.params().len(), 4);
        assert_eq!(store.num_params(), 3 + 3 + 8 + 2);
    }

    #[test]
    fn linear_applies_over_last_axis() {
        let mut store = Store::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut Scope::new(&mut store, &mut rng), 2, 3, true);
        lin.weight.data_mut().copy_from_slice(&[1.0, 0.0, 2.0, 0.0, 1.0, 3.0]);
        lin.bias.as_ref().unwrap().data_mut().copy_from_slice(&[0.5, 0.0, 0.0]);
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 1, 2]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().to_vec(), vec![1.5, 2.0, 8.0, 3.5, 4.0, 18.0]);
    }

    #[test]
    fn token_layout_round_trip() {
        let x = Tensor::<f64>::from_vec((0..24).map(f64::from).collect(), &[2, 3, 2, 2]).unwrap();
        let t = to_tokens(&x).unwrap();
        assert_eq!(t.shape(), [2, 4, 3]);
        assert_eq!(t.to_vec()[..3], [0.0, 4.0, 8.0]);
        assert_eq!(to_map(&t, 2, 2).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn snapshot_restore() {
        let mut store = Store::<f32>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut Scope::new(&mut store, &mut rng), 2, 2, false);
        let snap = store.snapshot();
        lin.weight.data_mut()[0] = 9.0;
        store.restore(&snap);
        assert_eq!(lin.weight.to_vec(), snap[0]);
    }
}
