use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::array::{DenseArray, Scalar};
use super::graph::{Graph, NodeId};
use super::init;
use super::params::{BoundParams, ParamSet};

/// Post-norm transformer encoder hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_width: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.ffn_width == 0 {
            return Err(Error::Config(format!("degenerate encoder config {self:?}")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Parameters per encoder layer: four attention projections with biases,
    /// the two feed-forward linears and two layer norms.
    pub fn params_per_layer(&self) -> usize {
        let (d, f) = (self.d_model, self.ffn_width);
        4 * (d * d + d) + (d * f + f + f * d + d) + 4 * d
    }
}

/// A stack of encoder layers whose weights live in a [`ParamSet`] under
/// `{prefix}{layer}.{name}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub prefix: String,
}

const ATTN: [&str; 4] = ["q", "k", "v", "o"];

impl Encoder {
    pub fn new(config: EncoderConfig, prefix: impl Into<String>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            prefix: prefix.into(),
        })
    }

    fn name(&self, layer: usize, what: &str) -> String {
        format!("{}{layer}.{what}", self.prefix)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamSet<f32>) -> Result<()> {
        let (d, f) = (self.config.d_model, self.config.ffn_width);
        for l in 0..self.config.n_layers {
            for p in ATTN {
                params.insert(self.name(l, &format!("w{p}")), init::linear_weight(rng, d, d))?;
                params.insert(self.name(l, &format!("b{p}")), DenseArray::zeros(&[d]))?;
            }
            params.insert(self.name(l, "ffn.w1"), init::linear_weight(rng, d, f))?;
            params.insert(self.name(l, "ffn.b1"), DenseArray::zeros(&[f]))?;
            params.insert(self.name(l, "ffn.w2"), init::linear_weight(rng, f, d))?;
            params.insert(self.name(l, "ffn.b2"), DenseArray::zeros(&[d]))?;
            for ln in ["ln1", "ln2"] {
                params.insert(self.name(l, &format!("{ln}.g")), DenseArray::full(&[d], 1.0))?;
                params.insert(self.name(l, &format!("{ln}.b")), DenseArray::zeros(&[d]))?;
            }
        }
        Ok(())
    }

    fn linear<T: Scalar>(&self, g: &mut Graph<T>, p: &BoundParams<'_, T>, x: NodeId, l: usize, w: &str, b: &str) -> Result<NodeId> {
        let y = g.matmul(x, p.id(&self.name(l, w))?)?;
        g.add_bias(y, p.id(&self.name(l, b))?)
    }

    fn dropout<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId, rng: &mut Option<&mut ChaCha8Rng>) -> Result<NodeId> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = T::from_f64_lossy(1.0 / (1.0 - p));
                let mask = (0..g.value(x).len())
                    .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                    .collect();
                g.scale_const(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Runs every layer over `x` (`n_seq·seq_len × d_model`). Dropout is only
    /// applied when an RNG is supplied.
    pub fn apply<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams<'_, T>,
        mut x: NodeId,
        seq_len: usize,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let (_, width) = g.value(x).dims2()?;
        if width != self.config.d_model {
            return Err(Error::Config(format!(
                "encoder expects width {}, got {width}",
                self.config.d_model
            )));
        }
        for l in 0..self.config.n_layers {
            for probe in ["wq", "ffn.w1", "ln2.g"] {
                if p.try_id(&self.name(l, probe)).is_none() {
                    return Err(Error::Config(format!("encoder layer {l} weights missing `{probe}`")));
                }
            }
            let q = self.linear(g, p, x, l, "wq", "bq")?;
            let k = self.linear(g, p, x, l, "wk", "bk")?;
            let v = self.linear(g, p, x, l, "wv", "bv")?;
            let a = g.attention(q, k, v, seq_len, self.config.n_heads)?;
            let a = self.linear(g, p, a, l, "wo", "bo")?;
            let a = self.dropout(g, a, &mut dropout_rng)?;
            let r = g.add(x, a)?;
            let h = g.layer_norm(r, p.id(&self.name(l, "ln1.g"))?, p.id(&self.name(l, "ln1.b"))?, self.config.ln_eps)?;

            let f = self.linear(g, p, h, l, "ffn.w1", "ffn.b1")?;
            let f = g.gelu(f);
            let f = self.linear(g, p, f, l, "ffn.w2", "ffn.b2")?;
            let f = self.dropout(g, f, &mut dropout_rng)?;
            let r = g.add(h, f)?;
            x = g.layer_norm(r, p.id(&self.name(l, "ln2.g"))?, p.id(&self.name(l, "ln2.b"))?, self.config.ln_eps)?;
        }
        Ok(x)
    }
}

/// Evaluates the encoder on one sequence (`T × d_model`) without dropout.
pub fn encoder_forward<T: Scalar>(seq: &DenseArray<T>, weights: &ParamSet<T>, config: &EncoderConfig) -> Result<DenseArray<T>> {
    let (t, d) = seq.dims2()?;
    if t == 0 {
        return Err(Error::Shape("empty sequence".into()));
    }
    if d != config.d_model {
        return Err(Error::Config(format!("sequence width {d} vs d_model {}", config.d_model)));
    }
    let encoder = Encoder::new(*config, "enc")?;
    let mut g = Graph::new();
    let bound = weights.bind(&mut g);
    let x = g.leaf(seq.clone().reshaped(&[t, d])?);
    let out = encoder.apply(&mut g, &bound, x, t, None)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup(seed: u64) -> (EncoderConfig, ParamSet<f64>) {
        let cfg = EncoderConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            ffn_width: 16,
            dropout: 0.0,
            ln_eps: 1e-5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        Encoder::new(cfg, "enc").unwrap().init_params(&mut rng, &mut p).unwrap();
        (cfg, p.cast())
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, d: usize) -> DenseArray<f64> {
        DenseArray::from_vec(&[t, d], (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn output_shape_and_single_position() {
        let (cfg, p) = setup(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = random_seq(&mut rng, 5, 8);
        assert_eq!(encoder_forward(&seq, &p, &cfg).unwrap().shape(), &[5, 8]);
        let one = random_seq(&mut rng, 1, 8);
        let out = encoder_forward(&one, &p, &cfg).unwrap();
        assert!(out.all_finite());
    }

    #[test]
    fn equivariant_to_permuting_non_cls_rows() {
        let (cfg, p) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = random_seq(&mut rng, 4, 8);
        let perm = [0usize, 3, 1, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&r| seq.row(r).to_vec()).collect();
        let permuted = DenseArray::from_rows(&rows).unwrap();
        let a = encoder_forward(&seq, &p, &cfg).unwrap();
        let b = encoder_forward(&permuted, &p, &cfg).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            for (x, y) in b.row(i).iter().zip(a.row(src)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let (cfg, p) = setup(4);
        let seq = DenseArray::<f64>::zeros(&[3, 6]);
        assert!(matches!(encoder_forward(&seq, &p, &cfg), Err(Error::Config(_))));
        let (_, p1) = setup(5);
        let two_layers = EncoderConfig { n_layers: 3, ..cfg };
        let seq = DenseArray::<f64>::zeros(&[3, 8]);
        assert!(matches!(encoder_forward(&seq, &p1, &two_layers), Err(Error::Config(_))));
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let (cfg, p) = setup(6);
        let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let seq = DenseArray::from_rows(&[row.clone(), row.clone(), row]).unwrap();
        let out = encoder_forward(&seq, &p, &cfg).unwrap();
        for r in 1..3 {
            for (a, b) in out.row(r).iter().zip(out.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
