//! Fully connected networks on top of the tape.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Slope of leaky ReLU for negative inputs.
pub const LEAKY_SLOPE: f64 = 0.2;

/// First line of every saved model file.
pub const MODEL_MAGIC: &str = "MIMGAN1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec {
            fan_in,
            fan_out,
            activation,
        }
    }
}

/// Layer specs for `input → hidden… → output`, leaky ReLU on hidden layers.
pub fn mlp_specs(input: usize, hidden: &[usize], output: usize, output_activation: Activation) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last { output_activation } else { Activation::LeakyRelu };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

/// Per-feature affine map applied after the last activation.
///
/// Generators with a tanh head emit values in (−1, 1); this stretches them
/// onto the training data's per-feature range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScale {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl OutputScale {
    /// Maps (−1, 1) onto `[min_c, max_c]` for every column of `data`.
    pub fn from_data_range(data: &DenseMatrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::invalid("nn", "output range of an empty dataset"));
        }
        let mut scale = Vec::with_capacity(data.cols());
        let mut shift = Vec::with_capacity(data.cols());
        for c in 0..data.cols() {
            let col = data.column(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let half = 0.5 * (hi - lo);
            scale.push(if half > 0.0 { half } else { 1.0 });
            shift.push(0.5 * (hi + lo));
        }
        Ok(OutputScale { scale, shift })
    }
}

/// Multi-layer perceptron with optional output rescaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Layer>,
    #[serde(default)]
    output_scale: Option<OutputScale>,
}

/// Tape handles of a model's parameters, ordered `w0, b0, w1, b1, …`.
#[derive(Clone, Debug)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate_chain(specs)?;
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
                let w = (0..spec.fan_in * spec.fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    spec,
                    weight: DenseMatrix::from_vec_unchecked(spec.fan_in, spec.fan_out, w),
                    bias: DenseMatrix::zeros(1, spec.fan_out),
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            output_scale: None,
        })
    }

    /// Builds a model from explicit layers.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape() != (l.spec.fan_in, l.spec.fan_out) || l.bias.shape() != (1, l.spec.fan_out) {
                return Err(Error::shape(
                    "from_layers",
                    format!(
                        "layer {i}: weight {:?}, bias {:?} for spec {}→{}",
                        l.weight.shape(),
                        l.bias.shape(),
                        l.spec.fan_in,
                        l.spec.fan_out
                    ),
                ));
            }
        }
        Ok(MlpModel {
            layers,
            output_scale: None,
        })
    }

    pub fn with_output_scale(mut self, scale: OutputScale) -> Result<Self> {
        self.set_output_scale(Some(scale))?;
        Ok(self)
    }

    pub fn set_output_scale(&mut self, scale: Option<OutputScale>) -> Result<()> {
        if let Some(s) = &scale {
            let d = self.output_dim();
            if s.scale.len() != d || s.shift.len() != d {
                return Err(Error::shape("output_scale", format!("{} entries for output dim {d}", s.scale.len())));
            }
        }
        self.output_scale = scale;
        Ok(())
    }

    pub fn output_scale(&self) -> Option<&OutputScale> {
        self.output_scale.as_ref()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.fan_out
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].spec.activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Clamps every weight and bias into `[-limit, limit]`.
    pub fn clip_parameters(&mut self, limit: f64) {
        for p in self.params_mut() {
            for v in p.as_mut_slice() {
                *v = v.clamp(-limit, limit);
            }
        }
    }

    /// Records the forward pass of `input` on `tape`.
    pub fn forward_taped(&self, tape: &mut Tape, input: Var) -> Result<(Var, ParamVars)> {
        let x = tape.value(input);
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("batch has {} columns, model expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = input;
        for layer in &self.layers {
            let w = tape.leaf(layer.weight.clone())?;
            let b = tape.leaf(layer.bias.clone())?;
            params.push(w);
            params.push(b);
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = match layer.spec.activation {
                Activation::LeakyRelu => tape.leaky_relu(z, LEAKY_SLOPE)?,
                Activation::Sigmoid => tape.sigmoid(z)?,
                Activation::Tanh => tape.tanh(z)?,
                Activation::Identity => z,
            };
        }
        if let Some(s) = &self.output_scale {
            h = tape.column_affine(h, &s.scale, &s.shift)?;
        }
        Ok((h, ParamVars(params)))
    }

    /// Evaluates the model on a batch.
    pub fn forward(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        batch.check_finite("forward input")?;
        let mut tape = Tape::new();
        let x = tape.leaf(batch.clone())?;
        let (out, _) = self.forward_taped(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }

    /// Parameter gradients in `params()` order.
    pub fn collect_gradients(&self, grads: &Gradients, vars: &ParamVars) -> Vec<DenseMatrix> {
        vars.0.iter().map(|&v| grads.wrt(v)).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MODEL_MAGIC}").map_err(|e| Error::io("<model>", e))?;
        serde_json::to_writer(&mut w, self)?;
        writeln!(w).map_err(|e| Error::io("<model>", e))?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut magic = String::new();
        reader.read_line(&mut magic).map_err(|e| Error::io("<model>", e))?;
        if magic.trim_end() != MODEL_MAGIC {
            return Err(Error::Format {
                path: "<model>".into(),
                detail: format!("expected header '{MODEL_MAGIC}', found '{}'", magic.trim_end()),
            });
        }
        let model: MlpModel = serde_json::from_reader(reader)?;
        let layers = model.layers.clone();
        let mut checked = MlpModel::from_layers(layers)?;
        for p in checked.params() {
            p.check_finite("model file")?;
        }
        checked.set_output_scale(model.output_scale)?;
        Ok(checked)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MlpModel::read_from(file).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("nn", "a model needs at least one layer"));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.fan_in == 0 || s.fan_out == 0 {
            return Err(Error::invalid("nn", format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].fan_out != w[1].fan_in {
            return Err(Error::invalid(
                "nn",
                format!("layer {i} outputs {} but layer {} expects {}", w[0].fan_out, i + 1, w[1].fan_in),
            ));
        }
    }
    Ok(())
}
