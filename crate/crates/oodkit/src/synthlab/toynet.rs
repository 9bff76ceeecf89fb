//! A small generated (never trained) feed-forward network for desk-scale
//! experiments: dense layers with ReLU / approximate-GELU / no activation,
//! closed by a linear head. Supports capturing any layer's post-activation
//! outputs and applying activation edits at chosen layers during the forward
//! pass, which is how multi-layer shifting is exercised.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dumpio;
use crate::enhancers::EnhancerSpec;
use crate::error::{OodError, Result};
use crate::exec;
use crate::linalg::Mat;
use crate::types::{ActivationSet, LinearHead};

use super::rng::{stream_seed, Xoshiro256pp};

/// tanh-approximation GELU constants, pinned to 10 digits so every stack
/// reproduces the same values.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.7978845608;
pub const GELU_CUBIC_COEFF: f64 = 0.044715;

/// gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
pub fn gelu_approx(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC_COEFF * x * x * x)).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    GeluApprox,
    None,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::GeluApprox => gelu_approx(x),
            Activation::None => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "RELU",
            Activation::GeluApprox => "GELU_APPROX",
            Activation::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "RELU" => Ok(Activation::Relu),
            "GELU_APPROX" => Ok(Activation::GeluApprox),
            "NONE" => Ok(Activation::None),
            other => Err(OodError::BadParameter(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ToyLayer {
    pub fn new(weights: Mat, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(OodError::DimensionMismatch {
                context: "toy layer bias",
                expected: weights.rows(),
                got: bias.len(),
            });
        }
        Ok(ToyLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Generated dense layer: weights N(0, scale^2), bias zero.
    pub fn random(d_in: usize, d_out: usize, activation: Activation, scale: f64, seed: u64) -> Self {
        let mut rng = Xoshiro256pp::from_seed(seed);
        let mut data = vec![0.0; d_in * d_out];
        rng.fill_gaussian(&mut data);
        for v in &mut data {
            *v *= scale;
        }
        ToyLayer {
            weights: Mat::from_vec(d_out, d_in, data).unwrap(),
            bias: vec![0.0; d_out],
            activation,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.weights.matvec(x)?;
        for (v, b) in h.iter_mut().zip(&self.bias) {
            *v = self.activation.apply(*v + b);
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    pub layers: Vec<ToyLayer>,
    pub head: LinearHead,
}

impl ToyNetwork {
    pub fn new(layers: Vec<ToyLayer>, head: LinearHead) -> Result<Self> {
        for w in layers.windows(2) {
            if w[1].input_dim() != w[0].output_dim() {
                return Err(OodError::DimensionMismatch {
                    context: "toy network layer chain",
                    expected: w[0].output_dim(),
                    got: w[1].input_dim(),
                });
            }
        }
        if let Some(last) = layers.last() {
            if head.dims() != last.output_dim() {
                return Err(OodError::DimensionMismatch {
                    context: "toy network head",
                    expected: last.output_dim(),
                    got: head.dims(),
                });
            }
        }
        Ok(ToyNetwork { layers, head })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head.dims(), ToyLayer::input_dim)
    }

    /// Plain forward pass to logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_with_layer_edits(x, &BTreeMap::new())
    }

    /// Forward pass applying an activation edit after each listed layer's
    /// activation. Profile-carrying edits must have been built at the
    /// matching layer width.
    pub fn forward_with_layer_edits(
        &self,
        x: &[f64],
        edits: &BTreeMap<usize, EnhancerSpec>,
    ) -> Result<Vec<f64>> {
        for (&layer, spec) in edits {
            if layer >= self.layers.len() {
                return Err(OodError::BadLayerIndex {
                    index: layer,
                    n_layers: self.layers.len(),
                });
            }
            if let Some(profile) = &spec.profile {
                let width = self.layers[layer].output_dim();
                if profile.dim() != width {
                    return Err(OodError::ProfileLayerMismatch {
                        layer,
                        expected: profile.dim(),
                        got: width,
                    });
                }
            }
        }
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if let Some(spec) = edits.get(&i) {
                h = spec.enhance(&h)?;
            }
        }
        self.head.logits(&h)
    }

    /// Post-activation outputs of one layer for every sample of a set.
    pub fn capture_layer(&self, set: &ActivationSet, layer_index: usize) -> Result<ActivationSet> {
        if layer_index >= self.layers.len() {
            return Err(OodError::BadLayerIndex {
                index: layer_index,
                n_layers: self.layers.len(),
            });
        }
        let rows: Result<Vec<Vec<f64>>> = exec::map_indexed(set.n_samples(), |i| {
            let mut h = set.row(i).to_vec();
            for layer in &self.layers[..=layer_index] {
                h = layer.forward(&h)?;
            }
            Ok(h)
        })
        .into_iter()
        .collect();
        let mut out = ActivationSet::from_rows(&rows?, set.tag())?;
        if let Some(labels) = set.labels() {
            out = out.with_labels(labels.to_vec())?;
        }
        Ok(out)
    }
}

/// Serializes a network as one manifest line plus head-format CSV block per
/// layer, then `@head` and the head block:
///
/// ```text
/// @layer RELU
/// <D_out rows of D_in weights>
/// <1 row of D_out biases>
/// @head
/// <C rows of D weights>
/// <1 row of C biases>
/// ```
pub fn write_toy_network(net: &ToyNetwork, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for layer in &net.layers {
        writeln!(w, "@layer {}", layer.activation.name())?;
        let as_head = layer_as_head(layer)?;
        dumpio_write_block(&mut w, &as_head)?;
    }
    writeln!(w, "@head")?;
    dumpio_write_block(&mut w, &net.head)?;
    w.flush()?;
    Ok(())
}

fn layer_as_head(layer: &ToyLayer) -> Result<LinearHead> {
    // head-format block: D_out weight rows + bias row; a 1-wide layer cannot
    // reuse the head type, which requires >= 2 rows
    if layer.output_dim() < 2 {
        return Err(OodError::BadParameter(
            "toy layers must have output width >= 2 to serialize".into(),
        ));
    }
    LinearHead::new(
        layer.weights.data().to_vec(),
        layer.output_dim(),
        layer.input_dim(),
        layer.bias.clone(),
        None,
    )
}

fn dumpio_write_block(w: &mut impl Write, head: &LinearHead) -> Result<()> {
    dumpio::write_linear_head_block(w, head)
}

pub fn read_toy_network(path: &Path) -> Result<ToyNetwork> {
    let text = std::fs::read_to_string(path)?;
    let mut layers = Vec::new();
    let mut head: Option<LinearHead> = None;
    let mut pending: Option<Option<Activation>> = None; // None act = head block
    let mut block = String::new();

    let flush = |pending: &mut Option<Option<Activation>>,
                     block: &mut String,
                     layers: &mut Vec<ToyLayer>,
                     head: &mut Option<LinearHead>|
     -> Result<()> {
        if let Some(kind) = pending.take() {
            let parsed = dumpio::parse_linear_head_text(block)?;
            match kind {
                Some(activation) => layers.push(ToyLayer::new(
                    Mat::from_vec(
                        parsed.classes(),
                        parsed.dims(),
                        (0..parsed.classes())
                            .flat_map(|c| parsed.weight_row(c).to_vec())
                            .collect(),
                    )?,
                    parsed.bias().to_vec(),
                    activation,
                )?),
                None => *head = Some(parsed),
            }
        }
        block.clear();
        Ok(())
    };

    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("@layer ") {
            flush(&mut pending, &mut block, &mut layers, &mut head)?;
            pending = Some(Some(Activation::parse(rest.trim())?));
        } else if line.trim() == "@head" {
            flush(&mut pending, &mut block, &mut layers, &mut head)?;
            pending = Some(None);
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    flush(&mut pending, &mut block, &mut layers, &mut head)?;
    let head = head.ok_or_else(|| OodError::BadParameter("network file lacks @head".into()))?;
    ToyNetwork::new(layers, head)
}

/// Generated linear head with N(0, scale^2) weights and zero bias.
pub fn random_linear_head(classes: usize, dims: usize, scale: f64, seed: u64) -> Result<LinearHead> {
    let mut data = vec![0.0; classes * dims];
    let mut rng = Xoshiro256pp::from_seed(stream_seed(seed, super::DOMAIN_HEAD, 0));
    rng.fill_gaussian(&mut data);
    for v in &mut data {
        *v *= scale;
    }
    LinearHead::new(data, classes, dims, vec![0.0; classes], None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhancers::build_profile;
    use crate::types::DistributionTag;

    #[test]
    fn gelu_reference_values() {
        assert!(gelu_approx(0.0).abs() < 1e-15);
        // negative inputs produce negative outputs bounded near -0.17
        let v = gelu_approx(-0.5);
        assert!(v < 0.0 && v > -0.2);
        assert!((gelu_approx(-0.5) - -0.15428599017516514).abs() < 1e-12);
        assert!((gelu_approx(1.0) - 0.841191990607477).abs() < 1e-12);
        // far tails behave like identity / zero
        assert!((gelu_approx(10.0) - 10.0).abs() < 1e-9);
        assert!(gelu_approx(-10.0).abs() < 1e-9);
    }

    fn identity_layer(d: usize, activation: Activation) -> ToyLayer {
        let mut w = Mat::zeros(d, d);
        for i in 0..d {
            w.set(i, i, 1.0);
        }
        ToyLayer::new(w, vec![0.0; d], activation).unwrap()
    }

    fn small_net() -> ToyNetwork {
        let l0 = ToyLayer::random(3, 4, Activation::Relu, 0.5, 101);
        let l1 = ToyLayer::random(4, 4, Activation::GeluApprox, 0.5, 102);
        let head = random_linear_head(2, 4, 0.7, 103).unwrap();
        ToyNetwork::new(vec![l0, l1], head).unwrap()
    }

    #[test]
    fn passthrough_layer_is_identity() {
        let net = ToyNetwork::new(
            vec![identity_layer(3, Activation::None)],
            LinearHead::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0, 0.0])
                .unwrap(),
        )
        .unwrap();
        let set = ActivationSet::from_rows(&[vec![1.5, -2.0, 0.25]], Some(DistributionTag::IdTest))
            .unwrap();
        let captured = net.capture_layer(&set, 0).unwrap();
        assert_eq!(captured.row(0), set.row(0));
    }

    #[test]
    fn capture_matches_manual_forward() {
        let net = small_net();
        let x = [0.3, -0.8, 1.2];
        let set = ActivationSet::from_rows(&[x.to_vec()], Some(DistributionTag::IdTest)).unwrap();
        let captured = net.capture_layer(&set, 1).unwrap();
        // manual forward through both layers
        let mut h = net.layers[0].weights.matvec(&x).unwrap();
        for v in &mut h {
            *v = v.max(0.0);
        }
        let mut h2 = net.layers[1].weights.matvec(&h).unwrap();
        for v in &mut h2 {
            *v = gelu_approx(*v);
        }
        for (a, b) in captured.row(0).iter().zip(&h2) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(captured.n_dims(), 4);
        assert!(matches!(
            net.capture_layer(&set, 2),
            Err(OodError::BadLayerIndex { .. })
        ));
    }

    #[test]
    fn empty_edits_equal_plain_forward() {
        let net = small_net();
        let x = [0.1, 0.2, -0.3];
        assert_eq!(
            net.forward(&x).unwrap(),
            net.forward_with_layer_edits(&x, &BTreeMap::new()).unwrap()
        );
        let mut edits = BTreeMap::new();
        edits.insert(0, EnhancerSpec::identity());
        edits.insert(1, EnhancerSpec::identity());
        assert_eq!(
            net.forward(&x).unwrap(),
            net.forward_with_layer_edits(&x, &edits).unwrap()
        );
    }

    #[test]
    fn last_layer_edit_equals_head_level_enhancement() {
        let net = small_net();
        let inputs = ActivationSet::from_rows(
            &[
                vec![0.4, 0.1, -0.2],
                vec![-0.6, 0.9, 0.3],
                vec![0.2, 0.2, 0.2],
            ],
            Some(DistributionTag::IdTrain),
        )
        .unwrap();
        let penultimate = net.capture_layer(&inputs, 1).unwrap();
        let profile = build_profile(&penultimate).unwrap();

        let mut edits = BTreeMap::new();
        edits.insert(1, EnhancerSpec::ras(profile.clone()));
        for i in 0..inputs.n_samples() {
            let through_net = net
                .forward_with_layer_edits(inputs.row(i), &edits)
                .unwrap();
            // two-path oracle: capture activations, enhance, then the head
            let through_capture = crate::enhancers::forward(
                penultimate.row(i),
                &net.head,
                &EnhancerSpec::ras(profile.clone()),
            )
            .unwrap();
            assert_eq!(through_net, through_capture);
        }
    }

    #[test]
    fn profile_width_is_checked() {
        let net = small_net();
        let wrong = crate::types::ReferenceProfile::new(vec![0.0, 1.0], 1, 0).unwrap();
        let mut edits = BTreeMap::new();
        edits.insert(1, EnhancerSpec::ras(wrong));
        assert!(matches!(
            net.forward_with_layer_edits(&[0.0, 0.0, 0.0], &edits),
            Err(OodError::ProfileLayerMismatch { .. })
        ));
    }

    #[test]
    fn network_file_roundtrip() {
        let net = small_net();
        let mut path = std::env::temp_dir();
        path.push(format!("oodkit-toynet-{}.txt", std::process::id()));
        write_toy_network(&net, &path).unwrap();
        let back = read_toy_network(&path).unwrap();
        assert_eq!(back.n_layers(), 2);
        assert_eq!(back.layers[0].activation, Activation::Relu);
        assert_eq!(back.layers[1].activation, Activation::GeluApprox);
        // forward passes agree at f64-text precision (writer is lossless)
        let x = [0.25, -0.5, 0.75];
        assert_eq!(net.forward(&x).unwrap(), back.forward(&x).unwrap());
        std::fs::remove_file(&path).unwrap();
    }
}
