//! Network descriptors: per-layer structure, clustering features and FLOPs
//! accounting.
//!
//! A descriptor file is line oriented. Blank lines and `#` comments are
//! ignored, one `name <ident>` line names the network, and every other line
//! is a layer record with nine whitespace-separated fields:
//!
//! ```text
//! # index  type    n    c    k  out_h  out_w  prunable  producer
//! 0        conv    3    16   3  32     32     no        input
//! 1        conv    16   16   3  32     32     yes       0
//! ```
//!
//! `type` is one of `conv`, `dw` (depth-wise, `n` is the per-group input
//! count, normally 1) or `linear`. `producer` is the index of the layer whose
//! output feeds this one, or `input` for the network input. Producers must
//! precede their consumers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of structural features per layer.
pub const FEATURE_COUNT: usize = 7;

/// Feature names in column order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["n", "c", "k", "k_out", "params", "flops", "n/c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    /// Depth-wise convolution; its channel count follows its producer.
    Depthwise,
    Linear,
}

impl LayerKind {
    fn tag(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Depthwise => "dw",
            LayerKind::Linear => "linear",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "conv" => Ok(LayerKind::Conv),
            "dw" => Ok(LayerKind::Depthwise),
            "linear" => Ok(LayerKind::Linear),
            other => Err(format!("unknown layer type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub index: usize,
    pub kind: LayerKind,
    /// Input channels (per group for depth-wise layers).
    pub n: u64,
    /// Output channels.
    pub c: u64,
    pub k: u64,
    pub out_h: u64,
    pub out_w: u64,
    pub prunable: bool,
    pub producer: Option<usize>,
}

impl LayerDescriptor {
    pub fn params(&self) -> u64 {
        self.n * self.c * self.k * self.k
    }

    pub fn k_out(&self) -> u64 {
        self.out_h * self.out_w
    }

    pub fn flops(&self) -> u64 {
        self.params() * self.k_out()
    }

    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.c as f64
    }

    /// The feature vector `(n, c, k, k_out, params, flops, n/c)`.
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.n as f64,
            self.c as f64,
            self.k as f64,
            self.k_out() as f64,
            self.params() as f64,
            self.flops() as f64,
            self.ratio(),
        ]
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("n", self.n),
            ("c", self.c),
            ("k", self.k),
            ("out_h", self.out_h),
            ("out_w", self.out_w),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::InvalidLayer {
                    index: self.index,
                    message: format!("{name} must be at least 1"),
                });
            }
        }
        if self.kind == LayerKind::Depthwise && self.prunable {
            return Err(Error::InvalidLayer {
                index: self.index,
                message: "depth-wise layers follow their producer and cannot be prunable".into(),
            });
        }
        if let Some(p) = self.producer {
            if p >= self.index {
                return Err(Error::InvalidLayer {
                    index: self.index,
                    message: format!("producer {p} does not precede the layer"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    name: String,
    layers: Vec<LayerDescriptor>,
    prunable_indices: Vec<usize>,
}

impl NetworkDescriptor {
    /// Validates the layer list and collects the prunable layers.
    ///
    /// Layer `i` must carry `index == i`.
    pub fn new(name: impl Into<String>, layers: Vec<LayerDescriptor>) -> Result<Self> {
        for (pos, layer) in layers.iter().enumerate() {
            if layer.index != pos {
                return Err(Error::InvalidLayer {
                    index: layer.index,
                    message: format!("expected index {pos}"),
                });
            }
            layer.validate()?;
        }
        let prunable_indices: Vec<usize> = layers
            .iter()
            .filter(|l| l.prunable)
            .map(|l| l.index)
            .collect();
        if prunable_indices.is_empty() {
            return Err(Error::InvalidNetwork("no prunable layers".into()));
        }
        Ok(Self {
            name: name.into(),
            layers,
            prunable_indices,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerDescriptor] {
        &self.layers
    }

    pub fn prunable_indices(&self) -> &[usize] {
        &self.prunable_indices
    }

    /// Problem dimension before clustering.
    pub fn dimension(&self) -> usize {
        self.prunable_indices.len()
    }

    pub fn prunable_layers(&self) -> impl Iterator<Item = &LayerDescriptor> + '_ {
        self.prunable_indices.iter().map(move |&i| &self.layers[i])
    }

    /// Total FLOPs of the unpruned network.
    pub fn total_flops(&self) -> u64 {
        self.layers.iter().map(LayerDescriptor::flops).sum()
    }

    /// Network FLOPs, optionally under a policy of preserved output fractions
    /// for the prunable layers (in `prunable_indices` order).
    pub fn flops(&self, policy: Option<&[f64]>) -> Result<f64> {
        let Some(policy) = policy else {
            return Ok(self.total_flops() as f64);
        };
        self.check_policy(policy)?;
        Ok(self.scaled_flops(policy))
    }

    /// `flops(policy) / flops(none)`.
    pub fn flops_ratio(&self, policy: &[f64]) -> Result<f64> {
        self.check_policy(policy)?;
        Ok(self.scaled_flops(policy) / self.total_flops() as f64)
    }

    fn check_policy(&self, policy: &[f64]) -> Result<()> {
        if policy.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: policy.len(),
            });
        }
        if let Some((i, p)) = policy
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::InvalidPolicy(format!(
                "entry {i} = {p} is outside (0, 1]"
            )));
        }
        Ok(())
    }

    fn scaled_flops(&self, policy: &[f64]) -> f64 {
        let mut out_frac = vec![1.0; self.layers.len()];
        let mut next_prunable = 0;
        let mut total = 0.0;
        for layer in &self.layers {
            let in_frac = layer.producer.map_or(1.0, |p| out_frac[p]);
            let own = if layer.prunable {
                let p = policy[next_prunable];
                next_prunable += 1;
                p
            } else if layer.kind == LayerKind::Depthwise {
                in_frac
            } else {
                1.0
            };
            out_frac[layer.index] = own;
            let scale = match layer.kind {
                LayerKind::Depthwise => own,
                _ => in_frac * own,
            };
            total += layer.flops() as f64 * scale;
        }
        total
    }

    /// Compiles the FLOPs ratio for policies over groups of prunable layers,
    /// where prunable layer `k` takes the value of group `groups[k]`.
    pub fn flops_polynomial(&self, groups: &[usize]) -> Result<FlopsPolynomial> {
        if groups.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: groups.len(),
            });
        }
        let dim = groups.iter().max().map_or(0, |m| m + 1);
        let total = self.total_flops() as f64;
        let mut out_var: Vec<Option<usize>> = vec![None; self.layers.len()];
        let mut weights: BTreeMap<(Option<usize>, Option<usize>), f64> = BTreeMap::new();
        let mut next_prunable = 0;
        for layer in &self.layers {
            let in_var = layer.producer.and_then(|p| out_var[p]);
            let own = if layer.prunable {
                next_prunable += 1;
                Some(groups[next_prunable - 1])
            } else if layer.kind == LayerKind::Depthwise {
                in_var
            } else {
                None
            };
            out_var[layer.index] = own;
            let (a, b) = match layer.kind {
                LayerKind::Depthwise => (own, None),
                _ => (in_var.min(own), in_var.max(own)),
            };
            *weights.entry((a, b)).or_insert(0.0) += layer.flops() as f64 / total;
        }
        let mut constant = 0.0;
        let mut terms = Vec::new();
        for ((a, b), w) in weights {
            match (a, b) {
                (None, None) => constant += w,
                (None, Some(v)) | (Some(v), None) => terms.push((v, None, w)),
                (Some(u), Some(v)) => terms.push((u, Some(v), w)),
            }
        }
        Ok(FlopsPolynomial {
            dim,
            constant,
            terms,
        })
    }

    /// One row of features per prunable layer, optionally z-scored per column.
    pub fn feature_matrix(&self, normalize: bool) -> FeatureMatrix {
        let rows: Vec<[f64; FEATURE_COUNT]> =
            self.prunable_layers().map(|l| l.features()).collect();
        let mut matrix = FeatureMatrix {
            rows,
            layer_indices: self.prunable_indices.clone(),
            normalization: None,
        };
        if normalize {
            matrix.normalize();
        }
        matrix
    }

    /// Parses the descriptor text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "name" {
                if fields.len() != 2 {
                    return Err(parse_err(lineno, "expected `name <ident>`"));
                }
                name = Some(fields[1].to_string());
                continue;
            }
            layers.push(parse_layer(lineno, &fields)?);
        }
        let name = name.ok_or_else(|| Error::InvalidNetwork("missing `name` line".into()))?;
        Self::new(name, layers)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Renders the descriptor in the text format accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\n", self.name);
        out.push_str("# index type n c k out_h out_w prunable producer\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {}\n",
                l.index,
                l.kind,
                l.n,
                l.c,
                l.k,
                l.out_h,
                l.out_w,
                if l.prunable { "yes" } else { "no" },
                l.producer
                    .map_or_else(|| "input".to_string(), |p| p.to_string()),
            ));
        }
        out
    }
}

/// Reads and validates a network descriptor file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkDescriptor> {
    NetworkDescriptor::load(path)
}

fn parse_err(lineno: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: lineno + 1,
        message: message.into(),
    }
}

fn parse_layer(lineno: usize, fields: &[&str]) -> Result<LayerDescriptor> {
    if fields.len() != 9 {
        return Err(parse_err(
            lineno,
            format!("expected 9 fields in layer record, found {}", fields.len()),
        ));
    }
    let index: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad layer index `{}`", fields[0])))?;
    let at_layer = |message: String| Error::Parse {
        line: lineno + 1,
        message: format!("layer {index}: {message}"),
    };
    let kind: LayerKind = fields[1].parse().map_err(at_layer)?;
    let number = |i: usize, what: &str| -> Result<u64> {
        fields[i]
            .parse()
            .map_err(|_| at_layer(format!("bad {what} `{}`", fields[i])))
    };
    let n = number(2, "n")?;
    let c = number(3, "c")?;
    let k = number(4, "k")?;
    let out_h = number(5, "out_h")?;
    let out_w = number(6, "out_w")?;
    let prunable = match fields[7] {
        "yes" | "true" | "1" => true,
        "no" | "false" | "0" => false,
        other => return Err(at_layer(format!("bad prunable flag `{other}`"))),
    };
    let producer = match fields[8] {
        "input" | "none" | "-" => None,
        other => Some(
            other
                .parse()
                .map_err(|_| at_layer(format!("bad producer `{other}`")))?,
        ),
    };
    Ok(LayerDescriptor {
        index,
        kind,
        n,
        c,
        k,
        out_h,
        out_w,
        prunable,
        producer,
    })
}

/// FLOPs ratio as a sum of constant, linear and bilinear terms in group
/// preservation ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopsPolynomial {
    dim: usize,
    constant: f64,
    terms: Vec<(usize, Option<usize>, f64)>,
}

impl FlopsPolynomial {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ratio at group values `x`; `x` must have `dim()` entries.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let mut sum = self.constant;
        for &(a, b, w) in &self.terms {
            sum += w * x[a] * b.map_or(1.0, |b| x[b]);
        }
        sum
    }
}

/// Per-column affine map applied by normalization: `z = (x - shift) / scale`.
/// Constant columns carry `scale == 0` and map to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: Vec<[f64; FEATURE_COUNT]>,
    layer_indices: Vec<usize>,
    normalization: Option<Vec<ColumnScaling>>,
}

impl FeatureMatrix {
    /// Builds a matrix from arbitrary rows; layer indices default to `0..N`.
    pub fn from_rows(rows: Vec<[f64; FEATURE_COUNT]>) -> Self {
        let layer_indices = (0..rows.len()).collect();
        Self {
            rows,
            layer_indices,
            normalization: None,
        }
    }

    pub fn rows(&self) -> &[[f64; FEATURE_COUNT]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Network layer index of each row.
    pub fn layer_indices(&self) -> &[usize] {
        &self.layer_indices
    }

    pub fn normalization(&self) -> Option<&[ColumnScaling]> {
        self.normalization.as_deref()
    }

    /// Z-scores every column using the sample standard deviation; constant
    /// columns become all-zero. Normalizing twice is a no-op.
    pub fn normalize(&mut self) {
        if self.normalization.is_some() {
            return;
        }
        let n = self.rows.len();
        let mut scaling = Vec::with_capacity(FEATURE_COUNT);
        for col in 0..FEATURE_COUNT {
            let first = self.rows.first().map_or(0.0, |r| r[col]);
            let constant = self.rows.iter().all(|r| r[col] == first);
            let mean = self.rows.iter().map(|r| r[col]).sum::<f64>() / n.max(1) as f64;
            let scale = if constant || n < 2 {
                0.0
            } else {
                let ss: f64 = self.rows.iter().map(|r| (r[col] - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            };
            for row in &mut self.rows {
                row[col] = if scale == 0.0 {
                    0.0
                } else {
                    (row[col] - mean) / scale
                };
            }
            scaling.push(ColumnScaling { shift: mean, scale });
        }
        self.normalization = Some(scaling);
    }
}
