//! Numerical kernel for attention-guided caption training: soft attention
//! masks, masked images, token NLL, the gender attention loss, combined
//! loss bundles, and their analytic gradients.
//!
//! Everything here is a pure function over immutable inputs, meant to serve
//! as a conformance oracle for training code written in any framework. The
//! check-vector machinery at the bottom freezes expected outputs (gradients
//! via central finite differences) into a portable JSON-lines suite.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mask::SegMask;

/// Soft-mask shape: `threshold` is the attention level mapped to 0.5 and
/// `sharpness` controls how fast the sigmoid saturates around it. Defaults
/// are calibrated for max-normalized grids (peak value 1), where 0.5 splits
/// "attended" from "background"; a raw-scale threshold works too since both
/// fields are free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub threshold: f64,
    pub sharpness: f64,
}

impl MaskParams {
    pub fn new(threshold: f64, sharpness: f64) -> Result<Self> {
        if sharpness.is_nan() || sharpness <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "mask sharpness must be positive, got {sharpness}"
            )));
        }
        Ok(Self {
            threshold,
            sharpness,
        })
    }
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            sharpness: 10.0,
        }
    }
}

/// Dense CHW tensor: an image or a feature map at the resolution the caller
/// chose to apply the attention mask at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(
                "image tensor dimensions must be positive".into(),
            ));
        }
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "image tensor has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "image tensor contains non-finite value {v}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for ImageTensor {
    type Error = Error;

    fn try_from(nested: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let channels = nested.len();
        let height = nested.first().map_or(0, Vec::len);
        let width = nested.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(channels * height * width);
        for chan in &nested {
            if chan.len() != height {
                return Err(Error::ShapeMismatch("ragged image tensor".into()));
            }
            for row in chan {
                if row.len() != width {
                    return Err(Error::ShapeMismatch("ragged image tensor".into()));
                }
                data.extend_from_slice(row);
            }
        }
        ImageTensor::new(channels, height, width, data)
    }
}

impl From<ImageTensor> for Vec<Vec<Vec<f64>>> {
    fn from(t: ImageTensor) -> Self {
        (0..t.channels)
            .map(|c| {
                (0..t.height)
                    .map(|y| (0..t.width).map(|x| t.get(c, y, x)).collect())
                    .collect()
            })
            .collect()
    }
}

/// One decoding step: the output distribution and the target token index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenStep {
    pub probs: Vec<f64>,
    pub target: usize,
}

/// A validated sequence of per-step token distributions. Distributions must
/// be nonnegative and sum to 1 within 1e-6; a zero probability at a target
/// is allowed here and guarded at loss time so the failure names the step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<TokenStep>")]
pub struct TokenProbSeq {
    steps: Vec<TokenStep>,
}

impl TokenProbSeq {
    pub fn new(steps: Vec<TokenStep>) -> Result<Self> {
        for (t, step) in steps.iter().enumerate() {
            if step.probs.is_empty() {
                return Err(Error::InvalidInput(format!("step {t} has no distribution")));
            }
            if step.target >= step.probs.len() {
                return Err(Error::InvalidInput(format!(
                    "step {t} target {} outside vocabulary of {}",
                    step.target,
                    step.probs.len()
                )));
            }
            if step.probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "step {t} has negative or non-finite probabilities"
                )));
            }
            let sum: f64 = step.probs.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "step {t} distribution sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[TokenStep] {
        &self.steps
    }
}

impl TryFrom<Vec<TokenStep>> for TokenProbSeq {
    type Error = Error;

    fn try_from(steps: Vec<TokenStep>) -> Result<Self> {
        TokenProbSeq::new(steps)
    }
}

/// Caption-quality loss, gender-evidence loss, and their weighted sums.
/// `l_self = l_lq + mu * l_ge` and `l_es = l_self + eta * l_ga` hold by
/// construction, bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_lq: f64,
    pub l_ge: f64,
    pub l_self: f64,
    pub l_ga: f64,
    pub l_es: f64,
    pub mu: f64,
    pub eta: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise soft threshold: T_i = sigmoid(sharpness * (a_i - threshold)).
pub fn soft_mask(alpha: &Grid, params: &MaskParams) -> Grid {
    alpha.map(|a| sigmoid(params.sharpness * (a - params.threshold)))
}

/// Elementwise derivative of [`soft_mask`]: sharpness * T_i * (1 - T_i).
pub fn grad_soft_mask(alpha: &Grid, params: &MaskParams) -> Grid {
    alpha.map(|a| {
        let t = sigmoid(params.sharpness * (a - params.threshold));
        params.sharpness * t * (1.0 - t)
    })
}

/// Suppress the attended region of an image: I* = I - I (.) T(a), with the
/// soft mask broadcast across channels. The attention grid is max-normalized
/// before thresholding so the default `MaskParams` behave at any raw scale;
/// it must already be at the tensor's spatial resolution.
pub fn masked_image(image: &ImageTensor, alpha: &Grid, params: &MaskParams) -> Result<ImageTensor> {
    if alpha.rows() != image.height() || alpha.cols() != image.width() {
        return Err(Error::ShapeMismatch(format!(
            "attention {}x{} vs image {}x{}",
            alpha.rows(),
            alpha.cols(),
            image.height(),
            image.width()
        )));
    }
    let t = soft_mask(&alpha.max_normalized()?, params);
    let mut data = Vec::with_capacity(image.values().len());
    for c in 0..image.channels() {
        for y in 0..image.height() {
            for x in 0..image.width() {
                data.push(image.get(c, y, x) * (1.0 - t.get(y, x)));
            }
        }
    }
    ImageTensor::new(image.channels(), image.height(), image.width(), data)
}

/// Negative log-likelihood of the targets: -sum_t ln p_t[y_t].
pub fn token_nll(seq: &TokenProbSeq) -> Result<f64> {
    let mut total = 0.0;
    for (t, step) in seq.steps().iter().enumerate() {
        let p = step.probs[step.target];
        if p <= 0.0 {
            return Err(Error::ZeroTargetProbability {
                step: t,
                token: step.target,
            });
        }
        total -= p.ln();
    }
    Ok(total)
}

fn require_same_shape(alpha: &Grid, mask: &SegMask) -> Result<()> {
    if alpha.rows() != mask.height() as usize || alpha.cols() != mask.width() as usize {
        return Err(Error::ShapeMismatch(format!(
            "attention {}x{} vs mask {}x{}",
            alpha.rows(),
            alpha.cols(),
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

/// Attention mass outside the person region: sum(a (.) (1 - M)). Requires a
/// grid already normalized to total mass 1 and a mask at the grid's
/// resolution (downsample pixel masks by area majority first).
pub fn gender_attention_loss(alpha: &Grid, mask: &SegMask) -> Result<f64> {
    require_same_shape(alpha, mask)?;
    let sum = alpha.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::UnnormalizedAttention(sum));
    }
    let mut loss = 0.0;
    for y in 0..alpha.rows() {
        for x in 0..alpha.cols() {
            if mask.get(x as u32, y as u32) == 0 {
                loss += alpha.get(y, x);
            }
        }
    }
    Ok(loss)
}

/// Gradient of sum(normalize(a) (.) (1 - M)) with respect to the raw,
/// not-necessarily-normalized grid, including the normalization Jacobian:
/// d/da_j = ((1 - M_j) - L) / S with S = sum(a) and L the normalized loss.
pub fn grad_gender_attention_loss(alpha: &Grid, mask: &SegMask) -> Result<Grid> {
    require_same_shape(alpha, mask)?;
    let s = alpha.sum();
    if s <= 0.0 {
        return Err(Error::ZeroAttention);
    }
    let mut outside = 0.0;
    for y in 0..alpha.rows() {
        for x in 0..alpha.cols() {
            if mask.get(x as u32, y as u32) == 0 {
                outside += alpha.get(y, x);
            }
        }
    }
    let l = outside / s;
    let mut data = Vec::with_capacity(alpha.rows() * alpha.cols());
    for y in 0..alpha.rows() {
        for x in 0..alpha.cols() {
            let outside_j = (mask.get(x as u32, y as u32) == 0) as u8 as f64;
            data.push((outside_j - l) / s);
        }
    }
    Grid::new(alpha.rows(), alpha.cols(), data)
}

/// Weighted loss composition; `mu` and `eta` are expected nonnegative.
pub fn combine_losses(l_lq: f64, l_ge: f64, l_ga: f64, mu: f64, eta: f64) -> LossBundle {
    let l_self = l_lq + mu * l_ge;
    let l_es = l_self + eta * l_ga;
    LossBundle {
        l_lq,
        l_ge,
        l_self,
        l_ga,
        l_es,
        mu,
        eta,
    }
}

/// One conformance vector: an operation name, its inputs, the frozen
/// expected output, and the comparison tolerance (absolute by default).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckVector {
    pub op: String,
    pub inputs: Value,
    pub expected: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relative: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VectorVerdict {
    pub index: usize,
    pub op: String,
    pub passed: bool,
    pub detail: String,
}

/// Load a JSON-lines vector file. A syntactically broken line is a file
/// error; semantic problems (unknown op, bad shapes) fail per vector later.
pub fn load_check_vectors(path: &Path) -> Result<Vec<CheckVector>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut vectors = Vec::new();
    for (idx, chunk) in text.split_inclusive('\n').enumerate() {
        let line = chunk.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let v: CheckVector = serde_json::from_str(line).map_err(|e| Error::JsonParse {
            path: path.to_path_buf(),
            offset: 0,
            line: idx + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        vectors.push(v);
    }
    if vectors.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no check vectors",
            path.display()
        )));
    }
    Ok(vectors)
}

const RELATIVE_FLOOR: f64 = 1e-8;

fn numbers_match(expected: f64, actual: f64, tol: f64, relative: bool) -> bool {
    let diff = (expected - actual).abs();
    if relative {
        diff <= tol * expected.abs().max(RELATIVE_FLOOR)
    } else {
        diff <= tol
    }
}

fn compare_value(
    expected: &Value,
    actual: &Value,
    tol: f64,
    relative: bool,
    path: &str,
) -> std::result::Result<(), String> {
    match (expected, actual) {
        (Value::Number(e), Value::Number(a)) => {
            let (e, a) = (e.as_f64().unwrap_or(f64::NAN), a.as_f64().unwrap_or(f64::NAN));
            if numbers_match(e, a, tol, relative) {
                Ok(())
            } else {
                Err(format!("{path}: expected {e}, got {a}"))
            }
        }
        (Value::Array(e), Value::Array(a)) => {
            if e.len() != a.len() {
                return Err(format!("{path}: length {} vs {}", e.len(), a.len()));
            }
            for (i, (ev, av)) in e.iter().zip(a).enumerate() {
                compare_value(ev, av, tol, relative, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        (Value::Object(e), Value::Object(a)) => {
            for (key, ev) in e {
                let av = a
                    .get(key)
                    .ok_or_else(|| format!("{path}.{key}: missing in actual output"))?;
                compare_value(ev, av, tol, relative, &format!("{path}.{key}"))?;
            }
            Ok(())
        }
        (e, a) if e == a => Ok(()),
        (e, a) => Err(format!("{path}: expected {e}, got {a}")),
    }
}

fn grid_to_value(grid: Grid) -> Value {
    serde_json::to_value(grid).expect("grid serializes")
}

fn parse_mask(rows: &[Vec<u8>]) -> Result<SegMask> {
    let height = rows.len() as u32;
    let width = rows.first().map_or(0, Vec::len) as u32;
    let mut bits = Vec::with_capacity((width * height) as usize);
    for row in rows {
        if row.len() as u32 != width {
            return Err(Error::ShapeMismatch("ragged mask".into()));
        }
        bits.extend_from_slice(row);
    }
    SegMask::from_bits(width, height, bits)
}

fn eval_vector(vector: &CheckVector) -> Result<Value> {
    #[derive(Deserialize)]
    struct SoftMaskIn {
        alpha: Grid,
        threshold: f64,
        sharpness: f64,
    }
    #[derive(Deserialize)]
    struct MaskedImageIn {
        image: ImageTensor,
        alpha: Grid,
        threshold: f64,
        sharpness: f64,
    }
    #[derive(Deserialize)]
    struct TokenNllIn {
        probs: Vec<Vec<f64>>,
        targets: Vec<usize>,
    }
    #[derive(Deserialize)]
    struct AttnLossIn {
        alpha: Grid,
        mask: Vec<Vec<u8>>,
    }
    #[derive(Deserialize)]
    struct CombineIn {
        l_lq: f64,
        l_ge: f64,
        l_ga: f64,
        mu: f64,
        eta: f64,
    }

    let inputs = vector.inputs.clone();
    match vector.op.as_str() {
        "soft_mask" => {
            let p: SoftMaskIn = from_value(inputs)?;
            let params = MaskParams::new(p.threshold, p.sharpness)?;
            Ok(grid_to_value(soft_mask(&p.alpha, &params)))
        }
        "grad_soft_mask" => {
            let p: SoftMaskIn = from_value(inputs)?;
            let params = MaskParams::new(p.threshold, p.sharpness)?;
            Ok(grid_to_value(grad_soft_mask(&p.alpha, &params)))
        }
        "masked_image" => {
            let p: MaskedImageIn = from_value(inputs)?;
            let params = MaskParams::new(p.threshold, p.sharpness)?;
            let out = masked_image(&p.image, &p.alpha, &params)?;
            Ok(serde_json::to_value(out).expect("tensor serializes"))
        }
        "token_nll" => {
            let p: TokenNllIn = from_value(inputs)?;
            if p.probs.len() != p.targets.len() {
                return Err(Error::InvalidInput(format!(
                    "{} distributions but {} targets",
                    p.probs.len(),
                    p.targets.len()
                )));
            }
            let steps = p
                .probs
                .into_iter()
                .zip(p.targets)
                .map(|(probs, target)| TokenStep { probs, target })
                .collect();
            Ok(json!(token_nll(&TokenProbSeq::new(steps)?)?))
        }
        "gender_attention_loss" => {
            let p: AttnLossIn = from_value(inputs)?;
            let mask = parse_mask(&p.mask)?;
            Ok(json!(gender_attention_loss(&p.alpha, &mask)?))
        }
        "grad_gender_attention_loss" => {
            let p: AttnLossIn = from_value(inputs)?;
            let mask = parse_mask(&p.mask)?;
            Ok(grid_to_value(grad_gender_attention_loss(&p.alpha, &mask)?))
        }
        "combine_losses" => {
            let p: CombineIn = from_value(inputs)?;
            let bundle = combine_losses(p.l_lq, p.l_ge, p.l_ga, p.mu, p.eta);
            Ok(serde_json::to_value(bundle).expect("bundle serializes"))
        }
        other => Err(Error::InvalidInput(format!("unknown op {other:?}"))),
    }
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("bad inputs: {e}")))
}

/// Evaluate every vector; each produces a verdict, never a panic or an
/// early exit, so one rotten vector cannot mask the rest.
pub fn run_vectors(vectors: &[CheckVector]) -> Vec<VectorVerdict> {
    vectors
        .iter()
        .enumerate()
        .map(|(index, vector)| {
            let (passed, detail) = match eval_vector(vector) {
                Ok(actual) => match compare_value(
                    &vector.expected,
                    &actual,
                    vector.tol.unwrap_or(1e-9),
                    vector.relative,
                    "output",
                ) {
                    Ok(()) => (true, "ok".to_string()),
                    Err(diff) => (false, diff),
                },
                Err(e) => (false, e.to_string()),
            };
            VectorVerdict {
                index,
                op: vector.op.clone(),
                passed,
                detail,
            }
        })
        .collect()
}

/// Central finite differences of a scalar function, h = 1e-5.
fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + H;
        let hi = f(&probe);
        probe[i] = x[i] - H;
        let lo = f(&probe);
        probe[i] = x[i];
        grad.push((hi - lo) / (2.0 * H));
    }
    grad
}

fn rand_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(lo..hi)).collect())
        .collect()
}

fn rand_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<u8>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0..2) as u8).collect())
        .collect()
}

/// The built-in conformance suite. Gradient expectations come from central
/// finite differences on independently coded closed forms, not from the
/// analytic implementations they check.
pub fn standard_vectors(seed: u64) -> Vec<CheckVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::new();

    // soft_mask and its gradient, default params plus a literal raw-scale
    // threshold far above the data (saturation regime).
    for &(threshold, sharpness) in &[(0.5, 10.0), (10.0, 2.0)] {
        let alpha = rand_grid(&mut rng, 3, 4, 0.0, 1.0);
        let expected: Vec<Vec<f64>> = alpha
            .iter()
            .map(|row| {
                row.iter()
                    .map(|a| 1.0 / (1.0 + (-(sharpness * (a - threshold))).exp()))
                    .collect()
            })
            .collect();
        vectors.push(CheckVector {
            op: "soft_mask".into(),
            inputs: json!({"alpha": alpha, "threshold": threshold, "sharpness": sharpness}),
            expected: json!(expected),
            tol: Some(1e-12),
            relative: false,
        });
    }
    for size in [4usize, 14] {
        let threshold = 0.5;
        let sharpness = 10.0;
        let alpha = rand_grid(&mut rng, size, size, 0.0, 1.0);
        let flat: Vec<f64> = alpha.iter().flatten().copied().collect();
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let scalar = |x: &[f64]| 1.0 / (1.0 + (-(sharpness * (x[0] - threshold))).exp());
                fd_gradient(scalar, &flat[i..=i])[0]
            })
            .collect();
        let expected: Vec<Vec<f64>> = fd
            .chunks(size)
            .map(|chunk| chunk.to_vec())
            .collect();
        vectors.push(CheckVector {
            op: "grad_soft_mask".into(),
            inputs: json!({"alpha": alpha, "threshold": threshold, "sharpness": sharpness}),
            expected: json!(expected),
            tol: Some(1e-4),
            relative: true,
        });
    }

    // masked_image on a small tensor; expected from the scalar definition.
    {
        let alpha = rand_grid(&mut rng, 2, 3, 0.1, 1.0);
        let peak = alpha
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let image: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| rand_grid(&mut rng, 2, 3, -1.0, 1.0))
            .collect();
        let (threshold, sharpness) = (0.5, 10.0);
        let expected: Vec<Vec<Vec<f64>>> = image
            .iter()
            .map(|chan| {
                chan.iter()
                    .enumerate()
                    .map(|(y, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(x, v)| {
                                let t = 1.0
                                    / (1.0
                                        + (-(sharpness * (alpha[y][x] / peak - threshold))).exp());
                                v * (1.0 - t)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        vectors.push(CheckVector {
            op: "masked_image".into(),
            inputs: json!({"image": image, "alpha": alpha, "threshold": threshold, "sharpness": sharpness}),
            expected: json!(expected),
            tol: Some(1e-12),
            relative: false,
        });
    }

    // token_nll: expected from an independent running product.
    {
        let mut probs = Vec::new();
        let mut targets = Vec::new();
        let mut product = 1.0f64;
        for _ in 0..4 {
            let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let dist: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let target = rng.gen_range(0..5);
            product *= dist[target];
            probs.push(dist);
            targets.push(target);
        }
        vectors.push(CheckVector {
            op: "token_nll".into(),
            inputs: json!({"probs": probs, "targets": targets}),
            expected: json!(-product.ln()),
            tol: Some(1e-9),
            relative: false,
        });
    }

    // gender_attention_loss: expected through the complementary identity.
    {
        let raw = rand_grid(&mut rng, 4, 4, 0.01, 1.0);
        let total: f64 = raw.iter().flatten().sum();
        let alpha: Vec<Vec<f64>> = raw
            .iter()
            .map(|row| row.iter().map(|v| v / total).collect())
            .collect();
        let mask = rand_mask(&mut rng, 4, 4);
        let inside: f64 = alpha
            .iter()
            .zip(&mask)
            .flat_map(|(ar, mr)| ar.iter().zip(mr))
            .filter(|(_, &m)| m == 1)
            .map(|(a, _)| a)
            .sum();
        vectors.push(CheckVector {
            op: "gender_attention_loss".into(),
            inputs: json!({"alpha": alpha, "mask": mask}),
            expected: json!(1.0 - inside),
            tol: Some(1e-9),
            relative: false,
        });
    }

    // grad_gender_attention_loss on raw (unnormalized) grids, FD oracle.
    for size in [3usize, 14] {
        let alpha = rand_grid(&mut rng, size, size, 0.05, 2.0);
        let mask = rand_mask(&mut rng, size, size);
        let flat: Vec<f64> = alpha.iter().flatten().copied().collect();
        let mask_flat: Vec<u8> = mask.iter().flatten().copied().collect();
        let loss = |x: &[f64]| {
            let s: f64 = x.iter().sum();
            x.iter()
                .zip(&mask_flat)
                .filter(|(_, &m)| m == 0)
                .map(|(v, _)| v / s)
                .sum::<f64>()
        };
        let fd = fd_gradient(loss, &flat);
        let expected: Vec<Vec<f64>> = fd.chunks(size).map(|c| c.to_vec()).collect();
        vectors.push(CheckVector {
            op: "grad_gender_attention_loss".into(),
            inputs: json!({"alpha": alpha, "mask": mask}),
            expected: json!(expected),
            tol: Some(1e-4),
            relative: true,
        });
    }

    // combine_losses with the published defaults.
    {
        let (l_lq, l_ge, l_ga) = (
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.0..1.0),
        );
        let (mu, eta) = (0.1, 0.05);
        vectors.push(CheckVector {
            op: "combine_losses".into(),
            inputs: json!({"l_lq": l_lq, "l_ge": l_ge, "l_ga": l_ga, "mu": mu, "eta": eta}),
            expected: json!({
                "l_self": l_lq + mu * l_ge,
                "l_es": (l_lq + mu * l_ge) + eta * l_ga,
            }),
            tol: Some(1e-12),
            relative: false,
        });
    }

    vectors
}
