//! Information interaction layer.
//!
//! A single-layer bidirectional LSTM runs across the `N` hypothesis features
//! of one sample (not across tokens), so the hidden state at position `j`
//! carries information from every other hypothesis. A shared linear head maps
//! `h_j = [fwd_j, bwd_j]` to the scalar score `s_j`.
//!
//! Gate pre-activations are stacked in one `4h` vector in the order
//! input, forget, output, candidate.

use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::FeatureVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    /// Rows of the stacked gate block belonging to this gate.
    pub fn rows(self, hidden: usize) -> Range<usize> {
        let k = self as usize;
        k * hidden..(k + 1) * hidden
    }
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmDirection {
    /// `4h x d`
    pub w_input: Array2<f64>,
    /// `4h x h`
    pub w_hidden: Array2<f64>,
    /// `4h`
    pub bias: Array1<f64>,
}

impl LstmDirection {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmDirection {
            w_input: Array2::zeros((4 * hidden_dim, input_dim)),
            w_hidden: Array2::zeros((4 * hidden_dim, hidden_dim)),
            bias: Array1::zeros(4 * hidden_dim),
        }
    }

    fn hidden_dim(&self) -> usize {
        self.w_hidden.ncols()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w_input.iter().chain(self.w_hidden.iter()).chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_input
            .iter_mut()
            .chain(self.w_hidden.iter_mut())
            .chain(self.bias.iter_mut())
    }
}

/// All trainable weights of the interaction layer and scoring head.
///
/// The same shape doubles as the gradient container returned by [`backward`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub forward: LstmDirection,
    pub backward: LstmDirection,
    /// `2h`, applied to `[fwd_j, bwd_j]`.
    pub head_weight: Array1<f64>,
    pub head_bias: f64,
}

impl BiLstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        BiLstmParams {
            input_dim,
            hidden_dim,
            forward: LstmDirection::zeros(input_dim, hidden_dim),
            backward: LstmDirection::zeros(input_dim, hidden_dim),
            head_weight: Array1::zeros(2 * hidden_dim),
            head_bias: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim)
    }

    pub fn num_values(&self) -> usize {
        2 * 4 * self.hidden_dim * (self.input_dim + self.hidden_dim + 1) + 2 * self.hidden_dim + 1
    }

    /// Named contiguous ranges of [`to_vec`](Self::to_vec), one per weight block.
    pub fn blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let sizes = [
            ("forward.w_input", 4 * h * d),
            ("forward.w_hidden", 4 * h * h),
            ("forward.bias", 4 * h),
            ("backward.w_input", 4 * h * d),
            ("backward.w_hidden", 4 * h * h),
            ("backward.bias", 4 * h),
            ("head_weight", 2 * h),
            ("head_bias", 1),
        ];
        let mut start = 0;
        sizes
            .into_iter()
            .map(|(name, n)| {
                let r = start..start + n;
                start += n;
                (name, r)
            })
            .collect()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.forward
            .values()
            .chain(self.backward.values())
            .chain(self.head_weight.iter())
            .chain(std::iter::once(&self.head_bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.forward
            .values_mut()
            .chain(self.backward.values_mut())
            .chain(self.head_weight.iter_mut())
            .chain(std::iter::once(&mut self.head_bias))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::Shape {
                what: "flattened parameters",
                expected: self.num_values(),
                got: values.len(),
            });
        }
        for (dst, src) in self.values_mut().zip(values) {
            *dst = *src;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &BiLstmParams) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn check_shapes(&self) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        if d == 0 || h == 0 {
            return Err(Error::invalid(
                "dimensions",
                "input and hidden width must be at least 1",
            ));
        }
        for dir in [&self.forward, &self.backward] {
            if dir.w_input.dim() != (4 * h, d) || dir.w_hidden.dim() != (4 * h, h) || dir.bias.len() != 4 * h {
                return Err(Error::invalid(
                    "parameters",
                    format!("direction shapes inconsistent with d={d}, h={h}"),
                ));
            }
        }
        if self.head_weight.len() != 2 * h {
            return Err(Error::invalid(
                "parameters",
                format!("head width {} != {}", self.head_weight.len(), 2 * h),
            ));
        }
        Ok(())
    }
}

/// Seeded uniform initialisation in `[-1/sqrt(h), 1/sqrt(h)]`, forget-gate
/// bias set to 1.
pub fn init_params(seed: u64, input_dim: usize, hidden_dim: usize) -> Result<BiLstmParams> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::invalid(
            "dimensions",
            "input and hidden width must be at least 1",
        ));
    }
    let mut params = BiLstmParams::zeros(input_dim, hidden_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (hidden_dim as f64).sqrt();
    for v in params.values_mut() {
        *v = rng.random_range(-bound..=bound);
    }
    for dir in [&mut params.forward, &mut params.backward] {
        dir.bias.slice_mut(s![Gate::Forget.rows(hidden_dim)]).fill(1.0);
    }
    Ok(params)
}

/// Activations of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Post-activation gates `[i, f, o, g]`, `4h`.
    pub gates: Array1<f64>,
    pub cell: Array1<f64>,
    pub cell_tanh: Array1<f64>,
    pub hidden: Array1<f64>,
    pub prev_cell: Array1<f64>,
    pub prev_hidden: Array1<f64>,
}

/// Everything [`backward`] needs, indexed by hypothesis position.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTrace {
    pub forward: Vec<StepTrace>,
    pub backward: Vec<StepTrace>,
    /// `[fwd_j, bwd_j]`, `2h` each.
    pub hidden: Vec<Array1<f64>>,
    pub scores: Vec<f64>,
}

impl InteractionTrace {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn validate_features(params: &BiLstmParams, features: &[FeatureVector]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::invalid("features", "need at least one hypothesis"));
    }
    for f in features {
        if f.dim() != params.input_dim {
            return Err(Error::Shape {
                what: "feature width",
                expected: params.input_dim,
                got: f.dim(),
            });
        }
        if !f.0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
    }
    Ok(())
}

fn run_direction(
    dir: &LstmDirection,
    features: &[FeatureVector],
    order: impl Iterator<Item = usize>,
) -> Vec<StepTrace> {
    let h = dir.hidden_dim();
    let mut prev_hidden = Array1::zeros(h);
    let mut prev_cell = Array1::zeros(h);
    let mut steps: Vec<Option<StepTrace>> = vec![None; features.len()];
    for pos in order {
        let mut gates = dir.w_input.dot(&features[pos].0) + dir.w_hidden.dot(&prev_hidden) + &dir.bias;
        for gate in Gate::ALL {
            let mut block = gates.slice_mut(s![gate.rows(h)]);
            match gate {
                Gate::Candidate => block.mapv_inplace(f64::tanh),
                _ => block.mapv_inplace(sigmoid),
            }
        }
        let g = |gate: Gate| gates.slice(s![gate.rows(h)]);
        let cell = &g(Gate::Forget) * &prev_cell + &g(Gate::Input) * &g(Gate::Candidate);
        let cell_tanh = cell.mapv(f64::tanh);
        let hidden = &g(Gate::Output) * &cell_tanh;
        steps[pos] = Some(StepTrace {
            gates: gates.clone(),
            cell: cell.clone(),
            cell_tanh,
            hidden: hidden.clone(),
            prev_cell,
            prev_hidden,
        });
        prev_hidden = hidden;
        prev_cell = cell;
    }
    steps
        .into_iter()
        .map(|s| s.expect("order covers every position"))
        .collect()
}

/// Scores every hypothesis of one sample.
pub fn forward(params: &BiLstmParams, features: &[FeatureVector]) -> Result<(Vec<f64>, InteractionTrace)> {
    params.check_shapes()?;
    validate_features(params, features)?;
    let n = features.len();
    let fwd = run_direction(&params.forward, features, 0..n);
    let bwd = run_direction(&params.backward, features, (0..n).rev());
    let h = params.hidden_dim;
    let mut hidden = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for (f, b) in fwd.iter().zip(&bwd) {
        let mut cat = Array1::zeros(2 * h);
        cat.slice_mut(s![..h]).assign(&f.hidden);
        cat.slice_mut(s![h..]).assign(&b.hidden);
        scores.push(params.head_weight.dot(&cat) + params.head_bias);
        hidden.push(cat);
    }
    let trace = InteractionTrace {
        forward: fwd,
        backward: bwd,
        hidden,
        scores: scores.clone(),
    };
    Ok((scores, trace))
}

/// Scores only, discarding the trace.
pub fn score(params: &BiLstmParams, features: &[FeatureVector]) -> Result<Vec<f64>> {
    forward(params, features).map(|(s, _)| s)
}

/// Gradients of the loss with respect to every weight block.
pub type ParamGrads = BiLstmParams;

fn backprop_direction(
    dir: &LstmDirection,
    grad: &mut LstmDirection,
    features: &[FeatureVector],
    steps: &[StepTrace],
    hidden_grads: &[ArrayView1<'_, f64>],
    feature_grads: &mut [Array1<f64>],
    order: impl Iterator<Item = usize>,
) {
    let h = dir.hidden_dim();
    let mut dh_next: Array1<f64> = Array1::zeros(h);
    let mut dc_next: Array1<f64> = Array1::zeros(h);
    // `order` runs opposite to the direction's processing order.
    for pos in order {
        let step = &steps[pos];
        let gate = |g: Gate| step.gates.slice(s![g.rows(h)]);
        let (i, f, o, g) = (
            gate(Gate::Input),
            gate(Gate::Forget),
            gate(Gate::Output),
            gate(Gate::Candidate),
        );

        let dh = &hidden_grads[pos] + &dh_next;
        let dc = &dh * &o * &step.cell_tanh.mapv(|t| 1.0 - t * t) + &dc_next;

        let mut da = Array1::zeros(4 * h);
        Zip::from(da.slice_mut(s![Gate::Input.rows(h)]))
            .and(&dc)
            .and(&g)
            .and(&i)
            .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
        Zip::from(da.slice_mut(s![Gate::Forget.rows(h)]))
            .and(&dc)
            .and(&step.prev_cell)
            .and(&f)
            .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
        Zip::from(da.slice_mut(s![Gate::Output.rows(h)]))
            .and(&dh)
            .and(&step.cell_tanh)
            .and(&o)
            .for_each(|d, &dh, &ct, &o| *d = dh * ct * o * (1.0 - o));
        Zip::from(da.slice_mut(s![Gate::Candidate.rows(h)]))
            .and(&dc)
            .and(&i)
            .and(&g)
            .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));

        let x = &features[pos].0;
        let da_col = da.view().insert_axis(ndarray::Axis(1));
        grad.w_input += &da_col.dot(&x.view().insert_axis(ndarray::Axis(0)));
        grad.w_hidden += &da_col.dot(&step.prev_hidden.view().insert_axis(ndarray::Axis(0)));
        grad.bias += &da;

        feature_grads[pos] += &dir.w_input.t().dot(&da);
        dh_next = dir.w_hidden.t().dot(&da);
        dc_next = &dc * &f;
    }
}

/// Reverse-mode gradients through the head, the concatenation and both
/// recurrences, given `upstream = dL/ds`.
pub fn backward(
    params: &BiLstmParams,
    features: &[FeatureVector],
    trace: &InteractionTrace,
    upstream: &[f64],
) -> Result<(ParamGrads, Vec<Array1<f64>>)> {
    let n = features.len();
    if trace.len() != n || upstream.len() != n || trace.forward.len() != n || trace.backward.len() != n {
        return Err(Error::Shape {
            what: "trace/upstream vs features",
            expected: n,
            got: if trace.len() != n { trace.len() } else { upstream.len() },
        });
    }
    validate_features(params, features)?;
    let h = params.hidden_dim;
    let mut grads = params.zeros_like();
    let mut hidden_grads = Vec::with_capacity(n);
    for (cat, &up) in trace.hidden.iter().zip(upstream) {
        grads.head_weight.scaled_add(up, cat);
        grads.head_bias += up;
        hidden_grads.push(&params.head_weight * up);
    }
    let fwd_grads: Vec<_> = hidden_grads.iter().map(|g| g.slice(s![..h])).collect();
    let bwd_grads: Vec<_> = hidden_grads.iter().map(|g| g.slice(s![h..])).collect();
    let mut feature_grads = vec![Array1::zeros(params.input_dim); n];

    backprop_direction(
        &params.forward,
        &mut grads.forward,
        features,
        &trace.forward,
        &fwd_grads,
        &mut feature_grads,
        (0..n).rev(),
    );
    backprop_direction(
        &params.backward,
        &mut grads.backward,
        features,
        &trace.backward,
        &bwd_grads,
        &mut feature_grads,
        0..n,
    );
    Ok((grads, feature_grads))
}

/// Scores each hypothesis from its own feature vector alone, `s_j = w . z_j + b`.
///
/// This is the no-interaction baseline: a hypothesis's score never depends on
/// its competitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weight: Array1<f64>,
    pub bias: f64,
}

impl LinearScorer {
    pub fn init(seed: u64, input_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (input_dim as f64).sqrt();
        LinearScorer {
            weight: (0..input_dim).map(|_| rng.random_range(-bound..=bound)).collect(),
            bias: rng.random_range(-bound..=bound),
        }
    }

    pub fn score(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        features
            .iter()
            .map(|f| {
                if f.dim() != self.weight.len() {
                    return Err(Error::Shape {
                        what: "feature width",
                        expected: self.weight.len(),
                        got: f.dim(),
                    });
                }
                Ok(self.weight.dot(&f.0) + self.bias)
            })
            .collect()
    }
}

pub const CHECKPOINT_FORMAT: &str = "abduct-bilstm";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Seeds a checkpoint was produced from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub init_seed: Option<u64>,
    pub shuffle_seed: Option<u64>,
    pub encoder_seed: Option<u64>,
}

/// Versioned JSON container for [`BiLstmParams`]; floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub params: BiLstmParams,
}

impl Checkpoint {
    pub fn new(params: BiLstmParams, provenance: Provenance) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            provenance,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("parse error: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.params.check_shapes().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if !ck.params.is_finite() {
            return Err(Error::Checkpoint("non-finite weights".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|_| fv(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn zero_params_score_the_bias() {
        let mut p = BiLstmParams::zeros(3, 2);
        p.head_bias = 0.25;
        let feats = vec![fv(&[1.0, 2.0, 3.0]), fv(&[-1.0, 0.0, 4.0])];
        let (scores, trace) = forward(&p, &feats).unwrap();
        assert_eq!(scores, [0.25, 0.25]);
        assert!(trace.hidden.iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        // d = h = 1: write every gate weight out explicitly.
        let mut p = BiLstmParams::zeros(1, 1);
        let set = |dir: &mut LstmDirection, wx: [f64; 4], wh: [f64; 4], b: [f64; 4]| {
            for k in 0..4 {
                dir.w_input[[k, 0]] = wx[k];
                dir.w_hidden[[k, 0]] = wh[k];
                dir.bias[k] = b[k];
            }
        };
        set(
            &mut p.forward,
            [0.5, -0.3, 0.8, 1.2],
            [0.1, 0.2, 0.3, 0.4],
            [0.05, 1.0, -0.1, 0.2],
        );
        set(
            &mut p.backward,
            [-0.7, 0.4, 0.6, -0.9],
            [0.9, 0.9, 0.9, 0.9],
            [0.0, 1.0, 0.3, -0.4],
        );
        p.head_weight = Array1::from(vec![1.5, -2.0]);
        p.head_bias = 0.1;

        let x = 0.8_f64;
        let step = |wx: [f64; 4], b: [f64; 4]| {
            // h_prev = c_prev = 0, so the recurrent weights drop out
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let i = sig(wx[0] * x + b[0]);
            let o = sig(wx[2] * x + b[2]);
            let g = (wx[3] * x + b[3]).tanh();
            let c = i * g;
            o * c.tanh()
        };
        let hf = step([0.5, -0.3, 0.8, 1.2], [0.05, 1.0, -0.1, 0.2]);
        let hb = step([-0.7, 0.4, 0.6, -0.9], [0.0, 1.0, 0.3, -0.4]);
        let expected = 1.5 * hf - 2.0 * hb + 0.1;

        let (scores, _) = forward(&p, &[fv(&[x])]).unwrap();
        assert!((scores[0] - expected).abs() < 1e-15, "{} vs {}", scores[0], expected);
    }

    #[test]
    fn reversal_mirrors_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = init_params(7, 3, 4).unwrap();
        // both directions share weights so the mirror is exact
        p.backward = p.forward.clone();
        let feats = random_features(&mut rng, 5, 3);
        let mut rev = feats.clone();
        rev.reverse();
        let (_, t) = forward(&p, &feats).unwrap();
        let (_, tr) = forward(&p, &rev).unwrap();
        for j in 0..5 {
            assert_eq!(tr.forward[j].hidden, t.backward[4 - j].hidden);
            assert_eq!(tr.backward[j].hidden, t.forward[4 - j].hidden);
        }
    }

    #[test]
    fn init_is_seeded_with_unit_forget_bias() {
        let a = init_params(3, 4, 5).unwrap();
        assert_eq!(a, init_params(3, 4, 5).unwrap());
        assert_ne!(a.forward.w_input, init_params(4, 4, 5).unwrap().forward.w_input);
        for dir in [&a.forward, &a.backward] {
            assert!(dir.bias.slice(s![Gate::Forget.rows(5)]).iter().all(|&b| b == 1.0));
            let bound = 1.0 / 5f64.sqrt();
            assert!(dir.w_input.iter().all(|w| w.abs() <= bound));
        }
        assert!(init_params(0, 0, 3).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = init_params(1, 2, 2).unwrap();
        let feats = random_features(&mut rng, 3, 2);
        let (_, trace) = forward(&p, &feats).unwrap();
        let (g, fg) = backward(&p, &feats, &trace, &[0.0; 3]).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
        assert!(fg.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn zero_input_maps_give_zero_feature_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = init_params(2, 2, 3).unwrap();
        p.forward.w_input.fill(0.0);
        p.backward.w_input.fill(0.0);
        let feats = random_features(&mut rng, 3, 2);
        let (_, trace) = forward(&p, &feats).unwrap();
        let (_, fg) = backward(&p, &feats, &trace, &[1.0, -0.5, 2.0]).unwrap();
        assert!(fg.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = init_params(1, 2, 2).unwrap();
        assert!(forward(&p, &[]).is_err());
        assert!(matches!(forward(&p, &[fv(&[1.0])]), Err(Error::Shape { .. })));
        let nan = FeatureVector(Array1::from(vec![f64::NAN, 0.0]));
        assert!(matches!(forward(&p, &[nan]), Err(Error::NonFinite(_))));
        let feats = vec![fv(&[1.0, 2.0]), fv(&[0.0, 1.0])];
        let (_, trace) = forward(&p, &feats).unwrap();
        assert!(matches!(backward(&p, &feats, &trace, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn flatten_matches_blocks() {
        let p = init_params(5, 3, 2).unwrap();
        let flat = p.to_vec();
        assert_eq!(flat.len(), p.num_values());
        assert_eq!(p.blocks().last().unwrap().1.end, flat.len());
        let mut q = p.zeros_like();
        q.set_from_slice(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = init_params(12, 4, 3).unwrap();
        let prov = Provenance {
            init_seed: Some(12),
            shuffle_seed: Some(1),
            encoder_seed: None,
        };
        let ck = Checkpoint::new(p.clone(), prov);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let bits = |p: &BiLstmParams| p.values().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&p));
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let ck = Checkpoint::new(init_params(1, 2, 2).unwrap(), Provenance::default());
        let json = ck.to_json().unwrap();
        assert!(matches!(
            Checkpoint::from_json(&json[..json.len() / 2]),
            Err(Error::Checkpoint(_))
        ));
        let wrong_version = json.replace("\"version\": 1", "\"version\": 9");
        assert!(Checkpoint::from_json(&wrong_version).is_err());
        let mut bad = ck.clone();
        bad.params.head_weight = Array1::zeros(3);
        let bad_json = serde_json::to_string(&bad).unwrap();
        assert!(Checkpoint::from_json(&bad_json).is_err());
    }

    #[test]
    fn linear_scorer_is_per_hypothesis() {
        let lin = LinearScorer::init(3, 2);
        let a = lin.score(&[fv(&[1.0, 2.0]), fv(&[3.0, 4.0])]).unwrap();
        let b = lin.score(&[fv(&[9.0, -9.0]), fv(&[3.0, 4.0])]).unwrap();
        assert_eq!(a[1], b[1]);
    }
}
