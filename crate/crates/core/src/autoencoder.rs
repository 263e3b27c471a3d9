//! User-based autoencoder over rating vectors, with hand-written backprop and
//! the per-vehicle local training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// The four parameter blocks. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    /// hidden x input
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    /// input x hidden
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

impl AeParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_enc: Array2::zeros((hidden, input)),
            b_enc: Array1::zeros(hidden),
            w_dec: Array2::zeros((input, hidden)),
            b_dec: Array1::zeros(input),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w_enc.len() + self.b_enc.len() + self.w_dec.len() + self.b_dec.len()
    }

    pub fn same_shape(&self, other: &AeParams) -> bool {
        self.w_enc.dim() == other.w_enc.dim()
            && self.b_enc.dim() == other.b_enc.dim()
            && self.w_dec.dim() == other.w_dec.dim()
            && self.b_dec.dim() == other.b_dec.dim()
    }

    fn check_shape(&self, other: &AeParams, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dimension(context, self.param_count(), other.param_count()))
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &AeParams) -> Result<()> {
        self.check_shape(other, "parameter update")?;
        self.w_enc.scaled_add(alpha, &other.w_enc);
        self.b_enc.scaled_add(alpha, &other.b_enc);
        self.w_dec.scaled_add(alpha, &other.w_dec);
        self.b_dec.scaled_add(alpha, &other.b_dec);
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.w_enc *= alpha;
        self.b_enc *= alpha;
        self.w_dec *= alpha;
        self.b_dec *= alpha;
    }

    /// Sum of squared entrywise differences over all four blocks.
    pub fn squared_distance(&self, other: &AeParams) -> Result<f64> {
        self.check_shape(other, "parameter distance")?;
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        Ok(sq(self.w_enc.as_slice().unwrap(), other.w_enc.as_slice().unwrap())
            + sq(self.b_enc.as_slice().unwrap(), other.b_enc.as_slice().unwrap())
            + sq(self.w_dec.as_slice().unwrap(), other.w_dec.as_slice().unwrap())
            + sq(self.b_dec.as_slice().unwrap(), other.b_dec.as_slice().unwrap()))
    }

    /// All parameters in block order (w_enc, b_enc, w_dec, b_dec), row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w_enc.iter());
        out.extend(self.b_enc.iter());
        out.extend(self.w_dec.iter());
        out.extend(self.b_dec.iter());
        out
    }

    /// Inverse of [`AeParams::to_flat`] using this value's shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<AeParams> {
        if flat.len() != self.param_count() {
            return Err(Error::dimension("flat parameters", self.param_count(), flat.len()));
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for v in out
            .w_enc
            .iter_mut()
            .chain(out.b_enc.iter_mut())
            .chain(out.w_dec.iter_mut())
            .chain(out.b_dec.iter_mut())
        {
            *v = it.next().expect("length checked");
        }
        Ok(out)
    }
}

/// Gradient of a loss with respect to [`AeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AeGradient(pub AeParams);

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub params: AeParams,
    pub hidden_act: Activation,
    pub output_act: Activation,
}

impl AeModel {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut params = AeParams::zeros(input, hidden);
        let enc = Uniform::new_inclusive(-1.0 / (input as f64).sqrt(), 1.0 / (input as f64).sqrt())
            .expect("finite bounds");
        let dec = Uniform::new_inclusive(-1.0 / (hidden as f64).sqrt(), 1.0 / (hidden as f64).sqrt())
            .expect("finite bounds");
        params.w_enc.mapv_inplace(|_| enc.sample(rng));
        params.w_dec.mapv_inplace(|_| dec.sample(rng));
        Self {
            params,
            hidden_act: Activation::Sigmoid,
            output_act: Activation::Sigmoid,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            params: AeParams::zeros(input, hidden),
            hidden_act: Activation::Sigmoid,
            output_act: Activation::Sigmoid,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    /// Model size on the wire, assuming 32-bit parameters.
    pub fn size_bits(&self) -> f64 {
        32.0 * self.params.param_count() as f64
    }

    /// Single-vector forward pass: `(z, x_hat)`.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        if x.len() != self.input_dim() {
            return Err(Error::dimension("autoencoder input", self.input_dim(), x.len()));
        }
        let mut z = self.params.w_enc.dot(&x) + &self.params.b_enc;
        z.mapv_inplace(|v| self.hidden_act.apply(v));
        let mut x_hat = self.params.w_dec.dot(&z) + &self.params.b_dec;
        x_hat.mapv_inplace(|v| self.output_act.apply(v));
        Ok((z, x_hat))
    }

    /// Row-wise forward pass over an `n x C` batch: `(Z n x H, X_hat n x C)`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dimension("autoencoder batch", self.input_dim(), x.ncols()));
        }
        let mut z = x.dot(&self.params.w_enc.t()) + &self.params.b_enc;
        z.mapv_inplace(|v| self.hidden_act.apply(v));
        let mut x_hat = z.dot(&self.params.w_dec.t()) + &self.params.b_dec;
        x_hat.mapv_inplace(|v| self.output_act.apply(v));
        Ok((z, x_hat))
    }
}

/// Mean squared reconstruction error over the vector's components.
pub fn sample_loss(model: &AeModel, x: ArrayView1<f64>) -> Result<f64> {
    let (_, x_hat) = model.forward(x)?;
    Ok(mse(x, x_hat.view()))
}

fn mse(x: ArrayView1<f64>, x_hat: ArrayView1<f64>) -> f64 {
    let n = x.len().max(1) as f64;
    x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// Mean of [`sample_loss`] over the rows of `batch`.
pub fn batch_loss(model: &AeModel, batch: ArrayView2<f64>) -> Result<f64> {
    if batch.nrows() == 0 {
        return Err(Error::Domain("batch loss of an empty batch".into()));
    }
    let (_, x_hat) = model.forward_batch(batch)?;
    let total: f64 = batch
        .rows()
        .into_iter()
        .zip(x_hat.rows())
        .map(|(x, y)| mse(x, y))
        .sum();
    Ok(total / batch.nrows() as f64)
}

/// Batch loss plus the proximal penalty `rho/2 * ||global - local||^2`.
pub fn regularized_loss(
    model: &AeModel,
    global: &AeModel,
    batch: ArrayView2<f64>,
    rho: f64,
) -> Result<f64> {
    let penalty = model.params.squared_distance(&global.params)?;
    Ok(batch_loss(model, batch)? + 0.5 * rho * penalty)
}

/// Exact gradient of [`regularized_loss`] with respect to the local model.
pub fn gradient(
    model: &AeModel,
    global: &AeModel,
    batch: ArrayView2<f64>,
    rho: f64,
) -> Result<AeGradient> {
    if batch.nrows() == 0 {
        return Err(Error::Domain("gradient of an empty batch".into()));
    }
    if !model.params.same_shape(&global.params) {
        return Err(Error::dimension(
            "global model",
            model.params.param_count(),
            global.params.param_count(),
        ));
    }
    let (z, x_hat) = model.forward_batch(batch)?;
    let scale = 2.0 / (batch.nrows() * batch.ncols()) as f64;

    // Output pre-activation delta, n x C.
    let mut d_out = &x_hat - &batch;
    Zip::from(&mut d_out).and(&x_hat).for_each(|d, &y| {
        *d *= scale * model.output_act.derivative_from_output(y);
    });
    // Hidden pre-activation delta, n x H.
    let mut d_hid = d_out.dot(&model.params.w_dec);
    Zip::from(&mut d_hid).and(&z).for_each(|d, &y| {
        *d *= model.hidden_act.derivative_from_output(y);
    });

    let mut grad = AeParams {
        w_enc: d_hid.t().dot(&batch),
        b_enc: d_hid.sum_axis(Axis(0)),
        w_dec: d_out.t().dot(&z),
        b_dec: d_out.sum_axis(Axis(0)),
    };
    if rho != 0.0 {
        grad.add_scaled(rho, &model.params)?;
        grad.add_scaled(-rho, &global.params)?;
    }
    Ok(AeGradient(grad))
}

/// Round-dependent local step size `eta_l * max(1, ln r)`.
pub fn local_learning_rate(eta_l: f64, round: u32) -> Result<f64> {
    if round < 1 {
        return Err(Error::Domain("rounds are numbered from 1".into()));
    }
    Ok(eta_l * f64::from(round).ln().max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta_l: f64,
    pub rho: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Restart every local iteration from the received global model instead
    /// of descending cumulatively.
    pub restart_from_global: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta_l: 0.01,
            rho: 0.0001,
            beta: 0.001,
            epochs: 5,
            batch_size: 32,
            restart_from_global: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_l > 0.0) || self.rho < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("fl: eta_l must be > 0, rho and beta >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("fl: epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one vehicle's local training.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub model: AeModel,
    /// The last iteration's local gradient (without the delayed term).
    pub last_gradient: AeGradient,
}

/// Runs `cfg.epochs` local iterations starting from the global model.
///
/// Each iteration samples a batch, forms `grad + beta * delayed` and steps.
/// Returns `None` (with a warning) when the vehicle has no training rows.
pub fn vehicle_update<R: Rng + ?Sized>(
    global: &AeModel,
    train: &RatingMatrix,
    cfg: &TrainConfig,
    round: u32,
    delayed: Option<&AeGradient>,
    rng: &mut R,
) -> Result<Option<LocalUpdate>> {
    if train.n_rows() == 0 {
        warn!("vehicle has no training data; skipped");
        return Ok(None);
    }
    if train.n_cols() != global.input_dim() {
        return Err(Error::dimension("training matrix", global.input_dim(), train.n_cols()));
    }
    let eta = local_learning_rate(cfg.eta_l, round)?;
    let batch_rows = cfg.batch_size.min(train.n_rows());
    let mut batch = Array2::zeros((batch_rows, train.n_cols()));
    let mut local = global.clone();
    let mut last = None;
    for _ in 0..cfg.epochs {
        let rows = index::sample(rng, train.n_rows(), batch_rows).into_vec();
        train.fill_rows(&rows, batch.view_mut());
        let g = gradient(&local, global, batch.view(), cfg.rho)?;
        let mut step = g.0.clone();
        if let Some(d) = delayed {
            step.add_scaled(cfg.beta, &d.0)?;
        }
        if cfg.restart_from_global {
            local.params = global.params.clone();
        }
        local.params.add_scaled(-eta, &step)?;
        last = Some(g);
    }
    Ok(Some(LocalUpdate {
        model: local,
        last_gradient: last.expect("epochs >= 1"),
    }))
}

const CHECKPOINT_MAGIC: &str = "coopcache-ae 1";

/// Textual checkpoint. Values use Rust's shortest round-trip formatting, so
/// save/load is bit-exact.
pub fn checkpoint_to_string(model: &AeModel) -> String {
    let p = &model.params;
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(s, "activations {} {}", model.hidden_act.name(), model.output_act.name());
    let _ = writeln!(s, "shape {} {}", p.hidden_dim(), p.input_dim());
    let mut line = |name: &str, values: &mut dyn Iterator<Item = &f64>| {
        let _ = write!(s, "{name}");
        for v in values {
            let _ = write!(s, " {v:?}");
        }
        s.push('\n');
    };
    line("w_enc", &mut p.w_enc.iter());
    line("b_enc", &mut p.b_enc.iter());
    line("w_dec", &mut p.w_dec.iter());
    line("b_dec", &mut p.b_dec.iter());
    s
}

pub fn checkpoint_from_str(text: &str, origin: &Path) -> Result<AeModel> {
    let bad = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 7 || lines[0] != CHECKPOINT_MAGIC {
        return Err(bad(1, "not an autoencoder checkpoint".into()));
    }
    let acts: Vec<&str> = lines[1].split_whitespace().collect();
    if acts.len() != 3 || acts[0] != "activations" {
        return Err(bad(2, "expected 'activations <hidden> <output>'".into()));
    }
    let hidden_act = Activation::parse(acts[1]).map_err(|e| bad(2, e.to_string()))?;
    let output_act = Activation::parse(acts[2]).map_err(|e| bad(2, e.to_string()))?;
    let shape: Vec<&str> = lines[2].split_whitespace().collect();
    let dims = match shape.as_slice() {
        ["shape", h, c] => (h.parse::<usize>(), c.parse::<usize>()),
        _ => return Err(bad(3, "expected 'shape <hidden> <input>'".into())),
    };
    let (hidden, input) = match dims {
        (Ok(h), Ok(c)) => (h, c),
        _ => return Err(bad(3, "invalid shape".into())),
    };
    let mut params = AeParams::zeros(input, hidden);
    let blocks: [(&str, &mut [f64]); 4] = [
        ("w_enc", params.w_enc.as_slice_mut().unwrap()),
        ("b_enc", params.b_enc.as_slice_mut().unwrap()),
        ("w_dec", params.w_dec.as_slice_mut().unwrap()),
        ("b_dec", params.b_dec.as_slice_mut().unwrap()),
    ];
    for (k, (name, dest)) in blocks.into_iter().enumerate() {
        let line_no = k + 4;
        let mut fields = lines[k + 3].split_whitespace();
        if fields.next() != Some(name) {
            return Err(bad(line_no, format!("expected block '{name}'")));
        }
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(line_no, format!("invalid number: {e}")))?;
        if values.len() != dest.len() {
            return Err(bad(
                line_no,
                format!("block '{name}' has {} values, expected {}", values.len(), dest.len()),
            ));
        }
        dest.copy_from_slice(&values);
    }
    Ok(AeModel {
        params,
        hidden_act,
        output_act,
    })
}

pub fn save_checkpoint(model: &AeModel, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AeModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, path)
}
