//! Two-action dueling Q-network: one tanh feature layer feeding a linear
//! state-value head and a linear advantage head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub const ACTIONS: usize = 2;

/// `Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)`.
pub fn combine_dueling(v: f64, a: [f64; ACTIONS]) -> [f64; ACTIONS] {
    let mean = (a[0] + a[1]) / 2.0;
    [v + a[0] - mean, v + a[1] - mean]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet {
    /// hidden x input
    pub w_feat: Array2<f64>,
    pub b_feat: Array1<f64>,
    pub w_value: Array1<f64>,
    pub b_value: f64,
    /// actions x hidden
    pub w_adv: Array2<f64>,
    pub b_adv: Array1<f64>,
}

impl DuelingNet {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_feat: Array2::zeros((hidden, input)),
            b_feat: Array1::zeros(hidden),
            w_value: Array1::zeros(hidden),
            b_value: 0.0,
            w_adv: Array2::zeros((ACTIONS, hidden)),
            b_adv: Array1::zeros(ACTIONS),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut net = Self::zeros(input, hidden);
        let feat = Uniform::new_inclusive(-1.0 / (input as f64).sqrt(), 1.0 / (input as f64).sqrt())
            .expect("finite bounds");
        let head = Uniform::new_inclusive(-1.0 / (hidden as f64).sqrt(), 1.0 / (hidden as f64).sqrt())
            .expect("finite bounds");
        net.w_feat.mapv_inplace(|_| feat.sample(rng));
        net.w_value.mapv_inplace(|_| head.sample(rng));
        net.w_adv.mapv_inplace(|_| head.sample(rng));
        net
    }

    pub fn input_dim(&self) -> usize {
        self.w_feat.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_feat.nrows()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols == self.input_dim() {
            Ok(())
        } else {
            Err(Error::dimension("dueling network input", self.input_dim(), cols))
        }
    }

    /// State value and raw advantages for one encoded state.
    pub fn heads(&self, x: &[f64]) -> Result<(f64, [f64; ACTIONS])> {
        self.check_input(x.len())?;
        let h = (self.w_feat.dot(&ndarray::aview1(x)) + &self.b_feat).mapv(f64::tanh);
        let v = self.w_value.dot(&h) + self.b_value;
        let a = self.w_adv.dot(&h) + &self.b_adv;
        Ok((v, [a[0], a[1]]))
    }

    pub fn q_values(&self, x: &[f64]) -> Result<[f64; ACTIONS]> {
        let (v, a) = self.heads(x)?;
        Ok(combine_dueling(v, a))
    }

    /// Q-values for every row of `x`, one row per state.
    pub fn q_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.forward_batch(x).1)
    }

    /// Q-values for every row of `x`: `(hidden activations, Q)`.
    fn forward_batch(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = (x.dot(&self.w_feat.t()) + &self.b_feat).mapv(f64::tanh);
        let v = h.dot(&self.w_value) + self.b_value;
        let a = h.dot(&self.w_adv.t()) + &self.b_adv;
        let mut q = Array2::zeros((x.nrows(), ACTIONS));
        for i in 0..x.nrows() {
            let row = combine_dueling(v[i], [a[[i, 0]], a[[i, 1]]]);
            q[[i, 0]] = row[0];
            q[[i, 1]] = row[1];
        }
        (h, q)
    }

    /// `(1/I) sum (y_i - Q(s_i, a_i))^2`.
    pub fn loss(&self, x: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> Result<f64> {
        self.check_batch(x, actions, targets)?;
        let (_, q) = self.forward_batch(x);
        let n = x.nrows() as f64;
        Ok(actions
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (&a, &y))| (y - q[[i, a]]).powi(2))
            .sum::<f64>()
            / n)
    }

    fn check_batch(&self, x: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> Result<()> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 {
            return Err(Error::Domain("empty training batch".into()));
        }
        if actions.len() != x.nrows() || targets.len() != x.nrows() {
            return Err(Error::dimension("training batch", x.nrows(), actions.len().min(targets.len())));
        }
        if actions.iter().any(|&a| a >= ACTIONS) {
            return Err(Error::Domain("action out of range".into()));
        }
        Ok(())
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, DuelingNet)> {
        self.check_batch(x, actions, targets)?;
        let n = x.nrows();
        let (h, q) = self.forward_batch(x);
        let mut loss = 0.0;
        let mut d_v = Array1::zeros(n);
        let mut d_a = Array2::zeros((n, ACTIONS));
        for i in 0..n {
            let err = targets[i] - q[[i, actions[i]]];
            loss += err * err;
            let dq = -2.0 * err / n as f64;
            d_v[i] = dq;
            // dQ_a / dA_b = [a == b] - 1/2
            for b in 0..ACTIONS {
                d_a[[i, b]] = dq * (if b == actions[i] { 1.0 } else { 0.0 } - 0.5);
            }
        }
        loss /= n as f64;
        // Back through both heads into the shared features.
        let mut d_h = d_a.dot(&self.w_adv);
        for i in 0..n {
            d_h.row_mut(i).scaled_add(d_v[i], &self.w_value);
        }
        let d_pre = d_h * h.mapv(|t| 1.0 - t * t);
        let grad = DuelingNet {
            w_feat: d_pre.t().dot(&x),
            b_feat: d_pre.sum_axis(Axis(0)),
            w_value: h.t().dot(&d_v),
            b_value: d_v.sum(),
            w_adv: d_a.t().dot(&h),
            b_adv: d_a.sum_axis(Axis(0)),
        };
        Ok((loss, grad))
    }

    /// `self -= lr * grad`.
    pub fn descend(&mut self, lr: f64, grad: &DuelingNet) {
        self.w_feat.scaled_add(-lr, &grad.w_feat);
        self.b_feat.scaled_add(-lr, &grad.b_feat);
        self.w_value.scaled_add(-lr, &grad.w_value);
        self.b_value -= lr * grad.b_value;
        self.w_adv.scaled_add(-lr, &grad.w_adv);
        self.b_adv.scaled_add(-lr, &grad.b_adv);
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_feat.iter());
        out.extend(self.b_feat.iter());
        out.extend(self.w_value.iter());
        out.push(self.b_value);
        out.extend(self.w_adv.iter());
        out.extend(self.b_adv.iter());
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<DuelingNet> {
        let len = self.to_flat().len();
        if flat.len() != len {
            return Err(Error::dimension("flat network parameters", len, flat.len()));
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for v in out.w_feat.iter_mut().chain(out.b_feat.iter_mut()).chain(out.w_value.iter_mut()) {
            *v = it.next().expect("length checked");
        }
        out.b_value = it.next().expect("length checked");
        for v in out.w_adv.iter_mut().chain(out.b_adv.iter_mut()) {
            *v = it.next().expect("length checked");
        }
        Ok(out)
    }
}
