//! Desk-scale federated learning simulator: multinomial logistic regression
//! trained by full-batch local gradient steps and aggregated under a given
//! device schedule.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples held by one device: `features` is `D_k x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceData {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DeviceData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub devices: Vec<DeviceData>,
    pub classes: usize,
    pub dim: usize,
}

impl Dataset {
    pub fn sizes(&self) -> Vec<usize> {
        self.devices.iter().map(DeviceData::len).collect()
    }

    pub fn total(&self) -> usize {
        self.devices.iter().map(DeviceData::len).sum()
    }

    /// Length of the flattened `classes x dim` weight vector.
    pub fn model_len(&self) -> usize {
        self.classes * self.dim
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Plain average of the scheduled local models.
    Unweighted,
    /// Average weighted by local dataset size.
    #[default]
    Weighted,
}

/// Gaussian class-conditional features around well-separated random class
/// means, with uniformly drawn labels. Deterministic per seed.
pub fn generate_synthetic(
    seed: u64,
    devices: usize,
    classes: usize,
    dim: usize,
    sizes: &[usize],
) -> Result<Dataset> {
    if sizes.len() != devices {
        return Err(Error::InvalidInput(format!(
            "{} dataset sizes given for {devices} devices",
            sizes.len()
        )));
    }
    if classes < 2 || dim == 0 {
        return Err(Error::InvalidInput("need at least two classes and one feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 1.0 / (dim as f64).sqrt();
    let means = Array2::from_shape_fn((classes, dim), |_| {
        2.0 * spread * rng.sample::<f64, _>(StandardNormal)
    });
    let devices = sizes
        .iter()
        .map(|&n| {
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let features = Array2::from_shape_fn((n, dim), |(i, j)| {
                means[[labels[i], j]] + spread * rng.sample::<f64, _>(StandardNormal)
            });
            DeviceData { features, labels }
        })
        .collect();
    Ok(Dataset {
        devices,
        classes,
        dim,
    })
}

fn weights_view(w: &Array1<f64>, classes: usize, dim: usize) -> ArrayView2<'_, f64> {
    w.view()
        .into_shape_with_order((classes, dim))
        .expect("model length matches classes x dim")
}

/// Softmax probabilities of one sample.
fn probabilities(w: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let logits = w.dot(&x);
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

/// Cross-entropy loss of one sample.
pub fn sample_loss(w: &Array1<f64>, x: ArrayView1<'_, f64>, y: usize, classes: usize) -> f64 {
    let wv = weights_view(w, classes, x.len());
    let logits = wv.dot(&x);
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + logits.mapv(|z| (z - max).exp()).sum().ln();
    lse - logits[y]
}

/// Gradient `(p - e_y) x^T` of the sample loss, flattened row-major.
pub fn sample_gradient(w: &Array1<f64>, x: ArrayView1<'_, f64>, y: usize, classes: usize) -> Array1<f64> {
    let dim = x.len();
    let mut p = probabilities(weights_view(w, classes, dim), x);
    p[y] -= 1.0;
    let mut g = Array1::zeros(classes * dim);
    for c in 0..classes {
        g.slice_mut(s![c * dim..(c + 1) * dim]).scaled_add(p[c], &x);
    }
    g
}

/// `||grad f(w; x, y)||^2 = ||p - e_y||^2 ||x||^2`.
pub fn sample_gradient_norm_sq(w: &Array1<f64>, x: ArrayView1<'_, f64>, y: usize, classes: usize) -> f64 {
    let mut p = probabilities(weights_view(w, classes, x.len()), x);
    p[y] -= 1.0;
    p.dot(&p) * x.dot(&x)
}

/// Sum of losses and of gradients over a device's samples.
fn device_sums(w: &Array1<f64>, data: &DeviceData, classes: usize) -> (f64, Array1<f64>) {
    let dim = data.features.ncols();
    let wv = weights_view(w, classes, dim);
    let logits = data.features.dot(&wv.t());
    let mut residual = Array2::zeros((data.len(), classes));
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exp = row.mapv(|z| (z - max).exp());
        let total = exp.sum();
        loss += max + total.ln() - row[data.labels[i]];
        let mut r = residual.row_mut(i);
        r.assign(&(exp / total));
        r[data.labels[i]] -= 1.0;
    }
    let grad = residual.t().dot(&data.features);
    (loss, Array1::from_iter(grad))
}

/// Local loss `F_k(w)`; 0 for a device without samples.
pub fn local_loss(w: &Array1<f64>, data: &DeviceData, classes: usize) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    device_sums(w, data, classes).0 / data.len() as f64
}

/// Local full-batch gradient `grad F_k(w)`.
pub fn local_gradient(w: &Array1<f64>, data: &DeviceData, classes: usize) -> Array1<f64> {
    if data.is_empty() {
        return Array1::zeros(w.len());
    }
    device_sums(w, data, classes).1 / data.len() as f64
}

/// One full-batch gradient step on the device's local loss.
pub fn local_update(w: &Array1<f64>, data: &DeviceData, learn_rate: f64, classes: usize) -> Array1<f64> {
    if learn_rate == 0.0 || data.is_empty() {
        return w.clone();
    }
    w - &(local_gradient(w, data, classes) * learn_rate)
}

/// Aggregates the scheduled local models. With nobody scheduled the previous
/// global model is returned unchanged.
pub fn aggregate(
    models: &[Array1<f64>],
    schedule_col: &[bool],
    sizes: &[usize],
    mode: AggregationMode,
    previous: &Array1<f64>,
) -> Array1<f64> {
    let mut acc = Array1::zeros(previous.len());
    let mut total = 0.0;
    for ((m, &a), &d) in models.iter().zip(schedule_col).zip(sizes) {
        if !a {
            continue;
        }
        let weight = match mode {
            AggregationMode::Unweighted => 1.0,
            AggregationMode::Weighted => d as f64,
        };
        acc.scaled_add(weight, m);
        total += weight;
    }
    if total == 0.0 {
        return previous.clone();
    }
    acc / total
}

/// Global loss and gradient, `sum_k D_k F_k / D`.
pub fn global_loss_and_gradient(w: &Array1<f64>, ds: &Dataset) -> (f64, Array1<f64>) {
    let parts: Vec<(f64, Array1<f64>)> = ds
        .devices
        .par_iter()
        .map(|d| device_sums(w, d, ds.classes))
        .collect();
    let total = ds.total() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(w.len());
    for (l, g) in parts {
        loss += l;
        grad += &g;
    }
    (loss / total, grad / total)
}

/// Largest per-sample squared gradient norm over the given models.
pub fn estimate_kappa(ds: &Dataset, trace: &[Array1<f64>]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InvalidInput("kappa needs at least one model".into()));
    }
    Ok(trace
        .iter()
        .map(|w| max_sample_norm(w, ds))
        .fold(0.0, f64::max))
}

fn max_sample_norm(w: &Array1<f64>, ds: &Dataset) -> f64 {
    ds.devices
        .par_iter()
        .map(|d| {
            (0..d.len())
                .map(|i| sample_gradient_norm_sq(w, d.features.row(i), d.labels[i], ds.classes))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlRoundRow {
    pub round: usize,
    /// `F(w)` at the start of the round.
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub num_scheduled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlRunLog {
    pub rows: Vec<FlRoundRow>,
    /// `(1/N) sum_n ||grad F(w_n)||^2` over the model at the start of each round.
    pub avg_grad_norm_sq: f64,
    pub final_loss: f64,
    /// Largest per-sample squared gradient norm seen along the run.
    pub kappa: f64,
    pub scheduled: Vec<Vec<usize>>,
    #[serde(skip)]
    pub final_model: Array1<f64>,
}

impl FlRunLog {
    /// Convergence bound of the executed schedule with the measured `kappa`
    /// and `F(w_0) - F*` bounded by `F(w_0)` (the loss is non-negative).
    pub fn bound(&self, sizes: &[usize], learn_rate: f64) -> f64 {
        let n = self.rows.len() as f64;
        let k = sizes.len() as f64;
        let total: f64 = sizes.iter().map(|&d| d as f64).sum();
        let missing: f64 = self
            .scheduled
            .iter()
            .map(|set| {
                sizes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !set.contains(i))
                    .map(|(_, &d)| (d as f64).powi(2))
                    .sum::<f64>()
            })
            .sum();
        let initial = self.rows.first().map_or(0.0, |r| r.loss);
        2.0 * initial / (n * learn_rate) + 4.0 * k * self.kappa / (n * total * total) * missing
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the schedule: each round broadcasts the global model, the scheduled
/// devices take one local step and the UAV aggregates their models.
pub fn run_fl(
    ds: &Dataset,
    schedule: &Array2<bool>,
    learn_rate: f64,
    mode: AggregationMode,
) -> Result<FlRunLog> {
    if schedule.nrows() != ds.devices.len() {
        return Err(Error::InvalidInput(format!(
            "schedule has {} rows for {} devices",
            schedule.nrows(),
            ds.devices.len()
        )));
    }
    let sizes = ds.sizes();
    let mut w = Array1::zeros(ds.model_len());
    let mut rows = Vec::with_capacity(schedule.ncols());
    let mut scheduled = Vec::with_capacity(schedule.ncols());
    let mut kappa: f64 = 0.0;
    let mut grad_sum = 0.0;
    for (n, col) in schedule.columns().into_iter().enumerate() {
        let (loss, grad) = global_loss_and_gradient(&w, ds);
        let g2 = grad.dot(&grad);
        grad_sum += g2;
        kappa = kappa.max(max_sample_norm(&w, ds));
        let active: Vec<usize> = (0..col.len()).filter(|&k| col[k]).collect();
        rows.push(FlRoundRow {
            round: n + 1,
            loss,
            grad_norm_sq: g2,
            num_scheduled: active.len(),
        });
        let flags: Vec<bool> = col.to_vec();
        let models: Vec<Array1<f64>> = ds
            .devices
            .par_iter()
            .zip(flags.par_iter())
            .map(|(d, &a)| {
                if a {
                    local_update(&w, d, learn_rate, ds.classes)
                } else {
                    Array1::zeros(0)
                }
            })
            .collect();
        w = aggregate(&models, &flags, &sizes, mode, &w);
        scheduled.push(active);
    }
    let (final_loss, _) = global_loss_and_gradient(&w, ds);
    let rounds = rows.len().max(1) as f64;
    Ok(FlRunLog {
        avg_grad_norm_sq: grad_sum / rounds,
        rows,
        final_loss,
        kappa,
        scheduled,
        final_model: w,
    })
}

/// Central-difference gradient of a single sample's loss, used to check the
/// analytic gradient.
pub fn finite_difference_gradient(w: &Array1<f64>, x: ArrayView1<'_, f64>, y: usize, classes: usize, h: f64) -> Array1<f64> {
    let mut probe = w.clone();
    Array1::from_shape_fn(w.len(), |i| {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = sample_loss(&probe, x, y, classes);
        probe[i] = orig - h;
        let down = sample_loss(&probe, x, y, classes);
        probe[i] = orig;
        (up - down) / (2.0 * h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        generate_synthetic(3, 2, 3, 4, &[10, 20]).unwrap()
    }

    #[test]
    fn generator_is_deterministic_and_sized() {
        assert_eq!(tiny(), tiny());
        assert_eq!(tiny().total(), 30);
        assert!(generate_synthetic(3, 2, 3, 4, &[1]).is_err());
    }

    #[test]
    fn labels_cover_all_classes() {
        let ds = generate_synthetic(5, 4, 10, 64, &[250; 4]).unwrap();
        let mut seen = [0usize; 10];
        for d in &ds.devices {
            d.labels.iter().for_each(|&y| seen[y] += 1);
        }
        assert!(seen.iter().all(|&c| c > 0));
    }

    #[test]
    fn zero_step_and_stationary_point_leave_model_unchanged() {
        let ds = tiny();
        let w = Array1::from_elem(ds.model_len(), 0.3);
        assert_eq!(local_update(&w, &ds.devices[0], 0.0, 3), w);
        // With identical features across classes the zero model is stationary
        // for a balanced single-sample-per-class device.
        let d = DeviceData {
            features: Array2::from_elem((3, 4), 1.0),
            labels: vec![0, 1, 2],
        };
        let z = Array1::zeros(12);
        let next = local_update(&z, &d, 0.5, 3);
        assert!(next.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn aggregation_toy() {
        let models = vec![Array1::from_elem(1, 0.0), Array1::from_elem(1, 4.0)];
        let prev = Array1::from_elem(1, -1.0);
        let w = aggregate(&models, &[true, true], &[1, 3], AggregationMode::Weighted, &prev);
        assert_eq!(w[0], 3.0);
        let u = aggregate(&models, &[true, true], &[1, 3], AggregationMode::Unweighted, &prev);
        assert_eq!(u[0], 2.0);
        let one = aggregate(&models, &[false, true], &[1, 3], AggregationMode::Weighted, &prev);
        assert_eq!(one[0], 4.0);
        let none = aggregate(&models, &[false, false], &[1, 3], AggregationMode::Weighted, &prev);
        assert_eq!(none, prev);
        let eq_w = aggregate(&models, &[true, true], &[2, 2], AggregationMode::Weighted, &prev);
        let eq_u = aggregate(&models, &[true, true], &[2, 2], AggregationMode::Unweighted, &prev);
        assert_eq!(eq_w, eq_u);
    }

    #[test]
    fn empty_schedule_never_changes_model() {
        let ds = tiny();
        let log = run_fl(&ds, &Array2::from_elem((2, 5), false), 0.1, AggregationMode::Weighted).unwrap();
        assert!(log.rows.iter().all(|r| r.loss == log.rows[0].loss));
        assert!(log.final_model.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_schedule_small_step_decreases_loss() {
        let ds = generate_synthetic(9, 3, 4, 8, &[30, 40, 50]).unwrap();
        let log = run_fl(&ds, &Array2::from_elem((3, 30), true), 0.05, AggregationMode::Weighted).unwrap();
        for w in log.rows.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
        assert!(log.final_loss < log.rows[0].loss);
    }

    #[test]
    fn kappa_matches_per_sample_evaluation() {
        let d = DeviceData {
            features: Array2::from_shape_vec((2, 2), vec![1.0, 2.0, -1.0, 0.5]).unwrap(),
            labels: vec![0, 1],
        };
        let ds = Dataset {
            devices: vec![d.clone()],
            classes: 2,
            dim: 2,
        };
        let w = Array1::from(vec![0.2, -0.1, 0.4, 0.3]);
        let direct = (0..2)
            .map(|i| {
                let g = sample_gradient(&w, d.features.row(i), d.labels[i], 2);
                g.dot(&g)
            })
            .fold(0.0, f64::max);
        let k = estimate_kappa(&ds, std::slice::from_ref(&w)).unwrap();
        assert!((k - direct).abs() < 1e-14);
        let k2 = estimate_kappa(&ds, &[w.clone(), Array1::zeros(4)]).unwrap();
        assert!(k2 >= k);
        assert!(estimate_kappa(&ds, &[]).is_err());
    }

    #[test]
    fn device_gradient_is_mean_of_sample_gradients() {
        let ds = tiny();
        let w = Array1::from_shape_fn(ds.model_len(), |i| (i as f64 * 0.37).sin());
        let d = &ds.devices[1];
        let mut mean = Array1::zeros(ds.model_len());
        for i in 0..d.len() {
            mean += &sample_gradient(&w, d.features.row(i), d.labels[i], 3);
        }
        mean /= d.len() as f64;
        let g = local_gradient(&w, d, 3);
        assert!((&g - &mean).iter().all(|v| v.abs() < 1e-13));
    }
}
