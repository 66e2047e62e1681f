//! Exact t-SNE for 2-D visualization of feature tables, plus the z-score
//! standardization applied beforehand.

use rayon::prelude::*;

use crate::domain::FeatureTable;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, stream_id, NS_EMBED};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_start: f64,
    pub momentum_late: f64,
    /// Iteration at which momentum switches from start to late.
    pub momentum_switch_iter: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_start: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
        }
    }
}

impl TsneParams {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if !(self.perplexity >= 1.0) {
            return Err(Error::param("perplexity", format!("must be >= 1, got {}", self.perplexity)));
        }
        if self.perplexity >= (n_points.saturating_sub(1)) as f64 / 3.0 {
            return Err(Error::param(
                "perplexity",
                format!("{} too large for {n_points} points; need perplexity < (n-1)/3", self.perplexity),
            ));
        }
        if self.iterations < 250 {
            return Err(Error::param("iterations", format!("must be >= 250, got {}", self.iterations)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    /// Indices of the complete rows that were kept, in table order.
    pub row_indices: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    /// Columns with zero variance, mapped to all-zero output.
    pub zero_variance_columns: Vec<usize>,
}

/// Z-scores the complete rows of a table: per-column mean 0 and population
/// standard deviation 1. Constant columns become all zero and are flagged.
pub fn standardize(table: &FeatureTable) -> Result<Standardized> {
    let row_indices: Vec<usize> = table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.values.iter().all(|v| v.is_finite()))
        .map(|(i, _)| i)
        .collect();
    if row_indices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "standardization needs >= 2 complete rows, got {}",
            row_indices.len()
        )));
    }
    let d = table.schema.names.len();
    let n = row_indices.len() as f64;
    let mut means = vec![0.0f64; d];
    for &i in &row_indices {
        for (m, v) in means.iter_mut().zip(&table.rows[i].values) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut variances = vec![0.0f64; d];
    for &i in &row_indices {
        for c in 0..d {
            let dv = table.rows[i].values[c] - means[c];
            variances[c] += dv * dv;
        }
    }
    for v in &mut variances {
        *v /= n;
    }
    let zero_variance_columns: Vec<usize> =
        (0..d).filter(|&c| variances[c] == 0.0).collect();
    let matrix = row_indices
        .iter()
        .map(|&i| {
            (0..d)
                .map(|c| {
                    if variances[c] == 0.0 {
                        0.0
                    } else {
                        (table.rows[i].values[c] - means[c]) / variances[c].sqrt()
                    }
                })
                .collect()
        })
        .collect();
    Ok(Standardized { row_indices, matrix, zero_variance_columns })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coordinates: Vec<[f64; 2]>,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Points whose bandwidth bisection did not converge in 50 steps.
    pub unconverged_points: usize,
}

const BISECTION_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 50;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d2 = vec![0.0f64; n * n];
    d2.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            if i != j {
                *slot = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
    });
    d2
}

/// Conditional affinities for one point: p_{j|i} with bandwidth found by
/// bisection so the realized log2-perplexity matches the target within
/// 1e-5. Returns false when 50 steps were not enough.
fn calibrate_row(distances: &[f64], skip: usize, target_h: f64, out: &mut [f64]) -> bool {
    let min_d = distances
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0f64;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut converged = false;
    for _ in 0..BISECTION_STEPS {
        let mut sum = 0.0;
        for (j, &d) in distances.iter().enumerate() {
            let p = if j == skip { 0.0 } else { (-beta * (d - min_d)).exp() };
            out[j] = p;
            sum += p;
        }
        // Entropy in bits of the normalized row.
        let mut h = 0.0;
        for (j, p) in out.iter_mut().enumerate() {
            *p /= sum;
            if j != skip && *p > 0.0 {
                h -= *p * p.log2();
            }
        }
        let diff = h - target_h;
        if diff.abs() <= BISECTION_TOL {
            converged = true;
            break;
        }
        if diff > 0.0 {
            beta_min = beta;
            beta = if beta_max.is_finite() { (beta + beta_max) / 2.0 } else { beta * 2.0 };
        } else {
            beta_max = beta;
            beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
        }
    }
    converged
}

/// Symmetrized joint affinities P = (P_cond + P_condᵀ) / 2n; sums to 1.
fn joint_affinities(points: &[Vec<f64>], perplexity: f64) -> (Vec<f64>, usize) {
    let n = points.len();
    let d2 = squared_distances(points);
    let target_h = perplexity.log2();
    let mut cond = vec![0.0f64; n * n];
    let unconverged: usize = cond
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let ok = calibrate_row(&d2[i * n..(i + 1) * n], i, target_h, row);
            usize::from(!ok)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let mut p = vec![0.0f64; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    (p, unconverged)
}

/// Student-t numerators for the current embedding and their total.
fn q_numerators(y: &[[f64; 2]], q_num: &mut [f64]) -> f64 {
    let n = y.len();
    q_num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if i == j {
                0.0
            } else {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                1.0 / (1.0 + dx * dx + dy * dy)
            };
        }
    });
    // Summed sequentially in row order so the total does not depend on
    // the parallel split.
    let row_sums: Vec<f64> = q_num.chunks(n).map(|row| row.iter().sum()).collect();
    row_sums.iter().sum()
}

fn kl_divergence(p: &[f64], q_num: &[f64], q_total: f64, n: usize) -> f64 {
    let row_kls: Vec<f64> = p
        .par_chunks(n)
        .zip(q_num.par_chunks(n))
        .map(|(p_row, q_row)| {
            let mut kl = 0.0;
            for (pv, qn) in p_row.iter().zip(q_row) {
                if *pv > 0.0 {
                    let q = (qn / q_total).max(P_FLOOR);
                    kl += pv * (pv.max(P_FLOOR) / q).ln();
                }
            }
            kl
        })
        .collect();
    row_kls.iter().sum()
}

/// Exact O(n²) t-SNE with early exaggeration and momentum. Deterministic
/// for a fixed seed, independent of thread count.
pub fn tsne(points: &[Vec<f64>], params: &TsneParams) -> Result<TsneResult> {
    let n = points.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("t-SNE needs >= 10 points, got {n}")));
    }
    params.validate(n)?;
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::param("points", "rows have inconsistent widths".to_string()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::param("points", "contains not-a-value entries".to_string()));
    }

    let (p, unconverged_points) = joint_affinities(points, params.perplexity);

    let mut rng = seeded_rng(params.seed, stream_id(NS_EMBED, 0));
    let normal = rand_distr::Normal::new(0.0, 1e-4).expect("init spread");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a = rand_distr::Distribution::sample(&normal, &mut rng);
            let b = rand_distr::Distribution::sample(&normal, &mut rng);
            [a, b]
        })
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut q_num = vec![0.0f64; n * n];

    let q_total = q_numerators(&y, &mut q_num);
    let initial_kl = kl_divergence(&p, &q_num, q_total, n);

    for iter in 0..params.iterations {
        let factor = if iter < params.exaggeration_iters { params.exaggeration } else { 1.0 };
        let momentum = if iter < params.momentum_switch_iter {
            params.momentum_start
        } else {
            params.momentum_late
        };
        let q_total = q_numerators(&y, &mut q_num);

        let gradients: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0f64; 2];
                let p_row = &p[i * n..(i + 1) * n];
                let q_row = &q_num[i * n..(i + 1) * n];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let q_ij = q_row[j] / q_total;
                    let mult = 4.0 * (factor * p_row[j] - q_ij) * q_row[j];
                    g[0] += mult * (y[i][0] - y[j][0]);
                    g[1] += mult * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect();

        for i in 0..n {
            for axis in 0..2 {
                // Per-coordinate gain damps oscillation: shrink while the
                // step keeps flipping sign, grow while it agrees.
                gains[i][axis] = if gradients[i][axis] * velocity[i][axis] > 0.0 {
                    (gains[i][axis] * 0.8).max(0.01)
                } else {
                    gains[i][axis] + 0.2
                };
                velocity[i][axis] = momentum * velocity[i][axis]
                    - params.learning_rate * gains[i][axis] * gradients[i][axis];
                y[i][axis] += velocity[i][axis];
            }
        }
        let mean_x: f64 = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let mean_y: f64 = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        for point in &mut y {
            point[0] -= mean_x;
            point[1] -= mean_y;
        }
    }

    let q_total = q_numerators(&y, &mut q_num);
    let final_kl = kl_divergence(&p, &q_num, q_total, n);

    Ok(TsneResult { coordinates: y, initial_kl, final_kl, unconverged_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureRow, FeatureSchema};
    use rand::Rng;

    fn table_with(rows: Vec<Vec<f64>>) -> FeatureTable {
        let d = rows[0].len();
        let schema = FeatureSchema { version: 1, names: (0..d).map(|i| format!("f{i}")).collect() };
        let mut table = FeatureTable::new(schema);
        for (i, values) in rows.into_iter().enumerate() {
            table.push(FeatureRow {
                patient_id: "P00".into(),
                window_start_s: i as f64,
                values,
                label: "shunt".into(),
            }).unwrap();
        }
        table
    }

    #[test]
    fn standardize_zero_means_unit_deviations() {
        let mut rng = seeded_rng(3, 0);
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let std = standardize(&table_with(rows)).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = std.matrix.iter().map(|r| r[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(std.zero_variance_columns.is_empty());
    }

    #[test]
    fn standardize_flags_constant_columns_and_skips_incomplete_rows() {
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 7.0, i as f64 * 2.0]).collect();
        rows[4][0] = f64::NAN;
        let std = standardize(&table_with(rows)).unwrap();
        assert_eq!(std.row_indices.len(), 9);
        assert!(!std.row_indices.contains(&4));
        assert_eq!(std.zero_variance_columns, vec![1]);
        assert!(std.matrix.iter().all(|r| r[1] == 0.0));

        let two = table_with(vec![vec![1.0], vec![f64::NAN]]);
        assert!(standardize(&two).is_err());
    }

    #[test]
    fn bisection_hits_the_target_perplexity() {
        let mut rng = seeded_rng(5, 0);
        let points: Vec<Vec<f64>> =
            (0..40).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let n = points.len();
        let d2 = squared_distances(&points);
        let target_h = 10.0f64.log2();
        let mut row = vec![0.0; n];
        for i in 0..n {
            let ok = calibrate_row(&d2[i * n..(i + 1) * n], i, target_h, &mut row);
            assert!(ok);
            let h: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, &p)| j != i && p > 0.0)
                .map(|(_, &p)| -p * p.log2())
                .sum();
            assert!((h - target_h).abs() <= BISECTION_TOL, "row {i} entropy {h}");
        }
    }

    #[test]
    fn affinities_are_symmetric_nonnegative_and_normalized() {
        let mut rng = seeded_rng(6, 0);
        let points: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let n = points.len();
        let (p, unconverged) = joint_affinities(&points, 8.0);
        assert_eq!(unconverged, 0);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "sum {total}");
        for i in 0..n {
            for j in 0..n {
                assert!(p[i * n + j] >= 0.0);
                assert!((p[i * n + j] - p[j * n + i]).abs() < 1e-15);
            }
            assert_eq!(p[i * n + i], 0.0);
        }
    }

    /// Tiny 2-means used to score blob recovery.
    fn two_means_assignments(points: &[[f64; 2]]) -> Vec<usize> {
        let mut c0 = points[0];
        let mut c1 = points[points.len() - 1];
        let mut assign = vec![0usize; points.len()];
        for _ in 0..50 {
            for (i, p) in points.iter().enumerate() {
                let d0 = (p[0] - c0[0]).powi(2) + (p[1] - c0[1]).powi(2);
                let d1 = (p[0] - c1[0]).powi(2) + (p[1] - c1[1]).powi(2);
                assign[i] = usize::from(d1 < d0);
            }
            let mut sums = [[0.0f64; 2]; 2];
            let mut counts = [0usize; 2];
            for (i, p) in points.iter().enumerate() {
                sums[assign[i]][0] += p[0];
                sums[assign[i]][1] += p[1];
                counts[assign[i]] += 1;
            }
            if counts[0] == 0 || counts[1] == 0 {
                break;
            }
            c0 = [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64];
            c1 = [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64];
        }
        assign
    }

    fn blob_points(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seeded_rng(seed, 0);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let center = if i % 2 == 0 { -8.0 } else { 8.0 };
            points.push((0..5).map(|_| center + rng.gen_range(-0.5..0.5)).collect());
            labels.push(i % 2);
        }
        (points, labels)
    }

    #[test]
    fn two_blobs_separate_and_kl_decreases() {
        let (points, truth) = blob_points(7, 200);
        let params = TsneParams { iterations: 400, seed: 1, ..Default::default() };
        let result = tsne(&points, &params).unwrap();
        assert!(result.final_kl < result.initial_kl);
        assert_eq!(result.unconverged_points, 0);

        let assign = two_means_assignments(&result.coordinates);
        let agree = assign.iter().zip(&truth).filter(|(a, t)| a == t).count();
        let accuracy = agree.max(points.len() - agree) as f64 / points.len() as f64;
        assert!(accuracy >= 0.95, "blob recovery {accuracy}");
    }

    #[test]
    fn duplicate_points_embed_together() {
        let mut rng = seeded_rng(8, 0);
        let mut points: Vec<Vec<f64>> =
            (0..200).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        points.push(points[3].clone());
        // Full default schedule: right after exaggeration lifts at iteration
        // 250 the map re-expands transiently, so short runs are misleading.
        let params = TsneParams { seed: 2, ..Default::default() };
        let result = tsne(&points, &params).unwrap();
        let y = &result.coordinates;
        let dup = {
            let (a, b) = (y[3], y[200]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let mut all: Vec<f64> = Vec::new();
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                all.push(((y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)).sqrt());
            }
        }
        all.sort_by(f64::total_cmp);
        let fifth_percentile = all[(all.len() as f64 * 0.05) as usize];
        assert!(dup <= fifth_percentile, "dup {dup} threshold {fifth_percentile}");
    }

    #[test]
    fn fixed_seed_reproduces_the_embedding() {
        let (points, _) = blob_points(9, 30);
        let params = TsneParams { perplexity: 4.0, iterations: 260, seed: 3, ..Default::default() };
        let a = tsne(&points, &params).unwrap();
        let b = tsne(&points, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_validation_errors() {
        let (points, _) = blob_points(10, 30);
        let too_big = TsneParams { perplexity: 20.0, ..Default::default() };
        assert!(matches!(tsne(&points, &too_big), Err(Error::Param { .. })));

        let few: Vec<Vec<f64>> = points.into_iter().take(5).collect();
        let params = TsneParams { perplexity: 1.0, ..Default::default() };
        assert!(matches!(tsne(&few, &params), Err(Error::InsufficientData(_))));

        let (points, _) = blob_points(11, 30);
        let short = TsneParams { perplexity: 5.0, iterations: 100, ..Default::default() };
        assert!(matches!(tsne(&points, &short), Err(Error::Param { .. })));
    }
}
