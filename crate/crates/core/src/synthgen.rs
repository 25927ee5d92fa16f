//! Ground truth and datasets drawn from the biased linear model
//! `y = X w* + γ z* + e`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{derive_seed, gaussian_sample, Matrix, SplitMix64};

const STREAM_SUPPORT: u64 = 1;
const STREAM_WEIGHTS: u64 = 2;
const STREAM_DESIGN: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_LABELS: u64 = 5;

/// Design matrix and response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {} entries",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite response value".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub gamma: f64,
    /// Noise scale; the noise standard deviation is `k / sqrt(ln n)`.
    pub k: f64,
    pub min_signal: f64,
    pub seed: u64,
    /// Per-column standard deviation of the design; empty means all ones.
    pub covariance: Vec<f64>,
    /// Randomly permute the ±1 labels instead of the first-half layout.
    pub shuffle_z: bool,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            d: 100,
            s: 10,
            n: 460,
            gamma: 2.0,
            k: 0.15,
            min_signal: 0.75,
            seed: 0,
            covariance: Vec::new(),
            shuffle_z: false,
        }
    }
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.s > self.d {
            return Err(Error::Config(format!(
                "sparsity s = {} must satisfy 1 <= s <= d = {}",
                self.s, self.d
            )));
        }
        if self.n < 2 {
            return Err(Error::Config(format!(
                "n = {} < 2 leaves the noise scale k/sqrt(ln n) undefined",
                self.n
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.k >= 0.0) {
            return Err(Error::Config(format!("k = {} must be >= 0", self.k)));
        }
        if !(self.min_signal > 0.0) {
            return Err(Error::Config(format!(
                "min_signal = {} must be > 0",
                self.min_signal
            )));
        }
        if !self.covariance.is_empty() && self.covariance.len() != self.d {
            return Err(Error::Config(format!(
                "{} column scales for d = {}",
                self.covariance.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn column_scales(&self) -> Vec<f64> {
        if self.covariance.is_empty() {
            vec![1.0; self.d]
        } else {
            self.covariance.clone()
        }
    }

    pub fn noise_std(&self) -> f64 {
        self.k / (self.n as f64).ln().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub w_star: Vec<f64>,
    pub z_star: Vec<f64>,
    /// Sorted support of `w_star`.
    pub support: Vec<usize>,
    pub gamma: f64,
}

pub fn make_ground_truth(cfg: &GenerativeConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut support =
        SplitMix64::new(derive_seed(cfg.seed, STREAM_SUPPORT)).sample_indices(cfg.d, cfg.s);
    support.sort_unstable();

    let mut rng = SplitMix64::new(derive_seed(cfg.seed, STREAM_WEIGHTS));
    let mut w_star = vec![0.0; cfg.d];
    for &i in &support {
        let v = rng.uniform(-1.0, 1.0);
        w_star[i] = if v.abs() < cfg.min_signal {
            if v < 0.0 {
                -cfg.min_signal
            } else {
                cfg.min_signal
            }
        } else {
            v
        };
    }

    let half = cfg.n.div_ceil(2);
    let mut z_star: Vec<f64> = (0..cfg.n)
        .map(|i| if i < half { 1.0 } else { -1.0 })
        .collect();
    if cfg.shuffle_z {
        let mut rng = SplitMix64::new(derive_seed(cfg.seed, STREAM_LABELS));
        for i in (1..z_star.len()).rev() {
            let j = rng.below(i + 1);
            z_star.swap(i, j);
        }
    }

    Ok(GroundTruth {
        w_star,
        z_star,
        support,
        gamma: cfg.gamma,
    })
}

pub fn generate_dataset(truth: &GroundTruth, cfg: &GenerativeConfig) -> Result<Dataset> {
    cfg.validate()?;
    check_truth(truth, cfg.n, cfg.d)?;
    let x = gaussian_sample(
        cfg.n,
        cfg.d,
        derive_seed(cfg.seed, STREAM_DESIGN),
        &cfg.column_scales(),
    )?;
    generate_dataset_with_design(truth, x, cfg.k, cfg.seed)
}

/// Responses for a caller-supplied design, with noise std `k / sqrt(ln n)`.
pub fn generate_dataset_with_design(
    truth: &GroundTruth,
    x: Matrix,
    k: f64,
    seed: u64,
) -> Result<Dataset> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Config(format!(
            "n = {n} < 2 leaves the noise scale undefined"
        )));
    }
    check_truth(truth, n, x.cols())?;
    let sd = k / (n as f64).ln().sqrt();
    let e = gaussian_sample(n, 1, derive_seed(seed, STREAM_NOISE), &[sd])?;
    let xw = x.matvec(&truth.w_star)?;
    let y = xw
        .iter()
        .zip(&truth.z_star)
        .zip(e.as_slice())
        .map(|((&a, &z), &ei)| a + truth.gamma * z + ei)
        .collect();
    Dataset::new(x, y)
}

fn check_truth(truth: &GroundTruth, n: usize, d: usize) -> Result<()> {
    if truth.w_star.len() != d || truth.z_star.len() != n {
        return Err(Error::Dimension(format!(
            "ground truth is (d={}, n={}) but the design is {n}x{d}",
            truth.w_star.len(),
            truth.z_star.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, s: usize, n: usize) -> GenerativeConfig {
        GenerativeConfig {
            d,
            s,
            n,
            seed: 17,
            ..GenerativeConfig::default()
        }
    }

    #[test]
    fn signal_floor_applied() {
        let t = make_ground_truth(&GenerativeConfig {
            min_signal: 0.75,
            ..cfg(5, 5, 10)
        })
        .unwrap();
        assert!(t.w_star.iter().all(|w| w.abs() >= 0.75 && w.abs() <= 1.0));
    }

    #[test]
    fn full_support() {
        let t = make_ground_truth(&cfg(6, 6, 10)).unwrap();
        assert_eq!(t.support, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn half_split_labels() {
        let t = make_ground_truth(&cfg(3, 1, 4)).unwrap();
        assert_eq!(t.z_star, vec![1.0, 1.0, -1.0, -1.0]);
        let t = make_ground_truth(&cfg(3, 1, 5)).unwrap();
        assert_eq!(t.z_star, vec![1.0, 1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn shuffled_labels_keep_counts() {
        let t = make_ground_truth(&GenerativeConfig {
            shuffle_z: true,
            ..cfg(3, 1, 40)
        })
        .unwrap();
        assert_eq!(t.z_star.iter().filter(|&&z| z > 0.0).count(), 20);
        assert_ne!(t.z_star[..20], vec![1.0; 20][..]);
    }

    #[test]
    fn truth_invariants() {
        for seed in 0..20 {
            let c = GenerativeConfig {
                seed,
                ..cfg(30, 7, 11)
            };
            let t = make_ground_truth(&c).unwrap();
            assert_eq!(t.support.len(), 7);
            for (i, w) in t.w_star.iter().enumerate() {
                if t.support.contains(&i) {
                    assert!(w.abs() >= c.min_signal);
                } else {
                    assert_eq!(*w, 0.0);
                }
            }
            assert!(t.z_star.iter().all(|z| *z == 1.0 || *z == -1.0));
        }
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            make_ground_truth(&cfg(3, 4, 10)),
            Err(Error::Config(_))
        ));
        let c = cfg(3, 1, 1);
        assert!(matches!(make_ground_truth(&c), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_identity() {
        let c = GenerativeConfig { k: 0.0, ..cfg(8, 3, 12) };
        let t = make_ground_truth(&c).unwrap();
        let ds = generate_dataset(&t, &c).unwrap();
        let xw = ds.x.matvec(&t.w_star).unwrap();
        for i in 0..c.n {
            assert_eq!(ds.y[i], xw[i] + t.gamma * t.z_star[i]);
        }
    }

    #[test]
    fn all_zero_mechanism() {
        let t = GroundTruth {
            w_star: vec![0.0; 4],
            z_star: vec![1.0, -1.0, 1.0],
            support: vec![],
            gamma: 0.0,
        };
        let x = gaussian_sample(3, 4, 1, &[1.0; 4]).unwrap();
        let ds = generate_dataset_with_design(&t, x, 0.0, 3).unwrap();
        assert!(ds.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_response() {
        let t = GroundTruth {
            w_star: vec![2.0],
            z_star: vec![1.0, -1.0],
            support: vec![0],
            gamma: 1.0,
        };
        let x = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let ds = generate_dataset_with_design(&t, x, 0.0, 0).unwrap();
        assert_eq!(ds.y, vec![3.0, 1.0]);
    }

    #[test]
    fn reproducible() {
        let c = cfg(20, 4, 30);
        let a = make_ground_truth(&c).unwrap();
        let b = make_ground_truth(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            generate_dataset(&a, &c).unwrap(),
            generate_dataset(&b, &c).unwrap()
        );
    }

    #[test]
    fn design_column_variances() {
        let c = GenerativeConfig {
            covariance: vec![1.0, 2.0, 0.5],
            ..cfg(3, 1, 10_000)
        };
        let t = make_ground_truth(&c).unwrap();
        let ds = generate_dataset(&t, &c).unwrap();
        for (j, sd) in c.covariance.iter().enumerate() {
            let col = ds.x.column(j);
            let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            let target = sd * sd;
            assert!((var - target).abs() <= 0.05 * target, "col {j}: {var} vs {target}");
        }
    }

    #[test]
    fn group_mean_gap_is_twice_gamma() {
        let mut c = cfg(5, 1, 10_000);
        let mut t = make_ground_truth(&c).unwrap();
        t.w_star = vec![0.0; 5];
        c.gamma = 2.0;
        t.gamma = 2.0;
        let ds = generate_dataset(&t, &c).unwrap();
        let (mut sp, mut np, mut sm, mut nm) = (0.0, 0.0, 0.0, 0.0);
        for (y, z) in ds.y.iter().zip(&t.z_star) {
            if *z > 0.0 {
                sp += y;
                np += 1.0;
            } else {
                sm += y;
                nm += 1.0;
            }
        }
        let gap = sp / np - sm / nm;
        assert!((gap - 4.0).abs() <= 0.05 * 4.0, "gap {gap}");
    }
}
