//! Benchmark harness for the four evaluation experiments. Every experiment
//! yields one [`Point`] per x value with mean and standard deviation over
//! repetitions, written as CSV with columns `x,mean,stddev,unit`.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::abe::{encrypt, setup_with_prefix, CiphertextPolicy, EncryptedObject, Mode, PublicParams, MasterSecret};
use crate::name;
use crate::ndn_sim::DEFAULT_MAX_SEGMENT;
use crate::policy::PolicyAst;

pub const CSV_HEADER: &str = "x,mean,stddev,unit";
pub const DEFAULT_REPS: usize = 10;
/// Desk-scale file sizes stand in for sizes this many times larger.
pub const FILE_SCALE: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Packet,
    File,
    Attrs,
    Overhead,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "packet" => Ok(Experiment::Packet),
            "file" => Ok(Experiment::File),
            "attrs" => Ok(Experiment::Attrs),
            "overhead" => Ok(Experiment::Overhead),
            other => Err(format!("unknown experiment {other:?}; expected packet, file, attrs or overhead")),
        }
    }
}

impl Experiment {
    pub fn default_xs(self) -> Vec<u64> {
        match self {
            Experiment::Packet => (0..=8).map(|i| i * 1_100).collect(),
            Experiment::File => vec![5_000_000, 10_000_000, 20_000_000],
            Experiment::Attrs | Experiment::Overhead => (1..=10).map(|i| i * 5).collect(),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Experiment::Packet | Experiment::Attrs => "ms",
            Experiment::File => "s",
            Experiment::Overhead => "bytes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub x: u64,
    pub mean: f64,
    pub stddev: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub experiment: Experiment,
    pub unit: &'static str,
    pub reps: usize,
    pub seed: u64,
    /// Set for the file experiment: how many times larger the stood-in sizes are.
    pub scale_factor: Option<u64>,
    pub points: Vec<Point>,
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.x, p.mean, p.stddev, self.unit).expect("write to string");
        }
        out
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x as f64).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`. A perfectly flat series counts
/// as a perfect fit.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len(), "series lengths differ");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    LinearFit { slope, intercept, r_squared }
}

/// `attr00 and attr01 and ...` over `n` flags of equal name length.
pub fn flag_policy(n: usize) -> PolicyAst {
    assert!(n >= 1, "need at least one leaf");
    let leaves: Vec<PolicyAst> = (0..n).map(|i| PolicyAst::flag(&format!("attr{i:02}"))).collect();
    if n == 1 {
        leaves.into_iter().next().expect("one leaf")
    } else {
        PolicyAst::And(leaves)
    }
}

struct Harness {
    params: PublicParams,
    master: MasterSecret,
    rng: ChaCha20Rng,
}

impl Harness {
    fn new(seed: u64) -> Self {
        let mut seed_bytes = [0u8; 32];
        seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
        let (params, master) = setup_with_prefix(seed_bytes, &name!("/bench/pub_key"));
        Harness { params, master, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    fn payload(&mut self, len: usize) -> Vec<u8> {
        let mut v = vec![0u8; len];
        self.rng.fill_bytes(&mut v);
        v
    }

    fn encrypt(&mut self, policy: &CiphertextPolicy, payload: &[u8]) -> EncryptedObject {
        encrypt(&self.params, &self.master, policy, payload, 0, Mode::Direct, &mut self.rng)
            .expect("bench policies are valid")
    }

    fn time_ms(&mut self, policy: &CiphertextPolicy, payload: &[u8]) -> f64 {
        let start = Instant::now();
        std::hint::black_box(self.encrypt(policy, payload));
        start.elapsed().as_secs_f64() * 1e3
    }
}

fn packet_policy() -> CiphertextPolicy {
    CiphertextPolicy::new(flag_policy(5))
}

pub fn run(experiment: Experiment, xs: &[u64], reps: usize, seed: u64) -> BenchResult {
    assert!(reps >= 1, "reps must be at least 1");
    let mut h = Harness::new(seed);
    let mut points = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let sample = match experiment {
                Experiment::Packet => {
                    let payload = h.payload(x as usize);
                    h.time_ms(&packet_policy(), &payload)
                }
                Experiment::File => {
                    let file = h.payload(x as usize);
                    let policy = packet_policy();
                    let start = Instant::now();
                    for chunk in file.chunks(DEFAULT_MAX_SEGMENT) {
                        std::hint::black_box(h.encrypt(&policy, chunk));
                    }
                    start.elapsed().as_secs_f64()
                }
                Experiment::Attrs => {
                    let payload = h.payload(DEFAULT_MAX_SEGMENT / 2);
                    h.time_ms(&CiphertextPolicy::new(flag_policy(x as usize)), &payload)
                }
                Experiment::Overhead => {
                    let payload = h.payload(DEFAULT_MAX_SEGMENT / 2);
                    let obj = h.encrypt(&CiphertextPolicy::new(flag_policy(x as usize)), &payload);
                    (obj.to_bytes().len() - payload.len()) as f64
                }
            };
            samples.push(sample);
        }
        let (mean, stddev) = mean_stddev(&samples);
        points.push(Point { x, mean, stddev, samples });
    }
    BenchResult {
        experiment,
        unit: experiment.unit(),
        reps,
        seed,
        scale_factor: (experiment == Experiment::File).then_some(FILE_SCALE),
        points,
    }
}

#[cfg(test)]
#[path = "bench_tests.rs"]
mod tests;
