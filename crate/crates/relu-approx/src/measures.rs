//! Finite Borel measures on Q = [-1/2, 1/2]^d represented by samplers,
//! including singular supports (segments, Cantor sets) and weighted atoms,
//! plus Monte Carlo L^p(mu) distance estimation with confidence intervals.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ApproxError, Result};
use crate::exec;

type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct Measure {
    pub name: String,
    pub total_mass: f64,
    pub dim: usize,
    sampler: Sampler,
}

impl std::fmt::Debug for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Measure")
            .field("name", &self.name)
            .field("total_mass", &self.total_mass)
            .field("dim", &self.dim)
            .finish()
    }
}

fn in_cube(x: &[f64]) -> bool {
    x.iter().all(|v| (-0.5..=0.5).contains(v))
}

impl Measure {
    fn new(name: String, dim: usize, total_mass: f64, sampler: Sampler) -> Result<Self> {
        if !(total_mass > 0.0) || !total_mass.is_finite() {
            return Err(ApproxError::DegenerateMeasure);
        }
        Ok(Measure {
            name,
            total_mass,
            dim,
            sampler,
        })
    }

    /// One sample distributed as mu / mu(Q); always lies in Q.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let x = (self.sampler)(rng);
        debug_assert!(in_cube(&x), "sampler left Q: {x:?}");
        x
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Measure::new(
            "uniform".into(),
            d,
            1.0,
            Arc::new(move |rng| (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect()),
        )
    }

    /// Isotropic Gaussian centered at `center` per coordinate, restricted to Q
    /// by rejection (never clipped, so the support constraint is exact).
    pub fn truncated_gaussian(d: usize, center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || center.abs() > 0.5 {
            return Err(ApproxError::InvalidSpec(format!(
                "truncated-gaussian needs center in Q and sigma > 0, got ({center}, {sigma})"
            )));
        }
        let normal = rand_distr::Normal::new(center, sigma)
            .map_err(|e| ApproxError::InvalidSpec(e.to_string()))?;
        Measure::new(
            format!("truncated-gaussian({center},{sigma})"),
            d,
            1.0,
            Arc::new(move |rng| {
                (0..d)
                    .map(|_| loop {
                        let v = normal.sample(rng);
                        if (-0.5..=0.5).contains(&v) {
                            break v;
                        }
                    })
                    .collect()
            }),
        )
    }

    /// Product of per-coordinate Beta(p, q) distributions shifted to Q.
    pub fn product_beta(d: usize, p: f64, q: f64) -> Result<Self> {
        let beta =
            rand_distr::Beta::new(p, q).map_err(|e| ApproxError::InvalidSpec(e.to_string()))?;
        Measure::new(
            format!("product-beta({p},{q})"),
            d,
            1.0,
            Arc::new(move |rng| (0..d).map(|_| beta.sample(rng) - 0.5).collect()),
        )
    }

    /// Uniform measure on the segment {anchor + t * direction} ∩ Q —
    /// a Lebesgue-null support for d >= 2.
    pub fn segment(anchor: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        let d = anchor.len();
        if direction.len() != d || d == 0 {
            return Err(ApproxError::DimensionMismatch {
                expected: d,
                got: direction.len(),
            });
        }
        if direction.iter().all(|&v| v == 0.0) || !in_cube(&anchor) {
            return Err(ApproxError::InvalidSpec(
                "segment needs anchor in Q and a nonzero direction".into(),
            ));
        }
        // parameter range keeping anchor + t*direction inside Q
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..d {
            if direction[i] != 0.0 {
                let a = (-0.5 - anchor[i]) / direction[i];
                let b = (0.5 - anchor[i]) / direction[i];
                t_lo = t_lo.max(a.min(b));
                t_hi = t_hi.min(a.max(b));
            }
        }
        if !(t_lo < t_hi) {
            return Err(ApproxError::InvalidSpec(
                "segment degenerates to a point in Q".into(),
            ));
        }
        Measure::new(
            format!("segment(d={d})"),
            d,
            1.0,
            Arc::new(move |rng| {
                let t = rng.gen_range(t_lo..t_hi);
                (0..d).map(|i| anchor[i] + t * direction[i]).collect()
            }),
        )
    }

    /// Uniform measure on the depth-truncated middle-thirds Cantor set per
    /// coordinate: digits in {0, 2} up to `depth`, uniform tail below 3^-depth.
    pub fn cantor(d: usize, depth: u32) -> Result<Self> {
        if depth == 0 || depth > 30 {
            return Err(ApproxError::InvalidSpec(format!(
                "cantor depth {depth} out of 1..=30"
            )));
        }
        let tail = 3f64.powi(-(depth as i32));
        Measure::new(
            format!("cantor({depth})"),
            d,
            1.0,
            Arc::new(move |rng| {
                (0..d)
                    .map(|_| {
                        let mut v = 0.0;
                        let mut scale = 1.0;
                        for _ in 0..depth {
                            scale /= 3.0;
                            if rng.gen_bool(0.5) {
                                v += 2.0 * scale;
                            }
                        }
                        v + rng.gen_range(0.0..tail) - 0.5
                    })
                    .collect()
            }),
        )
    }

    /// Weighted atoms; total mass is the weight sum.
    pub fn discrete(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(ApproxError::DegenerateMeasure);
        }
        let d = atoms[0].0.len();
        for (x, w) in &atoms {
            if x.len() != d {
                return Err(ApproxError::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            if !in_cube(x) {
                return Err(ApproxError::InvalidSpec(format!("atom outside Q: {x:?}")));
            }
            if !(*w > 0.0) {
                return Err(ApproxError::InvalidSpec(format!(
                    "nonpositive atom weight {w}"
                )));
            }
        }
        let mass: f64 = atoms.iter().map(|(_, w)| w).sum();
        let index = WeightedIndex::new(atoms.iter().map(|(_, w)| *w))
            .map_err(|e| ApproxError::InvalidSpec(e.to_string()))?;
        let points: Vec<Vec<f64>> = atoms.into_iter().map(|(x, _)| x).collect();
        Measure::new(
            format!("discrete({} atoms)", points.len()),
            d,
            mass,
            Arc::new(move |rng| points[index.sample(rng)].clone()),
        )
    }

    /// Loads atoms from CSV: columns `x_1,...,x_d,weight`, `#` comments.
    pub fn discrete_from_csv(path: &std::path::Path, d: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut atoms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields[0].starts_with('x') || fields[0] == "weight" {
                continue; // header
            }
            if fields.len() != d + 1 {
                return Err(ApproxError::InvalidSpec(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 1,
                    d + 1,
                    fields.len()
                )));
            }
            let mut nums = Vec::with_capacity(d + 1);
            for f in &fields {
                nums.push(
                    f.parse::<f64>().map_err(|e| {
                        ApproxError::InvalidSpec(format!("line {}: {e}", lineno + 1))
                    })?,
                );
            }
            let w = nums.pop().unwrap();
            atoms.push((nums, w));
        }
        Measure::discrete(atoms)
    }
}

/// Parses a measure spec string. Vector arguments use `:` between components,
/// e.g. `segment(2,0:0.3,1:0)` is the segment through (0, 0.3) with
/// direction (1, 0) in d = 2.
pub fn builtin_measure(spec: &str, d: usize) -> Result<Measure> {
    let spec = spec.trim();
    let (name, args) = match spec.find('(') {
        None => (spec, Vec::new()),
        Some(i) => {
            let inner = spec[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| ApproxError::InvalidSpec(format!("unbalanced parens: {spec}")))?;
            (
                &spec[..i],
                inner.split(',').map(|s| s.trim().to_string()).collect(),
            )
        }
    };
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| ApproxError::InvalidSpec(format!("bad number '{s}': {e}")))
    };
    let vector = |s: &str| -> Result<Vec<f64>> { s.split(':').map(num).collect() };
    match (name, args.len()) {
        ("uniform", 0) => Measure::uniform(d),
        ("truncated-gaussian", 2) => Measure::truncated_gaussian(d, num(&args[0])?, num(&args[1])?),
        ("product-beta", 2) => Measure::product_beta(d, num(&args[0])?, num(&args[1])?),
        ("segment", 3) => {
            let sd = num(&args[0])? as usize;
            if sd != d {
                return Err(ApproxError::DimensionMismatch {
                    expected: d,
                    got: sd,
                });
            }
            Measure::segment(vector(&args[1])?, vector(&args[2])?)
        }
        ("cantor", 1) => Measure::cantor(d, num(&args[0])? as u32),
        ("discrete", 1) => Measure::discrete_from_csv(std::path::Path::new(&args[0]), d),
        _ => Err(ApproxError::InvalidSpec(format!(
            "unknown measure spec: {spec}"
        ))),
    }
}

/// Monte Carlo estimate with a 95% confidence interval.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl Estimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }
}

/// `(mu(Q) * E|f(X) - g(X)|^p)^{1/p}` over X ~ mu/mu(Q), with a delta-method
/// 95% CI. Deterministic in `seed` and independent of thread count.
pub fn lp_distance<F, G>(
    f: F,
    g: G,
    mu: &Measure,
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    assert!(p >= 1.0);
    assert!(samples >= 1000, "lp_distance needs at least 10^3 samples");
    let sums = exec::mc_sum(samples, seed, |rng, n| {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut bad = 0.0;
        for _ in 0..n {
            let x = mu.sample(rng);
            let diff = (f(&x) - g(&x)).abs();
            if !diff.is_finite() {
                bad += 1.0;
                continue;
            }
            let v = diff.powf(p);
            s1 += v;
            s2 += v * v;
        }
        vec![s1, s2, bad]
    });
    if sums[2] > 0.0 {
        // rare path: replay sequentially to name an offending point
        let chunks = samples.div_ceil(exec::CHUNK);
        for c in 0..chunks {
            let mut rng = exec::chunk_rng(seed, c as u64);
            let len = if c + 1 == chunks && !samples.is_multiple_of(exec::CHUNK) {
                samples % exec::CHUNK
            } else {
                exec::CHUNK
            };
            for _ in 0..len {
                let x = mu.sample(&mut rng);
                if !(f(&x) - g(&x)).is_finite() {
                    return Err(ApproxError::NonFiniteValue(x));
                }
            }
        }
        unreachable!("non-finite sample vanished on replay");
    }
    let n = samples as f64;
    let mean = sums[0] / n;
    let var = (sums[1] / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    let root = |m: f64| (mu.total_mass * m.max(0.0)).powf(1.0 / p);
    Ok(Estimate {
        value: root(mean),
        ci_lower: root(mean - 1.96 * se),
        ci_upper: root(mean + 1.96 * se),
    })
}

/// Max |f - g| over a deterministic scan of Q: a full tensor grid for d <= 3,
/// otherwise a seeded Latin-hypercube scan. A lower bound on the sup-norm.
pub fn sup_distance<F, G>(f: F, g: G, d: usize, grid_points_per_axis: usize) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    assert!(grid_points_per_axis >= 2);
    let n = grid_points_per_axis;
    let points: Vec<Vec<f64>> = if d <= 3 {
        let axis: Vec<f64> = (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect();
        let total = n.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|_| {
                        let v = axis[idx % n];
                        idx /= n;
                        v
                    })
                    .collect()
            })
            .collect()
    } else {
        let total = n * n;
        let mut rng = exec::chunk_rng(0x5ca_dee, 0);
        let mut perms: Vec<Vec<usize>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut p: Vec<usize> = (0..total).collect();
            for i in (1..total).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            perms.push(p);
        }
        (0..total)
            .map(|i| {
                (0..d)
                    .map(|j| -0.5 + (perms[j][i] as f64 + 0.5) / total as f64)
                    .collect()
            })
            .collect()
    };
    let diffs = exec::map_indexed(points.len(), |i| (f(&points[i]) - g(&points[i])).abs());
    diffs.into_iter().fold(0.0, f64::max)
}
