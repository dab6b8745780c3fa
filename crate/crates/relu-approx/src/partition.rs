//! Shifted dyadic partitions of [a, a+2)^d covering Q, with the
//! boundary-shell mass diagnostic that drives the L^p(mu) error analysis:
//! cubes I^{a,omega}_N = [a + omega/2^N, a + (omega+1)/2^N) for
//! omega in Z^d ∩ [0, 2*2^N - 1]^d.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ApproxError, Result};
use crate::exec;
use crate::localization::Cube;
use crate::measures::{Estimate, Measure};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicPartition {
    /// Offset a, one coordinate per dimension, each in (-3/2, -1/2].
    pub offset: Vec<f64>,
    /// Refinement level N; cube side is 2^-N.
    pub level: u32,
    /// Shell exponent k = d + 1 + p*gamma; shells have width 2^-kN.
    pub shell_exponent: f64,
}

/// Uniform offset from (-3/2, -1/2]^d plus an explicit irrational
/// perturbation, so no cube face can coincide with a rational test grid.
pub fn draw_offset(d: usize, rng_seed: u64) -> Vec<f64> {
    let mut rng = exec::chunk_rng(rng_seed, 0);
    let nudge = std::f64::consts::SQRT_2 * 2f64.powi(-40);
    (0..d)
        .map(|_| {
            let u: f64 = rng.gen_range(1e-9..1.0);
            -0.5 - u + nudge
        })
        .collect()
}

impl DyadicPartition {
    pub fn new(offset: Vec<f64>, level: u32, shell_exponent: f64) -> Result<Self> {
        if offset.is_empty() || level == 0 {
            return Err(ApproxError::InvalidSpec(
                "need d >= 1 and level >= 1".into(),
            ));
        }
        for (i, a) in offset.iter().enumerate() {
            if !(-1.5 < *a && *a <= -0.5) {
                return Err(ApproxError::InvalidSpec(format!(
                    "offset coordinate {i} = {a} outside (-3/2, -1/2]"
                )));
            }
        }
        if shell_exponent < 2.0 {
            return Err(ApproxError::InvalidSpec(format!(
                "shell exponent {shell_exponent} < 2"
            )));
        }
        Ok(DyadicPartition {
            offset,
            level,
            shell_exponent,
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Cube side length 2^-N.
    pub fn side(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    /// Shell width 2^-kN; strictly less than half the cube side.
    pub fn shell_width(&self) -> f64 {
        2f64.powf(-self.shell_exponent * self.level as f64)
    }

    /// Index bound per coordinate: omega_i in 0..2^{N+1}.
    pub fn index_bound(&self) -> u32 {
        2u32 << self.level
    }

    pub fn cube(&self, omega: &[u32]) -> Cube {
        let side = self.side();
        let lower: Vec<f64> = omega
            .iter()
            .zip(&self.offset)
            .map(|(&w, &a)| a + w as f64 * side)
            .collect();
        let upper: Vec<f64> = omega
            .iter()
            .zip(&self.offset)
            .map(|(&w, &a)| a + (w as f64 + 1.0) * side)
            .collect();
        Cube { lower, upper }
    }

    /// The unique omega with x in I^{a,omega}_N; errors if x is outside
    /// [a, a+2)^d. Float-safe: nudges the floored index so the half-open
    /// interval check holds bit-for-bit against the cube accessor.
    pub fn locate(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.dim() {
            return Err(ApproxError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let scale = 2f64.powi(self.level as i32);
        let side = self.side();
        let bound = self.index_bound();
        let mut omega = Vec::with_capacity(x.len());
        for (i, (&xi, &a)) in x.iter().zip(&self.offset).enumerate() {
            if !xi.is_finite() {
                return Err(ApproxError::NonFiniteInput(i));
            }
            let mut w = ((xi - a) * scale).floor();
            // half-open membership against the exact endpoint formulas
            if xi < a + w * side {
                w -= 1.0;
            } else if xi >= a + (w + 1.0) * side {
                w += 1.0;
            }
            if w < 0.0 || w >= bound as f64 {
                return Err(ApproxError::OutOfDomain(i));
            }
            omega.push(w as u32);
        }
        Ok(omega)
    }

    /// All omega whose cube meets Q, each with an interior anchor
    /// x_omega in Q° ∩ I^{a,omega}_N. Never materializes the full index set.
    pub fn active_cubes(&self) -> Vec<(Vec<u32>, Vec<f64>)> {
        let d = self.dim();
        let side = self.side();
        let bound = self.index_bound();
        // per-coordinate index range of cubes meeting [-1/2, 1/2]
        let mut ranges = Vec::with_capacity(d);
        for &a in &self.offset {
            let lo = (((-0.5 - a) / side).floor().max(0.0)) as u32;
            let hi = (((0.5 - a) / side).floor() as u32).min(bound - 1);
            ranges.push(lo..=hi);
        }
        let mut out = Vec::new();
        let mut omega: Vec<u32> = ranges.iter().map(|r| *r.start()).collect();
        'outer: loop {
            let cube = self.cube(&omega);
            // anchor: midpoint of the overlap with the open cube Q°
            let mut anchor = Vec::with_capacity(d);
            let mut meets = true;
            for i in 0..d {
                let lo = cube.lower[i].max(-0.5);
                let hi = cube.upper[i].min(0.5);
                if !(lo < hi) {
                    meets = false;
                    break;
                }
                anchor.push((lo + hi) / 2.0);
            }
            if meets {
                debug_assert!(self.locate(&anchor).map(|w| w == omega).unwrap_or(false));
                out.push((omega.clone(), anchor));
            }
            for i in 0..d {
                if omega[i] < *ranges[i].end() {
                    omega[i] += 1;
                    continue 'outer;
                }
                omega[i] = *ranges[i].start();
            }
            break;
        }
        out
    }

    /// True iff some coordinate of x lies within the shell width of its
    /// cube's faces — i.e. x is outside the shrunk closed cube.
    pub fn in_shell(&self, x: &[f64]) -> Result<bool> {
        let omega = self.locate(x)?;
        let cube = self.cube(&omega);
        Ok(!cube.contains_shrunk(x, self.shell_width()))
    }

    /// Monte Carlo estimate of mu(union of boundary shells), with 95% CI.
    pub fn shell_mass(&self, mu: &Measure, samples: usize, seed: u64) -> Result<Estimate> {
        assert!(samples >= 1000);
        if mu.dim != self.dim() {
            return Err(ApproxError::DimensionMismatch {
                expected: self.dim(),
                got: mu.dim,
            });
        }
        let sums = exec::mc_sum(samples, seed, |rng, n| {
            let mut hits = 0.0;
            for _ in 0..n {
                let x = mu.sample(rng);
                if self.in_shell(&x).unwrap_or(true) {
                    hits += 1.0;
                }
            }
            vec![hits]
        });
        let n = samples as f64;
        let p_hat = sums[0] / n;
        let se = (p_hat * (1.0 - p_hat) / n).sqrt();
        let mass = mu.total_mass;
        Ok(Estimate {
            value: mass * p_hat,
            ci_lower: mass * (p_hat - 1.96 * se).max(0.0),
            ci_upper: mass * (p_hat + 1.96 * se),
        })
    }
}

/// Least-squares slope of log2(shell mass) against level N over
/// `levels`, with zero estimates clamped to the half-hit floor so the
/// regression stays finite. Shell exponent k is held per `shell_exponent`.
pub fn shell_decay_slope(
    offset: &[f64],
    shell_exponent: f64,
    mu: &Measure,
    levels: std::ops::RangeInclusive<u32>,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let floor = mu.total_mass * 0.5 / samples as f64;
    for n in levels {
        let part = DyadicPartition::new(offset.to_vec(), n, shell_exponent)?;
        let est = part.shell_mass(mu, samples, exec::derive_seed(seed, n as u64))?;
        xs.push(n as f64);
        ys.push(est.value.max(floor).log2());
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn part(d: usize, level: u32, seed: u64) -> DyadicPartition {
        DyadicPartition::new(draw_offset(d, seed), level, 4.0).unwrap()
    }

    #[test]
    fn offset_range_and_determinism() {
        for d in 1..=3 {
            let a = draw_offset(d, 42);
            assert_eq!(a.len(), d);
            assert_eq!(a, draw_offset(d, 42));
            assert_ne!(a, draw_offset(d, 43));
            for &ai in &a {
                assert!(-1.5 < ai && ai <= -0.5);
                // Q subset of [a, a+2)
                assert!(ai <= -0.5 && ai + 2.0 > 0.5);
            }
        }
    }

    #[test]
    fn locate_arithmetic_example() {
        // N=1, a = -1 per coordinate: x = 0 -> omega = floor(2*(0+1)) = 2
        let partition = DyadicPartition::new(vec![-1.0, -1.0], 1, 4.0).unwrap();
        assert_eq!(partition.locate(&[0.0, 0.0]).unwrap(), vec![2, 2]);
    }

    #[test]
    fn locate_membership_and_tiling() {
        let mut rng = exec::chunk_rng(8, 0);
        for d in 1..=3usize {
            let partition = part(d, 3, d as u64);
            for _ in 0..10_000 / d {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let omega = partition.locate(&x).unwrap();
                let cube = partition.cube(&omega);
                assert!(cube.contains(&x));
                // uniqueness: neighboring cubes do not contain x
                for i in 0..d {
                    for delta in [-1i64, 1] {
                        let wi = omega[i] as i64 + delta;
                        if wi < 0 || wi >= partition.index_bound() as i64 {
                            continue;
                        }
                        let mut other = omega.clone();
                        other[i] = wi as u32;
                        assert!(!partition.cube(&other).contains(&x));
                    }
                }
            }
        }
    }

    #[test]
    fn locate_out_of_domain() {
        let partition = part(1, 2, 5);
        assert!(matches!(
            partition.locate(&[2.0]),
            Err(ApproxError::OutOfDomain(0))
        ));
    }

    #[test]
    fn endpoint_formulas_bit_exact() {
        let partition = part(2, 4, 17);
        let side = partition.side();
        for omega in [[0u32, 3], [7, 12], [31, 31]] {
            let cube = partition.cube(&omega);
            for (i, &w) in omega.iter().enumerate() {
                assert_eq!(cube.lower[i], partition.offset[i] + w as f64 * side);
                assert_eq!(cube.upper[i], partition.offset[i] + (w as f64 + 1.0) * side);
            }
        }
    }

    #[test]
    fn nesting_of_levels() {
        let offset = draw_offset(2, 23);
        let coarse = DyadicPartition::new(offset.clone(), 3, 4.0).unwrap();
        let fine = DyadicPartition::new(offset, 4, 4.0).unwrap();
        let mut rng = exec::chunk_rng(2, 0);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let wf = fine.locate(&x).unwrap();
            let wc = coarse.locate(&x).unwrap();
            // each fine cube is inside the coarse cube with halved indices
            assert_eq!(wc, wf.iter().map(|w| w / 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn active_cube_counts_and_anchors() {
        for d in 1..=3usize {
            for level in 1..=3u32 {
                let partition = part(d, level, 7 * d as u64 + level as u64);
                let active = partition.active_cubes();
                let per_axis = (0.5f64 / partition.side()).ceil() as usize * 2;
                assert!(active.len() <= (2usize << level).pow(d as u32));
                assert!(active.len() >= per_axis.pow(d as u32).min(2));
                for (omega, anchor) in &active {
                    assert!(anchor.iter().all(|v| v.abs() < 0.5));
                    assert_eq!(&partition.locate(anchor).unwrap(), omega);
                }
            }
        }
    }

    #[test]
    fn active_cubes_match_exhaustive_intersection() {
        let partition = part(1, 1, 99);
        let active = partition.active_cubes();
        let mut expected = Vec::new();
        for w in 0..partition.index_bound() {
            let cube = partition.cube(&[w]);
            if cube.upper[0] > -0.5 && cube.lower[0] < 0.5 {
                expected.push(vec![w]);
            }
        }
        let got: Vec<Vec<u32>> = active.into_iter().map(|(w, _)| w).collect();
        assert_eq!(got, expected);
        assert!(got.len() == 2 || got.len() == 3);
    }

    #[test]
    fn shell_mass_matches_lebesgue_closed_form() {
        // d=1, N=3, k=4: each cube loses a shell of width 2*2^-12
        let partition = part(1, 3, 31);
        let active = partition.active_cubes();
        let mut exact = 0.0;
        let w = partition.shell_width();
        for (omega, _) in &active {
            let cube = partition.cube(omega);
            let lo = cube.lower[0].max(-0.5);
            let hi = cube.upper[0].min(0.5);
            let shrunk_lo = (cube.lower[0] + w).max(lo);
            let shrunk_hi = (cube.upper[0] - w).min(hi);
            exact += (hi - lo) - (shrunk_hi - shrunk_lo).max(0.0);
        }
        let mu = Measure::uniform(1).unwrap();
        let est = partition.shell_mass(&mu, 2_000_000, 13).unwrap();
        // 3.5 sigma so the fixed seed is not on a knife edge
        let se = est.ci_width() / 2.0 / 1.96;
        assert!(
            (est.value - exact).abs() <= 3.5 * se,
            "exact {exact} vs estimate {} (se {se})",
            est.value
        );
    }

    #[test]
    fn point_mass_at_anchor_has_zero_shell_mass() {
        let partition = part(2, 2, 3);
        let (_, anchor) = partition.active_cubes().into_iter().next().unwrap();
        let mu = Measure::discrete(vec![(anchor, 1.0)]).unwrap();
        let est = partition.shell_mass(&mu, 1000, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn shell_width_sanity() {
        for level in 1..=6 {
            let partition = part(1, level, level as u64);
            assert!(partition.shell_width() < partition.side() / 2.0);
        }
    }

    #[test]
    fn shell_decay_slope_uniform() {
        // k = d + 1 + p*gamma with d=1, p=2, gamma=1 -> 4; expected decay
        // slope ~ -p*gamma = -2 in log2 scale
        let offset = draw_offset(1, 61);
        let mu = Measure::uniform(1).unwrap();
        let slope = shell_decay_slope(&offset, 4.0, &mu, 2..=6, 100_000, 5).unwrap();
        assert!(slope <= -2.0 * 0.7, "slope {slope}");
    }

    #[test]
    fn synthetic_slope_exact() {
        let xs = [2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.7 - 2.3 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 2.3).abs() < 1e-12);
    }

    #[test]
    fn partition_json_round_trip() {
        let partition = part(2, 5, 77);
        let s = serde_json::to_string(&partition).unwrap();
        let back: DyadicPartition = serde_json::from_str(&s).unwrap();
        assert_eq!(back.offset, partition.offset);
        assert_eq!(back.level, partition.level);
    }
}
