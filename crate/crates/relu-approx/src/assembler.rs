//! End-to-end construction: choose the dyadic level from the target
//! accuracy, pick a well-behaved partition offset, Taylor-fit the target on
//! every active cube, realize the polynomial family as one network, attach a
//! localization gadget per cube, sum, and optionally quantize the weights.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{ApproxError, Result};
use crate::exec;
use crate::localization::localization_net;
use crate::measures::{lp_distance, sup_distance, Estimate, Measure};
use crate::network::{
    compose, is_quantized, quantize, stack_with_maps, sum_outputs, ComplexityReport, Network,
};
use crate::partition::{draw_offset, least_squares_slope, DyadicPartition};
use crate::primitives::{polynomial_family_net, DepthBudget, DepthMode, PolynomialFamily};
use crate::taylor::{taylor_coefficients, TargetFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    Off,
    /// Smallest s (up to 16) whose sup-grid deviation is <= eps.
    Adaptive,
    Fixed(u32),
}

#[derive(Debug, Clone)]
pub struct BuildRequest {
    pub f: TargetFunction,
    pub eps: f64,
    pub p: f64,
    pub mu: Measure,
    pub depth_budget: DepthBudget,
    pub quantize: QuantizeMode,
    /// Monte Carlo samples for the final error estimate.
    pub samples: usize,
    pub seed: u64,
}

impl BuildRequest {
    pub fn new(f: TargetFunction, eps: f64, p: f64, mu: Measure) -> Self {
        let budget = DepthBudget::default_fixed(f.beta, f.dim);
        BuildRequest {
            f,
            eps,
            p,
            mu,
            depth_budget: budget,
            quantize: QuantizeMode::Off,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizationInfo {
    pub s: u32,
    pub eps: f64,
    /// Sup-grid deviation from the unquantized realization.
    pub sup_deviation: f64,
    /// Whether the deviation criterion (<= eps) was met within the s cap.
    pub within_eps: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub function: String,
    pub measure: String,
    pub eps: f64,
    pub p: f64,
    pub beta: f64,
    pub level: u32,
    pub cube_count: usize,
    pub offset: Vec<f64>,
    pub offset_attempts: usize,
    pub shell_slope: f64,
    pub b_prime: f64,
    pub complexity: ComplexityReport,
    /// Smallest s with all pre-quantization weights in [-eps^-s, eps^-s].
    pub weight_range_s: u32,
    pub lp_error: Estimate,
    pub sup_lower_bound: f64,
    pub quantization: Option<QuantizationInfo>,
    /// Depth cap 7 + (1 + ceil(log2 beta))(11 + beta/d) in fixed mode.
    pub depth_cap: Option<f64>,
    pub build_seconds: f64,
    pub seed: u64,
}

pub struct BuildOutcome {
    pub network: Network,
    pub report: BuildReport,
}

/// N = ceil(log2 eps^{-1/beta}), clamped to >= 1; the construction level.
pub fn choose_level(eps: f64, beta: f64) -> u32 {
    assert!(eps > 0.0 && eps < 0.5 && beta > 0.0);
    let t = (1.0 / eps).log2() / beta;
    let n = (t - 1e-9).ceil().max(1.0);
    let pow = 2f64.powf(n);
    let target = eps.powf(-1.0 / beta);
    debug_assert!(pow >= target * (1.0 - 1e-8));
    debug_assert!(pow <= 2.0 * target * (1.0 + 1e-8));
    n as u32
}

/// Accuracy-independent depth cap for the assembled network in fixed mode.
pub fn depth_cap(beta: f64, d: usize) -> f64 {
    7.0 + (1.0 + beta.log2().ceil().max(0.0)) * (11.0 + beta / d as f64)
}

/// Shell-decay acceptance for a candidate offset: regression of log2 shell
/// mass against N in 2..=6 must have slope <= -p*beta*0.7. Offsets whose
/// shells the measure never hits at all are trivially good.
fn offset_diagnostic(
    offset: &[f64],
    shell_exponent: f64,
    mu: &Measure,
    p: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<(bool, f64)> {
    let floor = mu.total_mass * 0.5 / samples as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 2..=6u32 {
        let part = DyadicPartition::new(offset.to_vec(), n, shell_exponent)?;
        let est = part.shell_mass(mu, samples, exec::derive_seed(seed, n as u64))?;
        // levels without hits only witness decay too fast to resolve;
        // keeping them would flatten the regression artificially
        if est.value > 1.5 * floor {
            xs.push(n as f64);
            ys.push(est.value.log2());
        }
    }
    if xs.len() < 2 {
        return Ok((true, f64::NEG_INFINITY));
    }
    let slope = least_squares_slope(&xs, &ys);
    Ok((slope <= -p * beta * 0.7 + 1e-9, slope))
}

/// Scan-grid resolution per axis for sup-norm diagnostics, scaled down for
/// very large networks so a single diagnostic never dominates the build.
fn sup_grid_pts(d: usize, weights: usize) -> usize {
    let base: usize = match d {
        1 => 1024,
        2 => 33,
        _ => 9,
    };
    if weights > 2_000_000 {
        (base / 8).max(3)
    } else if weights > 200_000 {
        (base / 4).max(5)
    } else {
        base
    }
}

pub fn build(req: &BuildRequest) -> Result<BuildOutcome> {
    let start = Instant::now();
    let f = &req.f;
    let d = f.dim;
    if !(req.eps > 0.0 && req.eps < 0.5) || !(req.p >= 1.0) {
        return Err(ApproxError::InvalidSpec(format!(
            "need eps in (0, 1/2) and p >= 1, got ({}, {})",
            req.eps, req.p
        )));
    }
    if req.mu.dim != d {
        return Err(ApproxError::DimensionMismatch {
            expected: d,
            got: req.mu.dim,
        });
    }
    let beta = f.beta;
    let level = choose_level(req.eps, beta);
    let shell_exponent = d as f64 + 1.0 + req.p * beta;

    // offset rejection loop: redraw until the shell-decay diagnostic passes
    let mut chosen = None;
    let mut worst_slope = f64::INFINITY;
    let mut attempts = 0;
    for attempt in 0..20u64 {
        attempts = attempt as usize + 1;
        let offset = draw_offset(d, exec::derive_seed(req.seed, 100 + attempt));
        let (ok, slope) = offset_diagnostic(
            &offset,
            shell_exponent,
            &req.mu,
            req.p,
            beta,
            20_000,
            exec::derive_seed(req.seed, 200 + attempt),
        )?;
        worst_slope = worst_slope.min(slope);
        if ok {
            chosen = Some((offset, slope));
            break;
        }
    }
    let (offset, shell_slope) = chosen.ok_or(ApproxError::OffsetRejection {
        attempts,
        worst_slope,
    })?;

    let partition = DyadicPartition::new(offset.clone(), level, shell_exponent)?;
    let active = partition.active_cubes();
    let m = active.len();

    // Taylor coefficients at each anchor, in parallel
    let coeff_results =
        exec::map_indexed(m, |l| taylor_coefficients(f, &active[l].1, req.eps / 4.0));
    let mut coefficients = Vec::with_capacity(m);
    for r in coeff_results {
        coefficients.push(r?);
    }
    let max_abs_c = coefficients
        .iter()
        .flat_map(|cs| cs.iter().map(|(_, c)| c.abs()))
        .fold(0.0, f64::max);
    let family = PolynomialFamily {
        centers: active.iter().map(|(_, a)| a.clone()).collect(),
        coefficients,
        beta,
        bound: f.holder_bound.max(max_abs_c) * (1.0 + 1e-12),
    };

    // polynomial stage at accuracy eps/4, then clamp bound for localization
    let phi = polynomial_family_net(&family, req.eps / 4.0, &req.depth_budget)?;
    let coeff_sum = family
        .coefficients
        .iter()
        .map(|cs| cs.iter().map(|(_, c)| c.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let b_prime = (req.eps / 4.0 + coeff_sum).max(1.0);

    // X: (x, Phi_1(x), ..., Phi_m(x)); x passes through relu(x + 1/2) - 1/2
    let all: Vec<usize> = (0..d).collect();
    let x_stage = stack_with_maps(
        vec![Network::shifted_identity(d, phi.depth(), 0.5), phi],
        d,
        &[all.clone(), all.clone()],
    )?;

    // one localization gadget per cube, fed (x, Phi_l(x))
    let shell_width = partition.shell_width();
    let loc_results = exec::map_indexed(m, |l| {
        let cube = partition.cube(&active[l].0);
        localization_net(&cube, shell_width, b_prime)
    });
    let mut locs = Vec::with_capacity(m);
    for r in loc_results {
        locs.push(r?);
    }
    let maps: Vec<Vec<usize>> = (0..m)
        .map(|l| {
            let mut map = all.clone();
            map.push(d + l);
            map
        })
        .collect();
    let loc_stage = stack_with_maps(locs, d + m, &maps)?;
    let summed = sum_outputs(&compose(&loc_stage, &x_stage)?, &vec![1.0; m])?;

    let cap = match req.depth_budget.mode {
        DepthMode::Fixed => {
            let cap = depth_cap(beta, d);
            if (summed.depth() as f64) > cap {
                return Err(ApproxError::BudgetTooSmall {
                    budget: cap.floor() as usize,
                    needed: summed.depth(),
                });
            }
            Some(cap)
        }
        DepthMode::Log => None,
    };

    let pre_quant = summed.complexity();
    let weight_range_s = (pre_quant.max_abs_weight.max(1.0).ln() / (1.0 / req.eps).ln())
        .ceil()
        .max(1.0) as u32;

    // quantization: round every weight onto the (s, eps) grid
    let (network, quantization) = match req.quantize {
        QuantizeMode::Off => (summed, None),
        QuantizeMode::Fixed(s) => {
            let q = quantize(&summed, s, req.eps)?;
            let pts = sup_grid_pts(d, pre_quant.weights);
            let dev = sup_distance(
                |x: &[f64]| summed.realize(x).expect("assembled net evaluates")[0],
                |x: &[f64]| q.realize(x).expect("quantized net evaluates")[0],
                d,
                pts,
            );
            let info = QuantizationInfo {
                s,
                eps: req.eps,
                sup_deviation: dev,
                within_eps: dev <= req.eps,
            };
            (q, Some(info))
        }
        QuantizeMode::Adaptive => {
            let pts = sup_grid_pts(d, pre_quant.weights);
            let mut picked = None;
            for s in weight_range_s..=16 {
                let q = match quantize(&summed, s, req.eps) {
                    Ok(q) => q,
                    Err(_) => continue,
                };
                let dev = sup_distance(
                    |x: &[f64]| summed.realize(x).expect("assembled net evaluates")[0],
                    |x: &[f64]| q.realize(x).expect("quantized net evaluates")[0],
                    d,
                    pts,
                );
                let done = dev <= req.eps;
                picked = Some((
                    q,
                    QuantizationInfo {
                        s,
                        eps: req.eps,
                        sup_deviation: dev,
                        within_eps: done,
                    },
                ));
                if done {
                    break;
                }
            }
            let (q, info) = picked.ok_or(ApproxError::QuantizeRange {
                layer: 0,
                value: pre_quant.max_abs_weight,
                limit: req.eps.powi(-16),
            })?;
            (q, Some(info))
        }
    };
    if let Some(info) = &quantization {
        debug_assert!(is_quantized(&network, info.s, req.eps));
    }

    let lp_error = lp_distance(
        |x: &[f64]| f.eval(x),
        |x: &[f64]| network.realize(x).expect("assembled net evaluates")[0],
        &req.mu,
        req.p,
        req.samples,
        exec::derive_seed(req.seed, 3),
    )?;
    let complexity = network.complexity();
    let sup_lower_bound = sup_distance(
        |x: &[f64]| f.eval(x),
        |x: &[f64]| network.realize(x).expect("assembled net evaluates")[0],
        d,
        sup_grid_pts(d, complexity.weights),
    );

    let report = BuildReport {
        function: f.name.clone(),
        measure: req.mu.name.clone(),
        eps: req.eps,
        p: req.p,
        beta,
        level,
        cube_count: m,
        offset,
        offset_attempts: attempts,
        shell_slope,
        b_prime,
        complexity,
        weight_range_s,
        lp_error,
        sup_lower_bound,
        quantization,
        depth_cap: cap,
        build_seconds: start.elapsed().as_secs_f64(),
        seed: req.seed,
    };
    Ok(BuildOutcome { network, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::builtin_target;
    use rand::Rng;

    fn uniform(d: usize) -> Measure {
        Measure::uniform(d).unwrap()
    }

    #[test]
    fn level_examples() {
        assert_eq!(choose_level(2f64.powi(-8), 2.0), 4);
        assert_eq!(choose_level(0.3, 1.0), 2);
    }

    #[test]
    fn level_bracket_random() {
        let mut rng = exec::chunk_rng(1, 0);
        for _ in 0..1000 {
            let eps = rng.gen_range(1e-4..0.5);
            let beta = rng.gen_range(0.3..4.0);
            let n = choose_level(eps, beta) as f64;
            let target = eps.powf(-1.0 / beta);
            let pow = 2f64.powf(n);
            assert!(
                pow >= target * (1.0 - 1e-8) && pow <= 2.0 * target.max(1.0) * (1.0 + 1e-8),
                "eps {eps} beta {beta}: 2^{n} vs {target}"
            );
        }
    }

    #[test]
    fn zero_target_builds_to_zero() {
        for beta in [1.0, 3.0] {
            let f = builtin_target("zero", 1, beta, 1.0).unwrap();
            let req = BuildRequest::new(f, 2f64.powi(-4), 2.0, uniform(1));
            let out = build(&req).unwrap();
            assert!(out.report.lp_error.value <= 1e-9, "beta {beta}");
            let mut rng = exec::chunk_rng(5, 0);
            for _ in 0..100 {
                let x = [rng.gen_range(-0.5..0.5)];
                assert!(out.network.realize(&x).unwrap()[0].abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn linear_target_error_and_size() {
        let f = builtin_target("poly(0,1)", 1, 1.0, 1.0).unwrap();
        let eps = 2f64.powi(-6);
        let req = BuildRequest::new(f, eps, 2.0, uniform(1));
        let out = build(&req).unwrap();
        // error within a modest constant times eps; W within a constant times 1/eps
        assert!(
            out.report.lp_error.value <= 4.0 * eps,
            "{:?}",
            out.report.lp_error
        );
        assert!(out.report.complexity.weights <= 60 * 64);
        assert_eq!(out.report.level, 6);
    }

    #[test]
    fn smooth_2d_error_tracks_eps() {
        let mut ratios = Vec::new();
        for j in 3..=5 {
            let f = builtin_target("sinprod", 2, 2.0, 10.0).unwrap();
            let eps = 2f64.powi(-j);
            let mut req = BuildRequest::new(f, eps, 2.0, uniform(2));
            req.samples = 2000;
            let out = build(&req).unwrap();
            ratios.push(out.report.lp_error.value / eps);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max / min.max(1e-9) <= 10.0 || max <= 1.0,
            "ratios {ratios:?}"
        );
    }

    #[test]
    fn localization_coverage_invariant() {
        // on points away from every cube shell, the assembled sum equals the
        // local polynomial branch within eps/4 plus float slack
        let f = builtin_target("sinprod", 1, 2.0, 10.0).unwrap();
        let eps = 2f64.powi(-5);
        let req = BuildRequest::new(f.clone(), eps, 2.0, uniform(1));
        let out = build(&req).unwrap();
        let partition =
            DyadicPartition::new(out.report.offset.clone(), out.report.level, 2.0 + 2.0 * 2.0)
                .unwrap();
        let active = partition.active_cubes();
        let anchor_of = |omega: &[u32]| {
            active
                .iter()
                .find(|(w, _)| w == omega)
                .map(|(_, a)| a.clone())
        };
        let mut rng = exec::chunk_rng(9, 0);
        let mut interior_checked = 0;
        for _ in 0..10_000 {
            let x = [rng.gen_range(-0.5..0.5)];
            let omega = partition.locate(&x).unwrap();
            if partition.in_shell(&x).unwrap() {
                continue;
            }
            let anchor = anchor_of(&omega).expect("located cube is active");
            let coeffs = taylor_coefficients(&f, &anchor, eps / 4.0).unwrap();
            let p_val = crate::taylor::eval_taylor(&coeffs, &anchor, &x);
            let got = out.network.realize(&x).unwrap()[0];
            assert!(
                (got - p_val).abs() <= eps / 4.0 + 1e-9,
                "x {x:?}: {got} vs {p_val}"
            );
            interior_checked += 1;
        }
        assert!(interior_checked > 9000);
    }

    #[test]
    fn weights_monotone_in_accuracy() {
        let mut prev = 0;
        for j in 2..=6 {
            let f = builtin_target("poly(0,1)", 1, 1.0, 1.0).unwrap();
            let req = BuildRequest::new(f, 2f64.powi(-j), 2.0, uniform(1));
            let w = build(&req).unwrap().report.complexity.weights;
            assert!(w >= prev, "eps 2^-{j}: {w} < {prev}");
            prev = w;
        }
    }

    #[test]
    fn depth_constant_in_eps_fixed_mode() {
        let mut depths = Vec::new();
        for j in 2..=8 {
            let f = builtin_target("poly(0,0,0,0.5)", 1, 3.0, 2.0).unwrap();
            let req = BuildRequest::new(f, 2f64.powi(-j), 2.0, uniform(1));
            let out = build(&req).unwrap();
            assert!(out.report.complexity.depth as f64 <= out.report.depth_cap.unwrap());
            depths.push(out.report.complexity.depth);
        }
        assert!(depths.windows(2).all(|w| w[0] == w[1]), "depths {depths:?}");
    }

    #[test]
    fn quantized_build_properties() {
        let f = builtin_target("sinprod", 1, 2.0, 10.0).unwrap();
        let eps = 2f64.powi(-4);
        let mut req = BuildRequest::new(f, eps, 2.0, uniform(1));
        req.quantize = QuantizeMode::Adaptive;
        let out = build(&req).unwrap();
        let info = out.report.quantization.unwrap();
        assert!(is_quantized(&out.network, info.s, eps));
        assert!(info.within_eps, "deviation {} > {eps}", info.sup_deviation);

        // quantized error degrades by at most eps + CI width vs unquantized
        let mut plain = BuildRequest::new(
            builtin_target("sinprod", 1, 2.0, 10.0).unwrap(),
            eps,
            2.0,
            uniform(1),
        );
        plain.samples = req.samples;
        let base = build(&plain).unwrap();
        assert!(
            out.report.lp_error.value
                <= base.report.lp_error.value + eps + base.report.lp_error.ci_width() + 1e-9
        );
    }

    #[test]
    fn invalid_requests_rejected() {
        let f = builtin_target("zero", 1, 1.0, 1.0).unwrap();
        let req = BuildRequest::new(f.clone(), 0.7, 2.0, uniform(1));
        assert!(build(&req).is_err());
        let req2 = BuildRequest::new(f, 0.1, 2.0, uniform(2));
        assert!(build(&req2).is_err());
    }
}
