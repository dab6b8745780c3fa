//! Rate studies: sweep builds over a decreasing accuracy list, fit the
//! weight-count growth exponent on a log-log scale, and render CSV/SVG
//! artifacts plus a depth-cap assertion record.

use serde::{Deserialize, Serialize};

use crate::assembler::{build, depth_cap, BuildRequest, QuantizeMode};
use crate::error::{ApproxError, Result};
use crate::exec;
use crate::measures::Measure;
use crate::partition::least_squares_slope;
use crate::primitives::{DepthBudget, DepthMode};
use crate::taylor::TargetFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub eps: f64,
    pub n_level: u32,
    pub m_cubes: usize,
    pub depth: usize,
    pub neurons: usize,
    pub weights: usize,
    pub lp_error: f64,
    pub lp_ci: f64,
    pub sup_lb: f64,
    pub quant_s: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of log2(weights) against log2(1/eps).
    pub slope: f64,
    pub intercept: f64,
    /// Build failure that aborted the sweep, if any; rows up to the failure
    /// are still populated.
    pub aborted: Option<String>,
}

/// Slope and intercept of log2(w) against log2(1/eps).
pub fn fit_loglog(eps: &[f64], w: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).log2()).collect();
    let ys: Vec<f64> = w.iter().map(|v| v.log2()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    (slope, my - slope * mx)
}

pub struct RateStudyConfig {
    pub f: TargetFunction,
    pub mu: Measure,
    pub p: f64,
    pub eps_list: Vec<f64>,
    pub depth_budget: DepthBudget,
    pub quantize: QuantizeMode,
    pub samples: usize,
    pub seed: u64,
}

pub fn rate_study(cfg: &RateStudyConfig) -> Result<RateStudy> {
    if cfg.eps_list.len() < 4 || cfg.eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ApproxError::InvalidSpec(
            "rate study needs >= 4 strictly decreasing eps values".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut aborted = None;
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let req = BuildRequest {
            f: cfg.f.clone(),
            eps,
            p: cfg.p,
            mu: cfg.mu.clone(),
            depth_budget: cfg.depth_budget,
            quantize: cfg.quantize,
            samples: cfg.samples,
            seed: exec::derive_seed(cfg.seed, i as u64),
        };
        match build(&req) {
            Ok(out) => {
                let r = &out.report;
                rows.push(RateRow {
                    eps,
                    n_level: r.level,
                    m_cubes: r.cube_count,
                    depth: r.complexity.depth,
                    neurons: r.complexity.neurons,
                    weights: r.complexity.weights,
                    lp_error: r.lp_error.value,
                    lp_ci: r.lp_error.ci_width(),
                    sup_lb: r.sup_lower_bound,
                    quant_s: r.quantization.as_ref().map(|q| q.s),
                });
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let (slope, intercept) = if rows.len() >= 2 {
        let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.weights as f64).collect();
        fit_loglog(&eps, &w)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RateStudy {
        rows,
        slope,
        intercept,
        aborted,
    })
}

pub fn study_csv(study: &RateStudy) -> String {
    let mut out =
        String::from("eps,N_level,m_cubes,depth,neurons,weights,lp_error,lp_ci,sup_lb,quant_s\n");
    for r in &study.rows {
        let quant = r.quant_s.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.eps,
            r.n_level,
            r.m_cubes,
            r.depth,
            r.neurons,
            r.weights,
            r.lp_error,
            r.lp_ci,
            r.sup_lb,
            quant
        ));
    }
    out
}

/// Self-contained log-log scatter of weights against 1/eps with the fitted
/// line; no external assets.
pub fn study_svg(study: &RateStudy) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 60.0);
    let xs: Vec<f64> = study.rows.iter().map(|r| (1.0 / r.eps).log2()).collect();
    let ys: Vec<f64> = study
        .rows
        .iter()
        .map(|r| (r.weights as f64).log2())
        .collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" font-family="monospace" font-size="12">
<rect width="{w}" height="{h}" fill="white"/>
<line x1="{ml}" y1="{yax}" x2="{xr}" y2="{yax}" stroke="black"/>
<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{yax}" stroke="black"/>
<text x="{xmid}" y="{xlab}" text-anchor="middle">log2(1/eps)</text>
<text x="18" y="{ymid}" text-anchor="middle" transform="rotate(-90 18 {ymid})">log2(weights)</text>
"#,
        yax = h - mb,
        xr = w - mr,
        xmid = (ml + w - mr) / 2.0,
        xlab = h - 20.0,
        ymid = (mt + h - mb) / 2.0,
    );
    for (x, y) in xs.iter().zip(&ys) {
        svg.push_str(&format!(
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/>"#,
            px(*x),
            py(*y)
        ));
        svg.push('\n');
    }
    if study.slope.is_finite() {
        let ya = study.intercept + study.slope * x0;
        let yb = study.intercept + study.slope * x1;
        svg.push_str(&format!(
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-dasharray="5 3"/>
<text x="{:.2}" y="{:.2}" fill="crimson">slope {:.3}</text>
"#,
            px(x0),
            py(ya.clamp(y0, y1)),
            px(x1),
            py(yb.clamp(y0, y1)),
            ml + 10.0,
            mt + 15.0,
            study.slope
        ));
    }
    // axis tick labels at the extremes
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        svg.push_str(&format!(
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{x:.1}</text>"#,
            px(x),
            h - mb + 18.0
        ));
        svg.push('\n');
    }
    for y in [y0, y1] {
        svg.push_str(&format!(
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text>"#,
            ml - 6.0,
            py(y) + 4.0
        ));
        svg.push('\n');
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthReport {
    pub cap: f64,
    pub observed: Vec<usize>,
    pub constant: bool,
    pub within_cap: bool,
}

/// Asserts the depth contract over a study: constant in eps (fixed mode)
/// and below the fixed-mode cap. Errors list the offending rows.
pub fn depth_report(
    study: &RateStudy,
    beta: f64,
    d: usize,
    mode: DepthMode,
) -> Result<DepthReport> {
    if study.rows.len() < 2 {
        return Err(ApproxError::InvalidSpec(
            "depth report needs >= 2 rows".into(),
        ));
    }
    let cap = depth_cap(beta, d);
    let observed: Vec<usize> = study.rows.iter().map(|r| r.depth).collect();
    let constant = observed.windows(2).all(|w| w[0] == w[1]);
    let within_cap = observed.iter().all(|&l| (l as f64) <= cap);
    let report = DepthReport {
        cap,
        observed: observed.clone(),
        constant,
        within_cap,
    };
    if mode == DepthMode::Fixed && (!constant || !within_cap) {
        let offenders: Vec<String> = study
            .rows
            .iter()
            .filter(|r| (r.depth as f64) > cap || r.depth != study.rows[0].depth)
            .map(|r| format!("eps={} depth={}", r.eps, r.depth))
            .collect();
        return Err(ApproxError::InvalidSpec(format!(
            "depth contract violated (cap {cap}): {}",
            offenders.join("; ")
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::builtin_target;

    fn small_study(seed: u64) -> RateStudy {
        let cfg = RateStudyConfig {
            f: builtin_target("poly(0,1)", 1, 1.0, 1.0).unwrap(),
            mu: Measure::uniform(1).unwrap(),
            p: 2.0,
            eps_list: (2..=5).map(|j| 2f64.powi(-j)).collect(),
            depth_budget: DepthBudget::default_fixed(1.0, 1),
            quantize: QuantizeMode::Off,
            samples: 1000,
            seed,
        };
        rate_study(&cfg).unwrap()
    }

    #[test]
    fn synthetic_slope_recovered_exactly() {
        let eps: Vec<f64> = (1..=6).map(|j| 2f64.powi(-j)).collect();
        let w: Vec<f64> = eps.iter().map(|e| 3.7 * e.powf(-1.4)).collect();
        let (slope, _) = fit_loglog(&eps, &w);
        assert!((slope - 1.4).abs() < 1e-10);
    }

    #[test]
    fn linear_rate_study_slope_and_rows() {
        let study = small_study(11);
        assert_eq!(study.rows.len(), 4);
        assert!(study.aborted.is_none());
        assert!((0.7..=1.3).contains(&study.slope), "slope {}", study.slope);
        let csv = study_csv(&study);
        assert!(csv.starts_with("eps,N_level,m_cubes,depth"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn determinism_byte_for_byte() {
        let a = small_study(21);
        let b = small_study(21);
        assert_eq!(study_csv(&a), study_csv(&b));
        assert_eq!(study_svg(&a), study_svg(&b));
    }

    #[test]
    fn depth_report_constant_and_capped() {
        let study = small_study(31);
        let report = depth_report(&study, 1.0, 1, DepthMode::Fixed).unwrap();
        assert!(report.constant && report.within_cap);
        assert_eq!(report.cap, 7.0 + 12.0);
    }

    #[test]
    fn depth_report_flags_violation() {
        let mut study = small_study(41);
        study.rows[0].depth = 99;
        assert!(depth_report(&study, 1.0, 1, DepthMode::Fixed).is_err());
    }

    #[test]
    fn svg_is_self_contained() {
        let svg = study_svg(&small_study(51));
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("href"));
        assert!(svg.contains("slope"));
    }

    #[test]
    fn bad_eps_list_rejected() {
        let cfg = RateStudyConfig {
            f: builtin_target("zero", 1, 1.0, 1.0).unwrap(),
            mu: Measure::uniform(1).unwrap(),
            p: 2.0,
            eps_list: vec![0.25, 0.25, 0.125, 0.0625],
            depth_budget: DepthBudget::log(),
            quantize: QuantizeMode::Off,
            samples: 1000,
            seed: 0,
        };
        assert!(rate_study(&cfg).is_err());
    }
}
