//! Local Taylor expansion of Hölder-regular targets: coefficient extraction
//! at interior centers (derivative oracle or central finite differences)
//! and an empirical Hölder-remainder certificate, plus the built-in
//! target-function registry used by the CLI.

use std::sync::Arc;

use rand::Rng;

use crate::error::{ApproxError, Result};
use crate::exec;

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Deriv = Arc<dyn Fn(&[u32], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TargetFunction {
    pub name: String,
    pub dim: usize,
    /// Hölder exponent beta = n + sigma with n = ceil(beta) - 1.
    pub beta: f64,
    /// Declared bound on the C^beta norm; trusted, certifiable via
    /// [`taylor_remainder_check`].
    pub holder_bound: f64,
    eval: Eval,
    deriv: Option<Deriv>,
}

impl std::fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("holder_bound", &self.holder_bound)
            .field("has_oracle", &self.deriv.is_some())
            .finish()
    }
}

impl TargetFunction {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        beta: f64,
        holder_bound: f64,
        eval: Eval,
        deriv: Option<Deriv>,
    ) -> Result<Self> {
        if dim == 0 || !(beta > 0.0) || !(holder_bound > 0.0) {
            return Err(ApproxError::InvalidSpec(
                "target needs d >= 1, beta > 0, bound > 0".into(),
            ));
        }
        Ok(TargetFunction {
            name: name.into(),
            dim,
            beta,
            holder_bound,
            eval,
            deriv,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Taylor order n = ceil(beta) - 1.
    pub fn order(&self) -> u32 {
        (self.beta.ceil() - 1.0).max(0.0) as u32
    }

    pub fn has_oracle(&self) -> bool {
        self.deriv.is_some()
    }

    /// Partial derivative d^alpha f, from the oracle or by recursive central
    /// differences with step h (the stencil spans |alpha| * h around x).
    fn derivative(&self, alpha: &[u32], x: &[f64], h: f64) -> f64 {
        if let Some(oracle) = &self.deriv {
            return oracle(alpha, x);
        }
        match alpha.iter().position(|&a| a > 0) {
            None => self.eval(x),
            Some(i) => {
                let mut sub = alpha.to_vec();
                sub[i] -= 1;
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (self.derivative(&sub, &xp, h) - self.derivative(&sub, &xm, h)) / (2.0 * h)
            }
        }
    }
}

/// All multi-indices of dimension d with total degree <= max_total, ordered
/// by total degree, then lexicographically. Deterministic.
pub fn multi_indices(d: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn fill(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if d == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            fill(d - 1, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=max_total {
        fill(d, total, &mut Vec::new(), &mut out);
    }
    out
}

fn multi_factorial(alpha: &[u32]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a as u64).product::<u64>() as f64)
        .product()
}

/// Taylor coefficients c_alpha = d^alpha f(center)/alpha! for |alpha| <= n.
/// `eps_target` tunes the finite-difference step when no oracle is present:
/// h = min(eps_target^{1/beta}, dist(center, boundary)) / (2n + 2).
pub fn taylor_coefficients(
    f: &TargetFunction,
    center: &[f64],
    eps_target: f64,
) -> Result<Vec<(Vec<u32>, f64)>> {
    if center.len() != f.dim {
        return Err(ApproxError::DimensionMismatch {
            expected: f.dim,
            got: center.len(),
        });
    }
    let boundary_dist = center
        .iter()
        .map(|c| 0.5 - c.abs())
        .fold(f64::INFINITY, f64::min);
    if !(boundary_dist > 0.0) {
        return Err(ApproxError::CenterOnBoundary);
    }
    let n = f.order();
    let h = eps_target.abs().powf(1.0 / f.beta).min(boundary_dist) / (2.0 * n as f64 + 2.0);
    multi_indices(f.dim, n)
        .into_iter()
        .map(|alpha| {
            let val = f.derivative(&alpha, center, h) / multi_factorial(&alpha);
            if !val.is_finite() {
                return Err(ApproxError::NonFiniteValue(center.to_vec()));
            }
            Ok((alpha, val))
        })
        .collect()
}

/// Evaluates sum_alpha c_alpha (x - center)^alpha.
pub fn eval_taylor(coeffs: &[(Vec<u32>, f64)], center: &[f64], x: &[f64]) -> f64 {
    coeffs
        .iter()
        .map(|(alpha, c)| {
            let mono: f64 = alpha
                .iter()
                .enumerate()
                .map(|(i, &a)| (x[i] - center[i]).powi(a as i32))
                .product();
            c * mono
        })
        .sum()
}

/// Max empirical Hölder quotient |f(x) - p(x)| / |x - center|^beta over
/// random probes in Q; certifies a declared (beta, B) pair empirically.
pub fn taylor_remainder_check(
    f: &TargetFunction,
    center: &[f64],
    coeffs: &[(Vec<u32>, f64)],
    probes: usize,
    seed: u64,
) -> f64 {
    assert!(probes >= 100);
    let chunks = probes.div_ceil(exec::CHUNK);
    let maxima = exec::map_indexed(chunks, |c| {
        let mut rng = exec::chunk_rng(seed, c as u64);
        let len = if c + 1 == chunks && !probes.is_multiple_of(exec::CHUNK) {
            probes % exec::CHUNK
        } else {
            exec::CHUNK
        };
        let mut worst = 0.0f64;
        for _ in 0..len {
            let x: Vec<f64> = (0..f.dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let dist: f64 = x
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < 1e-9 {
                continue;
            }
            let rem = (f.eval(&x) - eval_taylor(coeffs, center, &x)).abs();
            worst = worst.max(rem / dist.powf(f.beta));
        }
        worst
    });
    maxima.into_iter().fold(0.0, f64::max)
}

/// k-th derivative of exp(-x^2 / (2 sigma^2)) via the polynomial recursion
/// p_{k+1} = p_k' - (x / sigma^2) p_k for f^{(k)} = p_k(x) exp(...).
fn gauss_1d_deriv(k: u32, x: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let mut p = vec![1.0]; // coefficients, low degree first
    for _ in 0..k {
        let mut next = vec![0.0; p.len() + 1];
        for (j, &c) in p.iter().enumerate() {
            if j >= 1 {
                next[j - 1] += c * j as f64; // derivative term
            }
            next[j + 1] -= c / s2; // -x/s2 * p term
        }
        p = next;
    }
    let poly: f64 = p.iter().rev().fold(0.0, |acc, &c| acc * x + c);
    poly * (-x * x / (2.0 * s2)).exp()
}

/// Builds a registry target. Specs: `zero`, `poly(c0,c1,...)` (univariate in
/// the coordinate mean), `sinprod`, `gauss(sigma)`, `cusp` or
/// `cusp(c1:...:cd)` (uses the declared beta), `tabulated(path)` (d = 1,
/// piecewise-linear, beta <= 1).
pub fn builtin_target(spec: &str, d: usize, beta: f64, bound: f64) -> Result<TargetFunction> {
    let spec = spec.trim();
    let (name, args) = match spec.find('(') {
        None => (spec, Vec::new()),
        Some(i) => {
            let inner = spec[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| ApproxError::InvalidSpec(format!("unbalanced parens: {spec}")))?;
            (
                &spec[..i],
                inner
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .collect::<Vec<_>>(),
            )
        }
    };
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| ApproxError::InvalidSpec(format!("bad number '{s}': {e}")))
    };
    match name {
        "zero" => TargetFunction::new(
            spec,
            d,
            beta,
            bound,
            Arc::new(|_| 0.0),
            Some(Arc::new(|_, _| 0.0)),
        ),
        "poly" => {
            if args.is_empty() {
                return Err(ApproxError::InvalidSpec("poly needs coefficients".into()));
            }
            let coeffs: Vec<f64> = args.iter().map(|s| num(s)).collect::<Result<_>>()?;
            let c_eval = coeffs.clone();
            let c_der = coeffs;
            let dd = d as f64;
            TargetFunction::new(
                spec,
                d,
                beta,
                bound,
                Arc::new(move |x: &[f64]| {
                    let s = x.iter().sum::<f64>() / dd;
                    c_eval.iter().rev().fold(0.0, |acc, &c| acc * s + c)
                }),
                Some(Arc::new(move |alpha: &[u32], x: &[f64]| {
                    let s = x.iter().sum::<f64>() / dd;
                    let k = alpha.iter().sum::<u32>() as usize;
                    // k-th derivative of the univariate polynomial, then the
                    // chain rule gives a factor d^-k
                    let mut g = 0.0;
                    for (j, &c) in c_der.iter().enumerate().skip(k) {
                        let fall: f64 = (j - k + 1..=j).map(|v| v as f64).product();
                        g += c * fall * s.powi((j - k) as i32);
                    }
                    g / dd.powi(k as i32)
                })),
            )
        }
        "sinprod" => TargetFunction::new(
            spec,
            d,
            beta,
            bound,
            Arc::new(|x: &[f64]| {
                x.iter()
                    .map(|&v| (std::f64::consts::PI * v).sin())
                    .product()
            }),
            Some(Arc::new(|alpha: &[u32], x: &[f64]| {
                let pi = std::f64::consts::PI;
                alpha
                    .iter()
                    .zip(x)
                    .map(|(&a, &v)| pi.powi(a as i32) * (pi * v + a as f64 * pi / 2.0).sin())
                    .product()
            })),
        ),
        "gauss" => {
            let sigma = if args.is_empty() { 0.3 } else { num(&args[0])? };
            if !(sigma > 0.0) {
                return Err(ApproxError::InvalidSpec("gauss needs sigma > 0".into()));
            }
            TargetFunction::new(
                spec,
                d,
                beta,
                bound,
                Arc::new(move |x: &[f64]| {
                    (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp()
                }),
                Some(Arc::new(move |alpha: &[u32], x: &[f64]| {
                    alpha
                        .iter()
                        .zip(x)
                        .map(|(&a, &v)| gauss_1d_deriv(a, v, sigma))
                        .product()
                })),
            )
        }
        "cusp" => {
            let center: Vec<f64> = if args.is_empty() {
                vec![0.0; d]
            } else {
                args[0].split(':').map(num).collect::<Result<_>>()?
            };
            if center.len() != d {
                return Err(ApproxError::DimensionMismatch {
                    expected: d,
                    got: center.len(),
                });
            }
            TargetFunction::new(
                spec,
                d,
                beta,
                bound,
                Arc::new(move |x: &[f64]| {
                    x.iter()
                        .zip(&center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        .powf(beta)
                }),
                None,
            )
        }
        "tabulated" => {
            if args.len() != 1 {
                return Err(ApproxError::InvalidSpec("tabulated needs a path".into()));
            }
            if d != 1 {
                return Err(ApproxError::InvalidSpec(
                    "tabulated targets support d = 1 only".into(),
                ));
            }
            if beta > 1.0 {
                return Err(ApproxError::InvalidSpec(
                    "tabulated interpolants are Lipschitz at best: beta <= 1 required".into(),
                ));
            }
            let text = std::fs::read_to_string(&args[0])?;
            let mut pts: Vec<(f64, f64)> = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                    continue;
                }
                let mut it = line.split(',').map(str::trim);
                let x = num(it.next().unwrap_or(""))?;
                let v = num(it.next().unwrap_or(""))?;
                pts.push((x, v));
            }
            if pts.len() < 2 {
                return Err(ApproxError::InvalidSpec("tabulated needs >= 2 rows".into()));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            TargetFunction::new(
                spec,
                1,
                beta,
                bound,
                Arc::new(move |x: &[f64]| {
                    let t = x[0];
                    let i = pts
                        .partition_point(|(px, _)| *px < t)
                        .clamp(1, pts.len() - 1);
                    let (x0, y0) = pts[i - 1];
                    let (x1, y1) = pts[i];
                    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
                }),
                None,
            )
        }
        _ => Err(ApproxError::InvalidSpec(format!(
            "unknown target spec: {spec}"
        ))),
    }
}
