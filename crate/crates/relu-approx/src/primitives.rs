//! ReLU building blocks: sawtooth compositions, the sawtooth-series squaring
//! network, polarization-based multiplication, and networks realizing whole
//! families of shifted polynomials uniformly on Q = [-1/2, 1/2]^d.
//!
//! Every constructor honors a depth budget: in `Log` mode the depth grows
//! with the accuracy, in `Fixed` mode the sawtooth compositions are flattened
//! into wider single layers so the depth never exceeds (and, for the chained
//! squaring circuit, exactly equals) the budget.

use std::collections::HashMap;

use crate::error::{ApproxError, Result};
use crate::network::{compose, extend_to_depth, stack_with_maps, Layer, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMode {
    Fixed,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthBudget {
    pub mode: DepthMode,
    pub max_depth: Option<usize>,
}

impl DepthBudget {
    pub fn log() -> Self {
        DepthBudget {
            mode: DepthMode::Log,
            max_depth: None,
        }
    }

    pub fn fixed(max_depth: usize) -> Self {
        DepthBudget {
            mode: DepthMode::Fixed,
            max_depth: Some(max_depth),
        }
    }

    /// Default fixed budget `ceil(1 + (1 + ceil(log2 beta))(11 + beta/d))`.
    pub fn default_fixed(beta: f64, d: usize) -> Self {
        let cap = 1.0 + (1.0 + beta.log2().ceil().max(0.0)) * (11.0 + beta / d as f64);
        DepthBudget::fixed(cap.ceil() as usize)
    }

    fn fixed_depth(&self) -> Result<Option<usize>> {
        match self.mode {
            DepthMode::Log => Ok(None),
            DepthMode::Fixed => {
                let d = self.max_depth.ok_or_else(|| {
                    ApproxError::InvalidSpec("fixed budget requires max_depth".into())
                })?;
                if d < 4 {
                    return Err(ApproxError::BudgetTooSmall {
                        budget: d,
                        needed: 4,
                    });
                }
                Ok(Some(d))
            }
        }
    }
}

/// ReLU-sum coefficients of the flattened r-fold hat composition `g^r` on
/// its breakpoint grid j/2^r: `g^r(t) = sum_j K_j relu(t - j/2^r)`, exact
/// on all of R (identically 0 outside [0,1]).
fn hat_combo(r: u32) -> Vec<f64> {
    let n = 1usize << r;
    let lead = (n as f64) * 2.0;
    let mut k = vec![0.0; n + 1];
    k[0] = n as f64;
    for (j, kj) in k.iter_mut().enumerate().take(n).skip(1) {
        *kj = if j % 2 == 0 { lead } else { -lead };
    }
    k[n] = n as f64;
    k
}

/// Sawtooth block sizes for `m` hat compositions under a budget; never pads.
fn block_sizes(m: usize, budget: &DepthBudget) -> Result<Vec<u32>> {
    match budget.fixed_depth()? {
        None => Ok(vec![1; m]),
        Some(depth) => {
            let hidden = depth - 1;
            let r = m.div_ceil(hidden);
            if r > 24 {
                return Err(ApproxError::BudgetTooSmall {
                    budget: depth,
                    needed: m / 24 + 2,
                });
            }
            let blocks = m.div_ceil(r);
            let mut sizes = vec![r as u32; blocks - 1];
            sizes.push((m - r * (blocks - 1)) as u32);
            Ok(sizes)
        }
    }
}

/// Linear expression over the previous layer's units.
#[derive(Clone)]
struct Expr {
    terms: Vec<(usize, f64)>,
    bias: f64,
}

impl Expr {
    fn unit(col: usize) -> Self {
        Expr {
            terms: vec![(col, 1.0)],
            bias: 0.0,
        }
    }
}

/// The m-fold composition of the hat function g(t) = 2t on [0,1/2],
/// 2(1-t) on [1/2,1], 0 elsewhere: a sawtooth with 2^{m-1} teeth,
/// exactly ReLU-representable.
pub fn sawtooth(m: usize, budget: &DepthBudget) -> Result<Network> {
    assert!(m >= 1);
    let sizes = block_sizes(m, budget)?;
    let mut layers = Vec::with_capacity(sizes.len() + 1);
    let mut prev_width = 1usize;
    let mut expr = Expr::unit(0);
    for &r in &sizes {
        let units = (1usize << r) + 1;
        let mut layer = Layer::new(units, prev_width);
        for j in 0..units {
            for &(c, v) in &expr.terms {
                layer.push(j, c, v);
            }
            layer.bias[j] = expr.bias - j as f64 / (1u64 << r) as f64;
        }
        layers.push(layer);
        let combo = hat_combo(r);
        expr = Expr {
            terms: combo.into_iter().enumerate().collect(),
            bias: 0.0,
        };
        prev_width = units;
    }
    let mut last = Layer::new(1, prev_width);
    for &(c, v) in &expr.terms {
        last.push(0, c, v);
    }
    last.bias[0] = expr.bias;
    layers.push(last);
    Ok(Network {
        input_dim: 1,
        layers,
    })
}

/// Chained squaring circuit: realizes the piecewise-linear interpolant of
/// t^2 on the dyadic grid of level `m`, i.e. t - sum_{j=1}^m S_j(t)/4^j,
/// carrying the partial sum through a single nonnegative channel.
/// `sizes` may end in zero-blocks (pure carry layers) to pad the depth.
fn square_chain(m: usize, sizes: &[u32]) -> Network {
    let mut layers = Vec::with_capacity(sizes.len() + 1);
    let mut prev_width = 1usize;
    let mut s_expr = Expr::unit(0);
    let mut y_expr = Expr::unit(0);
    let mut done = 0usize;
    for &r in sizes {
        if r == 0 {
            // carry-only layer
            let mut layer = Layer::new(1, prev_width);
            for &(c, v) in &y_expr.terms {
                layer.push(0, c, v);
            }
            layer.bias[0] = y_expr.bias;
            layers.push(layer);
            y_expr = Expr::unit(0);
            prev_width = 1;
            continue;
        }
        let hats = (1usize << r) + 1;
        let carry = hats;
        let mut layer = Layer::new(hats + 1, prev_width);
        for j in 0..hats {
            for &(c, v) in &s_expr.terms {
                layer.push(j, c, v);
            }
            layer.bias[j] = s_expr.bias - j as f64 / (1u64 << r) as f64;
        }
        for &(c, v) in &y_expr.terms {
            layer.push(carry, c, v);
        }
        layer.bias[carry] = y_expr.bias;
        layers.push(layer);

        let combo = hat_combo(r);
        s_expr = Expr {
            terms: combo.into_iter().enumerate().collect(),
            bias: 0.0,
        };
        let mut y_acc: HashMap<usize, f64> = HashMap::new();
        y_acc.insert(carry, 1.0);
        for t in 1..=r {
            let kt = hat_combo(t);
            let scale = 4f64.powi(-((done + t as usize) as i32));
            for (i, k) in kt.iter().enumerate() {
                *y_acc.entry(i << (r - t)).or_insert(0.0) -= scale * k;
            }
        }
        let mut terms: Vec<(usize, f64)> = y_acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
        terms.sort_unstable_by_key(|(c, _)| *c);
        y_expr = Expr { terms, bias: 0.0 };
        done += r as usize;
        prev_width = hats + 1;
    }
    debug_assert_eq!(done, m);
    let mut last = Layer::new(1, prev_width);
    for &(c, v) in &y_expr.terms {
        last.push(0, c, v);
    }
    last.bias[0] = y_expr.bias;
    layers.push(last);
    Network {
        input_dim: 1,
        layers,
    }
}

/// Number of sawtooth terms needed for squaring accuracy `delta`.
pub fn square_terms(delta: f64) -> usize {
    ((1.0 / delta).log2() / 2.0 - 1e-9).ceil().max(1.0) as usize
}

/// 1-input network with `sup_{t in [0,1]} |q(t) - t^2| <= delta`.
/// In `Fixed` mode the depth equals the budget exactly, independent of delta.
pub fn square_net(delta: f64, budget: &DepthBudget) -> Result<Network> {
    assert!(delta > 0.0 && delta < 0.5);
    let m = square_terms(delta);
    let sizes = match budget.fixed_depth()? {
        None => vec![1u32; m],
        Some(depth) => {
            let hidden = depth - 1;
            let r = m.div_ceil(hidden);
            if r > 24 {
                return Err(ApproxError::BudgetTooSmall {
                    budget: depth,
                    needed: m / 24 + 2,
                });
            }
            let blocks = m.div_ceil(r);
            let mut sizes = vec![r as u32; blocks - 1];
            sizes.push((m - r * (blocks - 1)) as u32);
            sizes.resize(hidden, 0);
            sizes
        }
    };
    Ok(square_chain(m, &sizes))
}

/// 2-input network with `|net(u, v) - u v| <= delta` for u, v in [-M, M],
/// via the polarization identity uv = ((u+v)^2 - (u-v)^2)/4 over two
/// squaring circuits on range-normalized inputs.
pub fn multiply_net(range_bound: f64, delta: f64, budget: &DepthBudget) -> Result<Network> {
    assert!(range_bound >= 1.0);
    assert!(delta > 0.0 && delta < 0.5);
    let m = range_bound;
    let delta_q = (delta / (8.0 * m * m)).min(0.25);
    let sq = square_net(delta_q, budget)?;
    let depth = sq.depth();
    let id = Network::shifted_identity(1, depth, 0.0);
    let mid = stack_with_maps(vec![sq.clone(), sq, id], 3, &[vec![0], vec![1], vec![2]])?;

    // (u, v) -> (w1, w2, z) with w_i = (u +- v)/(4M) + 1/2 in [0,1], z = v + M >= 0
    let mut input = Layer::new(3, 2);
    let quarter = 1.0 / (4.0 * m);
    input.push(0, 0, quarter);
    input.push(0, 1, quarter);
    input.bias[0] = 0.5;
    input.push(1, 0, quarter);
    input.push(1, 1, -quarter);
    input.bias[1] = 0.5;
    input.push(2, 1, 1.0);
    input.bias[2] = m;
    let input = Network::affine(2, input);

    // uv ~ 4M^2 (q1 - q2) - 2M z + 2M^2
    let mut output = Layer::new(1, 3);
    output.push(0, 0, 4.0 * m * m);
    output.push(0, 1, -4.0 * m * m);
    output.push(0, 2, -2.0 * m);
    output.bias[0] = 2.0 * m * m;
    let output = Network::affine(3, output);

    compose(&output, &compose(&mid, &input)?)
}

#[derive(Debug, Clone)]
pub struct PolynomialFamily {
    /// Centers x_l in Q.
    pub centers: Vec<Vec<f64>>,
    /// Per center: list of (multi-index alpha, coefficient c_{l,alpha}).
    pub coefficients: Vec<Vec<(Vec<u32>, f64)>>,
    pub beta: f64,
    pub bound: f64,
}

impl PolynomialFamily {
    pub fn dim(&self) -> usize {
        self.centers.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.centers.len() != self.coefficients.len() {
            return Err(ApproxError::InvalidSpec(
                "empty or mismatched family".into(),
            ));
        }
        let max_total = (self.beta.ceil() - 1.0).max(0.0) as u32;
        for (l, (center, coeffs)) in self.centers.iter().zip(&self.coefficients).enumerate() {
            if center.iter().any(|c| c.abs() > 0.5) {
                return Err(ApproxError::InvalidSpec(format!("center {l} outside Q")));
            }
            for (alpha, c) in coeffs {
                if alpha.len() != center.len() {
                    return Err(ApproxError::InvalidSpec(
                        "multi-index arity mismatch".into(),
                    ));
                }
                if alpha.iter().sum::<u32>() > max_total {
                    return Err(ApproxError::InvalidSpec(format!(
                        "multi-index degree exceeds ceil(beta)-1 = {max_total}"
                    )));
                }
                if c.abs() > self.bound * (1.0 + 1e-12) {
                    return Err(ApproxError::CoefficientOutOfBound {
                        output: l,
                        value: *c,
                        bound: self.bound,
                    });
                }
            }
        }
        Ok(())
    }

    /// Evaluates output `l` directly: sum_alpha c_{l,alpha} (x - x_l)^alpha.
    pub fn evaluate(&self, l: usize, x: &[f64]) -> f64 {
        let center = &self.centers[l];
        self.coefficients[l]
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
}

/// Range headroom for the multiplication gadgets inside monomial trees:
/// every factor (x_i - x_{l,i}) and partial product lies in [-1, 1] up to
/// the tree's own approximation error, strictly inside [-M, M].
const TREE_RANGE: f64 = 1.25;

/// Balanced multiplication tree for one shifted monomial.
fn monomial_tree(
    factors: &[(usize, f64)],
    dim: usize,
    delta_node: f64,
    budget: &DepthBudget,
) -> Result<Network> {
    if factors.len() == 1 {
        let (i, shift) = factors[0];
        let mut l = Layer::new(1, dim);
        l.push(0, i, 1.0);
        l.bias[0] = -shift;
        return Ok(Network::affine(dim, l));
    }
    let mid = factors.len() / 2;
    let left = monomial_tree(&factors[..mid], dim, delta_node, budget)?;
    let right = monomial_tree(&factors[mid..], dim, delta_node, budget)?;
    let depth = left.depth().max(right.depth());
    // partial products are >= -(1 + slack), so a cheap shift-carry pad is exact
    let left = extend_to_depth(&left, depth, Some(2.0));
    let right = extend_to_depth(&right, depth, Some(2.0));
    let all: Vec<usize> = (0..dim).collect();
    let stacked = stack_with_maps(vec![left, right], dim, &[all.clone(), all])?;
    let mul = multiply_net(TREE_RANGE, delta_node, budget)?;
    compose(&mul, &stacked)
}

/// Per-multiplication depth in fixed mode: enough hidden layers that the
/// sawtooth chains stay narrow at desk-scale accuracies, capped by the
/// budget share per tree level.
fn mult_budget(budget: &DepthBudget, tree_levels: usize) -> Result<DepthBudget> {
    match budget.fixed_depth()? {
        None => Ok(DepthBudget::log()),
        Some(total) => {
            let share = (total - 1) / tree_levels.max(1) + 1;
            Ok(DepthBudget::fixed(share.clamp(4, 13)))
        }
    }
}

/// Network with d inputs and m outputs; output l is uniformly eps-close on Q
/// to the shifted polynomial `sum_{|alpha| < beta} c_{l,alpha} (x - x_l)^alpha`.
pub fn polynomial_family_net(
    family: &PolynomialFamily,
    eps: f64,
    budget: &DepthBudget,
) -> Result<Network> {
    assert!(eps > 0.0 && eps < 0.5);
    family.validate()?;
    let d = family.dim();
    let m = family.len();

    // split terms by total degree
    let mut higher: Vec<(usize, Vec<u32>, f64)> = Vec::new(); // (output, alpha, c)
    for (l, coeffs) in family.coefficients.iter().enumerate() {
        for (alpha, c) in coeffs {
            if alpha.iter().sum::<u32>() >= 2 {
                higher.push((l, alpha.clone(), *c));
            }
        }
    }

    let affine_row = |l: usize| {
        let center = &family.centers[l];
        let mut bias = 0.0;
        let mut linear = vec![0.0; d];
        for (alpha, c) in &family.coefficients[l] {
            match alpha.iter().sum::<u32>() {
                0 => bias += c,
                1 => {
                    let i = alpha.iter().position(|&a| a == 1).unwrap();
                    linear[i] += c;
                    bias -= c * center[i];
                }
                _ => {}
            }
        }
        (bias, linear)
    };

    if higher.is_empty() {
        // constants and linear terms only: one exact affine layer
        let mut layer = Layer::new(m, d);
        for l in 0..m {
            let (bias, linear) = affine_row(l);
            layer.bias[l] = bias;
            for (i, v) in linear.into_iter().enumerate() {
                layer.push(l, i, v);
            }
        }
        return Ok(Network::affine(d, layer));
    }

    let coeff_sum: f64 = family
        .coefficients
        .iter()
        .map(|cs| {
            cs.iter()
                .filter(|(a, _)| a.iter().sum::<u32>() >= 2)
                .map(|(_, c)| c.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let mono_target = eps / (2.0 * coeff_sum.max(1.0));
    let max_deg = higher
        .iter()
        .map(|(_, a, _)| a.iter().sum::<u32>())
        .max()
        .unwrap() as usize;
    let delta_node = (mono_target / (3.0 * max_deg as f64 * (1.0 + TREE_RANGE))).min(0.25);
    let tree_levels = (max_deg as f64).log2().ceil().max(1.0) as usize;
    let mul_budget = mult_budget(budget, tree_levels)?;

    let mut monos = Vec::with_capacity(higher.len());
    for (l, alpha, _) in &higher {
        let center = &family.centers[*l];
        let mut factors = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                factors.push((i, center[i]));
            }
        }
        monos.push(monomial_tree(&factors, d, delta_node, &mul_budget)?);
    }
    let depth = monos.iter().map(|n| n.depth()).max().unwrap();
    let mut blocks = vec![Network::shifted_identity(d, depth, 0.5)];
    for net in monos {
        blocks.push(extend_to_depth(&net, depth, Some(2.0)));
    }
    let all: Vec<usize> = (0..d).collect();
    let maps: Vec<Vec<usize>> = blocks.iter().map(|_| all.clone()).collect();
    let stacked = stack_with_maps(blocks, d, &maps)?;

    // final affine: constants + linear over the identity channels + monomials
    let mut out = Layer::new(m, d + higher.len());
    for l in 0..m {
        let (bias, linear) = affine_row(l);
        out.bias[l] = bias;
        for (i, v) in linear.into_iter().enumerate() {
            out.push(l, i, v);
        }
    }
    for (j, (l, _, c)) in higher.iter().enumerate() {
        out.push(*l, d + j, *c);
    }
    let net = compose(&Network::affine(d + higher.len(), out), &stacked)?;
    if let Some(cap) = budget.fixed_depth()? {
        if net.depth() > cap {
            return Err(ApproxError::BudgetTooSmall {
                budget: cap,
                needed: net.depth(),
            });
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hat_iterate(m: usize, t: f64) -> f64 {
        let mut s = t;
        for _ in 0..m {
            s = if !(0.0..=1.0).contains(&s) {
                0.0
            } else if s < 0.5 {
                2.0 * s
            } else {
                2.0 * (1.0 - s)
            };
        }
        s
    }

    #[test]
    fn sawtooth_hat_values() {
        let net = sawtooth(1, &DepthBudget::log()).unwrap();
        assert!((net.realize(&[0.5]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(net.realize(&[0.0]).unwrap()[0].abs() < 1e-12);
        assert!(net.realize(&[1.0]).unwrap()[0].abs() < 1e-12);

        let net2 = sawtooth(2, &DepthBudget::log()).unwrap();
        assert!((net2.realize(&[0.25]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(net2.realize(&[0.5]).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn sawtooth_log_mode_shape() {
        for m in 1..=6 {
            let net = sawtooth(m, &DepthBudget::log()).unwrap();
            assert_eq!(net.depth(), m + 1);
            assert!(net.layers[..m].iter().all(|l| l.rows == 3));
        }
    }

    #[test]
    fn sawtooth_fixed_matches_log_oracle() {
        for m in 1..=8 {
            let log = sawtooth(m, &DepthBudget::log()).unwrap();
            let fixed = sawtooth(m, &DepthBudget::fixed(4)).unwrap();
            assert!(fixed.depth() <= 4);
            for i in 0..=10_000 {
                let t = i as f64 / 10_000.0;
                let a = log.realize(&[t]).unwrap()[0];
                let b = fixed.realize(&[t]).unwrap()[0];
                let oracle = hat_iterate(m, t);
                assert!((a - b).abs() <= 1e-10, "m={m} t={t}: {a} vs {b}");
                assert!(
                    (a - oracle).abs() <= 1e-10,
                    "m={m} t={t}: {a} vs oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn sawtooth_budget_error() {
        assert!(matches!(
            sawtooth(4, &DepthBudget::fixed(3)),
            Err(ApproxError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn square_endpoints_exact() {
        let net = square_net(2f64.powi(-8), &DepthBudget::log()).unwrap();
        assert_eq!(net.realize(&[0.0]).unwrap()[0], 0.0);
        assert!((net.realize(&[1.0]).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn square_grid_error_within_delta() {
        for &delta in &[2f64.powi(-4), 2f64.powi(-8)] {
            for budget in [
                DepthBudget::log(),
                DepthBudget::fixed(4),
                DepthBudget::fixed(9),
            ] {
                let net = square_net(delta, &budget).unwrap();
                let mut worst = 0.0f64;
                for i in 0..=10_000 {
                    let t = i as f64 / 10_000.0;
                    worst = worst.max((net.realize(&[t]).unwrap()[0] - t * t).abs());
                }
                assert!(
                    worst <= delta,
                    "delta={delta} budget={budget:?} err={worst}"
                );
            }
        }
    }

    #[test]
    fn square_term_count_depth_step() {
        // halving delta from an even power of two adds one term
        assert_eq!(square_terms(2f64.powi(-8)), 4);
        assert_eq!(square_terms(2f64.powi(-9)), 5);
        let a = square_net(2f64.powi(-8), &DepthBudget::log()).unwrap();
        let b = square_net(2f64.powi(-9), &DepthBudget::log()).unwrap();
        assert_eq!(b.depth(), a.depth() + 1);
    }

    #[test]
    fn square_error_monotone_in_terms() {
        let mut prev = f64::INFINITY;
        for m in 1..=8 {
            let net = square_chain(m, &vec![1u32; m]);
            let mut worst = 0.0f64;
            for i in 0..=4_000 {
                let t = i as f64 / 4_000.0;
                worst = worst.max((net.realize(&[t]).unwrap()[0] - t * t).abs());
            }
            assert!(worst <= prev + 1e-15, "m={m}: {worst} > {prev}");
            prev = worst;
        }
    }

    #[test]
    fn square_fixed_depth_honest() {
        for j in 2..=12 {
            let net = square_net(2f64.powi(-j), &DepthBudget::fixed(6)).unwrap();
            assert_eq!(net.depth(), 6);
        }
    }

    #[test]
    fn multiply_error_bounds() {
        let delta = 2f64.powi(-10);
        let net = multiply_net(1.0, delta, &DepthBudget::log()).unwrap();
        assert!(net.realize(&[0.0, 0.0]).unwrap()[0].abs() <= delta);
        assert!((net.realize(&[1.0, 1.0]).unwrap()[0] - 1.0).abs() <= delta);
        let mut worst = 0.0f64;
        for i in 0..200 {
            for j in 0..200 {
                let u = -1.0 + 2.0 * i as f64 / 199.0;
                let v = -1.0 + 2.0 * j as f64 / 199.0;
                let got = net.realize(&[u, v]).unwrap()[0];
                worst = worst.max((got - u * v).abs());
            }
        }
        assert!(worst <= delta, "worst multiply error {worst}");
    }

    #[test]
    fn multiply_symmetry() {
        let delta = 2f64.powi(-8);
        let net = multiply_net(1.0, delta, &DepthBudget::fixed(8)).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let u = -1.0 + 2.0 * i as f64 / 49.0;
                let v = -1.0 + 2.0 * j as f64 / 49.0;
                let a = net.realize(&[u, v]).unwrap()[0];
                let b = net.realize(&[v, u]).unwrap()[0];
                assert!((a - b).abs() <= 2.0 * delta);
            }
        }
    }

    #[test]
    fn constant_family_is_exact_affine() {
        let family = PolynomialFamily {
            centers: vec![vec![0.1, -0.2], vec![0.0, 0.0]],
            coefficients: vec![vec![(vec![0, 0], 0.7)], vec![(vec![0, 0], -0.3)]],
            beta: 1.0,
            bound: 1.0,
        };
        let net = polynomial_family_net(&family, 0.01, &DepthBudget::log()).unwrap();
        assert_eq!(net.depth(), 1);
        let y = net.realize(&[0.3, 0.3]).unwrap();
        assert_eq!(y, vec![0.7, -0.3]);
    }

    #[test]
    fn single_center_square_polynomial() {
        // p(x) = x^2 at center 0, d = 1
        let family = PolynomialFamily {
            centers: vec![vec![0.0]],
            coefficients: vec![vec![(vec![2], 1.0)]],
            beta: 2.5,
            bound: 1.0,
        };
        let eps = 2f64.powi(-8);
        for budget in [DepthBudget::log(), DepthBudget::default_fixed(2.5, 1)] {
            let net = polynomial_family_net(&family, eps, &budget).unwrap();
            let mut worst = 0.0f64;
            for i in 0..=10_000 {
                let x = -0.5 + i as f64 / 10_000.0;
                worst = worst.max((net.realize(&[x]).unwrap()[0] - x * x).abs());
            }
            assert!(worst <= eps, "budget {budget:?} err {worst}");
        }
    }

    #[test]
    fn random_two_dim_family_within_eps() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let d = 2;
        let alphas: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        let centers: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let coefficients: Vec<Vec<(Vec<u32>, f64)>> = (0..4)
            .map(|_| {
                alphas
                    .iter()
                    .map(|a| (a.clone(), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let family = PolynomialFamily {
            centers,
            coefficients,
            beta: 2.5,
            bound: 1.0,
        };
        let eps = 2f64.powi(-6);
        let net = polynomial_family_net(&family, eps, &DepthBudget::default_fixed(2.5, 2)).unwrap();
        let mut worst = 0.0f64;
        for i in 0..100 {
            for j in 0..100 {
                let x = [-0.5 + i as f64 / 99.0, -0.5 + j as f64 / 99.0];
                let y = net.realize(&x).unwrap();
                for (l, &yl) in y.iter().enumerate() {
                    worst = worst.max((yl - family.evaluate(l, &x)).abs());
                }
            }
        }
        assert!(worst <= eps, "family error {worst} vs eps {eps}");
    }

    #[test]
    fn fixed_mode_depth_independent_of_eps() {
        let family = PolynomialFamily {
            centers: vec![vec![0.2]],
            coefficients: vec![vec![(vec![0], 0.5), (vec![1], -0.4), (vec![2], 0.9)]],
            beta: 3.0,
            bound: 1.0,
        };
        let budget = DepthBudget::default_fixed(3.0, 1);
        let depths: Vec<usize> = (2..=12)
            .map(|j| {
                polynomial_family_net(&family, 2f64.powi(-j), &budget)
                    .unwrap()
                    .depth()
            })
            .collect();
        assert!(depths.windows(2).all(|w| w[0] == w[1]), "depths {depths:?}");
        assert!(depths[0] <= budget.max_depth.unwrap());
    }

    #[test]
    fn coefficient_bound_enforced() {
        let family = PolynomialFamily {
            centers: vec![vec![0.0]],
            coefficients: vec![vec![(vec![1], 2.0)]],
            beta: 2.0,
            bound: 1.0,
        };
        assert!(matches!(
            polynomial_family_net(&family, 0.01, &DepthBudget::log()),
            Err(ApproxError::CoefficientOutOfBound { .. })
        ));
    }
}
