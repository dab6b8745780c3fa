//! Localization networks: 4-layer ReLU circuits that pass a scalar channel
//! `y` through unchanged on the eps-shrunk interior of a half-open cube,
//! output exactly 0 outside the cube, and stay bounded by B everywhere.

use crate::error::{ApproxError, Result};
use crate::network::{Layer, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cube {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(ApproxError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(ApproxError::InvalidSpec(format!(
                    "cube bounds not ordered in coordinate {i}"
                )));
            }
        }
        Ok(Cube { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn check_margin(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0) {
            return Err(ApproxError::MarginViolation {
                margin: eps,
                coord: 0,
            });
        }
        for i in 0..self.dim() {
            if eps >= (self.upper[i] - self.lower[i]) / 2.0 {
                return Err(ApproxError::MarginViolation {
                    margin: eps,
                    coord: i,
                });
            }
        }
        Ok(())
    }

    /// Half-open membership x in [a, b).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((&xi, &a), &b)| a <= xi && xi < b)
    }

    /// Closed shrunk membership x in [a + eps, b - eps].
    pub fn contains_shrunk(&self, x: &[f64], eps: f64) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((&xi, &a), &b)| a + eps <= xi && xi <= b - eps)
    }
}

/// One-dimensional trapezoid bump: the four ReLU units
/// `relu((x-a)/e) - relu((x-a-e)/e) - relu((x-b+e)/e) + relu((x-b)/e)`,
/// equal to 1 on [a+e, b-e], 0 off (a, b), linear on the ramps.
/// Writes the units as rows `base..base+4` reading input column `col`,
/// and returns the signed combination for the next layer.
fn trapezoid_units(
    layer: &mut Layer,
    base: usize,
    col: usize,
    a: f64,
    b: f64,
    eps: f64,
) -> [(usize, f64); 4] {
    let slope = 1.0 / eps;
    let breaks = [a, a + eps, b - eps, b];
    for (j, &t) in breaks.iter().enumerate() {
        layer.push(base + j, col, slope);
        layer.bias[base + j] = -t * slope;
    }
    [
        (base, 1.0),
        (base + 1, -1.0),
        (base + 2, -1.0),
        (base + 3, 1.0),
    ]
}

/// 2-layer network realizing the trapezoid bump exactly.
pub fn trapezoid(bounds: (f64, f64), eps: f64) -> Result<Network> {
    let (a, b) = bounds;
    let cube = Cube::new(vec![a], vec![b])?;
    cube.check_margin(eps)?;
    let mut first = Layer::new(4, 1);
    let combo = trapezoid_units(&mut first, 0, 0, a, b, eps);
    let mut second = Layer::new(1, 4);
    for (c, v) in combo {
        second.push(0, c, v);
    }
    let net = Network {
        input_dim: 1,
        layers: vec![first, second],
    };
    net.validate()?;
    Ok(net)
}

/// Total nonzero weights of [`localization_net`] for dimension d when no
/// cube bound sits at 0: the documented c(d) of the construction.
pub fn localization_weight_cap(d: usize) -> usize {
    12 * d + 12
}

/// 4-layer network on (x, y) in R^d x R with realization T satisfying
/// T(x, y) = y on the shrunk cube (for |y| <= B), T(x, y) = 0 off the cube,
/// and |T| <= B everywhere:
/// `T(x,y) = sum_{l=0,1} (-1)^l B relu(relu((-1)^l y/B) - d + sum_i t_i(x_i))`.
pub fn localization_net(cube: &Cube, eps: f64, b: f64) -> Result<Network> {
    cube.check_margin(eps)?;
    if !(b >= 1.0) {
        return Err(ApproxError::InvalidSpec(format!(
            "localization bound B = {b} < 1"
        )));
    }
    let d = cube.dim();

    // layer 1: 4 trapezoid units per coordinate, then g+ = relu(y/B), g- = relu(-y/B)
    let mut l1 = Layer::new(4 * d + 2, d + 1);
    let mut combos = Vec::with_capacity(d);
    for i in 0..d {
        combos.push(trapezoid_units(
            &mut l1,
            4 * i,
            i,
            cube.lower[i],
            cube.upper[i],
            eps,
        ));
    }
    l1.push(4 * d, d, 1.0 / b);
    l1.push(4 * d + 1, d, -1.0 / b);

    // layer 2: s = relu(sum_i t_i) (exact: the sum is nonnegative), carry g+-
    let mut l2 = Layer::new(3, 4 * d + 2);
    for combo in &combos {
        for &(c, v) in combo {
            l2.push(0, c, v);
        }
    }
    l2.push(1, 4 * d, 1.0);
    l2.push(2, 4 * d + 1, 1.0);

    // layer 3: u+- = relu(g+- - d + s)
    let mut l3 = Layer::new(2, 3);
    for row in 0..2 {
        l3.push(row, 0, 1.0);
        l3.push(row, row + 1, 1.0);
        l3.bias[row] = -(d as f64);
    }

    // layer 4: B u+ - B u-
    let mut l4 = Layer::new(1, 2);
    l4.push(0, 0, b);
    l4.push(0, 1, -b);

    let net = Network {
        input_dim: d + 1,
        layers: vec![l1, l2, l3, l4],
    };
    net.validate()?;
    debug_assert!(net.complexity().weights <= localization_weight_cap(d));
    Ok(net)
}
