//! Quadrature rules: Gauss–Legendre, double-exponential, sphere and velocity
//! product rules.

use std::f64::consts::{FRAC_PI_2, PI};

use gauss_quad::GaussLegendre;
use nalgebra::Vector3;

/// Gauss–Legendre rule with nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule; `n = 1` gives the midpoint rule.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        if n == 1 {
            return Self { nodes: vec![0.0], weights: vec![2.0] };
        }
        let rule = GaussLegendre::new(n).expect("degree >= 2");
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Tanh–sinh rule on `[0, 1]`, robust to integrable endpoint singularities.
///
/// Each node stores its distance to both endpoints so that nodes clustered at
/// an endpoint keep full relative precision.
#[derive(Debug, Clone)]
pub struct TanhSinh {
    /// `(distance to 0, distance to 1, weight)`.
    pub nodes: Vec<(f64, f64, f64)>,
}

impl TanhSinh {
    /// Rule with step `h = 1 / n_per_unit` in the tanh–sinh variable, truncated at `|s| ≤ 4`.
    pub fn new(n_per_unit: usize) -> Self {
        let h = 1.0 / n_per_unit as f64;
        let mut nodes = Vec::new();
        let k_max = (4.0 / h).ceil() as i64;
        for k in -k_max..=k_max {
            let s = k as f64 * h;
            let t = FRAC_PI_2 * s.sinh();
            let e = (-2.0 * t.abs()).exp();
            // (1 + tanh t)/2 and (1 - tanh t)/2 in stable form.
            let (left, right) = if t >= 0.0 {
                (1.0 / (1.0 + e), e / (1.0 + e))
            } else {
                (e / (1.0 + e), 1.0 / (1.0 + e))
            };
            let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
            let w = 0.5 * h * FRAC_PI_2 * s.cosh() * sech2;
            if w < 1e-300 || left <= 0.0 || right <= 0.0 {
                continue;
            }
            nodes.push((left, right, w));
        }
        Self { nodes }
    }

    /// Integrate on `[a, b]`; `f` receives the node.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .map(|&(l, r, w)| {
                let x = if l < 0.5 { a + len * l } else { b - len * r };
                len * w * f(x)
            })
            .sum()
    }
}

/// Orthonormal pair `(t1, t2)` completing the unit vector `n` to a right-handed frame.
pub fn orthonormal_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.6 {
        Vector3::x()
    } else if n.y.abs() < 0.6 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = (helper - n * n.dot(&helper)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Product rule on the unit sphere: Gauss–Legendre in `cos θ` about `axis`,
/// uniform in the azimuth.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dirs: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n_polar: usize, n_azimuth: usize, axis: &Vector3<f64>) -> Self {
        Self::cap(n_polar, n_azimuth, axis, -1.0, 1.0)
    }

    /// Directions with `cos θ ∈ [c_lo, c_hi]` relative to `axis`.
    pub fn cap(n_polar: usize, n_azimuth: usize, axis: &Vector3<f64>, c_lo: f64, c_hi: f64) -> Self {
        let axis = axis.normalize();
        let (t1, t2) = orthonormal_frame(&axis);
        let gl = GaussRule::new(n_polar);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let mut dirs = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (c, wc) in gl.on(c_lo, c_hi) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for a in 0..n_azimuth {
                let phi = (a as f64 + 0.5) * dphi;
                dirs.push(axis * c + t1 * (s * phi.cos()) + t2 * (s * phi.sin()));
                weights.push(wc * dphi);
            }
        }
        Self { dirs, weights }
    }
}

/// Spherical product quadrature on the velocity ball `|v| ≤ v_max`.
///
/// Node `j = (ir · n_polar + ic) · n_azimuth + ia`; radial and polar nodes are
/// Gauss–Legendre, azimuthal nodes are uniform midpoints.
#[derive(Debug, Clone)]
pub struct VelocityQuadrature {
    pub nodes: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    pub v_max: f64,
    pub radii: Vec<f64>,
    pub cosines: Vec<f64>,
    pub n_azimuth: usize,
}

impl VelocityQuadrature {
    pub fn new(n_radial: usize, n_polar: usize, n_azimuth: usize, v_max: f64) -> Self {
        let gr = GaussRule::new(n_radial);
        let gc = GaussRule::new(n_polar);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let radial: Vec<(f64, f64)> = gr.on(0.0, v_max).collect();
        let polar: Vec<(f64, f64)> = gc.on(-1.0, 1.0).collect();
        let mut nodes = Vec::with_capacity(n_radial * n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for &(r, wr) in &radial {
            for &(c, wc) in &polar {
                let s = (1.0 - c * c).sqrt();
                for a in 0..n_azimuth {
                    let phi = (a as f64 + 0.5) * dphi;
                    nodes.push(Vector3::new(r * s * phi.cos(), r * s * phi.sin(), r * c));
                    weights.push(wr * r * r * wc * dphi);
                }
            }
        }
        Self {
            nodes,
            weights,
            v_max,
            radii: radial.iter().map(|p| p.0).collect(),
            cosines: polar.iter().map(|p| p.0).collect(),
            n_azimuth,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(&Vector3<f64>) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(v, w)| w * f(v)).sum()
    }

    /// Trilinear interpolation in `(|v|, cos θ, φ)` of values tabulated on the nodes.
    ///
    /// Returns `None` beyond `v_max`. Outside the outermost radial/polar nodes the
    /// nearest layer is used.
    pub fn interpolate(&self, values: &[f64], v: &Vector3<f64>) -> Option<f64> {
        let r = v.norm();
        if r > self.v_max {
            return None;
        }
        let c = if r > 0.0 { v.z / r } else { 0.0 };
        let phi = v.y.atan2(v.x).rem_euclid(2.0 * PI);
        let (ir, tr) = bracket(&self.radii, r);
        let (ic, tc) = bracket(&self.cosines, c);
        let na = self.n_azimuth;
        let dphi = 2.0 * PI / na as f64;
        let pa = phi / dphi - 0.5;
        let ia0 = pa.floor();
        let ta = pa - ia0;
        let ia0 = (ia0 as i64).rem_euclid(na as i64) as usize;
        let ia1 = (ia0 + 1) % na;
        let np = self.cosines.len();
        let idx = |a: usize, b: usize, c: usize| (a * np + b) * na + c;
        let mut acc = 0.0;
        for (dr, wr) in [(0usize, 1.0 - tr), (1, tr)] {
            if wr == 0.0 {
                continue;
            }
            let ir_ = (ir + dr).min(self.radii.len() - 1);
            for (dc, wc) in [(0usize, 1.0 - tc), (1, tc)] {
                if wc == 0.0 {
                    continue;
                }
                let ic_ = (ic + dc).min(np - 1);
                acc += wr * wc * ((1.0 - ta) * values[idx(ir_, ic_, ia0)] + ta * values[idx(ir_, ic_, ia1)]);
            }
        }
        Some(acc)
    }
}

/// Locate `x` in the sorted grid: returns `(i, t)` with the value `(1-t)·g[i] + t·g[i+1]`;
/// clamps outside the grid.
pub fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    (i, t)
}

/// Half-space product rule `{u : n·u > 0, |u| ≤ v_max}` aligned with `n`:
/// Gauss–Legendre in `cos θ ∈ (0,1)`, uniform azimuth, Gauss–Legendre radius.
#[derive(Debug, Clone)]
pub struct HalfSpaceRule {
    pub nodes: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl HalfSpaceRule {
    pub fn new(n: &Vector3<f64>, n_polar: usize, n_azimuth: usize, n_radial: usize, v_max: f64) -> Self {
        let dirs = SphereRule::cap(n_polar, n_azimuth, n, 0.0, 1.0);
        let gr = GaussRule::new(n_radial);
        let radial: Vec<(f64, f64)> = gr.on(0.0, v_max).collect();
        let mut nodes = Vec::with_capacity(dirs.dirs.len() * radial.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (d, wd) in dirs.dirs.iter().zip(&dirs.weights) {
            for &(r, wr) in &radial {
                nodes.push(d * r);
                weights.push(wd * wr * r * r);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(&Vector3<f64>) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(v, w)| w * f(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rule_is_exact_for_polynomials() {
        let g = GaussRule::new(5);
        assert_relative_eq!(g.integrate(0.0, 2.0, |x| x.powi(9)), 2f64.powi(10) / 10.0, max_relative = 1e-13);
        assert_eq!(GaussRule::new(1).integrate(0.0, 1.0, |x| x), 0.5);
    }

    #[test]
    fn tanh_sinh_handles_log_endpoint() {
        let t = TanhSinh::new(8);
        let v = t.integrate(0.0, 1.0, |x| -x.ln());
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
        let v = t.integrate(0.0, 1.0, |x| x.powf(-0.5));
        assert_relative_eq!(v, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_mass_reproduced() {
        let q = VelocityQuadrature::new(32, 12, 24, 10.0);
        let m = q.integrate(|v| (-0.5 * v.norm_squared()).exp());
        assert_relative_eq!(m, (2.0 * PI).powf(1.5), max_relative = 1e-6);
        assert!(q.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sphere_rule_area_and_abs_cos() {
        let axis = Vector3::new(0.3, -0.2, 0.9);
        let s = SphereRule::new(16, 24, &axis);
        let area: f64 = s.weights.iter().sum();
        assert_relative_eq!(area, 4.0 * PI, max_relative = 1e-12);
        let half = SphereRule::cap(8, 16, &axis, 0.0, 1.0);
        let k = Vector3::new(1.0, 2.0, -0.5);
        // ∫_{S²} |k·ω| dω = 2π|k|, computed on two hemispheres aligned with k.
        let hk = SphereRule::cap(8, 16, &k, 0.0, 1.0);
        let val: f64 = 2.0 * hk.dirs.iter().zip(&hk.weights).map(|(d, w)| w * k.dot(d).abs()).sum::<f64>();
        assert_relative_eq!(val, 2.0 * PI * k.norm(), max_relative = 1e-12);
        assert_relative_eq!(half.weights.iter().sum::<f64>(), 2.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn velocity_interpolation_reproduces_nodes() {
        let q = VelocityQuadrature::new(6, 4, 8, 8.0);
        let vals: Vec<f64> = q.nodes.iter().map(|v| v.x + 2.0 * v.z).collect();
        for (j, v) in q.nodes.iter().enumerate() {
            assert_relative_eq!(q.interpolate(&vals, v).unwrap(), vals[j], epsilon = 1e-9);
        }
        assert!(q.interpolate(&vals, &Vector3::new(9.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn half_space_flux_of_maxwellian() {
        let n = Vector3::new(0.0, 0.6, 0.8);
        let h = HalfSpaceRule::new(&n, 12, 24, 32, 10.0);
        let flux = h.integrate(|u| n.dot(u) * (-0.5 * u.norm_squared()).exp() / (2.0 * PI));
        assert_relative_eq!(flux, 1.0, max_relative = 1e-10);
    }
}
