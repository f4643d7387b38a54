//! Gauss–Legendre momentum grids on `[0, ∞)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Space;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre_p(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub map_scale: f64,
    #[serde(default)]
    pub partial_wave: usize,
}

/// Quadrature for `∫₀^∞ f(k) k² dk` in a fixed partial wave.
#[derive(Debug, Clone)]
pub struct MomentumGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    partial_wave: usize,
    map_scale: f64,
    space: Arc<Space>,
}

impl MomentumGrid {
    /// Gauss–Legendre on `t ∈ (0,1)` mapped by `k = s·t/(1−t)`, Jacobian in
    /// the weights.
    pub fn new(n_points: usize, map_scale: f64, partial_wave: usize) -> Result<Self> {
        if n_points < 4 {
            return Err(Error::Domain(format!("grid needs at least 4 points, got {n_points}")));
        }
        if !(map_scale.is_finite() && map_scale > 0.0) {
            return Err(Error::Domain(format!("map scale must be positive, got {map_scale}")));
        }
        let (x, w) = gauss_legendre(n_points);
        let mut nodes = Vec::with_capacity(n_points);
        let mut weights = Vec::with_capacity(n_points);
        for (xi, wi) in x.iter().zip(&w) {
            let t = 0.5 * (xi + 1.0);
            let one_minus = 1.0 - t;
            nodes.push(map_scale * t / one_minus);
            weights.push(0.5 * wi * map_scale / (one_minus * one_minus));
        }
        let measure = nodes.iter().zip(&weights).map(|(k, w)| w * k * k).collect();
        let space = Space::new(format!("grid[n={n_points},s={map_scale},l={partial_wave}]"), measure)?;
        Ok(MomentumGrid { nodes, weights, partial_wave, map_scale, space })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.n_points, spec.map_scale, spec.partial_wave)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Plain `dk` weights (without `k²`).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn partial_wave(&self) -> usize {
        self.partial_wave
    }

    pub fn map_scale(&self) -> f64 {
        self.map_scale
    }

    /// The measured space `d_i = w_i k_i²`.
    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    /// `∫₀^∞ f(k) k² dk` on the grid.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(self.space.measure()).map(|(k, d)| f(*k) * d).sum()
    }
}
