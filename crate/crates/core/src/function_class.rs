//! Smooth strongly convex function classes and their interpolation conditions.

use serde::{Deserialize, Serialize};

use crate::error::{PepError, Result};
use crate::expr::{Constraint, Pairing, Relation, ScalarExpr, ValueScope, VectorExpr};

/// The class of `L`-smooth `mu`-strongly convex functions; `l` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    pub mu: f64,
    pub l: f64,
}

impl FunctionClass {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !(mu >= 0.0) || mu.is_infinite() {
            return Err(PepError::InvalidFunctionClass(format!("mu = {mu} must be finite and >= 0")));
        }
        if !(l > mu) {
            return Err(PepError::InvalidFunctionClass(format!("need mu < L, got mu = {mu}, L = {l}")));
        }
        Ok(Self { mu, l })
    }

    /// Plain convex functions (`mu = 0`, `L = inf`).
    pub fn convex() -> Self {
        Self { mu: 0.0, l: f64::INFINITY }
    }

    pub fn smooth_strongly_convex(mu: f64, l: f64) -> Result<Self> {
        Self::new(mu, l)
    }

    pub fn condition_number(&self) -> f64 {
        self.l / self.mu
    }

    /// Weights `(c_gg, c_xx, c_gx)` of `||dg||^2`, `||dx||^2` and `<dg, dx>` in the
    /// right-hand side of the interpolation inequality.
    pub fn weights(&self) -> (f64, f64, f64) {
        let inv_l = if self.l.is_finite() { 1.0 / self.l } else { 0.0 };
        let c = 1.0 / (2.0 * (1.0 - self.mu * inv_l));
        (c * inv_l, c * self.mu, -2.0 * c * self.mu * inv_l)
    }

    /// Slack of the interpolation inequality from `l` to `k` for numeric data;
    /// non-negative when the pair is interpolable.
    pub fn pair_slack(&self, k: (&[f64], &[f64], f64), l: (&[f64], &[f64], f64)) -> f64 {
        let (xk, gk, fk) = k;
        let (xl, gl, fl) = l;
        let dx: Vec<f64> = xk.iter().zip(xl).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gk.iter().zip(gl).map(|(a, b)| a - b).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (cgg, cxx, cgx) = self.weights();
        fk - fl - dot(gl, &dx) - (cgg * dot(&dg, &dg) + cxx * dot(&dx, &dx) + cgx * dot(&dg, &dx))
    }
}

/// A point, its (sub)gradient and function value, as symbolic expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub label: String,
    pub x: VectorExpr,
    pub g: VectorExpr,
    /// Value tag index in the basis registry.
    pub f: usize,
}

/// All `m(m-1)` ordered-pair interpolation constraints of `triplets` for the
/// functions of class `class`, written as `expr >= 0`.
pub fn interpolation_constraints(triplets: &[Triplet], fclass: &FunctionClass, class: usize) -> Vec<Constraint> {
    let (cgg, cxx, cgx) = fclass.weights();
    let p = Pairing::Local(class);
    let s = ValueScope::Local(class);
    let prod = |a: &VectorExpr, b: &VectorExpr| {
        if a.is_zero() || b.is_zero() {
            ScalarExpr::zero()
        } else {
            ScalarExpr::product(p, a, b)
        }
    };
    let mut out = Vec::with_capacity(triplets.len() * triplets.len().saturating_sub(1));
    for (ik, k) in triplets.iter().enumerate() {
        for (il, l) in triplets.iter().enumerate() {
            if ik == il {
                continue;
            }
            let mut e = ScalarExpr::value(s, k.f) - ScalarExpr::value(s, l.f);
            e += -1.0 * (prod(&l.g, &k.x) - prod(&l.g, &l.x));
            if cgg != 0.0 {
                e += (-cgg) * (prod(&k.g, &k.g) - 2.0 * prod(&k.g, &l.g) + prod(&l.g, &l.g));
            }
            if cxx != 0.0 {
                e += (-cxx) * (prod(&k.x, &k.x) - 2.0 * prod(&k.x, &l.x) + prod(&l.x, &l.x));
            }
            if cgx != 0.0 {
                e += (-cgx) * (prod(&k.g, &k.x) - prod(&k.g, &l.x) - prod(&l.g, &k.x) + prod(&l.g, &l.x));
            }
            out.push(Constraint::new(
                format!("interp[{class}]:{}>{}", k.label, l.label),
                e,
                Relation::Ge,
            ));
        }
    }
    out
}
