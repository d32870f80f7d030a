//! Algorithms built from gradient evaluations, consensus steps and linear
//! combinations, and their unrolling into symbolic traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{PepError, Result};
use crate::expr::{BasisRegistry, VectorExpr};
use crate::function_class::Triplet;
use crate::matrix_class::ConsensusSet;

/// Name of the (pinned) optimum point, its gradient tag and value tag.
pub const XSTAR: &str = "xstar";
pub const GSTAR: &str = "gstar";
pub const FSTAR: &str = "fstar";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Step {
    /// Evaluates the local gradient and value at a defined point.
    Gradient { point: String, grad: String, value: String },
    /// `output = (W x I) input` for the matrix named `symbol`.
    Consensus { symbol: String, input: String, output: String },
    /// `output = sum c_k point_k`.
    Combine { output: String, terms: Vec<(f64, String)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    /// Free starting points, one tag each.
    pub initial: Vec<String>,
    pub steps: Vec<Step>,
    /// Point reported after the last iteration.
    pub output: String,
    pub iterations: usize,
    pub parameters: BTreeMap<String, f64>,
}

/// Extra point whose local values enter a metric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CommonPointKind {
    /// Average over agents of the point.
    AgentAverage,
    /// The point held by the agents of class `class` (a singleton class).
    SpecificAgent { class: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommonPointRequest {
    pub kind: CommonPointKind,
    /// Defined point it is built from (e.g. the algorithm output).
    pub of: String,
    /// Tag of the new common point; gradient and value tags are derived.
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommonPoint {
    pub kind: CommonPointKind,
    pub of: VectorExpr,
    pub triplet: Triplet,
}

/// Unrolled algorithm over a fixed basis.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmTrace {
    pub registry: BasisRegistry,
    /// Every named point, including consensus outputs, combinations and `xstar`.
    pub points: BTreeMap<String, VectorExpr>,
    pub consensus: Vec<ConsensusSet>,
    /// Gradient evaluations of the algorithm followed by the optimum triplet.
    pub triplets: Vec<Triplet>,
    pub common_points: Vec<CommonPoint>,
    pub initial: Vec<String>,
    pub output: String,
    pub iterations: usize,
}

impl AlgorithmTrace {
    pub fn point(&self, name: &str) -> Result<&VectorExpr> {
        self.points.get(name).ok_or_else(|| PepError::UnknownTag(name.to_string()))
    }

    pub fn output_point(&self) -> &VectorExpr {
        &self.points[&self.output]
    }

    pub fn optimum(&self) -> &Triplet {
        self.triplets
            .iter()
            .find(|t| t.label == XSTAR)
            .expect("trace always carries the optimum triplet")
    }

    /// All triplets entering interpolation: algorithm, optimum and common points.
    pub fn interpolation_triplets(&self) -> Vec<Triplet> {
        let mut out = self.triplets.clone();
        out.extend(self.common_points.iter().map(|c| c.triplet.clone()));
        out
    }

    /// Gradient of the triplet evaluated at the given point name, if any.
    pub fn gradient_at(&self, point: &str) -> Option<&Triplet> {
        let x = self.points.get(point)?;
        self.triplets.iter().find(|t| &t.x == x)
    }
}

/// Decentralized gradient descent `x^{k+1} = W x^k - alpha_k grad f(x^k)`.
pub fn build_dgd(steps: &[f64]) -> Result<AlgorithmSpec> {
    if steps.is_empty() {
        return Err(PepError::InvalidAlgorithm("DGD needs at least one iteration".into()));
    }
    let mut parameters = BTreeMap::new();
    let mut program = Vec::new();
    for (k, &a) in steps.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(PepError::InvalidAlgorithm(format!("step size alpha_{k} = {a} must be positive")));
        }
        parameters.insert(format!("alpha{k}"), a);
        program.push(Step::Gradient {
            point: format!("x{k}"),
            grad: format!("g{k}"),
            value: format!("f{k}"),
        });
        program.push(Step::Consensus {
            symbol: "W".into(),
            input: format!("x{k}"),
            output: format!("y{k}"),
        });
        program.push(Step::Combine {
            output: format!("x{}", k + 1),
            terms: vec![(1.0, format!("y{k}")), (-a, format!("g{k}"))],
        });
    }
    Ok(AlgorithmSpec {
        name: "dgd".into(),
        initial: vec!["x0".into()],
        steps: program,
        output: format!("x{}", steps.len()),
        iterations: steps.len(),
        parameters,
    })
}

/// DGD with a constant step size.
pub fn build_dgd_constant(k: usize, alpha: f64) -> Result<AlgorithmSpec> {
    build_dgd(&vec![alpha; k])
}

/// EXTRA with `W~ = (W + I)/2`.
pub fn build_extra(k: usize, alpha: f64) -> Result<AlgorithmSpec> {
    if k == 0 {
        return Err(PepError::InvalidAlgorithm("EXTRA needs at least one iteration".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(PepError::InvalidAlgorithm(format!("step size alpha = {alpha} must be positive")));
    }
    let grad = |i: usize| Step::Gradient {
        point: format!("x{i}"),
        grad: format!("g{i}"),
        value: format!("f{i}"),
    };
    let cons = |i: usize| Step::Consensus {
        symbol: "W".into(),
        input: format!("x{i}"),
        output: format!("wx{i}"),
    };
    let mut program = vec![
        grad(0),
        cons(0),
        Step::Combine {
            output: "x1".into(),
            terms: vec![(1.0, "wx0".into()), (-alpha, "g0".into())],
        },
    ];
    for i in 0..k - 1 {
        program.push(grad(i + 1));
        program.push(cons(i + 1));
        program.push(Step::Combine {
            output: format!("x{}", i + 2),
            terms: vec![
                (1.0, format!("x{}", i + 1)),
                (1.0, format!("wx{}", i + 1)),
                (-0.5, format!("wx{i}")),
                (-0.5, format!("x{i}")),
                (-alpha, format!("g{}", i + 1)),
                (alpha, format!("g{i}")),
            ],
        });
    }
    Ok(AlgorithmSpec {
        name: "extra".into(),
        initial: vec!["x0".into()],
        steps: program,
        output: format!("x{k}"),
        iterations: k,
        parameters: BTreeMap::from([("alpha".to_string(), alpha)]),
    })
}

/// Only consensus steps: `x^{k+1} = W x^k`.
pub fn build_consensus_only(k: usize) -> Result<AlgorithmSpec> {
    if k == 0 {
        return Err(PepError::InvalidAlgorithm("need at least one consensus step".into()));
    }
    let steps = (0..k)
        .map(|i| Step::Consensus {
            symbol: "W".into(),
            input: format!("x{i}"),
            output: format!("x{}", i + 1),
        })
        .collect();
    Ok(AlgorithmSpec {
        name: "consensus".into(),
        initial: vec!["x0".into()],
        steps,
        output: format!("x{k}"),
        iterations: k,
        parameters: BTreeMap::new(),
    })
}

/// Unrolls `spec` over a fresh basis, appending the optimum triplet and the
/// requested common points.
pub fn unroll(spec: &AlgorithmSpec, needs: &[CommonPointRequest]) -> Result<AlgorithmTrace> {
    let mut reg = BasisRegistry::new();
    for tag in &spec.initial {
        reg.add_vector(tag)?;
    }
    for step in &spec.steps {
        match step {
            Step::Gradient { grad, value, .. } => {
                reg.add_vector(grad)?;
                reg.add_value(value)?;
            }
            Step::Consensus { output, .. } => {
                reg.add_vector(output)?;
            }
            Step::Combine { .. } => {}
        }
    }
    reg.add_vector(GSTAR)?;
    reg.add_value(FSTAR)?;
    reg.pin_value(FSTAR)?;
    for need in needs {
        reg.add_vector(&need.tag)?;
        reg.add_vector(&format!("g_{}", need.tag))?;
        reg.add_value(&format!("f_{}", need.tag))?;
    }
    let p = reg.dim();

    let mut points: BTreeMap<String, VectorExpr> = BTreeMap::new();
    let define = |points: &mut BTreeMap<String, VectorExpr>, name: &str, v: VectorExpr| -> Result<()> {
        if points.insert(name.to_string(), v).is_some() {
            return Err(PepError::InvalidAlgorithm(format!("point `{name}` defined twice")));
        }
        Ok(())
    };
    let lookup = |points: &BTreeMap<String, VectorExpr>, name: &str| -> Result<VectorExpr> {
        points.get(name).cloned().ok_or_else(|| PepError::UnknownTag(name.to_string()))
    };
    define(&mut points, XSTAR, VectorExpr::zeros(p))?;
    for tag in &spec.initial {
        define(&mut points, tag, reg.unit(tag)?)?;
    }
    let mut consensus: Vec<ConsensusSet> = Vec::new();
    let mut triplets = Vec::new();
    for step in &spec.steps {
        match step {
            Step::Gradient { point, grad, value } => {
                let x = lookup(&points, point)?;
                let g = reg.unit(grad)?;
                define(&mut points, grad, g.clone())?;
                triplets.push(Triplet {
                    label: point.clone(),
                    x,
                    g,
                    f: reg.value(value)?,
                });
            }
            Step::Consensus { symbol, input, output } => {
                let x = lookup(&points, input)?;
                let y = reg.unit(output)?;
                define(&mut points, output, y.clone())?;
                match consensus.iter_mut().find(|c| &c.symbol == symbol) {
                    Some(set) => set.pairs.push((x, y)),
                    None => consensus.push(ConsensusSet {
                        symbol: symbol.clone(),
                        pairs: vec![(x, y)],
                    }),
                }
            }
            Step::Combine { output, terms } => {
                let mut v = VectorExpr::zeros(p);
                for (c, name) in terms {
                    let t = lookup(&points, name)?;
                    v = &v + &t.scale(*c);
                }
                define(&mut points, output, v)?;
            }
        }
    }
    lookup(&points, &spec.output)?;
    let gstar = reg.unit(GSTAR)?;
    define(&mut points, GSTAR, gstar.clone())?;
    triplets.push(Triplet {
        label: XSTAR.into(),
        x: VectorExpr::zeros(p),
        g: gstar,
        f: reg.value(FSTAR)?,
    });
    let mut common_points = Vec::new();
    for need in needs {
        let of = lookup(&points, &need.of)?;
        let x = reg.unit(&need.tag)?;
        let gname = format!("g_{}", need.tag);
        let g = reg.unit(&gname)?;
        define(&mut points, &need.tag, x.clone())?;
        define(&mut points, &gname, g.clone())?;
        common_points.push(CommonPoint {
            kind: need.kind.clone(),
            of,
            triplet: Triplet {
                label: need.tag.clone(),
                x,
                g,
                f: reg.value(&format!("f_{}", need.tag))?,
            },
        });
    }
    Ok(AlgorithmTrace {
        registry: reg,
        points,
        consensus,
        triplets,
        common_points,
        initial: spec.initial.clone(),
        output: spec.output.clone(),
        iterations: spec.iterations,
    })
}
