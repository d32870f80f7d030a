//! Performance criteria, initial conditions and common-point definitions,
//! assembled with the algorithm trace into a layout-independent PEP.

use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgorithmTrace, CommonPointKind, CommonPointRequest, FSTAR};
use crate::error::{PepError, Result};
use crate::expr::{Constraint, Pairing, Relation, ScalarExpr, ValueScope};
use crate::function_class::{interpolation_constraints, FunctionClass};
use crate::matrix_class::{consensus_constraints, MatrixClass};
use crate::model::SymbolicPep;

/// Tag of the agent-average common point used by function-gap metrics.
pub const XBAR: &str = "xbar";
/// Tag of the copied iterate of a fixed agent.
pub const XCOPY: &str = "xc";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `(1/N) sum_i f_i(xbar^K) - f_i(x*)`.
    AvgFunctionGap,
    /// `(1/N) sum_i ||x_i^K - x*||^2`.
    AvgIterateError,
    /// `f(x_1^K) - f(x*)` for the agent in class 0.
    WorstAgentFunction,
    /// `||x_1^K - x*||^2` for the agent in class 0.
    WorstAgentIterate,
    /// `||x_i^K - x*||^2` for the pivot agent (class 1), which is beaten by
    /// every agent of class 0. `k` is the percentile.
    Percentile(f64),
    /// `(1/N) sum_i ||x_i^K - xbar^K||^2`.
    ConsensusSpread,
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::AvgFunctionGap => "avg_function_gap".into(),
            Metric::AvgIterateError => "avg_iterate_error".into(),
            Metric::WorstAgentFunction => "worst_agent_function".into(),
            Metric::WorstAgentIterate => "worst_agent_iterate".into(),
            Metric::Percentile(k) => format!("percentile_{k}"),
            Metric::ConsensusSpread => "consensus_spread".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "avg_function_gap" | "e_f" => Metric::AvgFunctionGap,
            "avg_iterate_error" | "e_x" => Metric::AvgIterateError,
            "worst_agent_function" | "e_f_worst" => Metric::WorstAgentFunction,
            "worst_agent_iterate" | "e_x_worst" => Metric::WorstAgentIterate,
            "consensus_spread" => Metric::ConsensusSpread,
            other => {
                let k = other
                    .strip_prefix("percentile_")
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| PepError::InvalidMetric(format!("unknown metric `{other}`")))?;
                if !(k > 0.0 && k < 100.0) {
                    return Err(PepError::InvalidMetric(format!("percentile {k} outside (0, 100)")));
                }
                Metric::Percentile(k)
            }
        })
    }

    /// Common points this metric evaluates functions at.
    pub fn common_points(&self, output: &str) -> Vec<CommonPointRequest> {
        match self {
            Metric::AvgFunctionGap => vec![CommonPointRequest {
                kind: CommonPointKind::AgentAverage,
                of: output.to_string(),
                tag: XBAR.into(),
            }],
            Metric::WorstAgentFunction => vec![CommonPointRequest {
                kind: CommonPointKind::SpecificAgent { class: 0 },
                of: output.to_string(),
                tag: XCOPY.into(),
            }],
            _ => Vec::new(),
        }
    }

    /// Whether the metric treats all agents alike.
    pub fn is_symmetric(&self) -> bool {
        matches!(self, Metric::AvgFunctionGap | Metric::AvgIterateError | Metric::ConsensusSpread)
    }

    /// Class sizes the metric needs for `n` agents: all agents in one class for
    /// symmetric metrics, `{1}, {n-1}` for worst-agent metrics and
    /// `{floor((1-k/100) n)}, {1}, {rest}` for percentiles.
    pub fn class_sizes(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            Metric::AvgFunctionGap | Metric::AvgIterateError | Metric::ConsensusSpread => Ok(vec![n]),
            Metric::WorstAgentFunction | Metric::WorstAgentIterate => {
                if n < 2 {
                    return Err(PepError::InvalidPartition("worst-agent metrics need N >= 2".into()));
                }
                Ok(vec![1, n - 1])
            }
            Metric::Percentile(k) => {
                let excluded = ((1.0 - k / 100.0) * n as f64 + 1e-9).floor() as usize;
                if excluded == 0 {
                    return Err(PepError::InvalidPartition(format!(
                        "percentile {k} at N = {n} excludes no agent"
                    )));
                }
                if excluded + 1 > n {
                    return Err(PepError::InvalidPartition(format!("percentile {k} too small for N = {n}")));
                }
                let rest = n - excluded - 1;
                Ok(if rest > 0 { vec![excluded, 1, rest] } else { vec![excluded, 1] })
            }
        }
    }

    /// Class proportions in the many-agent limit; `None` marks a singleton.
    pub fn limit_proportions(&self) -> Vec<Option<f64>> {
        match self {
            Metric::AvgFunctionGap | Metric::AvgIterateError | Metric::ConsensusSpread => vec![Some(1.0)],
            Metric::WorstAgentFunction | Metric::WorstAgentIterate => vec![None, Some(1.0)],
            Metric::Percentile(k) => vec![Some(1.0 - k / 100.0), None, Some(k / 100.0)],
        }
    }

    fn check_classes(&self, singletons: &[bool]) -> Result<()> {
        let ok = match self {
            Metric::WorstAgentFunction | Metric::WorstAgentIterate => singletons.first() == Some(&true),
            Metric::Percentile(_) => singletons.len() >= 2 && singletons[1],
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PepError::InvalidPartition(format!(
                "metric {} needs a matching singleton class",
                self.name()
            )))
        }
    }
}

/// Where a gradient-norm initial condition is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradPoint {
    Start,
    Optimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `(1/N) sum ||x_i^0 - x*||^2 <= R`.
    AvgDist2,
    /// `||x_i^0 - x*||^2 <= R` for every agent.
    PerAgentDist2,
    /// `(1/N) sum ||grad f_i||^2 <= R` at the start or at the optimum.
    AvgGrad2(GradPoint),
    /// `||grad f_i||^2 <= R` for every agent.
    PerAgentGrad2(GradPoint),
    /// `(1/N) sum ||x_i^0 - xbar^0||^2 <= R`.
    AvgSpread2,
    /// `x_i^0 = x_j^0`.
    EqualStarts,
    /// `(1/N) sum f_i(x_i^0) - f_i(x*) <= R`.
    AvgFGap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub kind: InitialKind,
    pub bound: f64,
}

impl InitialCondition {
    pub fn new(kind: InitialKind, bound: f64) -> Self {
        Self { kind, bound }
    }

    pub fn parse(name: &str, bound: f64) -> Result<Self> {
        let kind = match name {
            "avg_dist2" => InitialKind::AvgDist2,
            "per_agent_dist2" => InitialKind::PerAgentDist2,
            "avg_grad2" => InitialKind::AvgGrad2(GradPoint::Start),
            "per_agent_grad2" => InitialKind::PerAgentGrad2(GradPoint::Start),
            "avg_opt_grad2" => InitialKind::AvgGrad2(GradPoint::Optimum),
            "per_agent_opt_grad2" => InitialKind::PerAgentGrad2(GradPoint::Optimum),
            "avg_spread2" => InitialKind::AvgSpread2,
            "equal_starts" => InitialKind::EqualStarts,
            "avg_f_gap" => InitialKind::AvgFGap,
            other => return Err(PepError::InvalidMetric(format!("unknown initial condition `{other}`"))),
        };
        Ok(Self { kind, bound })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            InitialKind::AvgDist2 => "avg_dist2",
            InitialKind::PerAgentDist2 => "per_agent_dist2",
            InitialKind::AvgGrad2(GradPoint::Start) => "avg_grad2",
            InitialKind::PerAgentGrad2(GradPoint::Start) => "per_agent_grad2",
            InitialKind::AvgGrad2(GradPoint::Optimum) => "avg_opt_grad2",
            InitialKind::PerAgentGrad2(GradPoint::Optimum) => "per_agent_opt_grad2",
            InitialKind::AvgSpread2 => "avg_spread2",
            InitialKind::EqualStarts => "equal_starts",
            InitialKind::AvgFGap => "avg_f_gap",
        }
    }

    /// The standard decentralized setting: `||x_i^0 - x*||^2 <= r1` and
    /// `||grad f_i(x*)||^2 <= r2` for every agent.
    pub fn standard(r1: f64, r2: f64) -> Vec<Self> {
        vec![
            Self::new(InitialKind::PerAgentDist2, r1),
            Self::new(InitialKind::PerAgentGrad2(GradPoint::Optimum), r2),
        ]
    }
}

/// How an expression scales with the number of agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprScale {
    /// Only agent averages of values and products (forms a, b, c).
    ScaleInvariant,
    /// Only quantities of one agent.
    SingleAgent,
    Other,
}

/// Mechanical classification of the term forms of `expr`.
pub fn classify(expr: &ScalarExpr) -> ExprScale {
    let aggregate = expr
        .gram
        .iter()
        .all(|t| matches!(t.pairing, Pairing::Mean | Pairing::Total | Pairing::Centered))
        && expr.values.iter().all(|t| t.scope == ValueScope::Mean);
    if aggregate {
        return ExprScale::ScaleInvariant;
    }
    let classes = expr.classes();
    let local = expr.gram.iter().all(|t| matches!(t.pairing, Pairing::Local(_)))
        && expr.values.iter().all(|t| matches!(t.scope, ValueScope::Local(_)));
    if local && classes.len() == 1 {
        ExprScale::SingleAgent
    } else {
        ExprScale::Other
    }
}

/// Objective of `metric` and the auxiliary constraints it needs.
pub fn compile_metric(metric: &Metric, trace: &AlgorithmTrace) -> Result<(ScalarExpr, Vec<Constraint>)> {
    let xk = trace.output_point().clone();
    let fstar = trace.registry.value(FSTAR)?;
    let value_of = |tag: &str| -> Result<usize> {
        trace.registry.value(&format!("f_{tag}")).map_err(|_| {
            PepError::UnknownTag(format!("metric {} needs common point `{tag}` in the trace", metric.name()))
        })
    };
    Ok(match metric {
        Metric::AvgFunctionGap => {
            let f = value_of(XBAR)?;
            (
                ScalarExpr::value(ValueScope::Mean, f) - ScalarExpr::value(ValueScope::Mean, fstar),
                Vec::new(),
            )
        }
        Metric::WorstAgentFunction => {
            let f = value_of(XCOPY)?;
            (
                ScalarExpr::value(ValueScope::Mean, f) - ScalarExpr::value(ValueScope::Mean, fstar),
                Vec::new(),
            )
        }
        Metric::AvgIterateError => (ScalarExpr::square(Pairing::Mean, &xk), Vec::new()),
        Metric::WorstAgentIterate => (ScalarExpr::square(Pairing::Local(0), &xk), Vec::new()),
        Metric::ConsensusSpread => (ScalarExpr::square(Pairing::Centered, &xk), Vec::new()),
        Metric::Percentile(_) => (
            ScalarExpr::square(Pairing::Local(1), &xk),
            vec![Constraint::new(
                "percentile-order",
                ScalarExpr::square(Pairing::Local(0), &xk) - ScalarExpr::square(Pairing::Local(1), &xk),
                Relation::Ge,
            )],
        ),
    })
}

/// One constraint per row; per-agent kinds give one row per class.
pub fn compile_initial_conditions(
    conds: &[InitialCondition],
    trace: &AlgorithmTrace,
    class_count: usize,
) -> Result<Vec<Constraint>> {
    let start = trace
        .initial
        .first()
        .ok_or_else(|| PepError::InvalidAlgorithm("algorithm has no starting point".into()))?;
    let x0 = trace.point(start)?.clone();
    let start_triplet = || {
        trace.gradient_at(start).ok_or_else(|| {
            PepError::InvalidMetric("initial condition needs a gradient evaluated at the start".into())
        })
    };
    let grad = |at: GradPoint| -> Result<_> {
        Ok(match at {
            GradPoint::Start => start_triplet()?.g.clone(),
            GradPoint::Optimum => trace.optimum().g.clone(),
        })
    };
    let mut out = Vec::new();
    for c in conds {
        let r = ScalarExpr::constant(c.bound);
        let name = c.name();
        match c.kind {
            InitialKind::AvgDist2 => out.push(Constraint::new(
                name,
                ScalarExpr::square(Pairing::Mean, &x0) - r,
                Relation::Le,
            )),
            InitialKind::PerAgentDist2 => {
                for u in 0..class_count {
                    out.push(Constraint::new(
                        format!("{name}[{u}]"),
                        ScalarExpr::square(Pairing::Local(u), &x0) - r.clone(),
                        Relation::Le,
                    ));
                }
            }
            InitialKind::AvgGrad2(at) => out.push(Constraint::new(
                name,
                ScalarExpr::square(Pairing::Mean, &grad(at)?) - r,
                Relation::Le,
            )),
            InitialKind::PerAgentGrad2(at) => {
                let g = grad(at)?;
                for u in 0..class_count {
                    out.push(Constraint::new(
                        format!("{name}[{u}]"),
                        ScalarExpr::square(Pairing::Local(u), &g) - r.clone(),
                        Relation::Le,
                    ));
                }
            }
            InitialKind::AvgSpread2 => out.push(Constraint::new(
                name,
                ScalarExpr::square(Pairing::Centered, &x0) - r,
                Relation::Le,
            )),
            InitialKind::EqualStarts => out.push(Constraint::new(
                name,
                ScalarExpr::square(Pairing::Centered, &x0),
                Relation::Eq,
            )),
            InitialKind::AvgFGap => {
                let f0 = start_triplet()?.f;
                let fstar = trace.registry.value(FSTAR)?;
                out.push(Constraint::new(
                    name,
                    ScalarExpr::value(ValueScope::Mean, f0) - ScalarExpr::value(ValueScope::Mean, fstar) - r,
                    Relation::Le,
                ));
            }
        }
    }
    Ok(out)
}

/// Optimality of `x* = 0` and the definitions of the trace's common points.
pub fn common_point_constraints(trace: &AlgorithmTrace, class_count: usize) -> Result<Vec<Constraint>> {
    let gstar = &trace.optimum().g;
    let mut out = vec![Constraint::new(
        "optimality",
        ScalarExpr::square(Pairing::Total, gstar),
        Relation::Eq,
    )];
    for cp in &trace.common_points {
        let c = &cp.triplet.x;
        let x = &cp.of;
        match cp.kind {
            CommonPointKind::AgentAverage => out.push(Constraint::new(
                format!("average-def[{}]", cp.triplet.label),
                ScalarExpr::square(Pairing::Mean, c) + ScalarExpr::product(Pairing::Total, x, &(x - &c.scale(2.0))),
                Relation::Eq,
            )),
            CommonPointKind::SpecificAgent { class } => {
                if class >= class_count {
                    return Err(PepError::InvalidPartition(format!("specific agent class {class} does not exist")));
                }
                out.push(Constraint::new(
                    format!("copy-anchor[{}]", cp.triplet.label),
                    ScalarExpr::square(Pairing::Local(class), &(c - x)),
                    Relation::Eq,
                ));
                for u in (0..class_count).filter(|&u| u != class) {
                    out.push(Constraint::new(
                        format!("copy-def[{}][{u}]", cp.triplet.label),
                        ScalarExpr::square(Pairing::Local(u), c) + ScalarExpr::square(Pairing::Local(class), x)
                            - 2.0 * ScalarExpr::product(Pairing::Cross(u, class), c, x),
                        Relation::Eq,
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Everything a PEP needs besides the trace and the partition.
#[derive(Clone, Debug, PartialEq)]
pub struct PepSettings {
    /// One function class per equivalence class.
    pub function_classes: Vec<FunctionClass>,
    /// One matrix class per consensus symbol.
    pub matrix_classes: Vec<MatrixClass>,
    pub metric: Metric,
    pub initial: Vec<InitialCondition>,
}

impl PepSettings {
    pub fn matrix_class(&self, symbol: &str) -> Result<&MatrixClass> {
        self.matrix_classes
            .iter()
            .find(|m| m.symbol == symbol)
            .ok_or_else(|| PepError::InvalidMatrixClass(format!("no matrix class for symbol `{symbol}`")))
    }
}

/// Assembles the layout-independent PEP. `singletons[u]` tells whether class
/// `u` holds a single agent. With `relaxed_consensus = false` the consensus
/// constraints are left to the caller.
pub fn assemble_symbolic(
    trace: &AlgorithmTrace,
    singletons: &[bool],
    settings: &PepSettings,
    relaxed_consensus: bool,
) -> Result<SymbolicPep> {
    let u_count = singletons.len();
    if settings.function_classes.len() != u_count {
        return Err(PepError::InvalidPartition(format!(
            "{} function classes for {} equivalence classes",
            settings.function_classes.len(),
            u_count
        )));
    }
    settings.metric.check_classes(singletons)?;
    let (objective, aux) = compile_metric(&settings.metric, trace)?;
    let triplets = trace.interpolation_triplets();
    let mut constraints = Vec::new();
    for (u, fc) in settings.function_classes.iter().enumerate() {
        constraints.extend(interpolation_constraints(&triplets, fc, u));
    }
    let mut lmis = Vec::new();
    if relaxed_consensus {
        for set in &trace.consensus {
            let mc = settings.matrix_class(&set.symbol)?;
            let cc = consensus_constraints(set, mc)?;
            if !cc.average.expr.gram.is_empty() {
                constraints.push(cc.average);
            }
            lmis.push(cc.lmi);
            constraints.extend(cc.symmetry);
        }
    }
    constraints.extend(common_point_constraints(trace, u_count)?);
    constraints.extend(compile_initial_conditions(&settings.initial, trace, u_count)?);
    constraints.extend(aux);
    Ok(SymbolicPep {
        objective,
        constraints,
        lmis,
    })
}
