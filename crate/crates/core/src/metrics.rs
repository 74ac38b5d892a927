//! Evaluation of a finished run: controller accuracy, makespan and cost
//! relative to the ideal bounds, and the share of tasks that never had to be
//! retried.

use crate::baselines::{Bounds, ReferenceAssignments};
use crate::error::{invalid, Error, Result};
use crate::resources::Pricing;
use crate::simulator::SimResult;
use crate::uds::DispatchDecision;
use crate::workflow::{TaskId, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Correct pricing decisions, percent.
    pub acc: f64,
    pub norm_m_final: f64,
    pub norm_c_final: f64,
    /// Tasks that completed on their first attempt, percent.
    pub succ_r: f64,
    /// Number of correct decisions.
    pub delta: usize,
}

/// Which decisions `accuracy` scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Scoring {
    /// The first decision made for each task.
    #[default]
    FirstAttempt,
    /// Every decision, including retries.
    EveryAttempt,
}

fn correct(d: &DispatchDecision, refs: &ReferenceAssignments) -> Result<bool> {
    let (lambda1, lambda2) = refs
        .get(d.task)
        .ok_or_else(|| Error::IncompletePlan(format!("no reference assignment for {}", d.task)))?;
    Ok(match d.pricing {
        Pricing::Reliable => lambda1,
        Pricing::Unreliable => lambda2,
    })
}

/// Percentage of correct decisions and their count.
///
/// With [`Scoring::FirstAttempt`] the denominator is the number of real tasks
/// of `graph`; a task without any decision counts as incorrect.
pub fn accuracy(
    graph: &WorkflowGraph,
    decisions: &[DispatchDecision],
    refs: &ReferenceAssignments,
    scoring: Scoring,
) -> Result<(f64, usize)> {
    match scoring {
        Scoring::FirstAttempt => {
            let mut first: Vec<Option<&DispatchDecision>> = vec![None; graph.len()];
            for d in decisions {
                let slot = first
                    .get_mut(d.task.index())
                    .ok_or_else(|| invalid(format!("decision for unknown {}", d.task)))?;
                if slot.is_none_or(|f| d.attempt < f.attempt) {
                    *slot = Some(d);
                }
            }
            let mut delta = 0;
            for d in first.into_iter().flatten() {
                delta += usize::from(correct(d, refs)?);
            }
            let n = graph.real_task_count();
            Ok((if n == 0 { 100.0 } else { 100.0 * delta as f64 / n as f64 }, delta))
        }
        Scoring::EveryAttempt => {
            let mut delta = 0;
            for d in decisions {
                delta += usize::from(correct(d, refs)?);
            }
            let n = decisions.len();
            Ok((if n == 0 { 100.0 } else { 100.0 * delta as f64 / n as f64 }, delta))
        }
    }
}

/// `m_final / m_lower` and `c_final / c_lower`.
pub fn normalized_finals(m_final: f64, c_final: f64, bounds: &Bounds) -> Result<(f64, f64)> {
    if !(bounds.m_lower > 0.0 && bounds.c_lower > 0.0) {
        return Err(invalid("lower bounds must be positive to normalize"));
    }
    Ok((m_final / bounds.m_lower, c_final / bounds.c_lower))
}

/// Percentage of real tasks whose completing attempt was the first one.
pub fn success_rate(graph: &WorkflowGraph, result: &SimResult) -> f64 {
    let real: Vec<TaskId> = graph.real_tasks().map(|t| t.id).collect();
    if real.is_empty() {
        return 100.0;
    }
    let first = real.iter().filter(|t| result.attempts[t.index()] == 1).count();
    100.0 * first as f64 / real.len() as f64
}

pub fn evaluate(
    graph: &WorkflowGraph,
    result: &SimResult,
    bounds: &Bounds,
    refs: &ReferenceAssignments,
    scoring: Scoring,
) -> Result<MetricsReport> {
    let (acc, delta) = accuracy(graph, &result.decisions, refs, scoring)?;
    let (norm_m_final, norm_c_final) = normalized_finals(result.m_final, result.c_final, bounds)?;
    Ok(MetricsReport { acc, norm_m_final, norm_c_final, succ_r: success_rate(graph, result), delta })
}
