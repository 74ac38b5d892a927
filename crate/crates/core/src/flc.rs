//! Mamdani fuzzy controller mapping normalized makespan and cost pressure
//! to the pricing model indicator (PMI).
//!
//! Inference uses min for conjunction, clipping for implication, max for
//! aggregation and the centroid for defuzzification.

use crate::error::{invalid, Error, Result};
use crate::resources::Pricing;

/// Triangle with a possibly degenerate side: `left == peak` or
/// `peak == right` gives a shoulder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularMf {
    left: f64,
    peak: f64,
    right: f64,
}

impl TriangularMf {
    pub fn new(left: f64, peak: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && peak.is_finite() && right.is_finite()) {
            return Err(invalid("membership function points must be finite"));
        }
        if !(left <= peak && peak <= right) {
            return Err(invalid(format!(
                "membership function needs left <= peak <= right, got ({left}, {peak}, {right})"
            )));
        }
        Ok(Self { left, peak, right })
    }

    pub fn points(&self) -> (f64, f64, f64) {
        (self.left, self.peak, self.right)
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x < self.left || x > self.right {
            0.0
        } else if x < self.peak {
            (x - self.left) / (self.peak - self.left)
        } else if x > self.peak {
            (self.right - x) / (self.right - self.peak)
        } else {
            1.0
        }
    }
}

pub fn membership(mf: &TriangularMf, x: f64) -> f64 {
    mf.membership(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Low,
    Medium,
    High,
}

/// Three linguistic terms over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub low: TriangularMf,
    pub medium: TriangularMf,
    pub high: TriangularMf,
}

impl Default for Partition {
    fn default() -> Self {
        Self {
            low: TriangularMf::new(0.0, 0.0, 0.5).expect("valid"),
            medium: TriangularMf::new(0.0, 0.5, 1.0).expect("valid"),
            high: TriangularMf::new(0.5, 1.0, 1.0).expect("valid"),
        }
    }
}

impl Partition {
    pub fn term(&self, term: Term) -> &TriangularMf {
        match term {
            Term::Low => &self.low,
            Term::Medium => &self.medium,
            Term::High => &self.high,
        }
    }

    /// Fails when some point of `[0, 1]` belongs to no term.
    pub fn check_coverage(&self) -> Result<()> {
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let total = self.low.membership(x) + self.medium.membership(x) + self.high.membership(x);
            if total <= 0.0 {
                return Err(invalid(format!("partition leaves {x} uncovered")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Antecedent {
    Is(Term),
    /// The input does not constrain the rule.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rule {
    pub makespan: Antecedent,
    pub cost: Antecedent,
    pub pmi: Term,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRuleBase {
    pub rules: Vec<Rule>,
}

impl Default for FuzzyRuleBase {
    /// Low makespan pressure favours unreliable VMs whatever the cost; high
    /// makespan pressure favours reliable VMs; in between, cost decides.
    fn default() -> Self {
        use Antecedent::{Any, Is};
        use Term::{High, Low, Medium};
        let rule = |makespan, cost, pmi| Rule { makespan, cost, pmi };
        Self {
            rules: vec![
                rule(Is(Low), Any, Low),
                rule(Is(Medium), Is(Low), High),
                rule(Is(Medium), Is(Medium), Medium),
                rule(Is(Medium), Is(High), Low),
                rule(Is(High), Any, High),
            ],
        }
    }
}

/// Union of clipped consequents.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub clipped: Vec<(TriangularMf, f64)>,
}

impl Aggregate {
    pub fn membership(&self, x: f64) -> f64 {
        self.clipped.iter().map(|(mf, level)| mf.membership(x).min(*level)).fold(0.0, f64::max)
    }
}

fn degree(partition: &Partition, antecedent: Antecedent, x: f64) -> f64 {
    match antecedent {
        Antecedent::Is(term) => partition.term(term).membership(x),
        Antecedent::Any => 1.0,
    }
}

/// Fires every rule and collects the clipped consequents.
pub fn infer(
    norm_m: f64,
    norm_c: f64,
    rules: &FuzzyRuleBase,
    input_m: &Partition,
    input_c: &Partition,
    output: &Partition,
) -> Aggregate {
    let clipped = rules
        .rules
        .iter()
        .filter_map(|r| {
            let strength = degree(input_m, r.makespan, norm_m).min(degree(input_c, r.cost, norm_c));
            (strength > 0.0).then(|| (*output.term(r.pmi), strength))
        })
        .collect();
    Aggregate { clipped }
}

pub const CENTROID_SAMPLES: usize = 1001;

/// Centre of mass over `[0, 1]` by the midpoint rule on
/// [`CENTROID_SAMPLES`] cells.
pub fn defuzzify_centroid(aggregate: &Aggregate) -> Result<f64> {
    centroid_with(aggregate, CENTROID_SAMPLES)
}

/// PMI values are reported on a 1e-12 grid. Summation noise below it is dropped
/// so that symmetric aggregates land exactly on their axis (e.g. 0.5).
const PMI_SCALE: f64 = 1e12;

pub fn centroid_with(aggregate: &Aggregate, samples: usize) -> Result<f64> {
    let n = samples as f64;
    let (mut area, mut moment) = (0.0, 0.0);
    for i in 0..samples {
        let x = (i as f64 + 0.5) / n;
        let mu = aggregate.membership(x);
        area += mu;
        // moment about the interval midpoint
        moment += ((2 * i + 1) as f64 - n) / (2.0 * n) * mu;
    }
    if area <= 0.0 {
        return Err(Error::ZeroAggregate);
    }
    let c = 0.5 + moment / area;
    Ok(((c * PMI_SCALE).round() / PMI_SCALE).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmiDecision {
    pub pmi: f64,
    pub pricing: Pricing,
    pub theta: f64,
}

/// A configured controller.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flc {
    pub makespan_terms: Partition,
    pub cost_terms: Partition,
    pub pmi_terms: Partition,
    pub rules: FuzzyRuleBase,
}

impl Flc {
    /// Crisp PMI for inputs clamped to `[0, 1]`.
    pub fn pmi(&self, norm_m: f64, norm_c: f64) -> Result<f64> {
        let m = norm_m.clamp(0.0, 1.0);
        let c = norm_c.clamp(0.0, 1.0);
        let agg = infer(m, c, &self.rules, &self.makespan_terms, &self.cost_terms, &self.pmi_terms);
        defuzzify_centroid(&agg)
    }

    /// Reliable iff `pmi >= theta`.
    pub fn decide(&self, norm_m: f64, norm_c: f64, theta: f64) -> Result<PmiDecision> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!("threshold {theta} outside [0, 1]")));
        }
        let pmi = self.pmi(norm_m, norm_c)?;
        let pricing = if pmi >= theta { Pricing::Reliable } else { Pricing::Unreliable };
        Ok(PmiDecision { pmi, pricing, theta })
    }
}

/// Evaluates the default controller.
pub fn flc_eval(norm_m: f64, norm_c: f64, theta: f64) -> Result<PmiDecision> {
    Flc::default().decide(norm_m, norm_c, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(mf: TriangularMf) -> Aggregate {
        Aggregate { clipped: vec![(mf, 1.0)] }
    }

    #[test]
    fn membership_examples() {
        let p = Partition::default();
        assert_eq!(p.medium.membership(0.5), 1.0);
        assert_eq!(p.medium.membership(0.25), 0.5);
        assert_eq!(p.low.membership(0.7), 0.0);
        assert_eq!(p.low.membership(0.0), 1.0);
        assert_eq!(p.high.membership(1.0), 1.0);
        assert_eq!(p.high.membership(0.75), 0.5);
        assert_eq!(p.medium.membership(-0.1), 0.0);
        assert!(TriangularMf::new(0.6, 0.5, 1.0).is_err());
        let spike = TriangularMf::new(0.3, 0.3, 0.3).unwrap();
        assert_eq!(spike.membership(0.3), 1.0);
        assert_eq!(spike.membership(0.31), 0.0);
    }

    #[test]
    fn partition_covers_unit_interval() {
        Partition::default().check_coverage().unwrap();
        let gappy = Partition {
            low: TriangularMf::new(0.0, 0.0, 0.2).unwrap(),
            medium: TriangularMf::new(0.3, 0.5, 0.7).unwrap(),
            high: TriangularMf::new(0.8, 1.0, 1.0).unwrap(),
        };
        assert!(gappy.check_coverage().is_err());
    }

    fn fired(m: f64, c: f64) -> Vec<(TriangularMf, f64)> {
        let p = Partition::default();
        infer(m, c, &FuzzyRuleBase::default(), &p, &p, &p).clipped
    }

    #[test]
    fn infer_examples() {
        let p = Partition::default();
        assert_eq!(fired(0.5, 0.5), vec![(p.medium, 1.0)]);
        assert_eq!(fired(1.0, 0.2), vec![(p.high, 1.0)]);
        assert_eq!(fired(0.0, 0.9), vec![(p.low, 1.0)]);
    }

    #[test]
    fn any_antecedent_ignores_cost() {
        // rule 1 fires with the makespan degree alone, for any cost
        let p = Partition::default();
        for c in [0.0, 0.3, 0.5, 1.0] {
            let agg = fired(0.2, c);
            assert!(agg.contains(&(p.low, 0.6)), "{c}: {agg:?}");
        }
    }

    #[test]
    fn centroid_examples() {
        let p = Partition::default();
        assert!((defuzzify_centroid(&full(p.medium)).unwrap() - 0.5).abs() < 1e-12);
        assert!((defuzzify_centroid(&full(p.high)).unwrap() - 5.0 / 6.0).abs() < 1e-3);
        assert!((defuzzify_centroid(&full(p.low)).unwrap() - 1.0 / 6.0).abs() < 1e-3);
        assert_eq!(defuzzify_centroid(&Aggregate { clipped: vec![] }), Err(Error::ZeroAggregate));
    }

    #[test]
    fn flc_eval_examples() {
        let d = flc_eval(1.0, 0.0, 0.5).unwrap();
        assert!((d.pmi - 0.8333).abs() < 1e-3);
        assert_eq!(d.pricing, Pricing::Reliable);

        let d = flc_eval(0.0, 0.0, 0.5).unwrap();
        assert!((d.pmi - 0.1667).abs() < 1e-3);
        assert_eq!(d.pricing, Pricing::Unreliable);

        let d = flc_eval(0.5, 0.5, 0.5).unwrap();
        assert_eq!(d.pmi, 0.5);
        assert_eq!(d.pricing, Pricing::Reliable);

        assert!(flc_eval(0.5, 0.5, 1.5).is_err());
    }

    #[test]
    fn inputs_are_clamped() {
        assert_eq!(flc_eval(7.0, -3.0, 0.5).unwrap(), flc_eval(1.0, 0.0, 0.5).unwrap());
    }

    #[test]
    fn theta_zero_is_always_reliable() {
        for i in 0..=20 {
            for j in 0..=20 {
                let d = flc_eval(i as f64 / 20.0, j as f64 / 20.0, 0.0).unwrap();
                assert_eq!(d.pricing, Pricing::Reliable);
            }
        }
    }
}
