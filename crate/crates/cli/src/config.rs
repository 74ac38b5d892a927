//! Experiment configuration.
//!
//! A config file is TOML with the sections `workflow`, `catalog`, `uds`,
//! `sim` and `sweep`. Every key doubles as a command-line flag of the same
//! name (`demand_min` becomes `--demand-min`); flags win over the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use clap::Args;
use serde::{Deserialize, Deserializer};
use uds_core::flc::{Antecedent, FuzzyRuleBase, Partition, Rule, Term, TriangularMf};
use uds_core::metrics::Scoring;
use uds_core::resources::{Variation, DEFAULT_BASE_MIPS};
use uds_core::workflow::SyntheticConfig;
use uds_core::{Flc, Pattern, SimConfig, Timing, UdsConfig, VmCatalog};

fn one_or_many<'de, D, T>(de: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Some(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    }))
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowSection {
    /// DAX file or synthetic `pattern:n` (pipeline, fanout_fanin, aggregation,
    /// distribution, redistribution). Repeatable.
    #[arg(long, value_name = "PATH|PATTERN:N")]
    #[serde(alias = "sources", deserialize_with = "one_or_many")]
    pub workflow: Option<Vec<String>>,
    /// Seed of the synthetic generator.
    #[arg(long)]
    pub workflow_seed: Option<u64>,
    /// Smallest synthetic task demand (MI).
    #[arg(long)]
    pub demand_min: Option<f64>,
    #[arg(long)]
    pub demand_max: Option<f64>,
    /// Smallest synthetic edge volume (Mbit).
    #[arg(long)]
    pub data_min: Option<f64>,
    #[arg(long)]
    pub data_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    /// Catalog CSV: name,vcpus,price_reliable,price_unreliable,p_hourly[,speed_mips].
    #[arg(long, value_name = "FILE")]
    #[serde(alias = "file")]
    pub catalog: Option<PathBuf>,
    /// MIPS per vCPU when a catalog row has no explicit speed.
    #[arg(long)]
    pub base_mips: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct UdsSection {
    /// PMI threshold(s); comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub theta: Option<Vec<f64>>,
    /// Makespan upper-bound factor(s).
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub a: Option<Vec<f64>>,
    /// Cost upper-bound factor(s).
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub b: Option<Vec<f64>>,
    /// `first_attempt` or `every_attempt`.
    #[arg(long)]
    pub scoring: Option<String>,
    /// Points of the Low term shared by all three partitions, e.g. `0,0,0.5`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub low: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub medium: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub high: Option<Vec<f64>>,
    /// Replaces the rule base; each rule reads `<makespan> <cost> => <pmi>`
    /// with terms low, medium, high or any.
    #[arg(long = "rules", visible_alias = "rule", value_name = "RULE")]
    pub rules: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[arg(long)]
    pub slot_seconds: Option<f64>,
    #[arg(long)]
    pub bandwidth_mbps: Option<f64>,
    #[arg(long)]
    pub provisioning_seconds: Option<f64>,
    #[arg(long)]
    pub billing_cycle: Option<f64>,
    /// Performance variation on or off.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub variation: Option<bool>,
    #[arg(long)]
    pub variation_mean: Option<f64>,
    #[arg(long)]
    pub variation_stdev: Option<f64>,
    #[arg(long)]
    pub variation_cap: Option<f64>,
    /// Random interruptions of unreliable VMs on or off.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub interruptions: Option<bool>,
    #[arg(long)]
    pub max_lease_seconds: Option<f64>,
    #[arg(long)]
    pub max_sim_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Replications per sweep point.
    #[arg(long)]
    pub reps: Option<u32>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write per-run trace and decision CSVs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trace: Option<bool>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[command(flatten)]
    pub workflow: WorkflowSection,
    #[command(flatten)]
    pub catalog: CatalogSection,
    #[command(flatten)]
    pub uds: UdsSection,
    #[command(flatten)]
    pub sim: SimSection,
    #[command(flatten)]
    pub sweep: SweepSection,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),+ $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Keys set in `top` replace those of `self`.
    pub fn overlay(mut self, top: ConfigFile) -> Self {
        let (w, t) = (&mut self.workflow, top.workflow);
        overlay!(w, t; workflow, workflow_seed, demand_min, demand_max, data_min, data_max);
        let (c, t) = (&mut self.catalog, top.catalog);
        overlay!(c, t; catalog, base_mips);
        let (u, t) = (&mut self.uds, top.uds);
        overlay!(u, t; theta, a, b, scoring, low, medium, high, rules);
        let (s, t) = (&mut self.sim, top.sim);
        overlay!(s, t; slot_seconds, bandwidth_mbps, provisioning_seconds, billing_cycle, variation,
            variation_mean, variation_stdev, variation_cap, interruptions, max_lease_seconds, max_sim_seconds);
        let (s, t) = (&mut self.sweep, top.sweep);
        overlay!(s, t; reps, seed, out, trace, jobs);
        self
    }
}

/// Where a workflow comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkflowSource {
    Dax(PathBuf),
    Synthetic { pattern: Pattern, tasks: usize },
}

impl WorkflowSource {
    /// `pattern:n` when the prefix names a pattern and `n` is a count,
    /// otherwise a path.
    pub fn parse(s: &str) -> Self {
        if let Some((p, n)) = s.rsplit_once(':') {
            if let (Ok(pattern), Ok(tasks)) = (Pattern::from_str(p), n.trim().parse::<usize>()) {
                return WorkflowSource::Synthetic { pattern, tasks };
            }
        }
        WorkflowSource::Dax(PathBuf::from(s))
    }

    pub fn label(&self) -> String {
        match self {
            WorkflowSource::Dax(p) => p.display().to_string(),
            WorkflowSource::Synthetic { pattern, tasks } => format!("{pattern}:{tasks}"),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub workflows: Vec<WorkflowSource>,
    pub synthetic: SyntheticConfig,
    pub workflow_seed: u64,
    pub catalog: VmCatalog,
    pub flc: Flc,
    pub thetas: Vec<f64>,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub scoring: Scoring,
    /// Simulator settings; the seed is replaced per run.
    pub sim: SimConfig,
    pub reps: u32,
    pub master_seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub jobs: Option<usize>,
}

fn parse_term(s: &str) -> anyhow::Result<Antecedent> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "low" => Antecedent::Is(Term::Low),
        "medium" => Antecedent::Is(Term::Medium),
        "high" => Antecedent::Is(Term::High),
        "any" => Antecedent::Any,
        other => bail!("unknown fuzzy term `{other}`"),
    })
}

/// Parses `<makespan> <cost> => <pmi>`.
pub fn parse_rule(s: &str) -> anyhow::Result<Rule> {
    let (lhs, rhs) = s.split_once("=>").with_context(|| format!("rule `{s}` lacks `=>`"))?;
    let inputs: Vec<&str> = lhs.split_whitespace().collect();
    ensure!(inputs.len() == 2, "rule `{s}` needs two antecedents");
    let pmi = match parse_term(rhs.trim())? {
        Antecedent::Is(t) => t,
        Antecedent::Any => bail!("rule `{s}`: the consequent cannot be `any`"),
    };
    Ok(Rule { makespan: parse_term(inputs[0])?, cost: parse_term(inputs[1])?, pmi })
}

fn triangle(points: &Option<Vec<f64>>, default: TriangularMf) -> anyhow::Result<TriangularMf> {
    match points.as_deref() {
        None => Ok(default),
        Some(&[l, p, r]) => Ok(TriangularMf::new(l, p, r)?),
        Some(other) => bail!("a membership function needs 3 points, got {}", other.len()),
    }
}

fn sweep_values(name: &str, values: Option<Vec<f64>>, default: f64) -> anyhow::Result<Vec<f64>> {
    let values = values.unwrap_or_else(|| vec![default]);
    ensure!(!values.is_empty(), "`{name}` needs at least one value");
    Ok(values)
}

impl ExperimentSpec {
    pub fn from_config(cfg: ConfigFile) -> anyhow::Result<Self> {
        let w = cfg.workflow;
        let workflows: Vec<WorkflowSource> =
            w.workflow.unwrap_or_default().iter().map(|s| WorkflowSource::parse(s)).collect();
        ensure!(!workflows.is_empty(), "no workflow given (use --workflow or [workflow] workflow = ...)");
        let defaults = SyntheticConfig::default();
        let synthetic = SyntheticConfig {
            demand_mi: (
                w.demand_min.unwrap_or(defaults.demand_mi.0),
                w.demand_max.unwrap_or(defaults.demand_mi.1),
            ),
            data_mbit: (
                w.data_min.unwrap_or(defaults.data_mbit.0),
                w.data_max.unwrap_or(defaults.data_mbit.1),
            ),
        };
        synthetic.validate()?;

        let base_mips = cfg.catalog.base_mips.unwrap_or(DEFAULT_BASE_MIPS);
        ensure!(base_mips > 0.0, "base_mips must be positive");
        let catalog = match &cfg.catalog.catalog {
            Some(path) => VmCatalog::from_csv_path(path, base_mips)?,
            None => VmCatalog::with_base_mips(base_mips),
        };

        let u = cfg.uds;
        let defaults = UdsConfig::default();
        let thetas = sweep_values("theta", u.theta, defaults.theta)?;
        let a_values = sweep_values("a", u.a, defaults.a)?;
        let b_values = sweep_values("b", u.b, defaults.b)?;
        for &theta in &thetas {
            for &a in &a_values {
                for &b in &b_values {
                    UdsConfig { theta, a, b }.validate()?;
                }
            }
        }
        let scoring = match u.scoring.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("first_attempt") => Scoring::FirstAttempt,
            Some("every_attempt") => Scoring::EveryAttempt,
            Some(other) => bail!("unknown scoring `{other}`"),
        };
        let base = Partition::default();
        let partition = Partition {
            low: triangle(&u.low, base.low)?,
            medium: triangle(&u.medium, base.medium)?,
            high: triangle(&u.high, base.high)?,
        };
        partition.check_coverage()?;
        let rules = match &u.rules {
            None => FuzzyRuleBase::default(),
            Some(rules) => {
                FuzzyRuleBase { rules: rules.iter().map(|r| parse_rule(r)).collect::<anyhow::Result<_>>()? }
            }
        };
        let flc = Flc { makespan_terms: partition, cost_terms: partition, pmi_terms: partition, rules };

        let s = cfg.sim;
        let dt = Timing::default();
        let dv = Variation::default();
        let ds = SimConfig::default();
        let sim = SimConfig {
            timing: Timing {
                slot_seconds: s.slot_seconds.unwrap_or(dt.slot_seconds),
                bandwidth_mbps: s.bandwidth_mbps.unwrap_or(dt.bandwidth_mbps),
                provisioning_seconds: s.provisioning_seconds.unwrap_or(dt.provisioning_seconds),
                billing_cycle: s.billing_cycle.unwrap_or(dt.billing_cycle),
            },
            variation: Variation {
                enabled: s.variation.unwrap_or(dv.enabled),
                mean: s.variation_mean.unwrap_or(dv.mean),
                stdev: s.variation_stdev.unwrap_or(dv.stdev),
                cap: s.variation_cap.unwrap_or(dv.cap),
            },
            seed: 0,
            max_sim_seconds: s.max_sim_seconds.unwrap_or(ds.max_sim_seconds),
            max_lease_seconds: s.max_lease_seconds.unwrap_or(ds.max_lease_seconds),
            interruptions: s.interruptions.unwrap_or(ds.interruptions),
        };
        sim.validate()?;

        let sw = cfg.sweep;
        let reps = sw.reps.unwrap_or(1);
        ensure!(reps >= 1, "reps must be at least 1");
        ensure!(sw.jobs != Some(0), "jobs must be at least 1");
        Ok(Self {
            workflows,
            synthetic,
            workflow_seed: w.workflow_seed.unwrap_or(0),
            catalog,
            flc,
            thetas,
            a_values,
            b_values,
            scoring,
            sim,
            reps,
            master_seed: sw.seed.unwrap_or(0),
            out: sw.out.unwrap_or_else(|| PathBuf::from("results")),
            trace: sw.trace.unwrap_or(false),
            jobs: sw.jobs,
        })
    }

    pub fn run_count(&self) -> usize {
        self.workflows.len()
            * self.thetas.len()
            * self.a_values.len()
            * self.b_values.len()
            * self.reps as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources() {
        assert_eq!(
            WorkflowSource::parse("pipeline:20"),
            WorkflowSource::Synthetic { pattern: Pattern::Pipeline, tasks: 20 }
        );
        assert_eq!(WorkflowSource::parse("x/montage.dax"), WorkflowSource::Dax("x/montage.dax".into()));
        assert_eq!(WorkflowSource::parse("C:dir"), WorkflowSource::Dax("C:dir".into()));
    }

    #[test]
    fn file_and_overlay() {
        let file = ConfigFile::parse(
            r#"
            [workflow]
            workflow = "fanout:30"
            [uds]
            theta = [0.1, 0.5]
            a = 3
            [sweep]
            reps = 4
            seed = 9
            "#,
        )
        .unwrap();
        let mut flags = ConfigFile::default();
        flags.sweep.seed = Some(11);
        let spec = ExperimentSpec::from_config(file.overlay(flags)).unwrap();
        assert_eq!(spec.thetas, [0.1, 0.5]);
        assert_eq!(spec.a_values, [3.0]);
        assert_eq!(spec.b_values, [2.0]);
        assert_eq!((spec.reps, spec.master_seed), (4, 11));
        assert_eq!(spec.run_count(), 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("[uds]\ntheta_list = [0.5]\n").is_err());
        assert!(ConfigFile::parse("[nope]\n").is_err());
    }

    #[test]
    fn bad_values() {
        let mut cfg = ConfigFile::default();
        cfg.workflow.workflow = Some(vec!["pipeline:5".into()]);
        cfg.uds.theta = Some(vec![1.5]);
        assert!(ExperimentSpec::from_config(cfg.clone()).is_err());
        cfg.uds.theta = Some(vec![]);
        assert!(ExperimentSpec::from_config(cfg.clone()).is_err());
        cfg.uds.theta = None;
        cfg.sweep.reps = Some(0);
        assert!(ExperimentSpec::from_config(cfg).is_err());
        assert!(ExperimentSpec::from_config(ConfigFile::default()).is_err());
    }

    #[test]
    fn rules() {
        let r = parse_rule("medium any => high").unwrap();
        assert_eq!(r.makespan, Antecedent::Is(Term::Medium));
        assert_eq!(r.cost, Antecedent::Any);
        assert_eq!(r.pmi, Term::High);
        assert!(parse_rule("low => high").is_err());
        assert!(parse_rule("low low => any").is_err());
        assert!(parse_rule("low low high").is_err());
    }
}
