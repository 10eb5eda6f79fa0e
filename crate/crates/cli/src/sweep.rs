//! Paired parameter sweeps: every variant replays the same seeded workload.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use bulkcast::{Policy, Scheme, Summary, WeightStrategy};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{self, load_topology, write_json, Experiment, OutputFormat, Prepared, SummaryFile};
use crate::CliError;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Pf,
    Policy,
    Scheme,
    Receivers,
    Weight,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pf => "pf",
            Self::Policy => "policy",
            Self::Scheme => "scheme",
            Self::Receivers => "receivers",
            Self::Weight => "weight",
        }
    }

    /// Only the receivers axis changes the generated workload.
    pub fn shares_workload(self) -> bool {
        self != Self::Receivers
    }

    fn apply(self, exp: &mut Experiment, value: &str) -> Result<(), String> {
        match self {
            Self::Pf => exp.sim.pf = value.parse().map_err(|_| format!("invalid pf {value:?}"))?,
            Self::Policy => exp.sim.policy = value.parse::<Policy>()?,
            Self::Scheme => exp.sim.scheme = value.parse::<Scheme>()?,
            Self::Receivers => {
                exp.workload.receivers = value.parse().map_err(|_| format!("invalid receiver count {value:?}"))?
            }
            Self::Weight => exp.sim.weight = value.parse::<WeightStrategy>()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub slug: String,
    pub value: String,
    pub experiment: Experiment,
}

/// Directory name identifying a variant's parameters.
pub fn slug(exp: &Experiment) -> String {
    let sim = &exp.sim;
    format!(
        "{}_{}_{}_pf{}_n{}_r{}",
        sim.scheme, sim.policy, sim.weight, sim.pf, sim.nmax, exp.workload.receivers
    )
}

pub fn variants(base: &Experiment, axis: Axis, values: &[String]) -> Result<Vec<Variant>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config(anyhow!("sweep needs at least one value")));
    }
    let mut out: Vec<Variant> = Vec::with_capacity(values.len());
    for value in values {
        let mut exp = base.clone();
        axis.apply(&mut exp, value.trim()).map_err(|e| CliError::Config(anyhow!(e)))?;
        exp.sim.validate().map_err(|e| CliError::Config(e.into()))?;
        let slug = slug(&exp);
        if out.iter().any(|v| v.slug == slug) {
            return Err(CliError::Config(anyhow!("duplicate sweep value {value:?}")));
        }
        out.push(Variant { slug, value: value.trim().to_string(), experiment: exp });
    }
    Ok(out)
}

/// One long-format row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub axis: String,
    pub axis_value: String,
    pub metric: String,
    pub value: f64,
    /// `value` over the smallest value of this metric across variants;
    /// empty when that minimum is not positive.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub variant: String,
    pub axis_value: String,
    #[serde(flatten)]
    pub run: SummaryFile,
}

/// Contents of `sweep.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub axis: Axis,
    pub base: Experiment,
    pub variants: Vec<SweepEntry>,
}

/// Named scalar metrics of a summary; undefined ones are left out.
pub fn metric_values(s: &Summary) -> Vec<(String, f64)> {
    let mut out = vec![("slots".to_string(), s.slots as f64)];
    let optional = [
        ("mean_completion", s.mean_completion),
        ("median_completion", s.median_completion),
        ("p95_completion", s.p95_completion),
        ("mean_throughput", s.mean_throughput),
        ("mean_partitions", s.mean_partitions),
        ("mean_max_group_entries", s.mean_max_group_entries),
    ];
    out.push(("total_bandwidth".into(), s.total_bandwidth));
    out.push(("max_group_entries".into(), s.max_group_entries as f64));
    out.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    for (k, v) in s.rank_mean_completion.iter().enumerate() {
        out.push((format!("completion_rank_{}", k + 1), *v));
    }
    out
}

pub fn long_rows(axis: Axis, entries: &[SweepEntry]) -> Vec<SweepRow> {
    let per_variant: Vec<Vec<(String, f64)>> = entries.iter().map(|e| metric_values(&e.run.summary)).collect();
    let minimum = |metric: &str| {
        per_variant
            .iter()
            .flat_map(|m| m.iter().filter(|(k, _)| k == metric).map(|(_, v)| *v))
            .fold(f64::INFINITY, f64::min)
    };
    let mut rows = Vec::new();
    for (entry, metrics) in entries.iter().zip(&per_variant) {
        for (metric, value) in metrics {
            let min = minimum(metric);
            rows.push(SweepRow {
                variant: entry.variant.clone(),
                axis: axis.name().into(),
                axis_value: entry.axis_value.clone(),
                metric: metric.clone(),
                value: *value,
                normalized: (min > 0.0 && min.is_finite()).then(|| value / min),
            });
        }
    }
    rows
}

/// Runs every variant in parallel, each into its own subdirectory of `out`,
/// then writes `sweep.csv` and `sweep.json`.
pub fn run_sweep(
    base: &Experiment,
    axis: Axis,
    values: &[String],
    out: &Path,
    format: OutputFormat,
) -> Result<SweepManifest, CliError> {
    let variants = variants(base, axis, values)?;
    let topology = load_topology(&base.topology)?;
    let shared = if axis.shares_workload() { Some(Prepared::with_topology(base, topology.clone())?) } else { None };

    let entries = variants
        .par_iter()
        .map(|v| {
            let own;
            let prep = match &shared {
                Some(p) => p,
                None => {
                    own = Prepared::with_topology(&v.experiment, topology.clone())?;
                    &own
                }
            };
            let outcome = experiment::execute(prep, v.experiment.sim)?;
            let run = experiment::write_outputs(&out.join(&v.slug), format, &v.experiment, prep, &outcome)?;
            Ok(SweepEntry { variant: v.slug.clone(), axis_value: v.value.clone(), run })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    if axis.shares_workload() && entries.windows(2).any(|w| w[0].run.workload_hash != w[1].run.workload_hash) {
        return Err(CliError::Runtime(anyhow!("sweep variants saw different workloads")));
    }

    let path = out.join(SWEEP_CSV);
    let mut writer = csv::Writer::from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)?;
    for row in long_rows(axis, &entries) {
        writer.serialize(row).map_err(|e| CliError::Runtime(e.into()))?;
    }
    writer.flush().map_err(|e| CliError::Runtime(e.into()))?;

    let manifest = SweepManifest { axis, base: base.clone(), variants: entries };
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.into()))?;
    write_json(&out.join(SWEEP_JSON), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn variants_get_distinct_stable_slugs() {
        let base = Experiment::default();
        let v = variants(&base, Axis::Pf, &strings(&["1.0", "1.1", "2"])).unwrap();
        let slugs: Vec<&str> = v.iter().map(|v| v.slug.as_str()).collect();
        assert_eq!(
            slugs,
            ["quickcast_maxmin_w6_pf1_nall_r8", "quickcast_maxmin_w6_pf1.1_nall_r8", "quickcast_maxmin_w6_pf2_nall_r8"]
        );
        // 1 and 1.0 are the same variant
        assert!(variants(&base, Axis::Pf, &strings(&["1", "1.0"])).is_err());
    }

    #[test]
    fn bad_axis_values_are_config_errors() {
        let base = Experiment::default();
        for (axis, value) in [(Axis::Pf, "x"), (Axis::Pf, "-1"), (Axis::Policy, "lifo"), (Axis::Weight, "w11")] {
            assert!(matches!(variants(&base, axis, &strings(&[value])), Err(CliError::Config(_))));
        }
        assert!(variants(&base, Axis::Scheme, &[]).is_err());
    }

    #[test]
    fn normalization_divides_by_the_smallest_value() {
        let entry = |name: &str, mean: f64, bandwidth: f64| SweepEntry {
            variant: name.into(),
            axis_value: name.into(),
            run: SummaryFile {
                config: Experiment::default(),
                seed: 0,
                workload_hash: String::new(),
                transfers: 0,
                bookkeeping: None,
                summary: Summary { mean_completion: Some(mean), total_bandwidth: bandwidth, ..Default::default() },
            },
        };
        let rows = long_rows(Axis::Scheme, &[entry("a", 4.0, 0.0), entry("b", 2.0, 0.0)]);
        let find = |v: &str, m: &str| rows.iter().find(|r| r.variant == v && r.metric == m).unwrap().normalized;
        assert_eq!(find("a", "mean_completion"), Some(2.0));
        assert_eq!(find("b", "mean_completion"), Some(1.0));
        assert_eq!(find("a", "total_bandwidth"), None);
    }
}
