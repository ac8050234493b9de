//! Feature ablation: identical models differing only in the blended features.

use std::fmt::Write;

use crate::blend::FeatureSet;
use crate::data::{Dataset, Sample, Split};
use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::pipeline::{evaluate, ModelConfig, PcdNet, StepRecord, TrainConfig, Trainer};
use crate::rng::{stream, Purpose};

pub const ABLATION_FEATURES: [FeatureSet; 3] = [FeatureSet::ProjectionOnly, FeatureSet::AdainOnly, FeatureSet::Full];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub features: FeatureSet,
    /// Blended feature width.
    pub width: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Trains and evaluates one model per feature set. `on_step` sees the
/// feature set and every training record.
pub fn ablation_run(
    dataset: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(FeatureSet, &StepRecord),
) -> Result<AblationReport> {
    let train_set: Vec<&Sample> = dataset.split(Split::Train).collect();
    let test_set: Vec<&Sample> = dataset.split(Split::Test).collect();
    let mut rows = Vec::with_capacity(ABLATION_FEATURES.len());
    for features in ABLATION_FEATURES {
        let cfg = ModelConfig {
            features,
            ..model.clone()
        };
        let net = PcdNet::new(&cfg, &mut stream(seed, Purpose::Init, 0))?;
        let mut trainer = Trainer::new(net, train.clone(), seed)?;
        let total = trainer.total_steps(train_set.len());
        trainer.run(&train_set, total, |_, r| {
            on_step(features, r);
            Ok(())
        })?;
        rows.push(AblationRow {
            features,
            width: cfg.feature_width(),
            metrics: evaluate(&trainer.model, &test_set, train.nn, seed, 1)?,
        });
    }
    Ok(AblationReport { rows })
}

impl AblationReport {
    fn columns(&self) -> Vec<String> {
        self.rows
            .first()
            .map(|r| r.metrics.rows.iter().map(|m| m.category.clone()).collect())
            .unwrap_or_default()
    }

    /// One line per `(features, metric)` with a column per category and the mean.
    pub fn to_csv(&self) -> String {
        let mut s = format!("features,width,metric,{}\n", self.columns().join(","));
        for metric in ["cd", "iou"] {
            for r in &self.rows {
                let vals: Vec<String> = r
                    .metrics
                    .rows
                    .iter()
                    .map(|m| if metric == "cd" { m.cd } else { m.iou }.to_string())
                    .collect();
                writeln!(s, "{},{},{},{}", r.features.label(), r.width, metric, vals.join(",")).unwrap();
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cols = self.columns();
        let mut s = String::new();
        for (title, metric) in [("Chamfer distance", "cd"), ("IoU", "iou")] {
            writeln!(s, "{title}").unwrap();
            write!(s, "{:<12} {:>6}", "features", "D").unwrap();
            for c in &cols {
                write!(s, " {c:>10}").unwrap();
            }
            s.push('\n');
            for r in &self.rows {
                write!(s, "{:<12} {:>6}", r.features.label(), r.width).unwrap();
                for m in &r.metrics.rows {
                    let v = if metric == "cd" { m.cd } else { m.iou };
                    write!(s, " {v:>10.5}").unwrap();
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}
