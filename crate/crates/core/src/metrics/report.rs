//! Per-category CD / IoU table.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub category: String,
    pub samples: usize,
    pub cd: f64,
    pub iou: f64,
}

/// One row per category in first-seen order, then a `mean` row averaging
/// the category rows (each category weighs the same).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    /// Aggregates `(category, cd, iou)` per sample.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut acc: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
        for (cat, cd, iou) in samples {
            let e = acc.entry(cat.to_string()).or_insert_with(|| {
                order.push(cat.to_string());
                (0, 0.0, 0.0)
            });
            e.0 += 1;
            e.1 += cd;
            e.2 += iou;
        }
        let mut rows: Vec<MetricsRow> = order
            .into_iter()
            .map(|c| {
                let (n, cd, iou) = acc[&c];
                MetricsRow {
                    category: c,
                    samples: n,
                    cd: cd / n as f64,
                    iou: iou / n as f64,
                }
            })
            .collect();
        let k = rows.len().max(1) as f64;
        let mean = MetricsRow {
            category: "mean".into(),
            samples: rows.iter().map(|r| r.samples).sum(),
            cd: rows.iter().map(|r| r.cd).sum::<f64>() / k,
            iou: rows.iter().map(|r| r.iou).sum::<f64>() / k,
        };
        rows.push(mean);
        Self { rows }
    }

    pub fn mean(&self) -> &MetricsRow {
        self.rows.last().expect("report always has a mean row")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,samples,cd,iou\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.category, r.samples, r.cd, r.iou).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<12} {:>8} {:>12} {:>8}\n", "category", "samples", "CD", "IoU");
        for r in &self.rows {
            writeln!(s, "{:<12} {:>8} {:>12.6} {:>8.4}", r.category, r.samples, r.cd, r.iou).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_row_weighs_categories_equally() {
        let r = MetricsReport::from_samples([("a", 1.0, 0.5), ("a", 3.0, 0.5), ("b", 6.0, 1.0)]);
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[0].cd, 2.0);
        assert_eq!(r.mean().cd, 4.0);
        assert_eq!(r.mean().iou, 0.75);
        assert!(r.to_csv().starts_with("category,samples,cd,iou\na,2,2,0.5\n"));
    }
}
