use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ResultRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// `count_vs_eps.csv`: config_hash, label, epsilon, count, degree_sum, growth_index.
    CountVsEps,
    /// `nstar_vs_r.csv`: config_hash, label, epsilon, radius, n_star, reliable.
    NstarVsR,
    /// `error_vs_eps.csv`: config_hash, label, epsilon, h, sup_u_error, sup_grad_error.
    ErrorVsEps,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::CountVsEps, Figure::NstarVsR, Figure::ErrorVsEps];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::CountVsEps => "count_vs_eps.csv",
            Figure::NstarVsR => "nstar_vs_r.csv",
            Figure::ErrorVsEps => "error_vs_eps.csv",
        }
    }
}

fn missing(records: &[ResultRecord], figure: Figure) -> Vec<String> {
    let rows = records.iter().flat_map(|r| r.rows.iter());
    let mut out = Vec::new();
    match figure {
        Figure::CountVsEps => {
            if rows.clone().all(|r| r.critical_count.is_none()) {
                out.push("critical_count (count check)".to_string());
            }
        }
        Figure::NstarVsR => {
            if rows.clone().all(|r| r.profile_values.is_empty()) {
                out.push("n_star (doubling profile)".to_string());
            }
        }
        Figure::ErrorVsEps => {
            if rows.clone().all(|r| r.sup_u_error.is_none()) {
                out.push("sup_u_error, sup_grad_error (convergence check)".to_string());
            }
        }
    }
    out
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV per requested figure into `dir`.
pub fn emit_plot_data(records: &[ResultRecord], dir: &Path, figures: &[Figure]) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to plot: empty input".into()));
    }
    let absent: Vec<String> = figures.iter().flat_map(|&f| missing(records, f)).collect();
    if !absent.is_empty() {
        return Err(Error::MissingColumns(absent));
    }
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for &figure in figures {
        let path = dir.join(figure.file_name());
        let mut w = csv::Writer::from_path(&path)?;
        match figure {
            Figure::CountVsEps => {
                w.write_record(["config_hash", "label", "epsilon", "count", "degree_sum", "growth_index"])?;
                for rec in records {
                    for r in &rec.rows {
                        w.write_record([
                            rec.config_hash.clone(),
                            rec.label.clone(),
                            r.epsilon.to_string(),
                            cell(r.critical_count),
                            cell(r.degree_sum),
                            cell(r.growth_index),
                        ])?;
                    }
                }
            }
            Figure::NstarVsR => {
                w.write_record(["config_hash", "label", "epsilon", "radius", "n_star", "reliable"])?;
                for rec in records {
                    for r in &rec.rows {
                        for ((radius, v), ok) in r.profile_radii.iter().zip(&r.profile_values).zip(&r.profile_reliable) {
                            w.write_record([
                                rec.config_hash.clone(),
                                rec.label.clone(),
                                r.epsilon.to_string(),
                                radius.to_string(),
                                v.to_string(),
                                ok.to_string(),
                            ])?;
                        }
                    }
                }
            }
            Figure::ErrorVsEps => {
                w.write_record(["config_hash", "label", "epsilon", "h", "sup_u_error", "sup_grad_error"])?;
                for rec in records {
                    for r in &rec.rows {
                        w.write_record([
                            rec.config_hash.clone(),
                            rec.label.clone(),
                            r.epsilon.to_string(),
                            r.h.to_string(),
                            cell(r.sup_u_error),
                            cell(r.sup_grad_error),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
