//! CSV emission.
//!
//! File naming in the output directory:
//!
//! * `cdf_<metric>_<method>.csv` for metric in `rmsse`, `sinr_db`, `se`:
//!   a `# cfba-cdf v1 …` comment line, a `value,cdf` header, then the sorted
//!   samples with their empirical CDF.
//! * `summary.csv`: a `# cfba-summary v1` comment line and one row per
//!   (method, metric) with count, mean, min, p10, p50, p90 and max.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{empirical_cdf, mean, quantile, Metric, MetricsReport};
use super::HarnessError;

pub const CDF_SCHEMA: &str = "cfba-cdf v1";
pub const SUMMARY_SCHEMA: &str = "cfba-summary v1";

pub fn cdf_file_name(metric: Metric, method: &str) -> String {
    format!("cdf_{}_{}.csv", metric.as_str(), method)
}

pub fn cdf_csv(values: &[f64], metric: Metric, method: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "# {CDF_SCHEMA} metric={} method={} count={}",
        metric.as_str(),
        method,
        values.len()
    )
    .unwrap();
    s.push_str("value,cdf\n");
    for (x, p) in empirical_cdf(values) {
        writeln!(s, "{x:.12e},{p:.12e}").unwrap();
    }
    s
}

pub fn summary_csv(report: &MetricsReport) -> String {
    let mut s = format!("# {SUMMARY_SCHEMA} drops={}\n", report.drops);
    s.push_str("method,metric,count,mean,min,p10,p50,p90,max\n");
    for (method, mm) in &report.methods {
        for metric in Metric::ALL {
            let v = mm.values(metric);
            writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                method,
                metric.as_str(),
                v.len(),
                mean(v),
                quantile(v, 0.0),
                quantile(v, 0.1),
                quantile(v, 0.5),
                quantile(v, 0.9),
                quantile(v, 1.0)
            )
            .unwrap();
        }
    }
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Writes every CDF file plus the summary; returns the paths written.
pub fn emit_cdfs(report: &MetricsReport, outdir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if report.methods.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    fs::create_dir_all(outdir).map_err(|source| HarnessError::Io {
        path: outdir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for (method, mm) in &report.methods {
        for metric in Metric::ALL {
            let name = cdf_file_name(metric, method.as_str());
            let text = cdf_csv(mm.values(metric), metric, method.as_str());
            written.push(write(outdir.join(name), &text)?);
        }
    }
    written.push(write(outdir.join("summary.csv"), &summary_csv(report))?);
    Ok(written)
}
