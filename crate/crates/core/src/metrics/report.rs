use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "tag,model,levels,mode,psnr_db,ssim,params";

/// One aggregated result: mean metrics over the test images sharing `tag`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub tag: String,
    pub model: String,
    pub levels: usize,
    pub mode: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub params: usize,
}

fn fmt_psnr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// CSV text sorted by (tag, model, levels, mode).
pub fn format_report(rows: &[MetricRow]) -> String {
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.tag, &a.model, a.levels, &a.mode).cmp(&(&b.tag, &b.model, b.levels, &b.mode))
    });
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{}",
            r.tag,
            r.model,
            r.levels,
            r.mode,
            fmt_psnr(r.psnr_db),
            r.ssim,
            r.params
        );
    }
    out
}

pub fn write_report(rows: &[MetricRow], path: &Path) -> Result<()> {
    fs::write(path, format_report(rows)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
