//! Image quality metrics and the CSV report.

mod quality;
mod report;

pub use quality::{psnr, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{format_report, write_report, MetricRow};
