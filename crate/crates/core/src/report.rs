//! Persisted outputs: record streams, report documents, data tables and SVG plots.
//!
//! All writers are deterministic: the same inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::audit::{AblationCell, Quarantined};
use crate::error::{Error, Result};
use crate::evaluation::AttackReport;
use crate::similarity::ScoreRecord;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn records_to_jsonl(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn write_records(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    write_file(path, &records_to_jsonl(records))
}

pub fn read_records(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn report_to_json(report: &AttackReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report(path: &Path, report: &AttackReport) -> Result<()> {
    write_file(path, &report_to_json(report))
}

pub fn read_report(path: &Path) -> Result<AttackReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_quarantine(path: &Path, quarantined: &[Quarantined]) -> Result<()> {
    let mut s = String::from("id\terror\n");
    for q in quarantined {
        let _ = writeln!(s, "{}\t{}", q.id, q.error.replace(['\n', '\t'], " "));
    }
    write_file(path, &s)
}

/// `bin_start,bin_end,member_density,nonmember_density`
pub fn histogram_csv(report: &AttackReport) -> String {
    let h = &report.histogram;
    let mut s = String::from("bin_start,bin_end,member_density,nonmember_density\n");
    for b in 0..h.bins() {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e}",
            h.edges[b],
            h.edges[b + 1],
            h.member_density[b],
            h.nonmember_density[b]
        );
    }
    s
}

pub fn roc_csv(report: &AttackReport) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (fpr, tpr) in &report.roc_points {
        let _ = writeln!(s, "{fpr:e},{tpr:e}");
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn svg_frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y0}" stroke="black"/>"#,
        y0 = H - PAD,
        x1 = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s
}

fn axis_ticks(s: &mut String, x_range: (f64, f64), y_range: (f64, f64)) {
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = PAD + f * (W - 2.0 * PAD);
        let y = H - PAD - f * (H - 2.0 * PAD);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{:.3}</text><text x="{:.2}" y="{y:.2}" text-anchor="end">{:.3}</text>"#,
            H - PAD + 16.0,
            x_range.0 + f * (x_range.1 - x_range.0),
            PAD - 6.0,
            y_range.0 + f * (y_range.1 - y_range.0)
        );
    }
}

/// Overlaid member / non-member density bars.
pub fn histogram_svg(report: &AttackReport) -> String {
    let h = &report.histogram;
    let (lo, hi) = (h.edges[0], h.edges[h.bins()]);
    let top = h
        .member_density
        .iter()
        .chain(&h.nonmember_density)
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut s = svg_frame(
        &format!("{} score distributions", report.attack),
        "membership score",
        "density",
    );
    axis_ticks(&mut s, (lo, hi), (0.0, top));
    let sx = |v: f64| PAD + (v - lo) / (hi - lo) * (W - 2.0 * PAD);
    let sy = |d: f64| d / top * (H - 2.0 * PAD);
    for (densities, color) in [(&h.nonmember_density, "#d62728"), (&h.member_density, "#1f77b4")] {
        for b in 0..h.bins() {
            let (x0, x1) = (sx(h.edges[b]), sx(h.edges[b + 1]));
            let bh = sy(densities[b]);
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{color}" fill-opacity="0.5"/>"#,
                H - PAD - bh,
                x1 - x0
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<rect x="{0}" y="36" width="10" height="10" fill="#1f77b4" fill-opacity="0.5"/><text x="{1}" y="45">member</text><rect x="{0}" y="52" width="10" height="10" fill="#d62728" fill-opacity="0.5"/><text x="{1}" y="61">non-member</text>"##,
        W - PAD - 90.0,
        W - PAD - 75.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn roc_svg(report: &AttackReport) -> String {
    let mut s = svg_frame(
        &format!("{} ROC (AUC {:.3})", report.attack, report.auc),
        "false positive rate",
        "true positive rate",
    );
    axis_ticks(&mut s, (0.0, 1.0), (0.0, 1.0));
    let sx = |v: f64| PAD + v * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - v * (H - 2.0 * PAD);
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    // step curve: horizontal then vertical between consecutive points
    let mut path = String::new();
    let mut prev: Option<(f64, f64)> = None;
    for &(fpr, tpr) in &report.roc_points {
        match prev {
            None => {
                let _ = write!(path, "M{:.2},{:.2}", sx(fpr), sy(tpr));
            }
            Some((_, ptpr)) => {
                let _ = write!(path, " L{:.2},{:.2} L{:.2},{:.2}", sx(fpr), sy(ptpr), sx(fpr), sy(tpr));
            }
        }
        prev = Some((fpr, tpr));
    }
    let _ = writeln!(s, r##"<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##);
    s.push_str("</svg>\n");
    s
}

/// One row per ablation cell: thresholds and headline metrics.
pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut s = String::from("l_min,l_max,members,nonmembers,asr,auc,tpr_at_fpr\n");
    for c in cells {
        let r = &c.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.thresholds.l_min, c.thresholds.l_max, r.members, r.nonmembers, r.asr, r.auc, r.tpr_at_fpr1
        );
    }
    s
}

#[derive(Serialize)]
struct AblationEntry<'a> {
    l_min: f64,
    l_max: f64,
    report: &'a AttackReport,
}

/// The full report of every cell, as a JSON array.
pub fn ablation_to_json(cells: &[AblationCell]) -> String {
    let entries: Vec<AblationEntry> = cells
        .iter()
        .map(|c| AblationEntry {
            l_min: c.thresholds.l_min,
            l_max: c.thresholds.l_max,
            report: &c.report,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("ablation serializes");
    s.push('\n');
    s
}

/// Writes `ablation.csv`, `ablation.json` and each cell's records into `dir`.
pub fn write_ablation(dir: &Path, cells: &[AblationCell]) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join("ablation.csv"), dir.join("ablation.json")];
    write_file(&written[0], &ablation_csv(cells))?;
    write_file(&written[1], &ablation_to_json(cells))?;
    for c in cells {
        let path = dir.join(format!("records-{}-{}.jsonl", c.thresholds.l_min, c.thresholds.l_max));
        write_records(&path, &c.records)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes histogram and ROC plots plus their data tables into `dir`.
pub fn emit_plots(report: &AttackReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.members == 0 || report.nonmembers == 0 {
        return Err(Error::EmptyScoreSet(if report.members == 0 {
            "members: cannot plot score distributions"
        } else {
            "non-members: cannot plot score distributions"
        }));
    }
    let files = [
        ("histogram.svg", histogram_svg(report)),
        ("histogram.csv", histogram_csv(report)),
        ("roc.svg", roc_svg(report)),
        ("roc.csv", roc_csv(report)),
    ];
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}
