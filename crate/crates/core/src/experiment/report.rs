use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ExperimentReport;
use crate::error::{Error, Result};
use crate::features::FeatureSetId;

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::malformed(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Vertical bar chart; each bar is a `<rect class="bar">`.
pub fn bar_chart_svg(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    assert_eq!(labels.len(), values.len());
    let (w, h) = (80.0 + 70.0 * labels.len() as f64, 320.0);
    let (left, bottom, top) = (60.0, 60.0, 40.0);
    let plot_h = h - bottom - top;
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let y_max = if max > 0.0 { max * 1.1 } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle" font-size="12">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - 10.0,
        h - bottom
    );
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
        let bh = plot_h * v / y_max;
        let x = left + 10.0 + 70.0 * i as f64;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x}" y="{:.2}" width="50" height="{bh:.2}" fill="#4878a8"><title>{}: {v:.4}</title></rect>"##,
            h - bottom - bh,
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="middle" font-size="10">{v:.3}</text>"#,
            x + 25.0,
            h - bottom - bh - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            x + 25.0,
            h - bottom + 16.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `summary.json`, `accuracy.csv`, `cv.csv`, `confusion_<set>.csv`,
/// `accuracy.svg` and, when MI ran, `mi.csv` and `mi.svg`. Returns the paths.
pub fn emit_report(r: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        write_text(&p, &text)?;
        written.push(p);
        Ok(())
    };
    let mut json = serde_json::to_string_pretty(r)
        .map_err(|e| Error::malformed(dir.join("summary.json"), e.to_string()))?;
    json.push('\n');
    put("summary.json", json)?;

    let ordered: Vec<_> = FeatureSetId::ALL
        .iter()
        .filter_map(|id| r.result(*id))
        .collect();
    let mut acc = String::from("feature_set,name,dim,C,kernel,gamma,decision,cv_accuracy,test_accuracy,train_rows,test_rows\n");
    for s in &ordered {
        let _ = writeln!(
            acc,
            "{},{},{},{},{},{},{},{:.6},{:.6},{},{}",
            s.set,
            s.name,
            s.dim,
            s.best.c,
            s.best.kernel,
            s.best.gamma,
            s.best.decision,
            s.cv_accuracy,
            s.test_accuracy,
            s.train_rows,
            s.test_rows
        );
    }
    put("accuracy.csv", acc)?;

    let mut cv = String::from("feature_set,C,kernel,gamma_mode,decision,fold,accuracy\n");
    for s in &ordered {
        for row in &s.cv {
            let c = &row.cell;
            let _ = writeln!(
                cv,
                "{},{},{},{},{},{},{}",
                s.set, c.c, c.kernel, c.gamma, c.decision, row.fold, row.accuracy
            );
        }
    }
    put("cv.csv", cv)?;

    for s in &ordered {
        let [[ff, fb], [bf, bb]] = s.confusion;
        put(
            &format!("confusion_{}.csv", s.set),
            format!("true\\predicted,front,back\nfront,{ff},{fb}\nback,{bf},{bb}\n"),
        )?;
    }
    let labels: Vec<String> = ordered.iter().map(|s| s.name.clone()).collect();
    let values: Vec<f64> = ordered.iter().map(|s| s.test_accuracy).collect();
    put(
        "accuracy.svg",
        bar_chart_svg("Test accuracy by feature set", "accuracy", &labels, &values),
    )?;

    if let Some(mi) = &r.mi {
        let mut t = String::from("layer,mi_nats,pairs,samples,k,reduction\n");
        for l in &mi.per_layer {
            let _ = writeln!(
                t,
                "{},{},{},{},{},{}",
                l.layer, l.mi_nats, l.pairs, l.samples, mi.config.k_neighbors, mi.config.reduction
            );
        }
        put("mi.csv", t)?;
        let labels: Vec<String> = mi
            .per_layer
            .iter()
            .map(|l| format!("Layer {}", l.layer))
            .collect();
        let values: Vec<f64> = mi.per_layer.iter().map(|l| l.mi_nats).collect();
        put(
            "mi.svg",
            bar_chart_svg("Mutual information per layer", "nats", &labels, &values),
        )?;
    }
    Ok(written)
}
