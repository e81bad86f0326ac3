use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use spinrelax_core::sequence::DecayCurve;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "spinrelax";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output directory that records every file it writes.
pub struct OutDir {
    root: PathBuf,
    svg: bool,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, svg: bool) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| {
            CliError::config(format!(
                "cannot create output directory {}: {e}",
                root.display()
            ))
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            svg,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Write through a temporary file in the same directory, then rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let target = self.root.join(name);
        let fail =
            |e: std::io::Error| CliError::config(format!("cannot write {}: {e}", target.display()));
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(fail)?;
        tmp.write_all(bytes).map_err(fail)?;
        tmp.as_file().sync_all().map_err(fail)?;
        tmp.persist(&target).map_err(|e| fail(e.error))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_curve(
        &mut self,
        name: &str,
        curve: &DecayCurve,
        time_header: &str,
        title: &str,
    ) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        curve.write_csv_with_time(&mut buf, time_header)?;
        let path = self.write(&format!("{name}.csv"), &buf)?;
        if self.svg {
            let svg = line_plot(
                title,
                time_header,
                "signal",
                &[(name, &curve.times, &curve.values)],
            );
            self.write(&format!("{name}.svg"), svg.as_bytes())?;
        }
        Ok(path)
    }

    pub fn write_table(
        &mut self,
        name: &str,
        headers: &[&str],
        rows: &[Vec<f64>],
    ) -> CliResult<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::config(e.to_string());
        w.write_record(headers).map_err(err)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(err)?;
        }
        let buf = w
            .into_inner()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.write(&format!("{name}.csv"), &buf)
    }

    pub fn write_plot(
        &mut self,
        name: &str,
        title: &str,
        x_label: &str,
        y_label: &str,
        series: &[(&str, &[f64], &[f64])],
    ) -> CliResult<()> {
        if self.svg {
            let svg = line_plot(title, x_label, y_label, series);
            self.write(&format!("{name}.svg"), svg.as_bytes())?;
        }
        Ok(())
    }

    /// Record the resolved run so it can be replayed.
    pub fn write_manifest<C: Serialize>(
        &mut self,
        command: &str,
        config: &C,
        warnings: &[String],
    ) -> CliResult<PathBuf> {
        let config = serde_json::to_value(config).map_err(|e| CliError::config(e.to_string()))?;
        let seed = config.get("seed").cloned().unwrap_or(Value::Null);
        let outputs = self.written.clone();
        let manifest = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": command,
            "seed": seed,
            "config": config,
            "outputs": outputs,
            "warnings": warnings,
        });
        self.write_json(&manifest_name(command), &manifest)
    }
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Minimal static SVG line plot.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &[f64], &[f64])],
) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.1.iter()).filter(finite);
    let ys = series.iter().flat_map(|s| s.2.iter()).filter(finite);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(*v), b.max(*v))
    });
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(*v), b.max(*v))
    });
    let span = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
    let (x0, x1) = if x0.is_finite() {
        span(x0, x1)
    } else {
        (0.0, 1.0)
    };
    let (y0, y1) = if y0.is_finite() {
        span(y0, y1)
    } else {
        (0.0, 1.0)
    };
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n\
         <rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w / 2.0,
        escape(title),
        w - 2.0 * m,
        h - 2.0 * m
    );
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        w / 2.0,
        h - 15.0,
        escape(x_label)
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 {})\">{}</text>\n",
        h / 2.0,
        h / 2.0,
        escape(y_label)
    ));
    for (i, (x, y)) in [(x0, y0), (x1, y1)].iter().enumerate() {
        let anchor = if i == 0 { "start" } else { "end" };
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"10\">{x:.3}</text>\n",
            px(*x),
            h - m + 14.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{y:.3}</text>\n",
            m - 4.0,
            py(*y)
        ));
    }
    for (i, (name, xs, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            w - m - 4.0,
            m + 14.0 * (i + 1) as f64,
            escape(name)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path(), false).unwrap();
        out.write("a.txt", b"one").unwrap();
        out.write("a.txt", b"two").unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("a.txt")).unwrap(),
            "two"
        );
        assert_eq!(out.written(), ["a.txt"]);
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn svg_is_well_formed() {
        let s = line_plot("t <1>", "x", "y", &[("a", &[0.0, 1.0], &[1.0, f64::NAN])]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("t &lt;1&gt;"));
    }

    #[test]
    fn table_has_header_and_newlines() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path(), false).unwrap();
        let p = out
            .write_table("t", &["a", "b"], &[vec![1.5, 2.0]])
            .unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "a,b\n1.5,2\n");
    }
}
