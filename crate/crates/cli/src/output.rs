use std::fs;
use std::path::{Path, PathBuf};

use lmax_core::Error;
use serde::Serialize;
use serde_json::Value;

/// Output directory writer. The manifest is always written before any result file.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn create(dir: &Path, manifest: &Value) -> Result<Self, Error> {
        fs::create_dir_all(dir)?;
        let out = Out { dir: dir.to_path_buf() };
        out.json("manifest.json", manifest)?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), Error> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        fs::write(self.path(name), s)?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Error> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(csv_err)?;
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Format(format!("{k:?}")),
    }
}

/// Reads numeric columns of a CSV file by header name.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<String>>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| headers.iter().position(|h| h == *n).ok_or_else(|| Error::Format(format!("missing column {n}"))))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(idx.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok(rows)
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Line plot of `(x, y)` series on log2 x and log10 y axes.
pub fn trend_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.log2(), y.log10()))
        .collect();
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{m}\" y=\"20\" font-size=\"14\">{}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\">log2 cells</text>\n<text x=\"5\" y=\"{m}\">log10</text>\n",
        escape(title),
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 15.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x.log2()), sy(y.log10())))
            .collect();
        if !coords.is_empty() {
            s += &format!("<polyline fill=\"none\" stroke=\"{c}\" points=\"{}\"/>\n", coords.join(" "));
        }
        s += &format!("<text x=\"{}\" y=\"{}\" fill=\"{c}\">{}</text>\n", w - m - 150.0, m + 14.0 * k as f64, escape(name));
    }
    s += &format!(
        "<text x=\"{m}\" y=\"{}\">{x0:.1}</text><text x=\"{}\" y=\"{}\">{x1:.1}</text>\n\
         <text x=\"5\" y=\"{}\">{y0:.2}</text><text x=\"5\" y=\"{}\">{y1:.2}</text>\n</svg>\n",
        h - m + 14.0,
        w - m - 20.0,
        h - m + 14.0,
        h - m,
        m + 12.0
    );
    s
}

/// Grey-scale heatmap of a 2-d cell grid (row 0 at the bottom).
pub fn heatmap_svg(title: &str, nx: usize, ny: usize, values: &[f64]) -> String {
    let px = (512 / nx.max(ny)).max(1);
    let (lo, hi) = values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" shape-rendering=\"crispEdges\">\n<title>{}</title>\n",
        nx * px,
        ny * px,
        escape(title)
    );
    for j in 0..ny {
        for i in 0..nx {
            let v = values[i * ny + j];
            let g = if v.is_finite() { (255.0 * (1.0 - (v - lo) / range)).round() as u8 } else { 255 };
            s += &format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{px}\" height=\"{px}\" fill=\"rgb({g},{g},{g})\"/>\n",
                i * px,
                (ny - 1 - j) * px
            );
        }
    }
    s + "</svg>\n"
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
