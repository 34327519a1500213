//! Deterministic report emission.
//!
//! JSON reports serialize every real with 17 significant digits through the
//! arbitrary-precision number type, so the emitted bytes are a pure function
//! of the inputs and flags; map keys keep insertion order.  Timestamps are
//! the only nondeterministic field and are dropped under `--no-timestamp`.
//! The CSV emitter writes the drift series as `generation,delta_u_lln_cov,
//! delta_g_kf` rows, and the SVG emitter renders the two tracks as a static
//! line chart.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use sigma_core::bounds::ScalingEstimate;
use sigma_core::proxies::ProxyStats;
use sigma_core::sigma_ub::{DriftPoint, DriftSummary, MonitorConfig, TrackMetrics};

/// JSON number carrying exactly 17 significant digits.
pub fn real(x: f64) -> Value {
    assert!(x.is_finite(), "cannot serialize non-finite value {x}");
    Value::Number(Number::from_str(&format!("{x:.16e}")).expect("formatted real parses"))
}

/// Hex SHA-256 digest of a file's raw bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {} for digesting", path.display()))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("writing to a string");
    }
    Ok(hex)
}

/// Ordered JSON report under construction.
pub struct ReportBuilder {
    root: Map<String, Value>,
}

impl ReportBuilder {
    pub fn new(command: &str, no_timestamp: bool) -> Self {
        let mut root = Map::new();
        root.insert("schema".to_string(), Value::from(1u64));
        root.insert(
            "tool".to_string(),
            Value::from(format!("sigma {}", env!("CARGO_PKG_VERSION"))),
        );
        root.insert("command".to_string(), Value::from(command));
        if !no_timestamp {
            let unix = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            root.insert("generated_at_unix".to_string(), Value::from(unix));
        }
        ReportBuilder { root }
    }

    pub fn insert(mut self, key: &str, value: Value) -> Self {
        self.root.insert(key.to_string(), value);
        self
    }

    pub fn config(self, config: &MonitorConfig) -> Self {
        let mut map = Map::new();
        map.insert("delta".to_string(), real(config.delta));
        map.insert("rho".to_string(), real(config.energy_cap));
        map.insert("alpha".to_string(), real(config.alpha));
        map.insert("n_observed".to_string(), Value::from(config.n_observed_target));
        map.insert("baseline".to_string(), Value::from(config.baseline_checkpoint));
        self.insert("config", Value::Object(map))
    }

    /// Records each input path with its content digest.
    pub fn inputs(self, paths: &[&Path]) -> Result<Self> {
        let mut list = Vec::with_capacity(paths.len());
        for path in paths {
            let mut map = Map::new();
            map.insert("path".to_string(), Value::from(path.display().to_string()));
            map.insert("sha256".to_string(), Value::from(file_digest(path)?));
            list.push(Value::Object(map));
        }
        Ok(self.insert("inputs", Value::Array(list)))
    }

    pub fn checkpoints(self, metrics: &[TrackMetrics]) -> Self {
        let list = metrics
            .iter()
            .map(|m| {
                let mut map = Map::new();
                map.insert("checkpoint".to_string(), Value::from(m.checkpoint));
                map.insert("s_k".to_string(), real(m.s_k));
                map.insert("beta_hat".to_string(), real(m.beta_hat));
                map.insert("g_kf".to_string(), real(m.g_kf));
                map.insert("u_lln_cov".to_string(), real(m.u_lln_cov));
                map.insert("delta_used".to_string(), real(m.delta_used));
                map.insert(
                    "jitter_escalations".to_string(),
                    Value::from(m.jitter_escalations),
                );
                Value::Object(map)
            })
            .collect();
        self.insert("checkpoints", Value::Array(list))
    }

    pub fn drifts(self, points: &[DriftPoint]) -> Self {
        let list = points
            .iter()
            .map(|p| {
                let mut map = Map::new();
                map.insert("generation".to_string(), Value::from(p.checkpoint));
                map.insert("delta_u_lln_cov".to_string(), real(p.delta_u_lln_cov));
                map.insert("delta_g_kf".to_string(), real(p.delta_g_kf));
                Value::Object(map)
            })
            .collect();
        self.insert("drifts", Value::Array(list))
    }

    pub fn summary(self, summary: &DriftSummary) -> Self {
        let mut map = Map::new();
        map.insert(
            "final_delta_u_lln_cov".to_string(),
            real(summary.final_drift_track2),
        );
        map.insert("slope_u_lln_cov".to_string(), real(summary.ols_slope_track2));
        map.insert("final_delta_g_kf".to_string(), real(summary.final_drift_track1));
        map.insert("slope_g_kf".to_string(), real(summary.ols_slope_track1));
        self.insert("summary", Value::Object(map))
    }

    pub fn finish(self) -> Value {
        Value::Object(self.root)
    }
}

/// JSON object for one scaling estimate.
pub fn estimate_value(estimate: &ScalingEstimate) -> Value {
    let mut map = Map::new();
    match estimate.l_hat {
        Some(l) => map.insert("l_hat".to_string(), real(l)),
        None => map.insert("l_hat".to_string(), Value::Null),
    };
    map.insert("observed_logdet".to_string(), real(estimate.observed_logdet));
    map.insert("sigma_hat".to_string(), real(estimate.sigma_hat));
    map.insert("alpha".to_string(), real(estimate.alpha));
    map.insert("ci_half_width".to_string(), real(estimate.ci_half_width));
    map.insert("n_observed".to_string(), Value::from(estimate.n_observed));
    map.insert(
        "n_total".to_string(),
        estimate.n_total.map_or(Value::Null, Value::from),
    );
    map.insert("delta_used".to_string(), real(estimate.delta_used));
    if let Some((lo, hi)) = estimate.interval() {
        map.insert("interval".to_string(), Value::Array(vec![real(lo), real(hi)]));
    }
    Value::Object(map)
}

/// JSON object for one proxy measurement.
pub fn proxy_value(exact: &ProxyStats, hashed: &ProxyStats, hash_bits: u32) -> Value {
    let mut map = Map::new();
    map.insert("order".to_string(), Value::from(exact.n as u64));
    map.insert("total_ngrams".to_string(), Value::from(exact.total_ngrams));
    map.insert("unique_ngrams".to_string(), Value::from(exact.unique_ngrams));
    map.insert("distinct_n".to_string(), real(exact.distinct_n));
    map.insert("hhi".to_string(), real(exact.hhi));
    map.insert("hash_bits".to_string(), Value::from(hash_bits));
    map.insert("hashed_hhi".to_string(), real(hashed.hhi));
    map.insert("hashed_buckets".to_string(), Value::from(hashed.unique_ngrams));
    Value::Object(map)
}

/// Serializes a report; `None` writes to stdout.
pub fn write_json(value: &Value, dest: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    match dest {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing report to {}", path.display())),
    }
}

/// Plot-ready drift series.
pub fn drift_csv(points: &[DriftPoint]) -> String {
    let mut out = String::from("generation,delta_u_lln_cov,delta_g_kf\n");
    for p in points {
        writeln!(out, "{},{},{}", p.checkpoint, p.delta_u_lln_cov, p.delta_g_kf)
            .expect("writing to a string");
    }
    out
}

const SVG_WIDTH: f64 = 720.0;
const SVG_HEIGHT: f64 = 420.0;
const SVG_MARGIN_LEFT: f64 = 70.0;
const SVG_MARGIN_RIGHT: f64 = 20.0;
const SVG_MARGIN_TOP: f64 = 20.0;
const SVG_MARGIN_BOTTOM: f64 = 45.0;

/// Static line chart of both drift tracks over generations.
pub fn drift_svg(points: &[DriftPoint]) -> String {
    let xs: Vec<f64> = points.iter().map(|p| p.checkpoint as f64).collect();
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for p in points {
        lo = lo.min(p.delta_u_lln_cov).min(p.delta_g_kf);
        hi = hi.max(p.delta_u_lln_cov).max(p.delta_g_kf);
    }
    if hi - lo < 1e-12 {
        hi += 1.0;
        lo -= 1.0;
    }
    let x_min = xs.first().copied().unwrap_or(0.0);
    let x_max = xs.last().copied().unwrap_or(1.0);
    let x_span = (x_max - x_min).max(1e-12);
    let plot_w = SVG_WIDTH - SVG_MARGIN_LEFT - SVG_MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - SVG_MARGIN_TOP - SVG_MARGIN_BOTTOM;
    let to_x = |g: f64| SVG_MARGIN_LEFT + (g - x_min) / x_span * plot_w;
    let to_y = |v: f64| SVG_MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;
    let polyline = |pick: &dyn Fn(&DriftPoint) -> f64| {
        let mut path = String::new();
        for p in points {
            write!(path, "{:.2},{:.2} ", to_x(p.checkpoint as f64), to_y(pick(p)))
                .expect("writing to a string");
        }
        path.trim_end().to_string()
    };
    let u_line = polyline(&|p| p.delta_u_lln_cov);
    let g_line = polyline(&|p| p.delta_g_kf);
    let zero_y = to_y(0.0);
    let mut svg = String::new();
    write!(
        svg,
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"{x0}\" y1=\"{zy:.2}\" x2=\"{x1}\" y2=\"{zy:.2}\" ",
            "stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
            "<polyline points=\"{u}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
            "<polyline points=\"{g}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            "<text x=\"{x0}\" y=\"{ly}\" font-family=\"monospace\" font-size=\"12\" ",
            "fill=\"#1f77b4\">delta_u_lln_cov (final {uf:.3})</text>\n",
            "<text x=\"{xm}\" y=\"{ly}\" font-family=\"monospace\" font-size=\"12\" ",
            "fill=\"#d62728\">delta_g_kf (final {gf:.3})</text>\n",
            "<text x=\"{x0}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"11\" ",
            "fill=\"#333\">drift range [{lo:.3}, {hi:.3}], generations {g0} to {g1}</text>\n",
            "</svg>\n"
        ),
        w = SVG_WIDTH,
        h = SVG_HEIGHT,
        x0 = SVG_MARGIN_LEFT,
        x1 = SVG_WIDTH - SVG_MARGIN_RIGHT,
        xm = SVG_MARGIN_LEFT + plot_w / 2.0,
        zy = zero_y,
        u = u_line,
        g = g_line,
        uf = points.last().map_or(0.0, |p| p.delta_u_lln_cov),
        gf = points.last().map_or(0.0, |p| p.delta_g_kf),
        ly = SVG_HEIGHT - 12.0,
        ty = SVG_HEIGHT - 28.0,
        lo = lo,
        hi = hi,
        g0 = x_min,
        g1 = x_max,
    )
    .expect("writing to a string");
    svg
}
