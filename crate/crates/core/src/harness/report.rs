//! Detail and summary CSV files.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::Strategy;
use crate::error::{Error, Result};

pub const DETAIL_HEADER: &str = "strategy,M,N,K,location,frame,p_dc_w,p_rf_w,selected_k,applied_k,feedback_ok,e_train_j,e_wpt_j";
pub const SUMMARY_HEADER: &str = "strategy,M,N,K,location,p_dc_mean_w,gain_db";

/// Label of the summary row that averages over locations.
pub const ALL_LOCATIONS: &str = "ALL";

#[derive(Clone, Debug, PartialEq)]
pub struct DetailRow {
    pub strategy: Strategy,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub location: String,
    pub frame: u32,
    pub p_dc: f64,
    pub p_rf: f64,
    pub selected_k: usize,
    pub applied_k: usize,
    pub feedback_ok: bool,
    pub e_train: f64,
    pub e_wpt: f64,
}

/// Six significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.5e}")
}

fn fmt_gain(db: f64) -> String {
    let s = format!("{db:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn detail_csv(rows: &[DetailRow]) -> String {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(DETAIL_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.m,
            r.n,
            r.k,
            r.location,
            r.frame,
            fmt_float(r.p_dc),
            fmt_float(r.p_rf),
            r.selected_k,
            r.applied_k,
            u8::from(r.feedback_ok),
            fmt_float(r.e_train),
            fmt_float(r.e_wpt)
        );
    }
    out
}

/// 10·log10(p / p_ref); both powers must be positive.
pub fn db_gain(p: f64, p_ref: f64) -> Result<f64> {
    if !(p > 0.0 && p_ref > 0.0) || !p.is_finite() || !p_ref.is_finite() {
        return Err(Error::Domain(format!("gain needs positive finite powers, got {p} and {p_ref}")));
    }
    Ok(10.0 * (p / p_ref).log10())
}

/// Orders "L2" before "L10"; labels without a numeric suffix sort as text.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let split = |s: &str| {
        let digits = s.len() - s.bytes().rev().take_while(u8::is_ascii_digit).count();
        let (head, tail) = s.split_at(digits);
        (head.to_string(), tail.parse::<u64>().ok())
    };
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(&hb).then(na.cmp(&nb)).then_with(|| a.cmp(b))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct PointKey {
    strategy: Strategy,
    m: usize,
    n: usize,
    k: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LocationKey(String);

impl Ord for LocationKey {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for LocationKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type Grouped = BTreeMap<PointKey, BTreeMap<LocationKey, BTreeMap<u32, f64>>>;

fn parse_detail(text: &str) -> Result<Grouped> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Summary(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != DETAIL_HEADER {
        return Err(Error::Summary(format!("unexpected detail header {:?}", header.join(","))));
    }
    let mut grouped = Grouped::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Summary(format!("line {line}: {e}")))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let num = |idx: usize| -> Result<usize> {
            field(idx)
                .parse()
                .map_err(|_| Error::Summary(format!("line {line}: bad integer {:?} in column {}", field(idx), idx + 1)))
        };
        let strategy = Strategy::parse(field(0))
            .ok_or_else(|| Error::Summary(format!("line {line}: unknown strategy {:?}", field(0))))?;
        let key = PointKey {
            strategy,
            m: num(1)?,
            n: num(2)?,
            k: num(3)?,
        };
        let frame = num(5)? as u32;
        let p_dc: f64 = field(6)
            .parse()
            .map_err(|_| Error::Summary(format!("line {line}: bad p_dc_w {:?}", field(6))))?;
        let previous = grouped
            .entry(key)
            .or_default()
            .entry(LocationKey(field(4).to_string()))
            .or_default()
            .insert(frame, p_dc);
        if previous.is_some() {
            return Err(Error::Summary(format!("line {line}: duplicate row for frame {frame}")));
        }
    }
    Ok(grouped)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Builds the summary from detail CSV text. Per location, dc power is
/// averaged over frames; the ALL row averages those means over locations.
/// Gains are relative to UP with M = N = 1 at the same location. Row order
/// in the input does not matter.
pub fn summarize(detail: &str) -> Result<String> {
    let grouped = parse_detail(detail)?;
    let per_location = |locations: &BTreeMap<LocationKey, BTreeMap<u32, f64>>| {
        locations
            .iter()
            .map(|(loc, frames)| (loc.0.clone(), mean(frames.values().copied())))
            .collect::<Vec<_>>()
    };
    let baseline_key = PointKey {
        strategy: Strategy::Up,
        m: 1,
        n: 1,
        k: 0,
    };
    let baseline = grouped
        .get(&baseline_key)
        .map(per_location)
        .ok_or_else(|| Error::Summary("missing baseline row (strategy UP, M=1, N=1, K=0)".into()))?;
    let baseline_all = mean(baseline.iter().map(|(_, p)| *p));
    let baseline_map: BTreeMap<&str, f64> = baseline.iter().map(|(l, p)| (l.as_str(), *p)).collect();

    let gain = |p: f64, p_ref: f64, what: &str| -> Result<String> {
        if p == 0.0 && p_ref > 0.0 {
            return Ok("-inf".to_string());
        }
        db_gain(p, p_ref)
            .map(fmt_gain)
            .map_err(|e| Error::Summary(format!("{what}: {e}")))
    };

    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for (key, locations) in &grouped {
        let means = per_location(locations);
        let prefix = format!("{},{},{},{}", key.strategy, key.m, key.n, key.k);
        for (loc, p) in &means {
            let p_ref = *baseline_map.get(loc.as_str()).ok_or_else(|| {
                Error::Summary(format!("missing baseline row (strategy UP, M=1, N=1, K=0) for location {loc}"))
            })?;
            let _ = writeln!(out, "{prefix},{loc},{},{}", fmt_float(*p), gain(*p, p_ref, loc)?);
        }
        let p_all = mean(means.iter().map(|(_, p)| *p));
        let _ = writeln!(
            out,
            "{prefix},{ALL_LOCATIONS},{},{}",
            fmt_float(p_all),
            gain(p_all, baseline_all, ALL_LOCATIONS)?
        );
    }
    Ok(out)
}
