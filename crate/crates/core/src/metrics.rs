//! Per-flow ledgers, per-MTU-group loss and goodput, and report rendering.
//!
//! Loss counts cover data packets arriving at the bottleneck inside the
//! measurement window. Goodput is unique payload acknowledged inside the
//! window, so retransmitted bytes count once.

use std::fmt::Write as _;

use thiserror::Error;

use crate::aqm::{Outcome, RedVariant};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("group with MTU {mtu} had no bottleneck arrivals in the window")]
    NoArrivals { mtu: u32 },
    #[error("measurement window [{start}, {end}] is empty")]
    EmptyWindow { start: f64, end: f64 },
}

/// Counters for one flow. `pkts_*` cover bottleneck data packets only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowLedger {
    pub flow_id: u32,
    pub group_id: usize,
    pub pkts_sent: u64,
    pub pkts_dropped: u64,
    pub pkts_forced: u64,
    pub pkts_delivered: u64,
    /// Cumulatively acknowledged payload bytes.
    pub unique_bytes_acked: u64,
    pub window_arrivals: u64,
    pub window_drops: u64,
    pub window_forced: u64,
    pub acked_at_window_start: u64,
    pub acked_at_window_end: u64,
    pub retransmits: u64,
    pub timeouts: u64,
    pub fast_recoveries: u64,
}

impl FlowLedger {
    pub fn new(flow_id: u32, group_id: usize) -> Self {
        Self {
            flow_id,
            group_id,
            ..Default::default()
        }
    }

    pub fn in_flight(&self) -> i64 {
        self.pkts_sent as i64 - self.pkts_dropped as i64 - self.pkts_delivered as i64
    }

    /// Records a data packet reaching the bottleneck and the AQM outcome.
    pub fn record_arrival(&mut self, outcome: Outcome, in_window: bool) {
        if in_window {
            self.window_arrivals += 1;
        }
        match outcome {
            Outcome::Accept => {}
            Outcome::RandomDrop | Outcome::ForcedDrop => {
                self.pkts_dropped += 1;
                let forced = outcome == Outcome::ForcedDrop;
                if forced {
                    self.pkts_forced += 1;
                }
                if in_window {
                    self.window_drops += 1;
                    if forced {
                        self.window_forced += 1;
                    }
                }
            }
        }
    }

    /// Cumulative ack advanced to `acked`; never moves backwards.
    pub fn record_acked(&mut self, acked: u64) {
        self.unique_bytes_acked = self.unique_bytes_acked.max(acked);
    }

    pub fn window_goodput_bytes(&self) -> u64 {
        self.acked_at_window_end
            .saturating_sub(self.acked_at_window_start)
    }
}

/// Loss ratio of a set of ledgers over the window.
pub fn plr(ledgers: &[&FlowLedger], mtu: u32) -> Result<f64, MetricsError> {
    let arrivals: u64 = ledgers.iter().map(|l| l.window_arrivals).sum();
    let drops: u64 = ledgers.iter().map(|l| l.window_drops).sum();
    if arrivals == 0 {
        return Err(MetricsError::NoArrivals { mtu });
    }
    Ok(drops as f64 / arrivals as f64)
}

/// Goodput in bits per second over a window of `window_secs`.
pub fn goodput(ledgers: &[&FlowLedger], window_secs: f64) -> Result<f64, MetricsError> {
    if !(window_secs > 0.0) {
        return Err(MetricsError::EmptyWindow {
            start: 0.0,
            end: window_secs,
        });
    }
    let bytes: u64 = ledgers.iter().map(|l| l.window_goodput_bytes()).sum();
    Ok(bytes as f64 * 8.0 / window_secs)
}

/// Observables for one MTU group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub group_id: usize,
    pub mtu: u32,
    pub flows: usize,
    pub plr: f64,
    pub plr_forced: f64,
    pub goodput_bps: f64,
    pub pkts_sent: u64,
    pub pkts_dropped: u64,
}

impl GroupStats {
    pub fn from_ledgers(
        group_id: usize,
        mtu: u32,
        ledgers: &[&FlowLedger],
        window_secs: f64,
    ) -> Result<Self, MetricsError> {
        let loss = plr(ledgers, mtu)?;
        let arrivals: u64 = ledgers.iter().map(|l| l.window_arrivals).sum();
        let forced: u64 = ledgers.iter().map(|l| l.window_forced).sum();
        Ok(Self {
            group_id,
            mtu,
            flows: ledgers.len(),
            plr: loss,
            plr_forced: forced as f64 / arrivals as f64,
            goodput_bps: goodput(ledgers, window_secs)?,
            pkts_sent: arrivals,
            pkts_dropped: ledgers.iter().map(|l| l.window_drops).sum(),
        })
    }
}

/// Queue occupancy samples `(time, q_bytes, avg_bytes)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueTrace {
    samples: Vec<(f64, f64, f64)>,
}

impl QueueTrace {
    /// Appends a sample; samples at or before the last timestamp are skipped.
    pub fn push(&mut self, t: f64, q: f64, avg: f64) -> bool {
        if self.samples.last().is_some_and(|&(last, _, _)| t <= last) {
            return false;
        }
        self.samples.push((t, q, avg));
        true
    }

    pub fn samples(&self) -> &[(f64, f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,q_bytes,avg_bytes\n");
        for (t, q, a) in &self.samples {
            let _ = writeln!(out, "{t:.6},{q:.0},{a:.3}");
        }
        out
    }
}

/// Per-run record used for CSV rows and the combined tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario_id: String,
    pub seed: u64,
    pub variant: RedVariant,
    pub delay_profile: String,
    pub bottleneck_rate: f64,
    /// Ordered by ascending MTU.
    pub groups: Vec<GroupStats>,
}

impl RunSummary {
    pub fn goodput_sum(&self) -> f64 {
        self.groups.iter().map(|g| g.goodput_bps).sum()
    }
}

pub const CSV_HEADER: &str =
    "scenario_id,seed,variant,delay_profile,group_mtu,plr,plr_forced,goodput_bps,pkts_sent,pkts_dropped";

/// Rows for one run, without the header.
pub fn csv_rows(run: &RunSummary) -> String {
    let mut out = String::new();
    for g in &run.groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.1},{},{}",
            run.scenario_id,
            run.seed,
            run.variant,
            run.delay_profile,
            g.mtu,
            g.plr,
            g.plr_forced,
            g.goodput_bps,
            g.pkts_sent,
            g.pkts_dropped
        );
    }
    out
}

pub fn metrics_csv(runs: &[RunSummary]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in runs {
        out.push_str(&csv_rows(r));
    }
    out
}

/// Table III-style report: per delay profile, a PLR block and a goodput
/// block with MTU-group rows and one column per variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub csv: String,
    pub text: String,
}

fn group_label(mtu: u32, index: usize, count: usize) -> String {
    let names: &[&str] = match count {
        3 => &["small", "medium", "large"],
        2 => &["small", "large"],
        _ => &[],
    };
    match names.get(index) {
        Some(n) => format!("{n} ({mtu})"),
        None => format!("mtu {mtu}"),
    }
}

/// Builds the report. Profiles and columns keep the order in which runs
/// appear, so callers control layout by ordering `runs`.
pub fn summary_table(runs: &[RunSummary]) -> SummaryReport {
    let mut profiles: Vec<&str> = Vec::new();
    for r in runs {
        if !profiles.contains(&r.delay_profile.as_str()) {
            profiles.push(&r.delay_profile);
        }
    }

    let mut csv = String::from("delay_profile,metric,group,");
    let mut text = String::new();
    let mut header_done = false;

    for profile in profiles {
        let cols: Vec<&RunSummary> = runs.iter().filter(|r| r.delay_profile == profile).collect();
        let labels: Vec<String> = cols.iter().map(|r| r.variant.to_string()).collect();
        if !header_done {
            csv.push_str(&labels.join(","));
            csv.push('\n');
            header_done = true;
        }
        let mtus: Vec<u32> = cols[0].groups.iter().map(|g| g.mtu).collect();
        let n_groups = mtus.len();

        let _ = writeln!(text, "Delay profile {profile}");
        let _ = write!(text, "{:<16}", "PLR (%)");
        for l in &labels {
            let _ = write!(text, "{l:>10}");
        }
        text.push('\n');
        for (i, mtu) in mtus.iter().enumerate() {
            let label = group_label(*mtu, i, n_groups);
            let _ = write!(text, "{label:<16}");
            let _ = write!(csv, "{profile},plr_pct,{mtu}");
            for r in &cols {
                let v = r.groups.get(i).map_or(f64::NAN, |g| g.plr * 100.0);
                let _ = write!(text, "{v:>10.2}");
                let _ = write!(csv, ",{v:.4}");
            }
            text.push('\n');
            csv.push('\n');
        }

        let _ = write!(text, "{:<16}", "Goodput (Mb/s)");
        for l in &labels {
            let _ = write!(text, "{l:>10}");
        }
        text.push('\n');
        for (i, mtu) in mtus.iter().enumerate() {
            let label = group_label(*mtu, i, n_groups);
            let _ = write!(text, "{label:<16}");
            let _ = write!(csv, "{profile},goodput_mbps,{mtu}");
            for r in &cols {
                let v = r.groups.get(i).map_or(f64::NAN, |g| g.goodput_bps / 1e6);
                let _ = write!(text, "{v:>10.2}");
                let _ = write!(csv, ",{v:.4}");
            }
            text.push('\n');
            csv.push('\n');
        }
        let _ = write!(text, "{:<16}", "Sum");
        let _ = write!(csv, "{profile},goodput_mbps,sum");
        for r in &cols {
            let v = r.goodput_sum() / 1e6;
            let _ = write!(text, "{v:>10.2}");
            let _ = write!(csv, ",{v:.4}");
        }
        text.push_str("\n\n");
        csv.push('\n');
    }
    SummaryReport { csv, text }
}
