//! Text renderings of a [`MetricsReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{LinkMetrics, MetricsReport};
use crate::randomness::RandomnessVerdicts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "link,kgr_bps,nist,kdr,rr,eve_kdr,eve_cr,attempts,failures,groups";

fn nist(r: &Option<RandomnessVerdicts>) -> String {
    match r {
        Some(v) => format!("{}/{}", v.passed(), v.tests.len()),
        None => "-".into(),
    }
}

fn link_name(l: &LinkMetrics) -> String {
    format!("{}@QAP{}", l.user, l.qap)
}

fn eve_cr(l: &LinkMetrics) -> f64 {
    if l.groups_forwarded == 0 {
        0.0
    } else {
        l.eve_cracked as f64 / l.groups_forwarded as f64
    }
}

pub fn emit_report(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => emit_json(report),
        Format::Csv => emit_csv(report),
        Format::Table => emit_table(report),
    }
}

fn emit_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report fields are serializable");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<MetricsReport> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
}

fn emit_csv(report: &MetricsReport) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for l in &report.links {
        let _ = writeln!(
            out,
            "{},{:.3},{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            link_name(l),
            l.kgr_bps,
            nist(&l.randomness),
            l.kdr,
            l.rr,
            l.eve_kdr,
            eve_cr(l),
            l.attempts,
            l.failures,
            l.groups_forwarded
        );
    }
    if !report.links.is_empty() {
        let o = &report.overall;
        let _ = writeln!(
            out,
            "all,{:.3},-,{:.6},{:.6},{:.6},{:.6},{},{},{}",
            o.kgr_bps, o.kdr, o.rr, o.eve_kdr, o.eve_cr, o.attempts, o.failures, o.groups_allocated
        );
    }
    out
}

fn emit_table(report: &MetricsReport) -> String {
    let pct = |x: f64| format!("{:.2}%", 100.0 * x);
    let mut out = format!(
        "{:<14} {:>10} {:>5} {:>8} {:>8} | {:>8} {:>8}\n",
        "link", "KGR/bps", "NIST", "KDR", "RR", "Eve KDR", "Eve CR"
    );
    if report.links.is_empty() {
        return out;
    }
    let mut row = |name: String, kgr: f64, nist: String, kdr, rr, ekdr, ecr| {
        let _ = writeln!(
            out,
            "{name:<14} {kgr:>10.1} {nist:>5} {:>8} {:>8} | {:>8} {:>8}",
            pct(kdr),
            pct(rr),
            pct(ekdr),
            pct(ecr)
        );
    };
    for l in &report.links {
        row(link_name(l), l.kgr_bps, nist(&l.randomness), l.kdr, l.rr, l.eve_kdr, eve_cr(l));
    }
    let o = &report.overall;
    row("all".into(), o.kgr_bps, "-".into(), o.kdr, o.rr, o.eve_kdr, o.eve_cr);
    let d = &report.delay;
    let _ = writeln!(
        out,
        "\nscenario {} mode {} seed {} L_G {}",
        report.scenario,
        report.mode.map_or("-".into(), |m| m.to_string()),
        report.seed,
        report.l_g
    );
    let _ = writeln!(
        out,
        "groups requested {} allocated {} delivered {}; attempts {} failures {}",
        o.groups_requested, o.groups_allocated, o.groups_delivered, o.attempts, o.failures
    );
    let _ = writeln!(
        out,
        "model delay: qkd {:.6e} s, crkg {:.6e}/{:.6e} s, forward {:.6e} s, total {:.6e} s",
        d.t_qkd, d.t_crkg_qap1, d.t_crkg_qap2, d.t_forward, d.total
    );
    if let Some(reason) = &report.aborted {
        let _ = writeln!(out, "aborted: {reason}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Summary;
    use crate::randomness::TestVerdict;
    use crate::scenario::Mode;
    use proptest::prelude::*;

    #[test]
    fn empty_report_is_header_only() {
        let r = MetricsReport::default();
        assert_eq!(emit_report(&r, Format::Csv), format!("{CSV_HEADER}\n"));
        assert_eq!(emit_report(&r, Format::Table).lines().count(), 1);
    }

    #[test]
    fn table_column_order() {
        let header = emit_report(&MetricsReport::default(), Format::Table);
        let cols: Vec<&str> = header.split_whitespace().filter(|c| *c != "|").collect();
        assert_eq!(cols, ["link", "KGR/bps", "NIST", "KDR", "RR", "Eve", "KDR", "Eve", "CR"]);
    }

    #[test]
    fn format_names() {
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
    }

    fn arb_link() -> impl Strategy<Value = LinkMetrics> {
        (any::<u8>(), 0.0..1.0f64, 0.0..1e4f64, 0usize..100_000, any::<bool>()).prop_map(|(q, x, k, n, tested)| {
            LinkMetrics {
                user: format!("U{q}"),
                qap: 1 + q % 2,
                sessions: n / 7,
                probes: n,
                quantized_bits: n / 2,
                kdr: x,
                eve_kdr: 1.0 - x,
                key_bits: n / 3,
                link_time_s: k / 3.0,
                kgr_bps: k,
                attempts: n,
                failures: n / 11,
                rr: x * x,
                groups_forwarded: n / 5,
                eve_cracked: 0,
                discarded_blocks: n % 13,
                randomness: tested.then(|| RandomnessVerdicts {
                    bits: n,
                    tests: vec![TestVerdict {
                        name: "runs".into(),
                        p_value: x.sqrt(),
                        passed: x > 0.01,
                    }],
                }),
            }
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_byte_identical(
            links in proptest::collection::vec(arb_link(), 0..4),
            seed: u64,
            x in 0.0..1.0f64,
            aborted in proptest::option::of("[a-z ]{0,20}"),
        ) {
            let r = MetricsReport {
                scenario: "hall".into(),
                mode: Some(Mode::Simplified),
                seed,
                l_g: 1024,
                aborted,
                links,
                overall: Summary { kdr: x, rr: x / 3.0, eve_kdr: 0.5 - x / 7.0, ..Summary::default() },
                ..MetricsReport::default()
            };
            let text = emit_report(&r, Format::Json);
            let back = parse_json(&text).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(emit_report(&back, Format::Json), text);
        }
    }
}
