use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crossrisk::config;
use crossrisk::ingest::{load_sources, IngestError, SourceAdapterConfig};
use crossrisk_core::market::{InstrumentId, SourceId, SourceKind};
use crossrisk_core::replay;
use crossrisk_core::Timestamp;

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/desk");

fn day(i: usize) -> String {
    let ts = Timestamp::from_ymd(2022, 1, 3).plus_days(i as i64).plus_millis(21 * 3_600_000);
    ts.to_string()
}

/// A bar file of `n` rows for `id` whose rows listed in `bad` carry a non-positive close.
fn bar_file(dir: &Path, name: &str, id: &str, n: usize, bad: &[usize]) -> PathBuf {
    let mut s = String::from("timestamp,instrument_id,asset_class,close\n");
    for i in 0..n {
        let close = if bad.contains(&i) { -1.0 } else { 100.0 + i as f64 };
        writeln!(s, "{},{id},equity,{close}", day(i)).unwrap();
    }
    let p = dir.join(name);
    std::fs::write(&p, s).unwrap();
    p
}

fn bars_cfg(id: &str, path: PathBuf) -> SourceAdapterConfig {
    SourceAdapterConfig::new(SourceId::new(id).unwrap(), SourceKind::HistoricalData, path)
}

#[test]
fn union_of_two_bar_files_and_a_news_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = bar_file(dir.path(), "a.csv", "EQ_US", 5, &[]);
    let b = bar_file(dir.path(), "b.csv", "FI_UST10", 7, &[]);
    let news = dir.path().join("news.jsonl");
    std::fs::write(
        &news,
        format!(
            "{{\"timestamp\":\"{}\",\"source_kind\":\"market_news\",\"headline\":\"Stocks rally\",\"body\":\"\",\"instrument_ids\":[\"EQ_US\"]}}\n",
            day(2)
        ),
    )
    .unwrap();
    let cfgs = [
        bars_cfg("bars_a", a),
        bars_cfg("bars_b", b),
        SourceAdapterConfig::new(SourceId::new("wire").unwrap(), SourceKind::MarketNews, news),
    ];
    let report = load_sources(&cfgs, &[]).unwrap();
    assert!(report.rejects.is_empty());
    let s = &report.store;
    assert_eq!(s.bar_count(), 12);
    assert_eq!(s.bars_in(&InstrumentId::new("EQ_US").unwrap(), Timestamp::MIN, Timestamp::MAX).unwrap().len(), 5);
    assert_eq!(s.bars_in(&InstrumentId::new("FI_UST10").unwrap(), Timestamp::MIN, Timestamp::MAX).unwrap().len(), 7);
    assert_eq!(s.news_count(), 1);
    assert_eq!(report.files.iter().map(|f| f.accepted).sum::<usize>(), 13);
}

#[test]
fn one_bad_line_of_a_hundred_is_rejected_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let p = bar_file(dir.path(), "a.csv", "EQ_US", 100, &[41]);
    let report = load_sources(&[bars_cfg("bars", p.clone())], &[]).unwrap();
    assert_eq!(report.store.bar_count(), 99);
    assert_eq!(report.rejects.len(), 1);
    assert_eq!(report.rejects[0].path, p);
    // row 41 sits below the header on line 43
    assert_eq!(report.rejects[0].line, 43);
    assert_eq!(report.files[0].records, 100);
    assert_eq!(report.files[0].rejected, 1);
}

#[test]
fn reject_rate_boundary_is_strictly_greater_than_ten_percent() {
    let dir = tempfile::tempdir().unwrap();
    let ten: Vec<usize> = (0..10).map(|i| i * 9 + 3).collect();
    let p = bar_file(dir.path(), "ten.csv", "EQ_US", 100, &ten);
    let report = load_sources(&[bars_cfg("bars", p)], &[]).unwrap();
    assert_eq!(report.rejects.len(), 10);

    let eleven: Vec<usize> = (0..11).map(|i| i * 9 + 3).collect();
    let p = bar_file(dir.path(), "eleven.csv", "EQ_US", 100, &eleven);
    match load_sources(&[bars_cfg("bars", p)], &[]) {
        Err(IngestError::RejectRateExceeded { rejected: 11, total: 100, .. }) => {}
        other => panic!("{other:?}"),
    }

    let twenty: Vec<usize> = (0..20).map(|i| i * 5).collect();
    let p = bar_file(dir.path(), "twenty.csv", "EQ_US", 100, &twenty);
    assert!(matches!(
        load_sources(&[bars_cfg("bars", p)], &[]),
        Err(IngestError::RejectRateExceeded { rejected: 20, .. })
    ));
}

#[test]
fn unreadable_and_malformed_files_fail_the_load() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert!(matches!(
        load_sources(&[bars_cfg("bars", missing)], &[]),
        Err(IngestError::FileUnreadable { .. })
    ));
    let p = dir.path().join("odd.csv");
    std::fs::write(&p, "when,what,price\n1,2,3\n").unwrap();
    assert!(matches!(
        load_sources(&[bars_cfg("bars", p)], &[]),
        Err(IngestError::MalformedHeader { .. })
    ));
}

#[test]
fn observation_rows_must_match_their_configured_source() {
    let dir = tempfile::tempdir().unwrap();
    let bars = bar_file(dir.path(), "a.csv", "EQ_US", 20, &[]);
    let obs = dir.path().join("obs.csv");
    let mut s = String::from("timestamp,source_id,source_kind,instrument_id,value\n");
    for i in 0..20 {
        let src = if i == 7 { "someone_else" } else { "pulse" };
        writeln!(s, "{},{src},investor_feedback,EQ_US,0.5", day(i)).unwrap();
    }
    std::fs::write(&obs, s).unwrap();
    let cfgs = [
        bars_cfg("bars", bars),
        SourceAdapterConfig::new(SourceId::new("pulse").unwrap(), SourceKind::InvestorFeedback, obs),
    ];
    let report = load_sources(&cfgs, &[]).unwrap();
    assert_eq!(report.rejects.len(), 1);
    assert!(report.rejects[0].reason.contains("someone_else"));
}

fn data_lines(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let lines = text.lines().filter(|l| !l.trim().is_empty()).count();
    if path.extension().is_some_and(|e| e == "csv") {
        lines - 1
    } else {
        lines
    }
}

#[test]
fn fixture_replay_delivers_every_record_once() {
    let cfg = config::load_config(&Path::new(DESK).join("config.toml")).unwrap();
    let expected: usize = cfg.sources.iter().map(|s| data_lines(&s.file_path)).sum();
    let report = load_sources(&cfg.sources, &cfg.instruments).unwrap();
    assert!(report.rejects.is_empty());
    let (first, last) = report.store.time_bounds().unwrap();
    let mut seen = 0;
    let mut prev = Timestamp::MIN;
    let n = replay::replay(&report.store, first, last.plus_millis(1), |ev| {
        assert!(ev.timestamp >= prev);
        prev = ev.timestamp;
        seen += 1;
    })
    .unwrap();
    assert_eq!(n, expected);
    assert_eq!(seen, expected);
    assert_eq!(replay::replay(&report.store, first, first, |_| {}).unwrap(), 0);
}

#[test]
fn empty_news_file_holds_no_documents() {
    let dir = tempfile::tempdir().unwrap();
    let bars = bar_file(dir.path(), "a.csv", "EQ_US", 3, &[]);
    let news = dir.path().join("news.jsonl");
    std::fs::write(&news, "").unwrap();
    let cfgs = [
        bars_cfg("bars", bars.clone()),
        SourceAdapterConfig::new(SourceId::new("wire").unwrap(), SourceKind::MarketNews, news),
    ];
    let report = load_sources(&cfgs, &[]).unwrap();
    assert_eq!(report.store.news_count(), 0);
    let empty_bars = dir.path().join("empty.csv");
    std::fs::write(&empty_bars, "").unwrap();
    assert!(matches!(
        load_sources(&[bars_cfg("bars", empty_bars)], &[]),
        Err(IngestError::MalformedHeader { .. })
    ));
}
