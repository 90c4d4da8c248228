use std::path::Path;

use crossrisk::synthetic::{self, Preset, DESK_BARS};

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/desk");

#[test]
fn committed_desk_fixture_regenerates_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let market = synthetic::generate(&Preset::Desk.spec(42)).unwrap();
    let written = market.write_files(dir.path()).unwrap();
    assert!(!written.is_empty());
    for path in written {
        let name = path.file_name().unwrap();
        let fresh = std::fs::read(&path).unwrap();
        let committed = std::fs::read(Path::new(DESK).join(name)).unwrap();
        assert!(fresh == committed, "{} differs from the committed fixture", name.to_string_lossy());
    }
}

#[test]
fn desk_fixture_spans_two_years_of_business_days() {
    let market = synthetic::generate(&Preset::Desk.spec(42)).unwrap();
    let store = market.to_store();
    let stamps = store.bar_timestamps();
    assert_eq!(stamps.len(), DESK_BARS);
    assert_eq!(DESK_BARS, 504);
    assert_eq!(store.instruments().count(), 9);
    assert!(!market.stress_bars.is_empty());
}
