use std::io::Write;

use toposqt::suites::{run_suite, Suite, SuiteConfig};

#[test]
fn acceptance() {
    let config = SuiteConfig::default();
    // written to the raw handle so the lines survive output capture
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for suite in Suite::ALL {
        let r = run_suite(suite, &config);
        writeln!(err, "{}", r.line()).unwrap();
        for note in &r.notes {
            writeln!(err, "    {note}").unwrap();
        }
        for f in &r.failures {
            writeln!(err, "    failure: {f}").unwrap();
        }
        if !r.passed {
            failed.push(r.criterion);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
