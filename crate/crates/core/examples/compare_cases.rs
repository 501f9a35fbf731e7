//! Compares the reflection-coefficient cases on the default scenario.

use ris_sic::ao::RcCase;
use ris_sic::experiment::Prepared;
use ris_sic::scenario::ScenarioConfig;

fn main() -> ris_sic::Result<()> {
    let prepared = Prepared::new(&ScenarioConfig::default())?;
    println!(
        "{:<14} {:>10} {:>8} {:>8} {:>6}",
        "case", "sic (dB)", "C_FD", "gain", "iters"
    );
    for case in [
        RcCase::Ideal,
        RcCase::Continuous,
        RcCase::Discrete(512),
        RcCase::Discrete(4),
        RcCase::Random,
    ] {
        let report = prepared.run_case(case)?;
        println!(
            "{:<14} {:>10.3} {:>8.4} {:>8.4} {:>6.1}",
            case.to_string(),
            report.sic_db.mean,
            report.cfd.mean,
            report.gain.mean,
            report.iterations.mean
        );
    }
    Ok(())
}
