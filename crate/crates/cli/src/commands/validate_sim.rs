//! `easq validate-sim`: convergent-validity analysis of a generated data
//! directory — do questionnaire answers line up with posterior behavior?

use std::path::Path;

use easq_core::simenv::{convergent_validity, SignalValidity, ValidityReport};

use crate::error::CliError;
use crate::io::{ensure_out_dir, load_data_dir, write_text};

fn csv_section(name: &str, s: &SignalValidity) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{},{}\n",
        s.mean_dissatisfied,
        s.mean_user_average,
        s.mean_satisfied,
        s.gap_dissatisfied,
        s.gap_satisfied,
        s.p_dissatisfied,
        s.p_satisfied,
        s.n_users_dissatisfied,
        s.n_users_satisfied
    )
}

pub fn validity_csv(report: &ValidityReport) -> String {
    let mut csv = String::from(
        "signal,mean_dissatisfied,mean_user_average,mean_satisfied,gap_dissatisfied,gap_satisfied,p_dissatisfied,p_satisfied,n_users_dissatisfied,n_users_satisfied\n",
    );
    csv.push_str(&csv_section("watch_fraction", &report.watch_fraction));
    csv.push_str(&csv_section("like_rate", &report.like_rate));
    csv
}

pub fn run(data_dir: &Path, out: &Path, force: bool) -> Result<(), CliError> {
    ensure_out_dir(out, force)?;
    let data = load_data_dir(data_dir)?;
    let report = convergent_validity(&data.interactions, &data.responses)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Data(format!("serializing validity report: {e}")))?;
    write_text(&out.join("validity_report.json"), &json)?;
    write_text(&out.join("validity_report.csv"), &validity_csv(&report))?;
    let w = &report.watch_fraction;
    println!(
        "validate-sim: watch fraction {:.4} (dissatisfied) < {:.4} (user avg) < {:.4} (satisfied), p_dis={:.2e} p_sat={:.2e}",
        w.mean_dissatisfied, w.mean_user_average, w.mean_satisfied, w.p_dissatisfied, w.p_satisfied
    );
    Ok(())
}
