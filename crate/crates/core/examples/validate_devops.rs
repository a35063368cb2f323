// Validate the shipped DevOps planning matrix in both constraint modes.
//
// `cargo run -p matrixgate --example validate_devops`

use matrixgate::io::{parse_bundle, render_report, ReportFormat};
use matrixgate::packs::applicable_packs;
use matrixgate::{validate_matrix, ValidationMode, ValidationReport};

pub fn run_example() -> Result<(ValidationReport, ValidationReport), Box<dyn std::error::Error>> {
    let bundle = parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let packs = applicable_packs(&bundle.actors);
    println!("{}: {} tasks, {} actors, packs {}", bundle.phase_name, bundle.tasks.len(), bundle.actors.len(), packs.join(", "));

    let compat = validate_matrix(&bundle, ValidationMode::PaperCompat, &packs)?;
    print!("paper-compat: {}", render_report(&compat, ReportFormat::Text));

    // Strict reads the no-Accountable exception literally, so the roadmap
    // row (agents consulted, nobody accountable) is rejected.
    let strict = validate_matrix(&bundle, ValidationMode::Strict, &packs)?;
    print!("strict:\n{}", render_report(&strict, ReportFormat::Text));
    Ok((compat, strict))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
