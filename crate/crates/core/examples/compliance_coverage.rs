// Which trustworthy-AI requirements the active rule packs exercise, and
// how a broken assignment shows up.
//
// `cargo run -p matrixgate --example compliance_coverage`

use matrixgate::packs::{applicable_packs, builtin_packs, requirement_coverage, Coverage, CoverageReport};
use matrixgate::{validate_matrix, RoleSet, ValidationMode};

pub fn run_example() -> Result<(CoverageReport, CoverageReport), Box<dyn std::error::Error>> {
    for pack in builtin_packs() {
        println!("{}", pack.id);
        for rule in &pack.rules {
            println!("  {:<8} {:?} {:?}", rule.id, rule.severity, rule.scope);
        }
    }

    let mut bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let packs = applicable_packs(&bundle.actors);
    let clean = requirement_coverage(&validate_matrix(&bundle, ValidationMode::PaperCompat, &packs)?);
    print_coverage("as authored", &clean);

    // Nobody accountable for agent C's sprint plan.
    bundle.matrix.set("sprint_planning", "scrum_master", RoleSet::default());
    let broken = requirement_coverage(&validate_matrix(&bundle, ValidationMode::PaperCompat, &packs)?);
    print_coverage("scrum master removed from sprint planning", &broken);
    println!("{}", clean.disclaimer);
    Ok((clean, broken))
}

fn print_coverage(title: &str, report: &CoverageReport) {
    println!("\n{title}");
    for (req, state) in &report.coverage {
        let mark = match state {
            Coverage::Satisfied => "satisfied",
            Coverage::Violated => "VIOLATED",
            Coverage::NotExercised => "-",
        };
        println!("  {:<45} {mark}", req.label());
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
