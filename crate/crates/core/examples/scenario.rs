//! Run a scenario file and print its long-format table.
//!
//! cargo run --example scenario [configs/smoke.cfg]

use caradj::sim::Scenario;

fn main() -> caradj::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.cfg").to_string());
    let scenario = Scenario::load(path)?;
    for point in scenario.points() {
        println!("grid point n = {}, p = {}", point.n, point.p);
    }
    print!("{}", scenario.run()?.to_csv()?);
    Ok(())
}
