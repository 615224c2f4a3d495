//! Regenerates the bundled market-data fixture.

use grtr::harness::{generate_financial_fixture, FixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/data".into());
    let fx = generate_financial_fixture(&FixtureSpec::default())?;
    std::fs::write(format!("{dir}/fixture_prices.csv"), fx.prices_csv)?;
    std::fs::write(format!("{dir}/fixture_sectors.csv"), fx.sectors_csv)?;
    Ok(())
}
