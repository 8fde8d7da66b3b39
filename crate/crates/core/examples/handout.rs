//! Prints the printable Markdown handout for a finalized suite.
//!
//! ```text
//! cargo run -p hypocompass --example handout [path/to/suite.json]
//! ```

use hypocompass::handout::export_handout;
use hypocompass::model::parse_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/suites/first_num_greater_than.json").into());
    let suite = parse_suite(&std::fs::read_to_string(path)?)?;
    print!("{}", export_handout(&suite)?);
    Ok(())
}
