//! Central finite-difference checks of every layer, both losses and two
//! composed stacks.

use melseed::nn::gradcheck::standard_suite;

fn main() -> melseed::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for case in standard_suite(seed)? {
        let worst = case.report.max_rel_error();
        let checked: usize = case.report.tensors.iter().map(|t| t.checked).sum();
        println!("{:<64} {checked:>5} coords  max rel error {worst:.2e}", case.name);
    }
    Ok(())
}
