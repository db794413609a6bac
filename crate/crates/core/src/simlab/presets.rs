//! Named worlds shared by the command line and the test suites.

use nalgebra::DMatrix;

use super::seed::rng_from;
use super::world::WorldSpec;
use crate::error::{Error, Result};

/// The one-attribute world with `alpha = 0.3`, `p = 0.8`.
pub fn example1() -> WorldSpec {
    WorldSpec::example1(0.3, 0.8).expect("valid parameters")
}

/// A random continuous world with `d = 5`, `k = 2` and the given `eta`.
pub fn parametric(eta: f64, seed: u64) -> WorldSpec {
    WorldSpec::random_parametric(5, 2, eta, &mut rng_from(seed)).expect("valid parameters")
}

/// Twelve attributes with alternating signs. The AI leans the opposite way
/// (`zeta = -theta_check / 6`) and humans usually go along with its pick
/// (`eta = 9`) unless their own utilities disagree strongly.
pub fn misaligned() -> WorldSpec {
    let theta: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 3.0 } else { -3.0 }).collect();
    let zeta = theta.iter().map(|t| -t / 6.0).collect();
    WorldSpec::parametric(theta, zeta, 9.0, 2).expect("valid parameters")
}

/// Three equally likely tasks with the human law inside the parametric family.
pub fn finite() -> WorldSpec {
    let tasks = vec![
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.5]),
        DMatrix::from_row_slice(2, 3, &[0.5, 1.0, 0.0, 1.0, -0.5, 1.0]),
        DMatrix::from_row_slice(2, 3, &[-1.0, 0.5, 1.0, 0.0, 0.0, -1.0]),
    ];
    WorldSpec::parametric(vec![0.6, -0.4, 0.3], vec![-0.5, 0.8, 0.4], 1.0, 2)
        .and_then(|w| w.with_support(tasks, vec![1.0 / 3.0; 3]))
        .expect("valid parameters")
}

pub const NAMES: [&str; 4] = ["example1", "parametric", "misaligned", "finite"];

/// Looks a preset up by name; `seed` only matters for `parametric`.
pub fn by_name(name: &str, eta: f64, seed: u64) -> Result<WorldSpec> {
    match name {
        "example1" => Ok(example1()),
        "parametric" => Ok(parametric(eta, seed)),
        "misaligned" => Ok(misaligned()),
        "finite" => Ok(finite()),
        other => Err(Error::invalid(format!("unknown world {other:?}; expected one of {NAMES:?}"))),
    }
}
