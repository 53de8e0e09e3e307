//! Shipped SCMs used by the test suites and the `synth` command.

use super::{SynthError, SyntheticScm};

pub const LINEAR_GAUSSIAN: &str = include_str!("../../fixtures/linear_gaussian.scm");
pub const LINEAR_DISCRETE: &str = include_str!("../../fixtures/linear_discrete.scm");
pub const INTERACTION: &str = include_str!("../../fixtures/interaction.scm");
pub const POVERTY: &str = include_str!("../../fixtures/poverty.scm");
pub const BINARY: &str = include_str!("../../fixtures/binary.scm");

pub const NAMES: [&str; 5] = ["linear_gaussian", "linear_discrete", "interaction", "poverty", "binary"];

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "linear_gaussian" => LINEAR_GAUSSIAN,
        "linear_discrete" => LINEAR_DISCRETE,
        "interaction" => INTERACTION,
        "poverty" => POVERTY,
        "binary" => BINARY,
        _ => return None,
    })
}

pub fn load(name: &str) -> Result<SyntheticScm, SynthError> {
    let text = source(name).ok_or_else(|| SynthError::Parse { line: 0, message: format!("no fixture named `{name}`") })?;
    SyntheticScm::parse(text)
}
