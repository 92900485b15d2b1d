//! Canonical figure scenarios, compiled into the binary.

use anyhow::{bail, Result};

use crate::commands::{self, Ctx, EXIT_OK};
use crate::scenario::{Overrides, Scenario};

pub const FIGURES: [(&str, &str); 5] = [
    ("fig1", include_str!("../scenarios/fig1.toml")),
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
];

pub fn scenario(name: &str) -> Result<Scenario> {
    match FIGURES.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => Scenario::parse(text),
        None => {
            let names: Vec<_> = FIGURES.iter().map(|(n, _)| *n).collect();
            bail!(
                "unknown figure `{name}`; expected one of {}",
                names.join(", ")
            )
        }
    }
}

/// Emits the data bundle for a figure. Failed runs are part of the data, so
/// the exit code is 0 once the bundle is written.
pub fn run(name: &str, overrides: &Overrides, ctx: Ctx) -> Result<i32> {
    let s = scenario(name)?;
    match name {
        "fig2" => commands::sweep(s, overrides, ctx)?,
        "fig3" => commands::energy_rate(s, overrides, ctx)?,
        "fig5" => commands::compare(s, overrides, ctx)?,
        _ => commands::simulate(s, overrides, ctx)?,
    };
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_scenarios_parse() {
        for (name, _) in FIGURES {
            let s = scenario(name).unwrap();
            assert_eq!(s.name, name);
            if name != "fig3" {
                s.simulation_plan().unwrap();
            }
        }
        assert!(scenario("fig9").is_err());
    }
}
