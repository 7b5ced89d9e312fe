//! Scenarios compiled into the binary for `check`.

use vtube_core::scenario::parse_scenario;
use vtube_core::ScenarioFile;

pub const SHIPPED: [(&str, &str); 5] = [
    ("paper_40uav", include_str!("../../../scenarios/paper_40uav.json")),
    ("two_uav_headon", include_str!("../../../scenarios/two_uav_headon.json")),
    ("overtaking", include_str!("../../../scenarios/overtaking.json")),
    (
        "crowded_entrance",
        include_str!("../../../scenarios/crowded_entrance.json"),
    ),
    ("basic_8uav", include_str!("../../../scenarios/basic_8uav.json")),
];

pub fn load(name: &str) -> anyhow::Result<ScenarioFile> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| anyhow::anyhow!("no shipped scenario named {name}"))?;
    Ok(parse_scenario(text, name)?)
}

pub fn all() -> anyhow::Result<Vec<(String, ScenarioFile)>> {
    SHIPPED.iter().map(|(n, _)| Ok((n.to_string(), load(n)?))).collect()
}
