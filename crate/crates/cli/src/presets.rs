//! Named scenarios reproducing the reference simulation study.

use streamal_core::{LossKind, ScenarioConfig, StrategyKind, StrategySpec};

/// Replica count of the reference study; `--replicas` overrides it.
pub const PAPER_REPLICAS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub scenario: ScenarioConfig,
    pub strategies: Vec<StrategySpec>,
}

/// The six strategy/estimator pairs compared in every scenario.
pub fn standard_strategies() -> Vec<StrategySpec> {
    vec![
        StrategySpec::new(StrategyKind::Random, LossKind::Ols),
        StrategySpec::new(StrategyKind::NormThreshold, LossKind::Ols),
        StrategySpec::new(StrategyKind::Cdo, LossKind::Ols),
        StrategySpec::new(StrategyKind::BoundedCdo, LossKind::Ols),
        StrategySpec::new(StrategyKind::BoundedCdo, LossKind::huber()),
        StrategySpec::new(StrategyKind::BoundedCdo, LossKind::tukey()),
    ]
}

fn weighted_strategies() -> Vec<StrategySpec> {
    let huber = StrategySpec::new(StrategyKind::BoundedCdo, LossKind::huber());
    let tukey = StrategySpec::new(StrategyKind::BoundedCdo, LossKind::tukey());
    vec![
        StrategySpec::new(StrategyKind::BoundedCdo, LossKind::Ols),
        huber,
        huber.weighted(),
        tukey,
        tukey.weighted(),
    ]
}

fn scenario(contamination: f64, contaminated_init: bool) -> ScenarioConfig {
    ScenarioConfig {
        contamination,
        contaminated_init,
        ..ScenarioConfig::paper(20)
    }
}

pub fn presets() -> Vec<Preset> {
    let std = standard_strategies;
    vec![
        Preset {
            name: "paper-clean",
            summary: "no outliers",
            scenario: scenario(0.0, false),
            strategies: std(),
        },
        Preset {
            name: "paper-0275",
            summary: "0.275% outliers",
            scenario: scenario(0.00275, false),
            strategies: std(),
        },
        Preset {
            name: "paper-1pct",
            summary: "1% outliers",
            scenario: scenario(0.01, false),
            strategies: std(),
        },
        Preset {
            name: "paper-5pct",
            summary: "5% outliers",
            scenario: scenario(0.05, false),
            strategies: std(),
        },
        Preset {
            name: "paper-1pct-dirty-init",
            summary: "1% outliers, outliers allowed in the initial design",
            scenario: scenario(0.01, true),
            strategies: std(),
        },
        Preset {
            name: "paper-5pct-dirty-init",
            summary: "5% outliers, outliers allowed in the initial design",
            scenario: scenario(0.05, true),
            strategies: std(),
        },
        Preset {
            name: "paper-upvw-1pct",
            summary: "1% outliers, plain vs robust-weighted prediction variance",
            scenario: scenario(0.01, false),
            strategies: weighted_strategies(),
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

pub fn preset_names() -> Vec<&'static str> {
    presets().iter().map(|p| p.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pct_parameters() {
        let p = preset("paper-1pct").unwrap();
        let s = &p.scenario;
        assert_eq!((s.p, s.budget, s.warm_up), (20, 50, 500));
        assert_eq!((s.alpha, s.cutoff, s.contamination), (0.05, 0.05, 0.01));
        assert_eq!(s.initial_design_size, 22);
        assert_eq!(p.strategies.len(), 6);
    }

    #[test]
    fn presets_differ_from_clean_only_in_documented_fields() {
        let clean = preset("paper-clean").unwrap().scenario;
        let expected = [
            ("paper-0275", 0.00275, false),
            ("paper-1pct", 0.01, false),
            ("paper-5pct", 0.05, false),
            ("paper-1pct-dirty-init", 0.01, true),
            ("paper-5pct-dirty-init", 0.05, true),
            ("paper-upvw-1pct", 0.01, false),
        ];
        for (name, cont, dirty) in expected {
            let s = preset(name).unwrap().scenario;
            assert_eq!(
                s,
                ScenarioConfig {
                    contamination: cont,
                    contaminated_init: dirty,
                    ..clean.clone()
                },
                "{name}"
            );
        }
        assert_eq!(clean.contamination, 0.0);
        assert!(preset("paper-upvw-1pct")
            .unwrap()
            .strategies
            .iter()
            .any(|s| s.weighted));
        assert!(preset("paper-5pct")
            .unwrap()
            .strategies
            .iter()
            .all(|s| !s.weighted));
    }

    #[test]
    fn all_presets_validate() {
        for p in presets() {
            p.scenario.validate().unwrap();
        }
        assert_eq!(preset_names().len(), 7);
        assert!(preset("paper-2pct").is_none());
    }
}
