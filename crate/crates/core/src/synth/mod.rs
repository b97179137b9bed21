mod generator;
mod random;

pub use generator::{
    generate, AttributeSpec, DecoySpec, PlantedInstance, PlantedRule, RuleTemplate, SynthDataset, SynthSpec,
    SynthStats, RULES_FILE,
};
pub use random::{random_graph_pair, random_merged_graph, RandomGraphSpec};

#[cfg(test)]
mod tests;
