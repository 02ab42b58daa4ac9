//! Closed-set benchmark generation: prompt instantiation followed by layout
//! placement for every cell of a generation plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GenerationError;
use crate::layout::{place_layout, LayoutConfig, PlacementConstraints};
use crate::model::{Instruction, Scenario, Vocabulary};
use crate::prompt::{compose_complex, instantiate_template, ComposeOptions, TemplateSpec, TextGenerator};
use crate::seed::derive_seed;

/// Size of the default closed-set benchmark.
pub const DEFAULT_TOTAL: usize = 3328;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCell {
    pub scenario: Scenario,
    pub n_objects: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub cells: Vec<PlanCell>,
}

/// Splits `total` into `parts` integers differing by at most one; the
/// larger shares come first.
pub fn even_split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

impl GenerationPlan {
    /// Spreads `total` evenly over the closed-set scenarios, then evenly over
    /// each scenario's object counts.
    pub fn balanced(total: usize) -> Self {
        let per_scenario = even_split(total, Scenario::CLOSED.len());
        let mut cells = Vec::new();
        for (scenario, share) in Scenario::CLOSED.into_iter().zip(per_scenario) {
            let counts = scenario.object_counts();
            for (&n_objects, count) in counts.iter().zip(even_split(share, counts.len())) {
                cells.push(PlanCell {
                    scenario,
                    n_objects,
                    count,
                });
            }
        }
        GenerationPlan { cells }
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn count_for(&self, scenario: Scenario) -> usize {
        self.cells
            .iter()
            .filter(|c| c.scenario == scenario)
            .map(|c| c.count)
            .sum()
    }

    pub fn check(&self) -> Result<(), GenerationError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.cells {
            if !c.scenario.object_counts().contains(&c.n_objects) {
                return Err(GenerationError::InvalidPlan(format!(
                    "{} does not support {} objects",
                    c.scenario, c.n_objects
                )));
            }
            if !seen.insert((c.scenario, c.n_objects)) {
                return Err(GenerationError::InvalidPlan(format!(
                    "cell ({}, {}) listed twice",
                    c.scenario, c.n_objects
                )));
            }
        }
        Ok(())
    }
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan::balanced(DEFAULT_TOTAL)
    }
}

pub fn instruction_id(scenario: Scenario, n_objects: usize, index: usize) -> String {
    format!("{scenario}_{n_objects}_{index:04}")
}

/// Everything that determines the generated manifest besides the plan.
pub struct GenerationContext<'a> {
    pub vocab: &'a Vocabulary,
    pub layout: &'a LayoutConfig,
    pub client: Option<&'a dyn TextGenerator>,
    pub compose: &'a ComposeOptions,
    pub master_seed: u64,
}

fn generate_one(
    ctx: &GenerationContext<'_>,
    scenario: Scenario,
    n_objects: usize,
    index: usize,
) -> Result<Instruction, GenerationError> {
    let id = instruction_id(scenario, n_objects, index);
    let seed = derive_seed(ctx.master_seed, &format!("{scenario}/{n_objects}/{index}"));
    let prompt_seed = derive_seed(seed, "prompt");
    let composition = if scenario == Scenario::ComplexCompositions {
        compose_complex(ctx.vocab, n_objects, ctx.client, prompt_seed, ctx.compose)
    } else {
        TemplateSpec::for_scenario(scenario, n_objects)
            .and_then(|spec| instantiate_template(&spec, ctx.vocab, prompt_seed))
    }
    .map_err(|source| GenerationError::Prompt {
        id: id.clone(),
        source,
    })?;
    let draft = composition.into_draft(id.clone(), scenario);
    let constraints = PlacementConstraints::for_draft(&draft, ctx.layout);
    place_layout(draft, &constraints, derive_seed(seed, "layout"))
        .map_err(|source| GenerationError::Layout { id, source })
}

/// Generates every instruction of `plan` in plan order. Each instruction
/// draws from its own derived seed, so the output does not depend on the
/// thread count.
pub fn generate_closed(
    plan: &GenerationPlan,
    ctx: &GenerationContext<'_>,
) -> Result<Vec<Instruction>, GenerationError> {
    plan.check()?;
    ctx.vocab.validate()?;
    let jobs: Vec<(Scenario, usize, usize)> = plan
        .cells
        .iter()
        .flat_map(|c| (0..c.count).map(move |i| (c.scenario, c.n_objects, i)))
        .collect();
    jobs.par_iter()
        .map(|&(scenario, n, i)| generate_one(ctx, scenario, n, i))
        .collect()
}
