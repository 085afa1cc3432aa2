//! NSGA-II over mixed continuous/categorical genotypes.
//!
//! The generational loop starts from `L` copies of the query, then repeats
//! survive → binary tournament → two-point crossover → mutation → union with
//! the survivors. After the last generation the union is truncated back to
//! `L` and a single individual is picked from the first front with the
//! achievement scalarising function ([`asf_select`]).

mod decision;
mod operators;
mod reconstruction;
mod sorting;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decision::asf_select;
pub use operators::{
    binary_tournament, mutate, polynomial_perturb, swap_segment, two_point_crossover,
};
pub use reconstruction::{
    gene_kinds, genotype_from_features, to_encoded, to_features, ReconstructionProblem,
};
pub use sorting::{assign_rank_and_crowding, crowding_distance, dominates, non_dominated_sort};

/// Objective pair `(f1, f2)`, both minimised.
pub type Objectives = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneKind {
    /// Scaled value in [0, 1].
    Continuous,
    Categorical { arity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gene {
    Continuous(f64),
    Categorical(usize),
}

/// One gene per feature: continuous features carry their scaled value,
/// categorical features their category index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genotype(pub Vec<Gene>);

impl Genotype {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self, kinds: &[GeneKind]) -> bool {
        self.0.len() == kinds.len()
            && self.0.iter().zip(kinds).all(|(g, k)| match (g, k) {
                (Gene::Continuous(v), GeneKind::Continuous) => (0.0..=1.0).contains(v),
                (Gene::Categorical(c), GeneKind::Categorical { arity }) => c < arity,
                _ => false,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genotype: Genotype,
    pub objectives: Objectives,
    pub front_rank: Option<usize>,
    pub crowding: f64,
}

impl Individual {
    fn unranked(genotype: Genotype, objectives: Objectives) -> Self {
        Individual {
            genotype,
            objectives,
            front_rank: None,
            crowding: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<Individual>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.individuals.iter().map(|i| i.objectives).collect()
    }

    /// Component-wise minimum over the population.
    pub fn min_objectives(&self) -> Objectives {
        self.individuals.iter().fold([f64::INFINITY; 2], |acc, i| {
            [acc[0].min(i.objectives[0]), acc[1].min(i.objectives[1])]
        })
    }
}

/// A bi-objective minimisation problem over a fixed gene layout.
pub trait Problem {
    fn gene_kinds(&self) -> &[GeneKind];
    fn evaluate(&self, genotype: &Genotype) -> Result<Objectives>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub n_gen: usize,
    pub pop_size: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / #genes`.
    pub mutation_prob: Option<f64>,
    pub eta_m: f64,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            n_gen: 50,
            pop_size: 100,
            crossover_prob: 0.9,
            mutation_prob: None,
            eta_m: 20.0,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_gen < 1 {
            return bad("n_gen must be at least 1");
        }
        if self.pop_size < 2 || self.pop_size % 2 != 0 {
            return bad("pop_size must be even and at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]");
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("mutation_prob must lie in [0, 1]");
            }
        }
        if !(self.eta_m > 0.0) {
            return bad("eta_m must be positive");
        }
        Ok(())
    }

    pub fn effective_mutation_prob(&self, n_genes: usize) -> f64 {
        self.mutation_prob
            .unwrap_or_else(|| 1.0 / n_genes.max(1) as f64)
    }
}

/// `size` copies of the query genotype.
pub fn init_population(query: &Genotype, size: usize) -> Result<Vec<Genotype>> {
    if size < 2 {
        return Err(Error::InvalidParameter("population size must be at least 2".into()));
    }
    Ok(vec![query.clone(); size])
}

/// Ranks `pop` and keeps the best `size` individuals: whole fronts first,
/// then the split front by descending crowding distance (ties by position).
pub fn survive(mut pop: Vec<Individual>, size: usize) -> Vec<Individual> {
    let fronts = assign_rank_and_crowding(&mut pop);
    let mut keep: Vec<usize> = Vec::with_capacity(size);
    for front in fronts {
        if keep.len() + front.len() <= size {
            keep.extend(front);
            continue;
        }
        let mut rest = front;
        rest.sort_by(|&a, &b| pop[b].crowding.total_cmp(&pop[a].crowding).then(a.cmp(&b)));
        rest.truncate(size - keep.len());
        keep.extend(rest);
        break;
    }
    keep.sort_unstable();
    let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub min_f1: f64,
    pub min_f2: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub initial_objectives: Objectives,
    pub population: Population,
    /// Minimum objectives of the surviving population, starting with the
    /// initial population as generation 0.
    pub history: Vec<GenerationStats>,
}

fn evaluate_all<P: Problem + ?Sized>(problem: &P, genotypes: Vec<Genotype>) -> Result<Vec<Individual>> {
    genotypes
        .into_iter()
        .map(|g| {
            let obj = problem.evaluate(&g)?;
            if !obj.iter().all(|v| v.is_finite()) {
                return Err(Error::Invariant(format!("non-finite objectives {obj:?}")));
            }
            Ok(Individual::unranked(g, obj))
        })
        .collect()
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let p = Population {
        individuals: pop.to_vec(),
    };
    let [min_f1, min_f2] = p.min_objectives();
    GenerationStats {
        generation,
        min_f1,
        min_f2,
    }
}

/// Runs the generational loop from `L` replications of `query`.
pub fn evolve<P: Problem + ?Sized>(
    problem: &P,
    query: &Genotype,
    config: &EvolutionConfig,
) -> Result<Evolution> {
    config.validate()?;
    let kinds = problem.gene_kinds();
    if !query.is_valid(kinds) {
        return Err(Error::InvalidParameter("query genotype violates the gene layout".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.pop_size;
    let mutation_prob = config.effective_mutation_prob(kinds.len());

    let mut pop = evaluate_all(problem, init_population(query, size)?)?;
    let initial_objectives = pop[0].objectives;
    let mut history = vec![stats(0, &pop)];

    for generation in 1..=config.n_gen {
        let survivors = survive(pop, size);
        if generation > 1 {
            history.push(stats(generation - 1, &survivors));
        }
        let parents = binary_tournament(&survivors, size, &mut rng);
        let mut offspring = Vec::with_capacity(size);
        for pair in parents.chunks(2) {
            let p1 = &survivors[pair[0]].genotype;
            let p2 = &survivors[pair[pair.len() - 1]].genotype;
            let (c1, c2) = two_point_crossover(p1, p2, config.crossover_prob, &mut rng);
            offspring.push(c1);
            offspring.push(c2);
        }
        let mutated = offspring
            .iter()
            .map(|g| mutate(g, kinds, mutation_prob, config.eta_m, &mut rng))
            .collect();
        let mutated = evaluate_all(problem, mutated)?;
        pop = survivors;
        pop.extend(mutated);
    }

    let final_pop = survive(pop, size);
    history.push(stats(config.n_gen, &final_pop));
    if final_pop.len() != size {
        return Err(Error::Invariant(format!(
            "population size {} after survival, expected {size}",
            final_pop.len()
        )));
    }
    Ok(Evolution {
        initial_objectives,
        population: Population {
            individuals: final_pop,
        },
        history,
    })
}
