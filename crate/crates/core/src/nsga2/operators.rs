//! Variation and mating-selection operators.

use rand::Rng;

use super::{Gene, GeneKind, Genotype, Individual};

/// Crowded comparison: lower front rank wins, then larger crowding distance,
/// then a fair coin.
fn tournament_winner<R: Rng>(a: usize, b: usize, pop: &[Individual], rng: &mut R) -> usize {
    let (ia, ib) = (&pop[a], &pop[b]);
    let ra = ia.front_rank.unwrap_or(usize::MAX);
    let rb = ib.front_rank.unwrap_or(usize::MAX);
    if ra != rb {
        return if ra < rb { a } else { b };
    }
    if ia.crowding != ib.crowding {
        return if ia.crowding > ib.crowding { a } else { b };
    }
    if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

/// Draws `count` parents, each the winner of a tournament between two
/// distinct random individuals. Returns indices into `pop`.
pub fn binary_tournament<R: Rng>(pop: &[Individual], count: usize, rng: &mut R) -> Vec<usize> {
    let n = pop.len();
    (0..count)
        .map(|_| {
            if n == 1 {
                return 0;
            }
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            tournament_winner(a, b, pop, rng)
        })
        .collect()
}

/// Swaps the genes in `[start, end)` between two parents.
pub fn swap_segment(p1: &Genotype, p2: &Genotype, start: usize, end: usize) -> (Genotype, Genotype) {
    let mut c1 = p1.clone();
    let mut c2 = p2.clone();
    c1.0[start..end].copy_from_slice(&p2.0[start..end]);
    c2.0[start..end].copy_from_slice(&p1.0[start..end]);
    (c1, c2)
}

/// With probability `prob`, picks two distinct cut positions on the feature
/// boundaries `0..=m` and swaps the segment between them; otherwise returns
/// copies of the parents.
pub fn two_point_crossover<R: Rng>(
    p1: &Genotype,
    p2: &Genotype,
    prob: f64,
    rng: &mut R,
) -> (Genotype, Genotype) {
    debug_assert_eq!(p1.len(), p2.len());
    let m = p1.len();
    if m == 0 || !rng.random_bool(prob.clamp(0.0, 1.0)) {
        return (p1.clone(), p2.clone());
    }
    let a = rng.random_range(0..=m);
    let mut b = rng.random_range(0..m);
    if b >= a {
        b += 1;
    }
    let (start, end) = if a < b { (a, b) } else { (b, a) };
    swap_segment(p1, p2, start, end)
}

/// Bounded polynomial mutation of a value in [0, 1].
pub fn polynomial_perturb<R: Rng>(y: f64, eta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let pow = 1.0 / (eta + 1.0);
    let delta_q = if u < 0.5 {
        let xy = 1.0 - y;
        let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
        val.powf(pow) - 1.0
    } else {
        let xy = y;
        let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
        1.0 - val.powf(pow)
    };
    (y + delta_q).clamp(0.0, 1.0)
}

/// Mutates each gene independently with probability `prob`: continuous genes
/// by polynomial mutation, categorical genes by a uniform re-draw.
pub fn mutate<R: Rng>(
    g: &Genotype,
    kinds: &[GeneKind],
    prob: f64,
    eta: f64,
    rng: &mut R,
) -> Genotype {
    let prob = prob.clamp(0.0, 1.0);
    let genes = g
        .0
        .iter()
        .zip(kinds)
        .map(|(gene, kind)| {
            if !rng.random_bool(prob) {
                return *gene;
            }
            match (gene, kind) {
                (Gene::Continuous(y), _) => Gene::Continuous(polynomial_perturb(*y, eta, rng)),
                (Gene::Categorical(_), GeneKind::Categorical { arity }) => {
                    Gene::Categorical(rng.random_range(0..*arity))
                }
                (Gene::Categorical(c), GeneKind::Continuous) => Gene::Categorical(*c),
            }
        })
        .collect();
    Genotype(genes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cont(vals: &[f64]) -> Genotype {
        Genotype(vals.iter().map(|v| Gene::Continuous(*v)).collect())
    }

    fn ind(rank: usize, crowding: f64) -> Individual {
        Individual {
            genotype: cont(&[0.0]),
            objectives: [0.0, 0.0],
            front_rank: Some(rank),
            crowding,
        }
    }

    #[test]
    fn tournament_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = vec![ind(0, 0.1), ind(1, f64::INFINITY)];
        for _ in 0..20 {
            assert_eq!(binary_tournament(&pop, 1, &mut rng), vec![0]);
        }
        let pop = vec![ind(0, f64::INFINITY), ind(0, 0.3)];
        for _ in 0..20 {
            assert_eq!(binary_tournament(&pop, 1, &mut rng), vec![0]);
        }
    }

    #[test]
    fn tournament_deterministic() {
        let pop: Vec<Individual> = (0..10).map(|i| ind(i % 3, (i as f64) * 0.1)).collect();
        let a = binary_tournament(&pop, 10, &mut ChaCha8Rng::seed_from_u64(4));
        let b = binary_tournament(&pop, 10, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn segment_swap_trace() {
        let p1 = cont(&[1.0, 2.0, 3.0, 4.0]);
        let p2 = cont(&[5.0, 6.0, 7.0, 8.0]);
        let (c1, c2) = swap_segment(&p1, &p2, 1, 3);
        assert_eq!(c1, cont(&[1.0, 6.0, 7.0, 4.0]));
        assert_eq!(c2, cont(&[5.0, 2.0, 3.0, 8.0]));
    }

    #[test]
    fn crossover_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = cont(&[0.1, 0.2, 0.3]);
        for _ in 0..20 {
            let (a, b) = two_point_crossover(&p, &p, 1.0, &mut rng);
            assert_eq!((a, b), (p.clone(), p.clone()));
        }
        let q = cont(&[0.9, 0.8, 0.7]);
        for _ in 0..20 {
            let (a, b) = two_point_crossover(&p, &q, 0.0, &mut rng);
            assert_eq!((a, b), (p.clone(), q.clone()));
        }
    }

    #[test]
    fn mutation_prob_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kinds = [GeneKind::Continuous, GeneKind::Categorical { arity: 4 }];
        let g = Genotype(vec![Gene::Continuous(0.3), Gene::Categorical(2)]);
        for _ in 0..50 {
            assert_eq!(mutate(&g, &kinds, 0.0, 20.0, &mut rng), g);
        }
    }

    #[test]
    fn mutation_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kinds = [GeneKind::Continuous, GeneKind::Continuous, GeneKind::Categorical { arity: 3 }];
        let g = Genotype(vec![Gene::Continuous(0.0), Gene::Continuous(1.0), Gene::Categorical(0)]);
        for _ in 0..2000 {
            let m = mutate(&g, &kinds, 1.0, 20.0, &mut rng);
            assert!(m.is_valid(&kinds));
        }
    }

    #[test]
    fn mutation_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let kinds = [GeneKind::Continuous];
        let g = cont(&[0.5]);
        let changed = (0..10_000)
            .filter(|_| mutate(&g, &kinds, 0.5, 20.0, &mut rng) != g)
            .count();
        let freq = changed as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }
}
