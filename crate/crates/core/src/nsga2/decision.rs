use super::{non_dominated_sort, Individual, Objectives};
use crate::error::{Error, Result};

/// Picks one individual from the first front with the achievement
/// scalarising function `max_i f̂_i / ω_i`, where `f̂` is normalised by the
/// front's ideal and nadir points.
///
/// Objectives with zero weight or zero range on the front are left out of
/// the max. Ties go to the lower `f1`, then the lower position. Returns the
/// position of the winner in `pop`.
pub fn asf_select(pop: &[Individual], weights: [f64; 2]) -> Result<usize> {
    if pop.is_empty() {
        return Err(Error::Empty("cannot select from an empty population".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite())
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidParameter(format!(
            "weights must be non-negative and sum to 1, got {weights:?}"
        )));
    }
    let points: Vec<Objectives> = pop.iter().map(|i| i.objectives).collect();
    let front = non_dominated_sort(&points).swap_remove(0);

    let mut ideal = [f64::INFINITY; 2];
    let mut nadir = [f64::NEG_INFINITY; 2];
    for &i in &front {
        for m in 0..2 {
            ideal[m] = ideal[m].min(points[i][m]);
            nadir[m] = nadir[m].max(points[i][m]);
        }
    }
    let active: Vec<usize> = (0..2)
        .filter(|&m| weights[m] > 0.0 && nadir[m] > ideal[m])
        .collect();

    let score = |i: usize| -> f64 {
        active
            .iter()
            .map(|&m| (points[i][m] - ideal[m]) / (nadir[m] - ideal[m]) / weights[m])
            .fold(0.0, f64::max)
    };
    let best = front
        .iter()
        .copied()
        .min_by(|&a, &b| {
            score(a)
                .total_cmp(&score(b))
                .then(points[a][0].total_cmp(&points[b][0]))
                .then(a.cmp(&b))
        })
        .expect("first front is non-empty");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsga2::{Gene, Genotype};

    fn pop(objs: &[Objectives]) -> Vec<Individual> {
        objs.iter()
            .map(|o| Individual {
                genotype: Genotype(vec![Gene::Continuous(0.0)]),
                objectives: *o,
                front_rank: None,
                crowding: 0.0,
            })
            .collect()
    }

    #[test]
    fn distance_only_weights_pick_min_f1() {
        let p = pop(&[[0.3, 0.1], [0.1, 0.9], [0.2, 0.5], [0.4, 0.4]]);
        assert_eq!(asf_select(&p, [1.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn single_member_front() {
        let p = pop(&[[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]]);
        for w in [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]] {
            assert_eq!(asf_select(&p, w).unwrap(), 0);
        }
    }

    #[test]
    fn symmetric_endpoints_tie_to_lower_f1() {
        // normalised scores are both 1/0.5 = 2
        let p = pop(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(asf_select(&p, [0.5, 0.5]).unwrap(), 1);
    }

    #[test]
    fn balanced_weights_prefer_knee() {
        let p = pop(&[[0.0, 1.0], [0.4, 0.4], [1.0, 0.0]]);
        assert_eq!(asf_select(&p, [0.5, 0.5]).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(asf_select(&[], [1.0, 0.0]).is_err());
        assert!(asf_select(&pop(&[[0.0, 0.0]]), [0.7, 0.7]).is_err());
    }
}
