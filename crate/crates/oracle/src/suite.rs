//! Randomized sweep of every check over many generated joints.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checks::{posterior_yz, posterior_z_given_x, posterior_z_given_y};
use crate::{
    agreement_identity_gap, check_structural_identities, elbo_aux, elbo_mono, elbo_mono_decomposed,
    exact_marginal_loglik, marginal_loglik_direct, supervised_decomposition_check, CondTable,
    Joint, ToyJoint, MAX_SUPPORT,
};

pub const TOLERANCE: f64 = 1e-9;
/// A perturbed joint must break the structural identities by more than this.
pub const PERTURBATION_FLOOR: f64 = 1e-6;
/// Dropping the prior corrections must break the agreement identity by more than this.
pub const CORRECTION_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    /// Largest deviation seen (for negative controls: the smallest).
    pub value: f64,
    pub threshold: f64,
    pub violations: usize,
    pub passed: bool,
}

struct Acc {
    name: &'static str,
    trials: usize,
    value: f64,
    threshold: f64,
    violations: usize,
    /// Negative controls want every value above the threshold.
    above: bool,
}

impl Acc {
    fn new(name: &'static str, threshold: f64) -> Self {
        Acc {
            name,
            trials: 0,
            value: 0.0,
            threshold,
            violations: 0,
            above: false,
        }
    }

    fn control(name: &'static str, threshold: f64) -> Self {
        Acc {
            name,
            trials: 0,
            value: f64::INFINITY,
            threshold,
            violations: 0,
            above: true,
        }
    }

    fn push(&mut self, v: f64) {
        self.trials += 1;
        if self.above {
            self.value = self.value.min(v);
            if v.is_nan() || v <= self.threshold {
                self.violations += 1;
            }
        } else {
            self.value = self.value.max(v);
            if v.is_nan() || v > self.threshold {
                self.violations += 1;
            }
        }
    }

    fn report(self) -> CheckReport {
        CheckReport {
            name: self.name.into(),
            trials: self.trials,
            value: self.value,
            threshold: self.threshold,
            violations: self.violations,
            passed: self.violations == 0 && self.trials > 0,
        }
    }
}

fn random_toy(rng: &mut ChaCha8Rng) -> ToyJoint {
    let sizes = (
        rng.gen_range(2..=MAX_SUPPORT),
        rng.gen_range(2..=MAX_SUPPORT),
        rng.gen_range(2..=MAX_SUPPORT),
    );
    let concepts = rng.gen_range(1..=sizes.0.min(sizes.1).min(sizes.2));
    ToyJoint::random(rng, sizes, concepts).expect("sizes in range")
}

/// A cell whose bump cannot be absorbed by the concept structure: with one
/// concept the table is a strictly positive rank-one tensor, otherwise the
/// cell links an `x` to `y` and `z` values of other concepts.
fn breaking_cell(toy: &ToyJoint, rng: &mut ChaCha8Rng) -> usize {
    let j = &toy.joint;
    let x = rng.gen_range(0..j.nx);
    let pick = |lang: usize, rng: &mut ChaCha8Rng| {
        let cx = toy.blocks[0][x];
        let options: Vec<usize> = (0..toy.blocks[lang].len())
            .filter(|&v| toy.concepts == 1 || toy.blocks[lang][v] != cx)
            .collect();
        *options.choose(rng).expect("every concept owns a value")
    };
    let y = pick(1, rng);
    let z = pick(2, rng);
    (x * j.ny + y) * j.nz + z
}

fn support_x(j: &Joint) -> Vec<usize> {
    (0..j.nx).filter(|&x| j.px(x) > 0.0).collect()
}

fn support_xy(j: &Joint) -> Vec<(usize, usize)> {
    (0..j.nx)
        .flat_map(|x| (0..j.ny).map(move |y| (x, y)))
        .filter(|&(x, y)| j.pxy(x, y) > 0.0)
        .collect()
}

/// Runs every check on `trials` random joints; each language takes the
/// observed role in turn where the check is not symmetric.
pub fn run_suite(trials: usize, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut structural = Acc::new("structural_identities", TOLERANCE);
    let mut perturbed = Acc::control("structural_negative_control", PERTURBATION_FLOOR);
    let mut marginal = Acc::new("marginal_likelihood", TOLERANCE);
    let mut tight = Acc::new("elbo_equality_at_posterior", TOLERANCE);
    let mut bound = Acc::new("mono_bound", TOLERANCE);
    let mut halves = Acc::new("mono_half_weights", TOLERANCE);
    let mut aux = Acc::new("aux_bound", TOLERANCE);
    let mut aux_slack = Acc::new("aux_gap_equals_entropy_slack", TOLERANCE);
    let mut aux_tight = Acc::new("aux_bound_tight_without_latent_choice", TOLERANCE);
    let mut agreement = Acc::new("agreement_identity", TOLERANCE);
    let mut uncorrected = Acc::control("agreement_negative_control", CORRECTION_FLOOR);
    let mut supervised = Acc::new("supervised_decomposition", TOLERANCE);

    for _ in 0..trials {
        let toy = random_toy(&mut rng);
        structural.push(check_structural_identities(&toy.joint).max_deviation());
        let cell = breaking_cell(&toy, &mut rng);
        perturbed
            .push(check_structural_identities(&toy.joint.perturbed(cell, 1e-3)).max_deviation());

        for order in [[0, 1, 2], [1, 2, 0], [2, 0, 1]] {
            let j = toy.joint.permuted(order);
            let obs = support_x(&j);
            let pairs = support_xy(&j);
            let exact = exact_marginal_loglik(&j, &obs).unwrap();
            marginal.push((exact - marginal_loglik_direct(&j, &obs).unwrap()).abs());

            let post = posterior_yz(&j);
            tight.push((elbo_mono(&j, &post, &obs).unwrap() - exact).abs());
            let d = elbo_mono_decomposed(&j, &post, &obs).unwrap();
            halves.push((d.weighted - d.reconstruction).abs());
            let others = [
                CondTable::uniform(j.nx, j.ny * j.nz),
                CondTable::random(&mut rng, j.nx, j.ny * j.nz),
                post.mode(),
            ];
            for q in &others {
                let e = elbo_mono(&j, q, &obs).unwrap();
                // -inf is a valid (loose) bound
                bound.push(if e == f64::NEG_INFINITY {
                    0.0
                } else {
                    (e - exact).max(0.0)
                });
            }

            let (qx, qy) = (posterior_z_given_x(&j), posterior_z_given_y(&j));
            let b = elbo_aux(&j, &qx, &qy, &pairs).unwrap();
            aux.push((b.rhs - b.lhs).max(0.0));
            aux_slack.push(((b.lhs - b.rhs) - b.slack).abs());
            let (rx, ry) = (
                CondTable::random(&mut rng, j.nx, j.nz),
                CondTable::random(&mut rng, j.ny, j.nz),
            );
            let rb = elbo_aux(&j, &rx, &ry, &pairs).unwrap();
            aux.push(if rb.rhs == f64::NEG_INFINITY {
                0.0
            } else {
                (rb.rhs - rb.lhs).max(0.0)
            });

            for (a, b) in [(&qx, &qy), (&rx, &ry)] {
                let g = agreement_identity_gap(&j, a, b, &pairs).unwrap();
                agreement.push(g.max_gap);
                uncorrected.push(g.max_gap_without_correction);
            }
            supervised.push(supervised_decomposition_check(&j, &pairs).unwrap().max_gap);
        }

        let sizes = (
            rng.gen_range(1..=MAX_SUPPORT),
            rng.gen_range(1..=MAX_SUPPORT),
            1,
        );
        let flat = ToyJoint::random(&mut rng, sizes, 1)
            .expect("sizes in range")
            .joint;
        let b = elbo_aux(
            &flat,
            &posterior_z_given_x(&flat),
            &posterior_z_given_y(&flat),
            &support_xy(&flat),
        )
        .unwrap();
        aux_tight.push((b.lhs - b.rhs).abs());
    }

    [
        structural,
        perturbed,
        marginal,
        tight,
        bound,
        halves,
        aux,
        aux_slack,
        aux_tight,
        agreement,
        uncorrected,
        supervised,
    ]
    .into_iter()
    .map(Acc::report)
    .collect()
}
