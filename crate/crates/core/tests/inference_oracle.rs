//! Mean-field updates checked against brute-force enumeration written here,
//! independently of the library's own enumerator.

use phonoquery_core::inference::{
    bernoulli_entropy, exact_posterior, fit, hypothetical_update, info_gain, predict_prob_acceptable, Dataset,
    Evidence, Hyperparams, Judgment, Label, Posterior, SweepMode,
};
use phonoquery_core::phonology::{active_set, ActiveSet, Syllable, WordForm, CONSTRAINT_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_V: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
const GRID_PRIOR: [f64; 6] = [0.001, 0.025, 0.05, 0.1, 0.2, 0.35];

struct Problem {
    dim: usize,
    observations: Vec<(Vec<usize>, bool)>,
    hp: Hyperparams,
}

/// Configuration weights ∝ p(θ)·∏ p(y|x,θ), accumulated in log space.
fn enumerate(p: &Problem) -> Vec<f64> {
    let lambda = p.hp.noise_log_odds();
    // log σ(Λ) and log σ(−Λ)
    let log_alpha = -(-lambda).exp().ln_1p();
    let log_flip = -lambda - (-lambda).exp().ln_1p();
    let prior = p.hp.theta_prior;
    let log_w: Vec<f64> = (0..1usize << p.dim)
        .map(|config| {
            let mut lw = 0.0;
            for j in 0..p.dim {
                lw += if config >> j & 1 == 1 { prior.ln() } else { (1.0 - prior).ln() };
            }
            for (active, accepted) in &p.observations {
                let grammatical = active.iter().all(|&j| config >> j & 1 == 0);
                lw += if grammatical == *accepted { log_alpha } else { log_flip };
            }
            lw
        })
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn marginal(weights: &[f64], j: usize) -> f64 {
    weights.iter().enumerate().filter(|(c, _)| c >> j & 1 == 1).map(|(_, w)| w).sum()
}

fn prob_all_off(weights: &[f64], active: &[usize]) -> f64 {
    weights.iter().enumerate().filter(|(c, _)| active.iter().all(|&j| c >> j & 1 == 0)).map(|(_, w)| w).sum()
}

fn random_subset(rng: &mut ChaCha8Rng, dim: usize, max: usize) -> Vec<usize> {
    let size = rng.random_range(1..=max.min(dim));
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, dim, size).into_iter().collect();
    picked.sort_unstable();
    picked
}

fn random_problem(rng: &mut ChaCha8Rng, dim: usize, n_obs: usize) -> Problem {
    let v = GRID_V[rng.random_range(0..GRID_V.len())];
    let prior = GRID_PRIOR[rng.random_range(0..GRID_PRIOR.len())];
    let steps = if rng.random_bool(0.5) { SweepMode::One } else { SweepMode::ToConvergence };
    let observations = (0..n_obs).map(|_| (random_subset(rng, dim, 4), rng.random_bool(0.5))).collect();
    Problem { dim, observations, hp: Hyperparams::new(v, prior, steps).unwrap() }
}

/// Sequential warm-started fits, one per observation, as the learner does.
fn vb(p: &Problem) -> Posterior {
    let mut ev = Evidence::new(p.dim);
    let mut post = Posterior::prior(p.dim, p.hp.theta_prior);
    for (active, accepted) in &p.observations {
        ev.push(Judgment { active: ActiveSet::from_indices(active.iter().copied()), label: Label::from_bool(*accepted) })
            .unwrap();
        post = fit(&post, &ev, &p.hp).unwrap().posterior;
    }
    post
}

fn evidence(p: &Problem) -> Evidence {
    let mut ev = Evidence::new(p.dim);
    for (active, accepted) in &p.observations {
        ev.push(Judgment { active: ActiveSet::from_indices(active.iter().copied()), label: Label::from_bool(*accepted) })
            .unwrap();
    }
    ev
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut k = i;
        while k + 1 < order.len() && x[order[k + 1]] == x[order[i]] {
            k += 1;
        }
        let avg = (i + k) as f64 / 2.0 + 1.0;
        for &o in &order[i..=k] {
            r[o] = avg;
        }
        i = k + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn library_enumerator_matches_the_local_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let dim = rng.random_range(2..=10);
        let n_obs = rng.random_range(1..=8);
        let p = random_problem(&mut rng, dim, n_obs);
        let local = enumerate(&p);
        let lib = exact_posterior(&evidence(&p), &p.hp, &(0..dim).collect::<Vec<_>>()).unwrap();
        for (j, m) in lib.iter().enumerate() {
            assert!((m - marginal(&local, j)).abs() < 1e-12);
        }
    }
}

#[test]
fn vb_moves_coordinates_the_same_way_as_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut agree, mut total) = (0, 0);
    for _ in 0..20 {
        let dim = rng.random_range(2..=10);
        let n_obs = rng.random_range(1..=8);
        let p = random_problem(&mut rng, dim, n_obs);
        let exact = enumerate(&p);
        let q = vb(&p);
        let prior = p.hp.theta_prior;
        for j in 0..dim {
            let m = marginal(&exact, j);
            if (m - prior).abs() > 0.01 {
                total += 1;
                if (m - prior).signum() == (q.values()[j] - prior).signum() {
                    agree += 1;
                }
            }
        }
    }
    assert!(total > 0);
    assert!(agree as f64 >= 0.95 * total as f64, "sign agreement {agree}/{total}");
}

#[test]
fn vb_marginals_rank_like_exact_on_a_six_constraint_problem() {
    let hp = Hyperparams::new(0.5, 0.1, SweepMode::ToConvergence).unwrap();
    let observations = vec![
        (vec![0, 1], false),
        (vec![1, 2], true),
        (vec![3], false),
        (vec![3, 4, 5], false),
        (vec![4], true),
    ];
    let p = Problem { dim: 6, observations, hp };
    let exact = enumerate(&p);
    let exact_m: Vec<f64> = (0..6).map(|j| marginal(&exact, j)).collect();
    let rho = spearman(vb(&p).values(), &exact_m);
    assert!(rho >= 0.9, "spearman {rho}");
}

#[test]
fn soft_noise_predictions_rank_like_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let dim = rng.random_range(4..=10);
        let n_obs = rng.random_range(3..=8);
        let mut p = random_problem(&mut rng, dim, n_obs);
        let v = GRID_V[rng.random_range(0..4)];
        p.hp = Hyperparams::new(v, p.hp.theta_prior, p.hp.steps).unwrap();
        let exact = enumerate(&p);
        let q = vb(&p);
        let tests: Vec<Vec<usize>> = (0..40).map(|_| random_subset(&mut rng, dim, 3)).collect();
        let e: Vec<f64> = tests.iter().map(|t| prob_all_off(&exact, t)).collect();
        let m: Vec<f64> =
            tests.iter().map(|t| predict_prob_acceptable(&q, &ActiveSet::from_indices(t.iter().copied()))).collect();
        let rho = spearman(&m, &e);
        assert!(rho >= 0.9, "v={v} prior={} {:?}: {rho}", p.hp.theta_prior, p.hp.steps);
    }
}

/// Symmetric fixed point of the mean-field update after one accepted word
/// with `m` fresh constraints, found by bisection.
fn accepted_fixed_point(prior: f64, lambda: f64, m: usize) -> f64 {
    let logit = (prior / (1.0 - prior)).ln();
    let residual = |q: f64| q - 1.0 / (1.0 + (-(logit - lambda * (1.0 - q).powi(m as i32 - 1))).exp());
    let (mut lo, mut hi) = (0.0, prior);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn accepting_any_two_syllable_word_gains_information() {
    for v in [0.25, 1.0, 4.0] {
        let hp = Hyperparams::new(v, 0.1, SweepMode::ToConvergence).unwrap();
        let fresh = Posterior::prior(CONSTRAINT_COUNT, 0.1);
        for a in 0..Syllable::COUNT {
            for b in 0..Syllable::COUNT {
                let word = WordForm::new(vec![Syllable::from_code(a), Syllable::from_code(b)]).unwrap();
                let after = hypothetical_update(&fresh, &Dataset::new(), &hp, &word, Label::Acceptable).unwrap();
                let gain = info_gain(&fresh, &after.posterior);
                let m = active_set(&word).len();
                let q = accepted_fixed_point(0.1, hp.noise_log_odds(), m);
                let expected = m as f64 * (bernoulli_entropy(0.1) - bernoulli_entropy(q));
                assert!(gain > 0.0, "{word}");
                assert!((gain - expected).abs() < 1e-6, "{word}: {gain} vs {expected}");
            }
        }
    }
}
