//! Rating matrix factorization by alternating least squares.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kgraph::{EntityKind, EntityRef};

use super::{rank_desc, unique_sorted, RecommendationList, RecsysError};

/// ALS hyperparameters. Defaults: 200 latent factors, ridge weight 0.1,
/// 15 alternating sweeps.
#[derive(Debug, Clone)]
pub struct AlsConfig {
    pub factors: usize,
    pub regularization: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            factors: 200,
            regularization: 0.1,
            iterations: 15,
            seed: 0,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<(), RecsysError> {
        if self.factors == 0 {
            return Err(RecsysError::Config("factors must be at least 1".into()));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(RecsysError::Config(format!(
                "regularization must be finite and non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

/// Learned user and item factor rows, row-major, one row per index in
/// `[0, n_users)` and `[0, n_items)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    n_users: usize,
    n_items: usize,
    factors: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn user_row(&self, user: usize) -> Option<&[f64]> {
        (user < self.n_users).then(|| &self.user_factors[user * self.factors..][..self.factors])
    }

    pub fn item_row(&self, item: usize) -> Option<&[f64]> {
        (item < self.n_items).then(|| &self.item_factors[item * self.factors..][..self.factors])
    }

    /// Predicted rating: dot product of the two factor rows.
    pub fn predict(&self, user: usize, item: usize) -> Option<f64> {
        let u = self.user_row(user)?;
        let v = self.item_row(item)?;
        Some(u.iter().zip(v).map(|(a, b)| a * b).sum())
    }
}

/// Observed entries grouped by row: `by_row[r]` lists `(column, rating)`.
fn group_by_row(
    ratings: &[(usize, usize, f64)],
    n_rows: usize,
    by_user: bool,
) -> Vec<Vec<(usize, f64)>> {
    let mut grouped = vec![Vec::new(); n_rows];
    for &(u, i, r) in ratings {
        if by_user {
            grouped[u].push((i, r));
        } else {
            grouped[i].push((u, r));
        }
    }
    grouped
}

/// Solves the ridge subproblem for every row of one side: for row x with
/// observed counterpart rows v and ratings r, solve
/// (mu I + sum v v^T) x = sum r v. Rows with no observations shrink to
/// zero when mu > 0; with mu = 0 the system is singular and training
/// aborts.
fn solve_side(
    rows: &mut [f64],
    grouped: &[Vec<(usize, f64)>],
    other: &[f64],
    factors: usize,
    mu: f64,
) -> Result<(), RecsysError> {
    for (row_index, observed) in grouped.iter().enumerate() {
        let mut a = DMatrix::<f64>::zeros(factors, factors);
        let mut b = DVector::<f64>::zeros(factors);
        for f in 0..factors {
            a[(f, f)] = mu;
        }
        for &(col, rating) in observed {
            let v = &other[col * factors..][..factors];
            for p in 0..factors {
                b[p] += rating * v[p];
                for q in 0..factors {
                    a[(p, q)] += v[p] * v[q];
                }
            }
        }
        let solved = Cholesky::new(a).ok_or(RecsysError::Singular)?.solve(&b);
        rows[row_index * factors..][..factors].copy_from_slice(solved.as_slice());
    }
    Ok(())
}

/// Squared reconstruction error over the observed ratings plus the ridge
/// penalty mu (|U|_F^2 + |V|_F^2).
pub fn mf_objective(ratings: &[(usize, usize, f64)], model: &FactorModel, mu: f64) -> f64 {
    let mut err = 0.0;
    for &(u, i, r) in ratings {
        let p = model.predict(u, i).expect("rating indices inside model");
        err += (r - p) * (r - p);
    }
    let frob: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|x| x * x)
        .sum();
    err + mu * frob
}

/// Trains by alternating exact ridge solves: each sweep updates all user
/// rows with items fixed, then all item rows with users fixed. Factors are
/// initialized from a seeded Gaussian. Ratings are `(user, item, value)`
/// index triples with `user < n_users`, `item < n_items`.
pub fn mf_als_train(
    ratings: &[(usize, usize, f64)],
    n_users: usize,
    n_items: usize,
    config: &AlsConfig,
) -> Result<FactorModel, RecsysError> {
    Ok(mf_als_train_traced(ratings, n_users, n_items, config)?.0)
}

/// [`mf_als_train`] plus the objective value after every half-sweep
/// (2 entries per iteration). Exact block minimization makes the trace
/// non-increasing.
pub fn mf_als_train_traced(
    ratings: &[(usize, usize, f64)],
    n_users: usize,
    n_items: usize,
    config: &AlsConfig,
) -> Result<(FactorModel, Vec<f64>), RecsysError> {
    config.validate()?;
    for &(u, i, r) in ratings {
        if u >= n_users || i >= n_items {
            return Err(RecsysError::Config(format!(
                "rating index ({u}, {i}) outside {n_users} x {n_items}"
            )));
        }
        if !r.is_finite() {
            return Err(RecsysError::Config(format!("non-finite rating {r}")));
        }
    }
    let f = config.factors;
    let normal = Normal::new(0.0, 1.0 / (f as f64).sqrt()).expect("positive std dev");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FactorModel {
        n_users,
        n_items,
        factors: f,
        user_factors: (0..n_users * f).map(|_| normal.sample(&mut rng)).collect(),
        item_factors: (0..n_items * f).map(|_| normal.sample(&mut rng)).collect(),
    };
    let by_user = group_by_row(ratings, n_users, true);
    let by_item = group_by_row(ratings, n_items, false);
    let mu = config.regularization;
    let mut trace = Vec::with_capacity(2 * config.iterations);
    for _ in 0..config.iterations {
        solve_side(
            &mut model.user_factors,
            &by_user,
            &model.item_factors,
            f,
            mu,
        )?;
        trace.push(mf_objective(ratings, &model, mu));
        solve_side(
            &mut model.item_factors,
            &by_item,
            &model.user_factors,
            f,
            mu,
        )?;
        trace.push(mf_objective(ratings, &model, mu));
    }
    Ok((model, trace))
}

/// Ranks candidate items for a user by predicted rating, ties by ascending
/// id. Entity ids double as factor row indices.
pub fn recommend_mf(
    model: &FactorModel,
    user: EntityRef,
    candidates: &[EntityRef],
    k: usize,
) -> Result<RecommendationList, RecsysError> {
    if k == 0 {
        return Err(RecsysError::ZeroK);
    }
    if user.kind != EntityKind::User || (user.id as usize) >= model.n_users {
        return Err(RecsysError::OutsideModel(user));
    }
    let mut scored = Vec::new();
    for item in unique_sorted(candidates) {
        if item.kind != EntityKind::Item {
            return Err(RecsysError::OutsideModel(item));
        }
        let p = model
            .predict(user.id as usize, item.id as usize)
            .ok_or(RecsysError::OutsideModel(item))?;
        scored.push((item, p));
    }
    Ok(RecommendationList {
        user,
        entries: rank_desc(scored, k),
    })
}
