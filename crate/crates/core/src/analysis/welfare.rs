use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::mechanisms::MechanismResult;
use crate::model::{self, Allocation, MarketInstance, UtilityVector};

use super::{Certificate, CertificateStatus};

/// `sum_s B_s ln u_s`; `-inf` as soon as one utility is zero.
pub fn nash_social_welfare_log(utilities: &[f64], budgets: &[f64]) -> Result<f64> {
    if utilities.len() != budgets.len() {
        return Err(Error::Dimension(format!(
            "{} utilities for {} budgets",
            utilities.len(),
            budgets.len()
        )));
    }
    let mut total = 0.0;
    for (s, (&u, &b)) in utilities.iter().zip(budgets).enumerate() {
        if u.is_nan() || u < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "utility of provider {s} is {u}"
            )));
        }
        if u == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += b * u.ln();
    }
    Ok(total)
}

/// `prod_s u_s^B_s`, evaluated in log space. Overflows to `inf` only when the
/// product itself is not representable.
pub fn nash_social_welfare(utilities: &[f64], budgets: &[f64]) -> Result<f64> {
    nash_social_welfare_log(utilities, budgets).map(f64::exp)
}

/// `SW_mech / SW_so`, or `None` when the optimum welfare is zero.
pub fn efficiency(result: &MechanismResult, so_result: &MechanismResult) -> Option<f64> {
    let so = so_result.social_welfare;
    (so > 0.0).then(|| result.social_welfare / so)
}

/// Tolerance on the proportional-fairness aggregate, `1e-6 * sum_s B_s`.
pub fn pf_tolerance(instance: &MarketInstance) -> f64 {
    1e-6 * instance.total_budget()
}

/// Random allocation inside the capacity region: every resource is split by
/// exponential weights and a random fill level in `[0.5, 1]`.
pub fn random_feasible_allocation<R: Rng + ?Sized>(
    instance: &MarketInstance,
    rng: &mut R,
) -> Allocation {
    let shape = instance.shape();
    let mut alloc = Allocation::zeros(shape);
    let mut weights = vec![0.0; shape.providers];
    let split = |rng: &mut R, weights: &mut [f64]| {
        let fill: f64 = rng.random_range(0.5..=1.0);
        for w in weights.iter_mut() {
            *w = Exp1.sample(rng);
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w *= fill / total;
        }
    };
    for m in 0..shape.nodes {
        for r in 0..shape.resources {
            split(rng, &mut weights);
            for s in 0..shape.providers {
                alloc.set_x(s, m, r, weights[s] * instance.mec_capacity(m, r));
            }
        }
    }
    for c in 0..shape.cells {
        split(rng, &mut weights);
        for s in 0..shape.providers {
            alloc.set_y(s, c, weights[s] * instance.ran_capacity(c));
        }
    }
    alloc
}

/// Everything to `provider`, nothing to anyone else.
pub fn concentrated_allocation(instance: &MarketInstance, provider: usize) -> Allocation {
    let shape = instance.shape();
    let mut alloc = Allocation::zeros(shape);
    for m in 0..shape.nodes {
        for r in 0..shape.resources {
            alloc.set_x(provider, m, r, instance.mec_capacity(m, r));
        }
    }
    for c in 0..shape.cells {
        alloc.set_y(provider, c, instance.ran_capacity(c));
    }
    alloc
}

/// Largest `sum_s B_s (v_s - u_s) / u_s` over the given alternatives and
/// `samples` random feasible allocations. Proportional fairness requires it
/// to stay non-positive; the certificate allows [`pf_tolerance`].
pub fn check_proportional_fairness(
    instance: &MarketInstance,
    utilities: &[f64],
    alternatives: &[UtilityVector],
    samples: usize,
    seed: u64,
) -> Certificate {
    const NAME: &str = "proportional-fairness";
    if utilities.len() != instance.provider_count() {
        return Certificate::with_status(
            NAME,
            CertificateStatus::Undefined,
            "utility length mismatch",
        );
    }
    if let Some(s) = utilities.iter().position(|&u| u <= 0.0) {
        return Certificate::with_status(
            NAME,
            CertificateStatus::Undefined,
            format!("provider {s} has zero utility"),
        );
    }
    let aggregate = |other: &[f64]| -> f64 {
        other
            .iter()
            .zip(utilities)
            .enumerate()
            .map(|(s, (v, u))| instance.budget(s) * (v - u) / u)
            .sum()
    };
    let mut worst = f64::NEG_INFINITY;
    for alt in alternatives {
        if alt.len() == utilities.len() {
            worst = worst.max(aggregate(alt));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let alloc = random_feasible_allocation(instance, &mut rng);
        if let Ok(v) = model::utilities(instance, &alloc) {
            worst = worst.max(aggregate(&v));
        }
    }
    Certificate::from_residual(NAME, worst, pf_tolerance(instance)).with_note(format!(
        "{} alternatives, {samples} random",
        alternatives.len()
    ))
}

/// `max_s (u_ps[s] - u_me[s])`: how far any provider falls short of its
/// proportional-sharing utility.
pub fn check_sharing_incentive(
    me_utilities: &[f64],
    ps_utilities: &[f64],
    tolerance: f64,
) -> Certificate {
    const NAME: &str = "sharing-incentive";
    if me_utilities.len() != ps_utilities.len() || me_utilities.is_empty() {
        return Certificate::with_status(
            NAME,
            CertificateStatus::Undefined,
            "utility length mismatch",
        );
    }
    let worst = me_utilities
        .iter()
        .zip(ps_utilities)
        .map(|(me, ps)| ps - me)
        .fold(f64::NEG_INFINITY, f64::max);
    Certificate::from_residual(NAME, worst, tolerance)
}

/// Largest gain any provider would get from swapping into another provider's
/// bundle. Only meaningful with equal budgets.
pub fn check_envy_freeness(
    instance: &MarketInstance,
    allocation: &Allocation,
    tolerance: f64,
) -> Certificate {
    const NAME: &str = "envy-freeness";
    let budgets = instance.budgets();
    let first = budgets[0];
    if budgets
        .iter()
        .any(|&b| (b - first).abs() > 1e-12 * first.abs().max(1.0))
    {
        return Certificate::with_status(NAME, CertificateStatus::NotApplicable, "budgets differ");
    }
    let shape = instance.shape();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..shape.providers {
        let own = match model::utility_of_bundle(instance, allocation, s, s) {
            Ok(u) => u,
            Err(e) => {
                return Certificate::with_status(NAME, CertificateStatus::Undefined, e.to_string())
            }
        };
        for t in 0..shape.providers {
            if t != s {
                if let Ok(other) = model::utility_of_bundle(instance, allocation, s, t) {
                    worst = worst.max(other - own);
                }
            }
        }
    }
    if shape.providers == 1 {
        worst = 0.0;
    }
    Certificate::from_residual(NAME, worst, tolerance)
}
