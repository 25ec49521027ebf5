//! Randomized weighted DNF generation.
//!
//! Generation runs in stages: clause widths are drawn, their sum (the slot
//! count) is split among the variables so each gets at least one slot, an
//! optional set of privileged variables receives a reserved share of the
//! excess slots, variables are placed into clauses in decreasing allocation
//! order, and finally literal signs are drawn. If the weighted placement gets
//! stuck, the same plan is placed greedily by remaining capacity; any other
//! stage that cannot complete restarts the whole attempt, up to `max_retries`
//! times.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Clause, DnfFormula, Literal, VariableId, WeightAssignment};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub min_width: usize,
    pub max_width: usize,
    /// Fraction of variables that are privileged.
    pub q: f64,
    /// Share of the excess slots reserved for privileged variables.
    pub r: f64,
    pub seed: u64,
    pub max_retries: usize,
    #[serde(default)]
    pub mode: GeneratorMode,
}

/// `Uniform` fills each clause with distinct variables drawn uniformly, with
/// no slot planning; it exists for comparison datasets only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    SlotPlanned,
    Uniform,
}

impl GeneratorConfig {
    pub fn fixed_width(n: usize, m: usize, width: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            min_width: width,
            max_width: width,
            q: 0.0,
            r: 0.0,
            seed,
            max_retries: 50,
            mode: GeneratorMode::SlotPlanned,
        }
    }

    pub fn with_privileged(self, q: f64, r: f64) -> Self {
        Self { q, r, ..self }
    }

    pub fn privileged_count(&self) -> usize {
        (self.q * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |msg: String| Err(GeneratorError::InvalidConfig(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("need n ≥ 1 and m ≥ 1, got n={} m={}", self.n, self.m));
        }
        if self.min_width == 0 || self.min_width > self.max_width || self.max_width > self.n {
            return bad(format!(
                "need 1 ≤ minW ≤ maxW ≤ n, got {} {} {}",
                self.min_width, self.max_width, self.n
            ));
        }
        if !(0.0..=1.0).contains(&self.q) || !(0.0..=1.0).contains(&self.r) {
            return bad(format!("q and r must lie in [0, 1], got {} {}", self.q, self.r));
        }
        if self.q > 0.0 && self.privileged_count() < 1 {
            return bad(format!("q·n rounds to zero privileged variables (q={})", self.q));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub widths: Vec<usize>,
    pub slot_count: usize,
    pub excess: usize,
    /// Slots per variable; index 0 is variable 1.
    pub allocations: Vec<usize>,
    pub privileged: BTreeSet<u32>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("generation failed after {attempts} attempts (last failure: {last})")]
    RetryExhausted { attempts: usize, last: String },
    #[error("slot count {slot_count} is below the variable count {n}")]
    InsufficientSlots { slot_count: usize, n: usize },
    #[error("variable {variable} needs {needed} clauses but only {available} have free slots")]
    AssignmentStuck {
        variable: u32,
        needed: usize,
        available: usize,
    },
}

/// Draws m widths uniformly from [minW, maxW], redrawing while the slot count
/// is below n.
pub fn sample_widths(cfg: &GeneratorConfig, rng: &mut Rng) -> Result<Vec<usize>, GeneratorError> {
    let mut last = String::new();
    for _ in 0..cfg.max_retries.max(1) {
        match try_sample_widths(cfg, rng) {
            Ok(w) => return Ok(w),
            Err(e) => last = e.to_string(),
        }
    }
    Err(GeneratorError::RetryExhausted {
        attempts: cfg.max_retries.max(1),
        last,
    })
}

fn try_sample_widths(cfg: &GeneratorConfig, rng: &mut Rng) -> Result<Vec<usize>, GeneratorError> {
    let widths: Vec<usize> = (0..cfg.m)
        .map(|_| rng.gen_range(cfg.min_width..=cfg.max_width))
        .collect();
    let slot_count: usize = widths.iter().sum();
    if slot_count < cfg.n {
        return Err(GeneratorError::InsufficientSlots {
            slot_count,
            n: cfg.n,
        });
    }
    Ok(widths)
}

/// Splits `s` slots over `n` variables with every variable getting at least
/// one: one slot each, then the remaining `s − n` by independent uniform
/// choices (a multinomial).
pub fn allocate_slots(s: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    assert!(s >= n, "allocate_slots needs s ≥ n (s={s}, n={n})");
    let mut alloc = vec![1; n];
    let open: Vec<usize> = (0..n).collect();
    fill_capped(&mut alloc, open, s - n, usize::MAX, rng);
    alloc
}

/// Hands out `count` slots one at a time, each to a uniform member of `open`
/// whose allocation is still below `cap`. Stops early if every member is full.
fn fill_capped(alloc: &mut [usize], mut open: Vec<usize>, count: usize, cap: usize, rng: &mut Rng) {
    open.retain(|&i| alloc[i] < cap);
    for _ in 0..count {
        if open.is_empty() {
            return;
        }
        let pos = rng.gen_range(0..open.len());
        let i = open[pos];
        alloc[i] += 1;
        if alloc[i] >= cap {
            open.swap_remove(pos);
        }
    }
}

/// Picks round(q·n) privileged variables and hands them ⌊r·e⌋ reserved slots,
/// each to a uniformly chosen privileged variable. Returns the privileged set
/// and a per-variable vector of reserved slots.
pub fn allocate_privileged(
    cfg: &GeneratorConfig,
    excess: usize,
    rng: &mut Rng,
) -> (BTreeSet<u32>, Vec<usize>) {
    let count = cfg.privileged_count().min(cfg.n);
    let mut extra = vec![0; cfg.n];
    if count == 0 {
        return (BTreeSet::new(), extra);
    }
    let chosen: Vec<usize> = rand::seq::index::sample(rng, cfg.n, count).into_vec();
    let reserved = (cfg.r * excess as f64).floor() as usize;
    // A variable occurs at most once per clause, so at most m − 1 extra slots.
    fill_capped(&mut extra, chosen.clone(), reserved, cfg.m.saturating_sub(1), rng);
    let privileged = chosen.iter().map(|&i| i as u32 + 1).collect();
    (privileged, extra)
}

/// Builds the slot plan for one attempt. Allocations are capped at m because a
/// variable occurs at most once per clause; draws skip full variables.
pub fn plan_slots(
    cfg: &GeneratorConfig,
    widths: Vec<usize>,
    rng: &mut Rng,
) -> Result<SlotPlan, GeneratorError> {
    let slot_count: usize = widths.iter().sum();
    if slot_count < cfg.n {
        return Err(GeneratorError::InsufficientSlots {
            slot_count,
            n: cfg.n,
        });
    }
    let excess = slot_count - cfg.n;
    let (privileged, extra) = allocate_privileged(cfg, excess, rng);
    let reserved: usize = extra.iter().sum();
    let mut allocations: Vec<usize> = extra.iter().map(|e| e + 1).collect();
    let open: Vec<usize> = (0..cfg.n).collect();
    fill_capped(&mut allocations, open, slot_count - reserved - cfg.n, cfg.m, rng);
    Ok(SlotPlan {
        widths,
        slot_count,
        excess,
        allocations,
        privileged,
    })
}

/// Places each variable into as many distinct clauses as it has slots.
///
/// Variables go in decreasing allocation order (ties in random order). Each
/// variable draws its clauses without replacement, with each clause weighted
/// by its current number of empty slots. Returns per-clause variable lists.
pub fn assign_to_clauses(plan: &SlotPlan, rng: &mut Rng) -> Result<Vec<Vec<u32>>, GeneratorError> {
    let m = plan.widths.len();
    let mut free = plan.widths.clone();
    let mut members: Vec<Vec<u32>> = plan.widths.iter().map(|&w| Vec::with_capacity(w)).collect();

    let mut order: Vec<usize> = (0..plan.allocations.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| plan.allocations[b].cmp(&plan.allocations[a]));

    let mut open: Vec<usize> = (0..m).filter(|&c| free[c] > 0).collect();
    let mut picked: Vec<usize> = Vec::new();
    for v in order {
        let need = plan.allocations[v];
        if need > open.len() {
            return Err(GeneratorError::AssignmentStuck {
                variable: v as u32 + 1,
                needed: need,
                available: open.len(),
            });
        }
        // Weighted draws without replacement from the open clauses.
        let mut candidates = open.clone();
        let mut mass: usize = candidates.iter().map(|&c| free[c]).sum();
        picked.clear();
        for _ in 0..need {
            let mut u = rng.gen_range(0..mass);
            let mut pos = 0;
            while u >= free[candidates[pos]] {
                u -= free[candidates[pos]];
                pos += 1;
            }
            let c = candidates.swap_remove(pos);
            mass -= free[c];
            picked.push(c);
        }
        for &c in &picked {
            free[c] -= 1;
            members[c].push(v as u32 + 1);
        }
        open.retain(|&c| free[c] > 0);
    }
    debug_assert!(free.iter().all(|&f| f == 0));
    Ok(members)
}

/// Places each variable into the clauses with the most empty slots, ties in
/// random order. This succeeds whenever some placement exists, so it backs up
/// the weighted draws when they paint themselves into a corner.
pub fn assign_to_clauses_greedy(plan: &SlotPlan, rng: &mut Rng) -> Result<Vec<Vec<u32>>, GeneratorError> {
    let mut free = plan.widths.clone();
    let mut members: Vec<Vec<u32>> = plan.widths.iter().map(|&w| Vec::with_capacity(w)).collect();
    let mut order: Vec<usize> = (0..plan.allocations.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| plan.allocations[b].cmp(&plan.allocations[a]));
    let mut clauses: Vec<usize> = (0..free.len()).collect();
    for v in order {
        let need = plan.allocations[v];
        clauses.shuffle(rng);
        clauses.sort_by(|&a, &b| free[b].cmp(&free[a]));
        let available = clauses.iter().take_while(|&&c| free[c] > 0).count();
        if need > available {
            return Err(GeneratorError::AssignmentStuck {
                variable: v as u32 + 1,
                needed: need,
                available,
            });
        }
        for &c in &clauses[..need] {
            free[c] -= 1;
            members[c].push(v as u32 + 1);
        }
    }
    Ok(members)
}

/// Draws literal signs: one fair coin per occurrence, except that each
/// privileged variable gets a single coin shared by all its occurrences.
pub fn randomize_signs(
    n: usize,
    memberships: &[Vec<u32>],
    privileged: &BTreeSet<u32>,
    rng: &mut Rng,
) -> DnfFormula {
    let shared: Vec<(u32, bool)> = privileged.iter().map(|&v| (v, rng.gen_bool(0.5))).collect();
    let sign_of = |v: u32| shared.binary_search_by_key(&v, |&(p, _)| p).ok().map(|i| shared[i].1);
    let clauses = memberships
        .iter()
        .map(|vars| {
            let lits = vars
                .iter()
                .map(|&v| {
                    let positive = sign_of(v).unwrap_or_else(|| rng.gen_bool(0.5));
                    Literal::new(VariableId::new(v).expect("variables are 1-based"), positive)
                })
                .collect();
            Clause::new(lits).expect("memberships hold distinct variables")
        })
        .collect();
    DnfFormula::new(n, clauses).expect("memberships reference variables in range")
}

/// Formula plus the plan that produced it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub formula: DnfFormula,
    pub plan: SlotPlan,
    pub attempts: usize,
}

pub fn generate_formula(cfg: &GeneratorConfig) -> Result<DnfFormula, GeneratorError> {
    generate_with_plan(cfg).map(|g| g.formula)
}

pub fn generate_with_plan(cfg: &GeneratorConfig) -> Result<Generated, GeneratorError> {
    cfg.validate()?;
    let mut rng = rng::rng_from_seed(cfg.seed);
    let attempts = cfg.max_retries.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let result = match cfg.mode {
            GeneratorMode::SlotPlanned => try_generate(cfg, &mut rng),
            GeneratorMode::Uniform => Ok(generate_uniform(cfg, &mut rng)),
        };
        match result {
            Ok((formula, plan)) => {
                return Ok(Generated {
                    formula,
                    plan,
                    attempts: attempt,
                })
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(GeneratorError::RetryExhausted { attempts, last })
}

fn try_generate(
    cfg: &GeneratorConfig,
    rng: &mut Rng,
) -> Result<(DnfFormula, SlotPlan), GeneratorError> {
    let widths = try_sample_widths(cfg, rng)?;
    let plan = plan_slots(cfg, widths, rng)?;
    let members = match assign_to_clauses(&plan, rng) {
        Ok(members) => members,
        Err(GeneratorError::AssignmentStuck { .. }) => assign_to_clauses_greedy(&plan, rng)?,
        Err(e) => return Err(e),
    };
    let formula = randomize_signs(cfg.n, &members, &plan.privileged, rng);
    Ok((formula, plan))
}

fn generate_uniform(cfg: &GeneratorConfig, rng: &mut Rng) -> (DnfFormula, SlotPlan) {
    let widths: Vec<usize> = (0..cfg.m)
        .map(|_| rng.gen_range(cfg.min_width..=cfg.max_width))
        .collect();
    let mut allocations = vec![0; cfg.n];
    let members: Vec<Vec<u32>> = widths
        .iter()
        .map(|&w| {
            rand::seq::index::sample(rng, cfg.n, w)
                .into_iter()
                .map(|i| {
                    allocations[i] += 1;
                    i as u32 + 1
                })
                .collect()
        })
        .collect();
    let formula = randomize_signs(cfg.n, &members, &BTreeSet::new(), rng);
    let slot_count = widths.iter().sum();
    let plan = SlotPlan {
        widths,
        slot_count,
        excess: slot_count.saturating_sub(cfg.n),
        allocations,
        privileged: BTreeSet::new(),
    };
    (formula, plan)
}

/// Each probability drawn uniformly from [0, 1).
pub fn sample_base_distribution(n: usize, rng: &mut Rng) -> WeightAssignment {
    WeightAssignment::new((0..n).map(|_| rng.gen::<f64>()).collect())
        .expect("uniform draws lie in [0, 1)")
}

/// The three shifted copies (p + k/4) mod 1 for k = 1, 2, 3.
pub fn quarter_increments(weights: &WeightAssignment) -> [WeightAssignment; 3] {
    [1.0, 2.0, 3.0].map(|k| {
        let probs = weights
            .probs()
            .iter()
            .map(|&p| (p + 0.25 * k).rem_euclid(1.0))
            .collect();
        WeightAssignment::new(probs).expect("shifted probabilities stay in [0, 1)")
    })
}

/// The base distribution followed by its three quarter increments.
pub fn four_distributions(n: usize, rng: &mut Rng) -> [WeightAssignment; 4] {
    let base = sample_base_distribution(n, rng);
    let [a, b, c] = quarter_increments(&base);
    [base, a, b, c]
}

/// Rounds `x` up to the next multiple of `step`.
fn ceil_to_multiple(x: f64, step: f64) -> f64 {
    let k = (x / step - 1e-9).ceil();
    k * step
}

/// Samples (q, r) for experiment datasets.
///
/// With probability ½ there are no privileged variables. Otherwise
/// q = Exp(1) mod (ln n / n), rounded up to a positive multiple of 1/n, and r
/// is the largest value on a 0.01 grid for which a one-sided Chebyshev bound
/// puts the chance of a privileged variable needing more than m clauses at
/// most ½. The expected excess uses the mean of the width bounds.
pub fn sample_experiment_q_r(
    n: usize,
    m: usize,
    min_width: usize,
    max_width: usize,
    rng: &mut Rng,
) -> (f64, f64) {
    if rng.gen_bool(0.5) {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let exp_draw = -(1.0 - rng.gen::<f64>()).ln();
    let modulus = nf.ln() / nf;
    let q = if modulus > 0.0 {
        ceil_to_multiple(exp_draw % modulus, 1.0 / nf)
    } else {
        0.0
    };
    let q = q.max(1.0 / nf).min(1.0);
    let mean_width = 0.5 * (min_width + max_width) as f64;
    let excess = (m as f64 * mean_width - nf).max(0.0);
    (q, chebyshev_r(n, m, q, excess))
}

/// Largest r ∈ {0, 0.01, …, 1} with μ_a < m and σ²/(σ² + (m − μ_a)²) ≤ ½,
/// where μ_a and σ² describe a privileged variable's allocation.
pub fn chebyshev_r(n: usize, m: usize, q: f64, excess: f64) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let privileged = q * nf;
    if privileged <= 0.0 {
        return 0.0;
    }
    let mut best = 0.0;
    for step in 0..=100 {
        let r = step as f64 / 100.0;
        let mean = 1.0 + r * excess / privileged + (1.0 - r) * excess / nf;
        let var = r * excess * (1.0 / privileged) * (1.0 - 1.0 / privileged);
        if mean >= mf {
            continue;
        }
        let gap = mf - mean;
        if var / (var + gap * gap) <= 0.5 {
            best = r;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_widths() {
        let cfg = GeneratorConfig::fixed_width(4, 2, 3, 1);
        let mut rng = rng::rng_from_seed(0);
        assert_eq!(sample_widths(&cfg, &mut rng).unwrap(), vec![3, 3]);
    }

    #[test]
    fn insufficient_slots_exhaust_retries() {
        let cfg = GeneratorConfig::fixed_width(10, 2, 3, 1);
        let mut rng = rng::rng_from_seed(0);
        assert!(matches!(
            sample_widths(&cfg, &mut rng),
            Err(GeneratorError::RetryExhausted { attempts: 50, .. })
        ));
        assert!(matches!(
            generate_formula(&cfg),
            Err(GeneratorError::RetryExhausted { .. })
        ));
    }

    #[test]
    fn slot_allocation_examples() {
        let mut rng = rng::rng_from_seed(3);
        assert_eq!(allocate_slots(5, 5, &mut rng), vec![1; 5]);
        for _ in 0..50 {
            let a = allocate_slots(6, 4, &mut rng);
            assert_eq!(a.iter().sum::<usize>(), 6);
            assert!(a.iter().all(|&x| x >= 1));
        }
        let draws = 1000;
        let mut total = 0usize;
        for _ in 0..draws {
            total += allocate_slots(100, 10, &mut rng)[0];
        }
        let mean = total as f64 / draws as f64;
        assert!((mean - 10.0).abs() <= 0.5, "{mean}");
    }

    fn privileged_mean(q: f64, r: f64, n: usize, e: usize) -> f64 {
        let cfg = GeneratorConfig {
            n,
            m: 1000,
            min_width: 1,
            max_width: 1,
            q,
            r,
            seed: 0,
            max_retries: 1,
            mode: GeneratorMode::SlotPlanned,
        };
        let mut rng = rng::rng_from_seed(11);
        let trials = 4000;
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..trials {
            let plan = plan_slots(&cfg, vec![1; n + e], &mut rng).unwrap();
            for &v in &plan.privileged {
                sum += plan.allocations[v as usize - 1] as f64;
                count += 1;
            }
        }
        sum / count as f64
    }

    #[test]
    fn privileged_allocation_matches_expectation() {
        // 1 + e(q(1−r) + r)/(q·n) with e=10, q=0.1, n=100, r=0.5 gives 1.55.
        let got = privileged_mean(0.1, 0.5, 100, 10);
        assert!((got - 1.55).abs() < 0.03, "{got}");
        // r = 0: 1 + e/n.
        let got = privileged_mean(0.1, 0.0, 100, 10);
        assert!((got - 1.1).abs() < 0.03, "{got}");
        // r = 1 with a single privileged variable: 1 + e.
        let got = privileged_mean(0.01, 1.0, 100, 10);
        assert!((got - 11.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn full_allocation_appears_in_every_clause() {
        let plan = SlotPlan {
            widths: vec![2, 2, 2],
            slot_count: 6,
            excess: 2,
            allocations: vec![3, 1, 1, 1],
            privileged: BTreeSet::new(),
        };
        let mut rng = rng::rng_from_seed(5);
        let members = assign_to_clauses(&plan, &mut rng).unwrap();
        assert!(members.iter().all(|c| c.contains(&1)));
    }

    #[test]
    fn assignment_respects_widths() {
        let plan = SlotPlan {
            widths: vec![3, 3],
            slot_count: 6,
            excess: 2,
            allocations: vec![2, 2, 1, 1],
            privileged: BTreeSet::new(),
        };
        for seed in 0..20 {
            let mut rng = rng::rng_from_seed(seed);
            let members = assign_to_clauses(&plan, &mut rng).unwrap();
            for c in &members {
                assert_eq!(c.len(), 3);
                let distinct: BTreeSet<_> = c.iter().collect();
                assert_eq!(distinct.len(), 3);
            }
        }
    }

    #[test]
    fn stuck_assignment_is_reported() {
        let plan = SlotPlan {
            widths: vec![1, 1],
            slot_count: 2,
            excess: 1,
            allocations: vec![2, 0],
            privileged: BTreeSet::new(),
        };
        let mut rng = rng::rng_from_seed(0);
        // Variable 1 fits; craft a case where it cannot.
        assert!(assign_to_clauses(&plan, &mut rng).is_ok());
        let plan = SlotPlan {
            allocations: vec![3, 0],
            widths: vec![2, 1],
            ..plan
        };
        assert!(matches!(
            assign_to_clauses(&plan, &mut rng),
            Err(GeneratorError::AssignmentStuck { variable: 1, needed: 3, available: 2 })
        ));
    }

    #[test]
    fn greedy_placement_rescues_feasible_plans() {
        let plan = SlotPlan {
            widths: vec![2, 2, 1, 1],
            slot_count: 6,
            excess: 3,
            allocations: vec![2, 2, 2],
            privileged: BTreeSet::new(),
        };
        let weighted_failures = (0..50)
            .filter(|&s| assign_to_clauses(&plan, &mut rng::rng_from_seed(s)).is_err())
            .count();
        assert!(weighted_failures > 0);
        for seed in 0..50 {
            let members = assign_to_clauses_greedy(&plan, &mut rng::rng_from_seed(seed)).unwrap();
            for (c, vars) in members.iter().enumerate() {
                assert_eq!(vars.len(), plan.widths[c]);
                assert_eq!(vars.iter().collect::<BTreeSet<_>>().len(), vars.len());
            }
        }
        let infeasible = SlotPlan {
            widths: vec![3, 3],
            allocations: vec![3, 3],
            ..plan
        };
        assert!(assign_to_clauses_greedy(&infeasible, &mut rng::rng_from_seed(0)).is_err());
    }

    #[test]
    fn privileged_signs_are_unanimous() {
        let members = vec![vec![1, 2], vec![1, 3], vec![1, 2], vec![1, 3], vec![1, 4]];
        let privileged: BTreeSet<u32> = [1].into();
        for seed in 0..20 {
            let mut rng = rng::rng_from_seed(seed);
            let f = randomize_signs(4, &members, &privileged, &mut rng);
            let signs: BTreeSet<bool> = f
                .clauses()
                .iter()
                .flat_map(|c| c.literals())
                .filter(|l| l.variable.index() == 1)
                .map(|l| l.positive)
                .collect();
            assert_eq!(signs.len(), 1);
        }
    }

    #[test]
    fn unprivileged_signs_are_fair_and_independent() {
        let members: Vec<Vec<u32>> = (0..5000).map(|_| vec![1, 2]).collect();
        let mut rng = rng::rng_from_seed(9);
        let f = randomize_signs(2, &members, &BTreeSet::new(), &mut rng);
        let mut pos = 0usize;
        let mut table = [[0usize; 2]; 2];
        for c in f.clauses() {
            let l = c.literals();
            pos += usize::from(l[0].positive) + usize::from(l[1].positive);
            table[usize::from(l[0].positive)][usize::from(l[1].positive)] += 1;
        }
        let frac = pos as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.03, "{frac}");
        // Chi-square test of independence for the 2×2 sign table, 1 dof.
        let total = 5000.0;
        let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let expected = rows[i] as f64 * cols[j] as f64 / total;
                chi2 += (table[i][j] as f64 - expected).powi(2) / expected;
            }
        }
        // 99.9% critical value for one degree of freedom.
        assert!(chi2 < 10.83, "{chi2}");
    }

    #[test]
    fn generation_is_deterministic_and_complete() {
        let cfg = GeneratorConfig::fixed_width(50, 25, 5, 7);
        let a = generate_formula(&cfg).unwrap();
        let b = generate_formula(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_clauses(), 25);
        let mut seen = [false; 50];
        for c in a.clauses() {
            assert_eq!(c.width(), 5);
            for l in c.literals() {
                seen[l.variable.offset()] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn base_distribution_properties() {
        let mut a = rng::rng_from_seed(4);
        let mut b = rng::rng_from_seed(4);
        let w = sample_base_distribution(10_000, &mut a);
        assert_eq!(w, sample_base_distribution(10_000, &mut b));
        assert!(w.probs().iter().all(|&p| (0.0..1.0).contains(&p)));
        let mean = w.probs().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() <= 0.02, "{mean}");
    }

    #[test]
    fn quarter_increment_examples() {
        let w = WeightAssignment::new(vec![0.1, 0.9, 0.75]).unwrap();
        let [a, b, c] = quarter_increments(&w);
        let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
        assert!(close(a.probs()[0], 0.35) && close(b.probs()[0], 0.6) && close(c.probs()[0], 0.85));
        assert!(close(a.probs()[1], 0.15) && close(b.probs()[1], 0.4) && close(c.probs()[1], 0.65));
        assert_eq!(a.probs()[2], 0.0);
    }

    #[test]
    fn experiment_q_r_rule() {
        let mut rng = rng::rng_from_seed(21);
        let draws = 10_000;
        let mut zero = 0;
        for _ in 0..draws {
            let (q, r) = sample_experiment_q_r(100, 75, 5, 5, &mut rng);
            if q == 0.0 {
                assert_eq!(r, 0.0);
                zero += 1;
                continue;
            }
            let k = q * 100.0;
            assert!((k - k.round()).abs() < 1e-9 && k.round() >= 1.0, "{q}");
            assert!(q <= 0.05 + 1e-12, "{q}");
            assert!((0.0..=1.0).contains(&r));
        }
        let freq = zero as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.03, "{freq}");
    }

    #[test]
    fn chebyshev_rule_keeps_mean_below_m() {
        // n=50, m=25, w=5: e = 75. One privileged variable.
        let r = chebyshev_r(50, 25, 0.02, 75.0);
        let mean = 1.0 + r * 75.0 + (1.0 - r) * 75.0 / 50.0;
        assert!(mean < 25.0);
        let next = ((r * 100.0).round() + 1.0) / 100.0;
        let mean_next = 1.0 + next * 75.0 + (1.0 - next) * 75.0 / 50.0;
        assert!(next > 1.0 || mean_next >= 25.0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = GeneratorConfig::fixed_width(10, 5, 3, 0);
        cfg.min_width = 4;
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig::fixed_width(10, 5, 3, 0).with_privileged(0.01, 0.5);
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig::fixed_width(10, 5, 11, 0);
        assert!(cfg.validate().is_err());
    }
}
