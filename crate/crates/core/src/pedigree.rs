//! Multi-generation synthetic populations under a liability threshold model.
//!
//! Each individual carries a heritable liability component, fixed age/sex
//! effects and private noise; disease status is assigned by thresholding the
//! per-generation standardized total liability at the quantile matching the
//! configured prevalence.
//!
//! RNG streams are derived per individual from the root seed (see
//! [`crate::rng`]), so generating children in parallel would produce the same
//! population as the sequential loop used here.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// How the parental-average constant `c` is chosen in
/// `l_herr = c * (alpha1 * mother + alpha2 * father)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilizerMode {
    /// c = 1 / (alpha1^2 + alpha2).
    PaperLiteral,
    /// c = 1 / sqrt(alpha1^2 + alpha2^2), which keeps Var(l_herr) at h^2
    /// for independent parents.
    VariancePreserving,
}

impl StabilizerMode {
    pub fn constant(&self, alpha1: f64, alpha2: f64) -> f64 {
        match self {
            StabilizerMode::PaperLiteral => 1.0 / (alpha1 * alpha1 + alpha2),
            StabilizerMode::VariancePreserving => {
                1.0 / (alpha1 * alpha1 + alpha2 * alpha2).sqrt()
            }
        }
    }
}

pub const SEX_FEMALE: u8 = 0;
pub const SEX_MALE: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    /// Heritable liability variance h^2.
    pub h2: f64,
    /// Noise liability variance e^2.
    pub e2: f64,
    pub beta_age: f64,
    pub beta_sex: f64,
    /// Maternal contribution weight; alpha1 + alpha2 = 1.
    pub alpha1: f64,
    pub alpha2: f64,
    /// Disease prevalence k in (0, 1).
    pub prevalence_k: f64,
    pub n_generations: usize,
    /// Individuals per generation; length must equal `n_generations`.
    pub gen_sizes: Vec<usize>,
    pub stabilizer_mode: StabilizerMode,
    /// Length of the simulated observation window; onset years for cases are
    /// drawn uniformly from it.
    pub observation_years: u32,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            h2: 0.5,
            e2: 0.5,
            beta_age: 0.25,
            beta_sex: 0.25,
            alpha1: 0.5,
            alpha2: 0.5,
            prevalence_k: 0.05,
            n_generations: 3,
            gen_sizes: vec![1000, 1000, 1000],
            stabilizer_mode: StabilizerMode::VariancePreserving,
            observation_years: 10,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.h2 < 0.0 || self.e2 < 0.0 {
            return Err(Error::Param(format!(
                "variances must be non-negative: h2={}, e2={}",
                self.h2, self.e2
            )));
        }
        if (self.alpha1 + self.alpha2 - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!(
                "alpha1 + alpha2 must equal 1, got {} + {}",
                self.alpha1, self.alpha2
            )));
        }
        if !(self.prevalence_k > 0.0 && self.prevalence_k < 1.0) {
            return Err(Error::Param(format!(
                "prevalence must be in (0,1), got {}",
                self.prevalence_k
            )));
        }
        if self.n_generations < 1 {
            return Err(Error::Param("need at least one generation".into()));
        }
        if self.gen_sizes.len() != self.n_generations {
            return Err(Error::Param(format!(
                "gen_sizes has {} entries for {} generations",
                self.gen_sizes.len(),
                self.n_generations
            )));
        }
        if self.gen_sizes.iter().any(|&n| n < 2) {
            return Err(Error::Param("each generation needs at least 2 individuals".into()));
        }
        if self.observation_years < 1 {
            return Err(Error::Param("observation window must be at least 1 year".into()));
        }
        Ok(())
    }

    pub fn stabilizer_constant(&self) -> f64 {
        self.stabilizer_mode.constant(self.alpha1, self.alpha2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub generation: u32,
    pub mother_id: Option<u64>,
    pub father_id: Option<u64>,
    /// 0 = female, 1 = male.
    pub sex: u8,
    /// Normalized to [0, 1].
    pub age: f64,
    pub l_herr: f64,
    pub epsilon: f64,
    pub l_total: f64,
    pub case_status: bool,
    pub onset_year: Option<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct Population {
    pub individuals: Vec<Individual>,
    /// Indices into `individuals`, one list per generation.
    pub generations: Vec<Vec<usize>>,
    index: HashMap<u64, usize>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Individual> {
        self.index.get(&id).map(|&i| &self.individuals[i])
    }

    pub fn idx_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn push(&mut self, ind: Individual) {
        let gen = ind.generation as usize;
        while self.generations.len() <= gen {
            self.generations.push(Vec::new());
        }
        self.index.insert(ind.id, self.individuals.len());
        self.generations[gen].push(self.individuals.len());
        self.individuals.push(ind);
    }

    /// Rebuild the id index and generation lists, e.g. after deserializing.
    pub fn from_individuals(individuals: Vec<Individual>) -> Self {
        let mut pop = Population::default();
        for ind in individuals {
            pop.push(ind);
        }
        pop
    }

    /// Ids of the parents of `id` (present parents only).
    pub fn parent_ids(&self, id: u64) -> Vec<u64> {
        match self.get(id) {
            Some(ind) => [ind.mother_id, ind.father_id].into_iter().flatten().collect(),
            None => Vec::new(),
        }
    }

    fn ancestor_set(&self, id: u64, depth: usize) -> HashSet<u64> {
        let mut out = HashSet::new();
        let mut frontier = vec![id];
        for _ in 0..depth {
            let mut next = Vec::new();
            for f in frontier {
                for p in self.parent_ids(f) {
                    if out.insert(p) {
                        next.push(p);
                    }
                }
            }
            frontier = next;
        }
        out
    }
}

fn sample_normal<R: Rng>(rng: &mut R, variance: f64) -> f64 {
    if variance == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, variance.sqrt()).unwrap().sample(rng)
}

fn total_liability(params: &SimParams, l_herr: f64, age: f64, sex: u8, epsilon: f64) -> f64 {
    l_herr + params.beta_age * age + params.beta_sex * sex as f64 + epsilon
}

/// Generate `n` founder individuals (generation 0).
pub fn generate_ancestry(params: &SimParams, n: usize) -> Result<Population> {
    params.validate()?;
    if n < 2 {
        return Err(Error::Param(format!("ancestry generation needs n >= 2, got {n}")));
    }
    let mut pop = Population::default();
    for i in 0..n {
        let mut rng = stream(params.seed, &["pedigree", "gen", "0", "child", &i.to_string()]);
        let l_herr = sample_normal(&mut rng, params.h2);
        let epsilon = sample_normal(&mut rng, params.e2);
        let sex = if rng.gen::<f64>() < 0.5 { SEX_FEMALE } else { SEX_MALE };
        let age: f64 = rng.gen();
        pop.push(Individual {
            id: i as u64,
            generation: 0,
            mother_id: None,
            father_id: None,
            sex,
            age,
            l_herr,
            epsilon,
            l_total: total_liability(params, l_herr, age, sex, epsilon),
            case_status: false,
            onset_year: None,
        });
    }
    Ok(pop)
}

const MATING_RETRIES: usize = 100;

/// Mating legality: opposite sexes, distinct individuals, and the pair shares
/// no parent or grandparent.
pub fn pair_is_legal(pop: &Population, mother: &Individual, father: &Individual) -> bool {
    if mother.id == father.id || mother.sex != SEX_FEMALE || father.sex != SEX_MALE {
        return false;
    }
    let pm: HashSet<u64> = pop.parent_ids(mother.id).into_iter().collect();
    let pf: HashSet<u64> = pop.parent_ids(father.id).into_iter().collect();
    if !pm.is_disjoint(&pf) {
        return false;
    }
    let gm = pop.ancestor_set(mother.id, 2);
    let gf = pop.ancestor_set(father.id, 2);
    // grandparent overlap includes the parent sets; checking the depth-2
    // ancestor sets covers both constraints
    gm.is_disjoint(&gf)
}

/// Extend the population with `n` children of randomly mated pairs from the
/// newest generation.
pub fn generate_generation(pop: &mut Population, params: &SimParams, n: usize) -> Result<()> {
    params.validate()?;
    let gen = pop.generations.len();
    if gen == 0 {
        return Err(Error::Simulation("no ancestry generation present".into()));
    }
    let prev = &pop.generations[gen - 1];
    let mothers: Vec<usize> = prev
        .iter()
        .copied()
        .filter(|&i| pop.individuals[i].sex == SEX_FEMALE)
        .collect();
    let fathers: Vec<usize> = prev
        .iter()
        .copied()
        .filter(|&i| pop.individuals[i].sex == SEX_MALE)
        .collect();
    if mothers.is_empty() || fathers.is_empty() {
        return Err(Error::Simulation(format!(
            "generation {} has no eligible {}",
            gen - 1,
            if mothers.is_empty() { "females" } else { "males" }
        )));
    }
    let c = params.stabilizer_constant();
    let next_id = pop.individuals.iter().map(|i| i.id + 1).max().unwrap_or(0);
    for j in 0..n {
        let mut rng = stream(
            params.seed,
            &["pedigree", "gen", &gen.to_string(), "child", &j.to_string()],
        );
        let mut chosen = None;
        for _ in 0..MATING_RETRIES {
            let mi = mothers[rng.gen_range(0..mothers.len())];
            let fi = fathers[rng.gen_range(0..fathers.len())];
            if pair_is_legal(pop, &pop.individuals[mi], &pop.individuals[fi]) {
                chosen = Some((mi, fi));
                break;
            }
        }
        let (mi, fi) = chosen.ok_or_else(|| {
            Error::Simulation(format!(
                "no legal mating pair found for generation {gen} after {MATING_RETRIES} attempts"
            ))
        })?;
        let (mother, father) = (&pop.individuals[mi], &pop.individuals[fi]);
        let l_herr = c * (params.alpha1 * mother.l_herr + params.alpha2 * father.l_herr);
        let (mother_id, father_id) = (mother.id, father.id);
        let epsilon = sample_normal(&mut rng, params.e2);
        let sex = if rng.gen::<f64>() < 0.5 { SEX_FEMALE } else { SEX_MALE };
        let age: f64 = rng.gen();
        pop.push(Individual {
            id: next_id + j as u64,
            generation: gen as u32,
            mother_id: Some(mother_id),
            father_id: Some(father_id),
            sex,
            age,
            l_herr,
            epsilon,
            l_total: total_liability(params, l_herr, age, sex, epsilon),
            case_status: false,
            onset_year: None,
        });
    }
    Ok(())
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9 over the full open interval).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile must be in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Complementary error function (Numerical Recipes rational approximation,
/// |error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standardize liabilities per generation and threshold at the (1-k) quantile,
/// so the high-liability tail of expected mass k becomes the cases. Cases get
/// an onset year drawn uniformly from the observation window.
pub fn assign_phenotypes(pop: &mut Population, params: &SimParams) -> Result<()> {
    params.validate()?;
    let threshold = inverse_normal_cdf(1.0 - params.prevalence_k);
    for gen in 0..pop.generations.len() {
        let idxs = pop.generations[gen].clone();
        let n = idxs.len();
        let mean: f64 = idxs.iter().map(|&i| pop.individuals[i].l_total).sum::<f64>() / n as f64;
        let var: f64 = idxs
            .iter()
            .map(|&i| {
                let d = pop.individuals[i].l_total - mean;
                d * d
            })
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        if var <= 1e-12 {
            return Err(Error::Simulation(format!(
                "degenerate liability variance in generation {gen}"
            )));
        }
        let sd = var.sqrt();
        for &i in &idxs {
            let z = (pop.individuals[i].l_total - mean) / sd;
            let case = z >= threshold;
            pop.individuals[i].case_status = case;
            pop.individuals[i].onset_year = if case {
                let id = pop.individuals[i].id;
                let mut rng = stream(params.seed, &["onset", &id.to_string()]);
                Some(rng.gen_range(0..params.observation_years))
            } else {
                None
            };
        }
    }
    Ok(())
}

/// Full simulation: ancestry, descendant generations, phenotypes.
pub fn simulate_population(params: &SimParams) -> Result<Population> {
    params.validate()?;
    let mut pop = generate_ancestry(params, params.gen_sizes[0])?;
    for g in 1..params.n_generations {
        generate_generation(&mut pop, params, params.gen_sizes[g])?;
    }
    assign_phenotypes(&mut pop, params)?;
    Ok(pop)
}

/// Content of one longitudinal feature channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChannelSpec {
    /// The phenotype's diagnosis track: 1 at and after the onset year for
    /// cases, all zeros for controls.
    Diagnosis,
    /// Independent Bernoulli noise per year.
    Noise { rate: f64 },
    /// Constant track equal to the individual's own case status, flipped with
    /// the given probability (a correlated comorbidity channel).
    StatusCorrelated { flip_prob: f64 },
    /// Constant track copied from a parent's case status (planted family
    /// signal); zero for founders.
    ParentStatus { mother: bool },
}

/// Per-individual binary feature tracks, aligned with the population's
/// individual order. Each track is feature-major: entry `f * n_years + t`.
#[derive(Debug, Clone)]
pub struct LongitudinalData {
    pub n_years: usize,
    pub n_features: usize,
    pub tracks: Vec<Vec<u8>>,
}

impl LongitudinalData {
    pub fn track(&self, idx: usize) -> &[u8] {
        &self.tracks[idx]
    }

    pub fn value(&self, idx: usize, feature: usize, year: usize) -> u8 {
        self.tracks[idx][feature * self.n_years + year]
    }
}

/// Build binary yearly feature tracks for every individual. Channel 0 is
/// conventionally [`ChannelSpec::Diagnosis`] but any layout is accepted.
pub fn synthesize_longitudinal(
    pop: &Population,
    n_years: usize,
    channels: &[ChannelSpec],
    seed: u64,
) -> Result<LongitudinalData> {
    if n_years < 1 {
        return Err(Error::Param("n_years must be at least 1".into()));
    }
    if channels.is_empty() {
        return Err(Error::Param("need at least one feature channel".into()));
    }
    let n_features = channels.len();
    let mut tracks = Vec::with_capacity(pop.len());
    for ind in &pop.individuals {
        let mut rng = stream(seed, &["long", &ind.id.to_string()]);
        let mut track = vec![0u8; n_features * n_years];
        for (f, spec) in channels.iter().enumerate() {
            let row = &mut track[f * n_years..(f + 1) * n_years];
            match spec {
                ChannelSpec::Diagnosis => {
                    if let Some(onset) = ind.onset_year {
                        for (t, v) in row.iter_mut().enumerate() {
                            if t as u32 >= onset {
                                *v = 1;
                            }
                        }
                    }
                }
                ChannelSpec::Noise { rate } => {
                    for v in row.iter_mut() {
                        if rng.gen::<f64>() < *rate {
                            *v = 1;
                        }
                    }
                }
                ChannelSpec::StatusCorrelated { flip_prob } => {
                    let mut bit = ind.case_status as u8;
                    if rng.gen::<f64>() < *flip_prob {
                        bit = 1 - bit;
                    }
                    row.iter_mut().for_each(|v| *v = bit);
                }
                ChannelSpec::ParentStatus { mother } => {
                    let pid = if *mother { ind.mother_id } else { ind.father_id };
                    let bit = pid
                        .and_then(|p| pop.get(p))
                        .map(|p| p.case_status as u8)
                        .unwrap_or(0);
                    row.iter_mut().for_each(|v| *v = bit);
                }
            }
        }
        tracks.push(track);
    }
    Ok(LongitudinalData {
        n_years,
        n_features,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(h2: f64, e2: f64, seed: u64) -> SimParams {
        SimParams {
            h2,
            e2,
            seed,
            ..SimParams::default()
        }
    }

    fn sample_var(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn zero_h2_gives_zero_heritable_liability() {
        let p = params(0.0, 1.0, 1);
        let pop = generate_ancestry(&p, 100).unwrap();
        assert!(pop.individuals.iter().all(|i| i.l_herr == 0.0));
    }

    #[test]
    fn same_seed_same_population() {
        let p = params(0.5, 0.5, 42);
        let a = simulate_population(&p).unwrap();
        let b = simulate_population(&p).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.individuals.iter().zip(&b.individuals) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.l_herr.to_bits(), y.l_herr.to_bits());
            assert_eq!(x.l_total.to_bits(), y.l_total.to_bits());
            assert_eq!(x.case_status, y.case_status);
            assert_eq!(x.onset_year, y.onset_year);
        }
    }

    #[test]
    fn ancestry_variance_matches_h2() {
        let p = SimParams {
            gen_sizes: vec![100_000],
            n_generations: 1,
            ..params(0.7, 0.3, 7)
        };
        let pop = generate_ancestry(&p, 100_000).unwrap();
        let v = sample_var(&pop.individuals.iter().map(|i| i.l_herr).collect::<Vec<_>>());
        assert!((0.66..=0.74).contains(&v), "sample variance {v}");
    }

    #[test]
    fn stabilizer_constants() {
        assert_relative_eq!(
            StabilizerMode::PaperLiteral.constant(0.5, 0.5),
            4.0 / 3.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            StabilizerMode::VariancePreserving.constant(0.5, 0.5),
            std::f64::consts::SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn child_of_zero_liability_parents_is_zero() {
        for mode in [StabilizerMode::PaperLiteral, StabilizerMode::VariancePreserving] {
            let p = SimParams {
                h2: 0.0,
                stabilizer_mode: mode,
                gen_sizes: vec![50, 50],
                n_generations: 2,
                ..params(0.0, 1.0, 3)
            };
            let pop = simulate_population(&p).unwrap();
            for ind in &pop.individuals {
                assert_eq!(ind.l_herr, 0.0);
            }
        }
    }

    #[test]
    fn descendant_variance_preserved() {
        let p = SimParams {
            gen_sizes: vec![60_000, 60_000, 60_000],
            n_generations: 3,
            ..params(0.7, 0.3, 11)
        };
        let pop = simulate_population(&p).unwrap();
        for gen in 0..3 {
            let vals: Vec<f64> = pop.generations[gen]
                .iter()
                .map(|&i| pop.individuals[i].l_herr)
                .collect();
            let v = sample_var(&vals);
            assert!(
                (v - 0.7).abs() <= 0.07,
                "generation {gen} variance {v} not within 10% of 0.7"
            );
        }
    }

    #[test]
    fn paper_literal_shrinks_variance() {
        let p = SimParams {
            gen_sizes: vec![60_000, 60_000],
            n_generations: 2,
            stabilizer_mode: StabilizerMode::PaperLiteral,
            ..params(0.7, 0.3, 13)
        };
        let pop = simulate_population(&p).unwrap();
        let vals: Vec<f64> = pop.generations[1]
            .iter()
            .map(|&i| pop.individuals[i].l_herr)
            .collect();
        let v = sample_var(&vals);
        // c = 4/3 on the parental mean halves the variance then scales by 16/9
        let expected = 0.7 * (16.0 / 9.0) * 0.5;
        assert!((v - expected).abs() < 0.05, "variance {v}, expected {expected}");
    }

    #[test]
    fn mating_constraints_hold_exhaustively() {
        let p = SimParams {
            gen_sizes: vec![60, 60, 60, 60],
            n_generations: 4,
            ..params(0.5, 0.5, 17)
        };
        let pop = simulate_population(&p).unwrap();
        for ind in &pop.individuals {
            let (Some(m), Some(f)) = (ind.mother_id, ind.father_id) else {
                assert_eq!(ind.generation, 0);
                continue;
            };
            let mother = pop.get(m).unwrap();
            let father = pop.get(f).unwrap();
            assert_eq!(mother.sex, SEX_FEMALE);
            assert_eq!(father.sex, SEX_MALE);
            assert_eq!(mother.generation + 1, ind.generation);
            assert_eq!(father.generation + 1, ind.generation);
            assert!(pair_is_legal(&pop, mother, father));
        }
    }

    #[test]
    fn prevalence_within_binomial_ci() {
        let p = SimParams {
            gen_sizes: vec![100_000],
            n_generations: 1,
            prevalence_k: 0.05,
            ..params(0.5, 0.5, 23)
        };
        let mut pop = generate_ancestry(&p, 100_000).unwrap();
        assign_phenotypes(&mut pop, &p).unwrap();
        let rate = pop.individuals.iter().filter(|i| i.case_status).count() as f64 / 100_000.0;
        assert!((0.045..=0.055).contains(&rate), "prevalence {rate}");
    }

    #[test]
    fn threshold_direction_puts_cases_in_high_tail() {
        let p = SimParams {
            gen_sizes: vec![10_000],
            n_generations: 1,
            prevalence_k: 0.05,
            ..params(0.5, 0.5, 29)
        };
        let mut pop = generate_ancestry(&p, 10_000).unwrap();
        assign_phenotypes(&mut pop, &p).unwrap();
        let min_case = pop
            .individuals
            .iter()
            .filter(|i| i.case_status)
            .map(|i| i.l_total)
            .fold(f64::INFINITY, f64::min);
        let max_control = pop
            .individuals
            .iter()
            .filter(|i| !i.case_status)
            .map(|i| i.l_total)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(min_case > max_control);
    }

    #[test]
    fn high_prevalence_limit_marks_nearly_everyone() {
        let p = SimParams {
            gen_sizes: vec![500],
            n_generations: 1,
            prevalence_k: 0.9999,
            ..params(0.5, 0.5, 31)
        };
        let mut pop = generate_ancestry(&p, 500).unwrap();
        assign_phenotypes(&mut pop, &p).unwrap();
        let rate = pop.individuals.iter().filter(|i| i.case_status).count() as f64 / 500.0;
        assert!(rate >= 0.99, "case rate {rate}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SimParams::default();
        p.alpha1 = 0.7; // alpha sum != 1
        assert!(generate_ancestry(&p, 10).is_err());
        let mut p = SimParams::default();
        p.prevalence_k = 0.0;
        assert!(p.validate().is_err());
        let mut p = SimParams::default();
        p.h2 = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn inverse_normal_cdf_known_quantiles() {
        assert_relative_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-9);
        assert_relative_eq!(inverse_normal_cdf(0.975), 1.959963984540054, epsilon = 1e-8);
        assert_relative_eq!(inverse_normal_cdf(0.05), -1.6448536269514722, epsilon = 1e-8);
        // round trip, tolerance limited by the erfc approximation
        for p in [0.001, 0.01, 0.2, 0.5, 0.8, 0.99, 0.999] {
            assert_relative_eq!(normal_cdf(inverse_normal_cdf(p)), p, epsilon = 1e-6);
        }
    }

    #[test]
    fn diagnosis_track_matches_onset() {
        let p = SimParams {
            gen_sizes: vec![2000],
            n_generations: 1,
            observation_years: 5,
            ..params(0.5, 0.5, 37)
        };
        let mut pop = generate_ancestry(&p, 2000).unwrap();
        assign_phenotypes(&mut pop, &p).unwrap();
        let long = synthesize_longitudinal(&pop, 5, &[ChannelSpec::Diagnosis], 1).unwrap();
        for (i, ind) in pop.individuals.iter().enumerate() {
            match ind.onset_year {
                None => assert!(long.track(i).iter().all(|&v| v == 0)),
                Some(onset) => {
                    for t in 0..5u32 {
                        let expect = (t >= onset) as u8;
                        assert_eq!(long.value(i, 0, t as usize), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn planted_parent_channel_matches_parent_status() {
        let p = SimParams {
            gen_sizes: vec![500, 500],
            n_generations: 2,
            ..params(0.5, 0.5, 41)
        };
        let pop = simulate_population(&p).unwrap();
        let long =
            synthesize_longitudinal(&pop, 3, &[ChannelSpec::ParentStatus { mother: true }], 2)
                .unwrap();
        let mut checked = 0;
        for (i, ind) in pop.individuals.iter().enumerate() {
            if let Some(m) = ind.mother_id {
                let status = pop.get(m).unwrap().case_status as u8;
                assert!(long.track(i).iter().all(|&v| v == status));
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn longitudinal_rejects_zero_years() {
        let p = params(0.5, 0.5, 1);
        let pop = generate_ancestry(&p, 10).unwrap();
        assert!(synthesize_longitudinal(&pop, 0, &[ChannelSpec::Diagnosis], 0).is_err());
    }

    #[test]
    fn parent_offspring_case_correlation_rises_with_h2() {
        let mut prev = -1.0;
        for &h2 in &[0.1, 0.3, 0.5, 0.7] {
            let mut corr_sum = 0.0;
            for seed in 0..5u64 {
                let p = SimParams {
                    h2,
                    e2: 1.0 - h2,
                    gen_sizes: vec![8000, 8000],
                    n_generations: 2,
                    prevalence_k: 0.1,
                    seed: 100 + seed,
                    ..SimParams::default()
                };
                let pop = simulate_population(&p).unwrap();
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for ind in &pop.individuals {
                    if let Some(m) = ind.mother_id {
                        xs.push(pop.get(m).unwrap().case_status as u8 as f64);
                        ys.push(ind.case_status as u8 as f64);
                    }
                }
                corr_sum += pearson(&xs, &ys);
            }
            let corr = corr_sum / 5.0;
            assert!(
                corr >= prev,
                "correlation {corr} at h2={h2} below previous {prev}"
            );
            prev = corr;
        }
    }

    fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            num += (x - mx) * (y - my);
            dx += (x - mx) * (x - mx);
            dy += (y - my) * (y - my);
        }
        num / (dx * dy).sqrt()
    }
}
