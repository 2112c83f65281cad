//! Finite-outcome measurement scenarios, Bell functionals and their LHV
//! constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::states::QuantumState;
use crate::tensor::{effect_table, eigvals_hermitian, ComplexMatrix, C64};

/// Cap on the number of deterministic strategies enumerated.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

const NEGATIVITY_TOL: f64 = 1e-10;
const EFFECT_TOL: f64 = 1e-10;

/// Real-valued outcome labels per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::OutcomesJson", into = "crate::io::OutcomesJson")]
pub struct OutcomeSpace {
    values: Vec<Vec<f64>>,
}

impl OutcomeSpace {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("outcome space needs at least one site".into()));
        }
        for (n, labels) in values.iter().enumerate() {
            if labels.is_empty() {
                return Err(Error::Argument(format!("site {n} has no outcomes")));
            }
            if labels.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("site {n} has a non-finite outcome value")));
            }
            for (i, a) in labels.iter().enumerate() {
                if labels[..i].contains(a) {
                    return Err(Error::Argument(format!("site {n} repeats outcome value {a}")));
                }
            }
        }
        Ok(Self { values })
    }

    /// `±1` labels (outcome 0 ↦ +1) at every site.
    pub fn plus_minus(sites: usize) -> Self {
        Self {
            values: vec![vec![1.0, -1.0]; sites],
        }
    }

    /// Labels `0, 1, …, K_n − 1`.
    pub fn indexed(sizes: &[usize]) -> Result<Self> {
        Self::new(sizes.iter().map(|&k| (0..k).map(|i| i as f64).collect()).collect())
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    pub fn num_sites(&self) -> usize {
        self.values.len()
    }
}

/// `effects[site][setting][outcome]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmFamily {
    effects: Vec<Vec<Vec<ComplexMatrix>>>,
}

impl PovmFamily {
    /// Validates positivity and completeness of every measurement.
    pub fn new(effects: Vec<Vec<Vec<ComplexMatrix>>>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::Argument("POVM family needs at least one site".into()));
        }
        let mut checked = Vec::with_capacity(effects.len());
        for (n, site) in effects.into_iter().enumerate() {
            if site.is_empty() {
                return Err(Error::Argument(format!("site {n} has no measurement settings")));
            }
            let d = site[0].first().map(|e| e.rows()).unwrap_or(0);
            let k = site[0].len();
            let mut site_checked = Vec::with_capacity(site.len());
            for (s, povm) in site.into_iter().enumerate() {
                if povm.len() != k || k == 0 {
                    return Err(Error::Shape(format!(
                        "site {n} setting {s} has {} outcomes, expected {k} (nonzero)",
                        povm.len()
                    )));
                }
                let mut sum = ComplexMatrix::zeros(d, d);
                let mut povm_checked = Vec::with_capacity(k);
                for (o, e) in povm.into_iter().enumerate() {
                    if e.rows() != d || e.cols() != d {
                        return Err(Error::Shape(format!(
                            "site {n} setting {s} outcome {o}: effect is {}x{}, expected {d}x{d}",
                            e.rows(),
                            e.cols()
                        )));
                    }
                    let e = e.checked_hermitian()?;
                    let min = *eigvals_hermitian(&e)?.last().expect("non-empty");
                    if min < -EFFECT_TOL {
                        return Err(Error::Argument(format!(
                            "site {n} setting {s} outcome {o}: effect has eigenvalue {min:.3e}"
                        )));
                    }
                    sum = &sum + &e;
                    povm_checked.push(e);
                }
                let dev = sum.max_abs_diff(&ComplexMatrix::identity(d));
                if dev > EFFECT_TOL {
                    return Err(Error::Argument(format!(
                        "site {n} setting {s}: effects sum to identity only within {dev:.3e}"
                    )));
                }
                site_checked.push(povm_checked);
            }
            checked.push(site_checked);
        }
        Ok(Self { effects: checked })
    }

    pub fn effects(&self) -> &[Vec<Vec<ComplexMatrix>>] {
        &self.effects
    }

    pub fn settings(&self) -> Vec<usize> {
        self.effects.iter().map(Vec::len).collect()
    }

    pub fn outcome_sizes(&self) -> Vec<usize> {
        self.effects.iter().map(|s| s[0].len()).collect()
    }

    pub fn site_dims(&self) -> Vec<usize> {
        self.effects.iter().map(|s| s[0][0].rows()).collect()
    }

    pub fn effect(&self, site: usize, setting: usize, outcome: usize) -> &ComplexMatrix {
        &self.effects[site][setting][outcome]
    }

    /// Keeps only the listed settings at each site.
    pub fn restrict(&self, keep: &[Vec<usize>]) -> Result<Self> {
        if keep.len() != self.effects.len() {
            return Err(Error::Shape(format!("{} setting lists for {} sites", keep.len(), self.effects.len())));
        }
        let mut out = Vec::with_capacity(keep.len());
        for (n, list) in keep.iter().enumerate() {
            if list.is_empty() || list.iter().any(|&s| s >= self.effects[n].len()) {
                return Err(Error::Argument(format!("invalid setting selection {list:?} at site {n}")));
            }
            out.push(list.iter().map(|&s| self.effects[n][s].clone()).collect());
        }
        Ok(Self { effects: out })
    }
}

/// Projective qubit measurement along the Bloch direction `(θ, φ)`:
/// outcome 0 is `(I + n·σ)/2`, outcome 1 is `(I − n·σ)/2`.
pub fn qubit_projective(theta: f64, phi: f64) -> Vec<ComplexMatrix> {
    let (nx, ny, nz) = (theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
    let ndot = ComplexMatrix::new(
        2,
        2,
        vec![C64::new(nz, 0.0), C64::new(nx, -ny), C64::new(nx, ny), C64::new(-nz, 0.0)],
    )
    .expect("2x2");
    let id = ComplexMatrix::identity(2);
    vec![(&id + &ndot).scale_real(0.5), (&id - &ndot).scale_real(0.5)]
}

/// State, measurements and outcome labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::ScenarioJson", into = "crate::io::ScenarioJson")]
pub struct Scenario {
    state: QuantumState,
    povms: PovmFamily,
    outcomes: OutcomeSpace,
}

impl Scenario {
    pub fn new(state: QuantumState, povms: PovmFamily, outcomes: OutcomeSpace) -> Result<Self> {
        if povms.site_dims() != state.site_dims() {
            return Err(Error::Shape(format!(
                "measurement dimensions {:?} differ from state dimensions {:?}",
                povms.site_dims(),
                state.site_dims()
            )));
        }
        if povms.outcome_sizes() != outcomes.sizes() {
            return Err(Error::Shape(format!(
                "measurements have {:?} outcomes, labels give {:?}",
                povms.outcome_sizes(),
                outcomes.sizes()
            )));
        }
        Ok(Self {
            state,
            povms,
            outcomes,
        })
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn povms(&self) -> &PovmFamily {
        &self.povms
    }

    pub fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    pub fn settings(&self) -> Vec<usize> {
        self.povms.settings()
    }

    pub fn outcome_sizes(&self) -> Vec<usize> {
        self.outcomes.sizes()
    }

    pub fn num_sites(&self) -> usize {
        self.state.num_sites()
    }

    pub fn restrict_settings(&self, keep: &[Vec<usize>]) -> Result<Self> {
        Scenario::new(self.state.clone(), self.povms.restrict(keep)?, self.outcomes.clone())
    }
}

/// Row-major enumeration of tuples with the given radices (first most significant).
pub fn tuples(radices: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = radices.iter().product();
    (0..total).map(move |mut i| {
        let mut t = vec![0; radices.len()];
        for j in (0..radices.len()).rev() {
            t[j] = i % radices[j];
            i /= radices[j];
        }
        t
    })
}

/// Flat row-major index of `tuple`.
pub fn flat_index(tuple: &[usize], radices: &[usize]) -> usize {
    tuple.iter().zip(radices).fold(0, |acc, (&t, &r)| acc * r + t)
}

/// Probabilities of every outcome tuple (row-major) for one setting tuple.
pub fn joint_distribution(sc: &Scenario, setting_tuple: &[usize]) -> Result<Vec<f64>> {
    let settings = sc.settings();
    if setting_tuple.len() != settings.len() || setting_tuple.iter().zip(&settings).any(|(&s, &n)| s >= n) {
        return Err(Error::Shape(format!(
            "setting tuple {setting_tuple:?} outside settings {settings:?}"
        )));
    }
    let lists: Vec<&[ComplexMatrix]> = setting_tuple
        .iter()
        .enumerate()
        .map(|(n, &s)| sc.povms.effects[n][s].as_slice())
        .collect();
    let raw = effect_table(sc.state.matrix(), sc.state.site_dims(), &lists)?;
    let mut probs: Vec<f64> = raw.iter().map(|z| z.re).collect();
    let mut clipped = false;
    for p in probs.iter_mut() {
        if *p < 0.0 {
            if *p < -NEGATIVITY_TOL {
                return Err(Error::State(format!("negative joint probability {p:.3e}")));
            }
            *p = 0.0;
            clipped = true;
        }
    }
    if clipped {
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
    Ok(probs)
}

/// Joint distributions for every setting tuple, row-major over setting tuples.
pub fn all_joint_distributions(sc: &Scenario) -> Result<Vec<Vec<f64>>> {
    tuples(&sc.settings()).map(|s| joint_distribution(sc, &s)).collect()
}

/// Real coefficients `β[(s_1…s_N)][(k_1…k_N)]`, stored row-major over the
/// setting tuple and then the outcome-index tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::FunctionalJson", into = "crate::io::FunctionalJson")]
pub struct BellFunctional {
    settings: Vec<usize>,
    outcome_sizes: Vec<usize>,
    coeffs: Vec<f64>,
}

impl BellFunctional {
    pub fn new(settings: Vec<usize>, outcome_sizes: Vec<usize>, coeffs: Vec<f64>) -> Result<Self> {
        if settings.is_empty() || settings.len() != outcome_sizes.len() {
            return Err(Error::Shape(format!(
                "{} setting counts and {} outcome counts",
                settings.len(),
                outcome_sizes.len()
            )));
        }
        if settings.iter().chain(&outcome_sizes).any(|&x| x == 0) {
            return Err(Error::Argument("setting and outcome counts must be >= 1".into()));
        }
        let expected = settings.iter().product::<usize>() * outcome_sizes.iter().product::<usize>();
        if coeffs.len() != expected {
            return Err(Error::Shape(format!("expected {expected} coefficients, got {}", coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument("functional coefficients must be finite".into()));
        }
        Ok(Self {
            settings,
            outcome_sizes,
            coeffs,
        })
    }

    pub fn zeros(settings: Vec<usize>, outcome_sizes: Vec<usize>) -> Result<Self> {
        let n = settings.iter().product::<usize>() * outcome_sizes.iter().product::<usize>();
        Self::new(settings, outcome_sizes, vec![0.0; n])
    }

    /// `β[s][k] = c_s · Π_n value_n(k_n)`: a combination of correlation
    /// averages with weights `c_s` per setting tuple.
    pub fn correlation(settings: Vec<usize>, outcomes: &OutcomeSpace, weights: &[f64]) -> Result<Self> {
        let sizes = outcomes.sizes();
        let n_settings: usize = settings.iter().product();
        if weights.len() != n_settings {
            return Err(Error::Shape(format!("{} weights for {n_settings} setting tuples", weights.len())));
        }
        let mut coeffs = Vec::with_capacity(n_settings * sizes.iter().product::<usize>());
        for w in weights {
            for k in tuples(&sizes) {
                let prod: f64 = k.iter().enumerate().map(|(n, &kn)| outcomes.values()[n][kn]).product();
                coeffs.push(w * prod);
            }
        }
        Self::new(settings, sizes, coeffs)
    }

    /// `E(0,0) + E(0,1) + E(1,0) − E(1,1)` on `±1` outcomes.
    pub fn chsh() -> Self {
        Self::correlation(vec![2, 2], &OutcomeSpace::plus_minus(2), &[1.0, 1.0, 1.0, -1.0]).expect("valid")
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn outcome_sizes(&self) -> &[usize] {
        &self.outcome_sizes
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn block(&self) -> usize {
        self.outcome_sizes.iter().product()
    }

    pub fn get(&self, setting_tuple: &[usize], outcome_tuple: &[usize]) -> f64 {
        let s = flat_index(setting_tuple, &self.settings);
        let k = flat_index(outcome_tuple, &self.outcome_sizes);
        self.coeffs[s * self.block() + k]
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            settings: self.settings.clone(),
            outcome_sizes: self.outcome_sizes.clone(),
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    fn check_scenario(&self, sc: &Scenario) -> Result<()> {
        if self.settings != sc.settings() || self.outcome_sizes != sc.outcome_sizes() {
            return Err(Error::Shape(format!(
                "functional for settings {:?}/outcomes {:?} applied to scenario with {:?}/{:?}",
                self.settings,
                self.outcome_sizes,
                sc.settings(),
                sc.outcome_sizes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhvConstants {
    pub b_inf: f64,
    pub b_sup: f64,
    pub b_abs: f64,
}

/// Extremes of the functional over all deterministic local strategies.
pub fn lhv_constants(f: &BellFunctional, exec: Exec) -> Result<LhvConstants> {
    lhv_constants_capped(f, exec, DEFAULT_ENUMERATION_CAP)
}

pub fn lhv_constants_capped(f: &BellFunctional, exec: Exec, cap: usize) -> Result<LhvConstants> {
    let n = f.settings.len();
    // local strategies: site n assigns an outcome to each of its settings
    let local: Vec<usize> = (0..n)
        .map(|i| f.outcome_sizes[i].checked_pow(f.settings[i] as u32))
        .collect::<Option<_>>()
        .ok_or(Error::Size {
            what: "deterministic strategy count",
            size: usize::MAX,
            cap,
        })?;
    let total = local.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::Size {
            what: "deterministic strategy count",
            size: total,
            cap,
        });
    }
    let setting_tuples: Vec<Vec<usize>> = tuples(&f.settings).collect();
    let block = f.block();
    // assignment[site][local strategy][setting] -> outcome index
    let assignments: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|i| tuples(&vec![f.outcome_sizes[i]; f.settings[i]]).collect())
        .collect();
    let rest: usize = local[1..].iter().product();
    let chunks = exec.map(local[0], |first| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut strategy = vec![0usize; n];
        strategy[0] = first;
        for r in 0..rest {
            let mut x = r;
            for i in (1..n).rev() {
                strategy[i] = x % local[i];
                x /= local[i];
            }
            let mut value = 0.0;
            for (si, s) in setting_tuples.iter().enumerate() {
                let mut k = 0;
                for i in 0..n {
                    k = k * f.outcome_sizes[i] + assignments[i][strategy[i]][s[i]];
                }
                value += f.coeffs[si * block + k];
            }
            lo = lo.min(value);
            hi = hi.max(value);
        }
        (lo, hi)
    });
    let (b_inf, b_sup) = chunks
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi)));
    Ok(LhvConstants {
        b_inf,
        b_sup,
        b_abs: b_inf.abs().max(b_sup.abs()),
    })
}

/// `Σ_s Σ_k β[s][k] P(k | s)`.
pub fn quantum_value(sc: &Scenario, f: &BellFunctional) -> Result<f64> {
    f.check_scenario(sc)?;
    let block = f.block();
    let mut total = 0.0;
    for (si, s) in tuples(&f.settings).enumerate() {
        let p = joint_distribution(sc, &s)?;
        total += p.iter().zip(&f.coeffs[si * block..(si + 1) * block]).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

/// `|quantum value| / B_abs`.
pub fn violation_ratio(sc: &Scenario, f: &BellFunctional, exec: Exec) -> Result<f64> {
    let c = lhv_constants(f, exec)?;
    if c.b_abs == 0.0 {
        return Err(Error::TrivialFunctional);
    }
    Ok(quantum_value(sc, f)?.abs() / c.b_abs)
}

/// `B_inf − (υ−1)/2·(B_sup−B_inf) ≤ value ≤ B_sup + (υ−1)/2·(B_sup−B_inf)`.
pub fn analog_inequality_check(sc: &Scenario, f: &BellFunctional, upsilon: f64, exec: Exec) -> Result<bool> {
    // a computed gamma may land a rounding error below 1
    if !(upsilon >= 1.0 - crate::gamma::LHV_TOL) {
        return Err(Error::Argument(format!("upsilon must be >= 1, got {upsilon}")));
    }
    let upsilon = upsilon.max(1.0);
    let c = lhv_constants(f, exec)?;
    let q = quantum_value(sc, f)?;
    let slack = (upsilon - 1.0) / 2.0 * (c.b_sup - c.b_inf);
    let tol = 1e-9 * c.b_abs.max(1.0);
    Ok(c.b_inf - slack - tol <= q && q <= c.b_sup + slack + tol)
}

/// Singlet-style CHSH scenario with observables `cos θ σz + sin θ σx`.
pub fn chsh_scenario(state: QuantumState, alice: [f64; 2], bob: [f64; 2]) -> Result<Scenario> {
    let povms = PovmFamily::new(vec![
        alice.iter().map(|&t| qubit_projective(t, 0.0)).collect(),
        bob.iter().map(|&t| qubit_projective(t, 0.0)).collect(),
    ])?;
    Scenario::new(state, povms, OutcomeSpace::plus_minus(2))
}

/// Angles at which the singlet reaches `|CHSH| = 2√2`.
pub const CHSH_ALICE: [f64; 2] = [0.0, std::f64::consts::FRAC_PI_2];
pub const CHSH_BOB: [f64; 2] = [std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4];
