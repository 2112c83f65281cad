//! Signed-measure models of measurement scenarios: the exact scenario
//! parameter γ by linear programming, the optimal functional from its dual,
//! explicit measures built from source operators, and a measurement search
//! giving lower bounds on the state parameter Υ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lp::DenseLp;
use crate::random::stream;
use crate::scenarios::{
    all_joint_distributions, flat_index, lhv_constants, qubit_projective, tuples, BellFunctional, OutcomeSpace,
    PovmFamily, Scenario,
};
use crate::source_ops::SourceOperator;
use crate::states::QuantumState;
use crate::tensor::{abs_hermitian, eig_hermitian, effect_table, ComplexMatrix, C64};

/// Cap on the number of outcome cells `∏ K_n^{S_n}` of the LP.
pub const DEFAULT_CELL_CAP: usize = 1_000_000;
/// Cap on the number of dense constraint-matrix entries.
const LP_ENTRY_CAP: usize = 50_000_000;
/// `γ` at or below `1 + LHV_TOL` counts as an LHV scenario.
pub const LHV_TOL: f64 = 1e-7;
const ZERO_MARGINAL: f64 = 1e-14;

/// Real weights over `Λ_1^{S_1} × … × Λ_N^{S_N}`; cells are row-major over
/// slots ordered site-major, setting-minor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub settings: Vec<usize>,
    pub outcome_sizes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(settings: Vec<usize>, outcome_sizes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let cells = cell_count(&settings, &outcome_sizes, usize::MAX)?;
        if weights.len() != cells {
            return Err(Error::Shape(format!("{cells} cells but {} weights", weights.len())));
        }
        Ok(Self {
            settings,
            outcome_sizes,
            weights,
        })
    }

    /// Outcome-count per slot.
    pub fn radices(&self) -> Vec<usize> {
        slot_radices(&self.settings, &self.outcome_sizes)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn negative_mass(&self) -> f64 {
        self.weights.iter().filter(|w| **w < 0.0).map(|w| -w).sum()
    }

    /// Distribution of the outcomes at slot `(n, s_n)` for every site.
    pub fn marginal(&self, setting_tuple: &[usize]) -> Result<Vec<f64>> {
        if setting_tuple.len() != self.settings.len() || setting_tuple.iter().zip(&self.settings).any(|(&s, &n)| s >= n)
        {
            return Err(Error::Shape(format!("setting tuple {setting_tuple:?} outside {:?}", self.settings)));
        }
        let slots: Vec<usize> = setting_tuple
            .iter()
            .enumerate()
            .map(|(n, &s)| self.settings[..n].iter().sum::<usize>() + s)
            .collect();
        let radices = self.radices();
        let mut out = vec![0.0; self.outcome_sizes.iter().product()];
        for (cell, lambda) in tuples(&radices).enumerate() {
            let k: Vec<usize> = slots.iter().map(|&sl| lambda[sl]).collect();
            out[flat_index(&k, &self.outcome_sizes)] += self.weights[cell];
        }
        Ok(out)
    }

    /// Largest deviation of any marginal from the scenario's distributions.
    pub fn marginal_deviation(&self, sc: &Scenario) -> Result<f64> {
        let dists = all_joint_distributions(sc)?;
        let mut worst: f64 = 0.0;
        for (s, p) in tuples(&sc.settings()).zip(&dists) {
            let m = self.marginal(&s)?;
            for (a, b) in m.iter().zip(p) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

fn slot_radices(settings: &[usize], outcome_sizes: &[usize]) -> Vec<usize> {
    settings
        .iter()
        .zip(outcome_sizes)
        .flat_map(|(&s, &k)| std::iter::repeat_n(k, s))
        .collect()
}

fn cell_count(settings: &[usize], outcome_sizes: &[usize], cap: usize) -> Result<usize> {
    let mut total: usize = 1;
    for r in slot_radices(settings, outcome_sizes) {
        total = total.checked_mul(r).filter(|&t| t <= cap).ok_or(Error::Size {
            what: "LP outcome cell count",
            size: total.saturating_mul(r),
            cap,
        })?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub gamma: f64,
    pub optimal_measure: SignedMeasure,
    /// Dual solution as a functional with `B_abs = 1`.
    pub dual_functional: BellFunctional,
    pub lhv: bool,
    pub variables: usize,
    pub constraints: usize,
    pub iterations: usize,
}

/// Marginal constraints: one row per (setting tuple, outcome tuple), one
/// column per cell.
fn marginal_incidence(settings: &[usize], outcome_sizes: &[usize]) -> Vec<Vec<usize>> {
    let radices = slot_radices(settings, outcome_sizes);
    let offsets: Vec<usize> = (0..settings.len()).map(|n| settings[..n].iter().sum()).collect();
    let block: usize = outcome_sizes.iter().product();
    let n_settings: usize = settings.iter().product();
    let mut rows_of_cell = Vec::new();
    for lambda in tuples(&radices) {
        let mut rows = Vec::with_capacity(n_settings);
        for (si, s) in tuples(settings).enumerate() {
            let k: Vec<usize> = s.iter().enumerate().map(|(n, &sn)| lambda[offsets[n] + sn]).collect();
            rows.push(si * block + flat_index(&k, outcome_sizes));
        }
        rows_of_cell.push(rows);
    }
    rows_of_cell
}

/// Minimal total variation of a normalized signed measure reproducing all
/// joint distributions of the scenario.
pub fn compute_gamma(sc: &Scenario) -> Result<GammaResult> {
    compute_gamma_capped(sc, DEFAULT_CELL_CAP)
}

pub fn compute_gamma_capped(sc: &Scenario, cell_cap: usize) -> Result<GammaResult> {
    let settings = sc.settings();
    let sizes = sc.outcome_sizes();
    let cells = cell_count(&settings, &sizes, cell_cap)?;
    let block: usize = sizes.iter().product();
    let rows = settings.iter().product::<usize>() * block;
    let cols = 2 * cells;
    let entries = rows.saturating_mul(cols + rows);
    if entries > LP_ENTRY_CAP {
        return Err(Error::Size {
            what: "dense LP tableau",
            size: entries,
            cap: LP_ENTRY_CAP,
        });
    }
    let incidence = marginal_incidence(&settings, &sizes);
    let mut a = vec![0.0; rows * cols];
    for (cell, rs) in incidence.iter().enumerate() {
        for &r in rs {
            a[r * cols + cell] = 1.0;
            a[r * cols + cells + cell] = -1.0;
        }
    }
    let b: Vec<f64> = all_joint_distributions(sc)?.into_iter().flatten().collect();
    let lp = DenseLp::new(rows, cols, a, b, vec![1.0; cols])?;
    let sol = lp.solve()?;
    let weights: Vec<f64> = (0..cells).map(|i| sol.x[i] - sol.x[cells + i]).collect();
    let optimal_measure = SignedMeasure::new(settings.clone(), sizes.clone(), weights)?;
    let gamma = optimal_measure.total_variation();

    let raw = BellFunctional::new(settings.clone(), sizes.clone(), sol.y.clone())?;
    let dual_functional = normalize_functional(&raw)?;
    Ok(GammaResult {
        gamma,
        optimal_measure,
        dual_functional,
        lhv: gamma <= 1.0 + LHV_TOL,
        variables: cols,
        constraints: rows,
        iterations: sol.iterations,
    })
}

fn normalize_functional(f: &BellFunctional) -> Result<BellFunctional> {
    let c = lhv_constants(f, Exec::Sequential)?;
    if c.b_abs == 0.0 {
        return Err(Error::TrivialFunctional);
    }
    Ok(f.scale(1.0 / c.b_abs))
}

/// The dual functional of a γ computation, normalized to `B_abs = 1`.
pub fn extract_optimal_functional(g: &GammaResult) -> BellFunctional {
    g.dual_functional.clone()
}

fn check_operator_scenario(t: &SourceOperator, povms: &PovmFamily, outcomes: &OutcomeSpace) -> Result<()> {
    if povms.site_dims() != t.shape().site_dims() {
        return Err(Error::Shape(format!(
            "measurement dimensions {:?} differ from operator site dimensions {:?}",
            povms.site_dims(),
            t.shape().site_dims()
        )));
    }
    if povms.outcome_sizes() != outcomes.sizes() {
        return Err(Error::Shape("outcome labels do not match measurement outcomes".into()));
    }
    Ok(())
}

/// `μ(λ) = tr[T (M_1^{(1)}(λ_1^{(1)}) ⊗ … ⊗ M_N^{(S_N)}(λ_N^{(S_N)}))]`.
pub fn measure_from_source_operator(t: &SourceOperator, povms: &PovmFamily, outcomes: &OutcomeSpace) -> Result<SignedMeasure> {
    check_operator_scenario(t, povms, outcomes)?;
    let settings = povms.settings();
    if settings != t.settings() {
        return Err(Error::Shape(format!(
            "operator settings {:?} differ from measurement settings {settings:?}",
            t.settings()
        )));
    }
    let lists: Vec<&[ComplexMatrix]> = povms
        .effects()
        .iter()
        .flat_map(|site| site.iter().map(Vec::as_slice))
        .collect();
    let table = effect_table(t.matrix(), &t.shape().slot_dims(), &lists)?;
    SignedMeasure::new(settings, povms.outcome_sizes(), table.iter().map(|z| z.re).collect())
}

/// Measure assembled from the covering `|T|` of a source operator carrying a
/// single setting at site `undilated`; that site may carry any number of
/// settings in the scenario.
pub fn covering_split_measure(
    t: &SourceOperator,
    povms: &PovmFamily,
    outcomes: &OutcomeSpace,
    undilated: usize,
) -> Result<SignedMeasure> {
    check_operator_scenario(t, povms, outcomes)?;
    let settings = povms.settings();
    let t_settings = t.settings();
    if undilated >= settings.len() || t_settings[undilated] != 1 {
        return Err(Error::Argument(format!(
            "operator must carry one setting at site {undilated}, has {t_settings:?}"
        )));
    }
    for (n, (&a, &b)) in settings.iter().zip(t_settings).enumerate() {
        if n != undilated && a != b {
            return Err(Error::Shape(format!(
                "site {n}: operator has {b} settings, measurements have {a}"
            )));
        }
    }
    let abs = abs_hermitian(t.matrix())?;
    let plus = &abs + t.matrix();
    let minus = &abs - t.matrix();

    let d_u = t.shape().site_dims()[undilated];
    let k_u = povms.outcome_sizes()[undilated];
    let s_u = settings[undilated];
    // undilated slot: every (setting, outcome) effect, then the identity
    let mut u_list: Vec<ComplexMatrix> = povms.effects()[undilated].iter().flatten().cloned().collect();
    u_list.push(ComplexMatrix::identity(d_u));
    let mut lists: Vec<&[ComplexMatrix]> = Vec::new();
    let mut rest_radices = Vec::new();
    for (n, site) in povms.effects().iter().enumerate() {
        if n == undilated {
            lists.push(&u_list);
        } else {
            for povm in site {
                lists.push(povm);
                rest_radices.push(povm.len());
            }
        }
    }
    let slot_dims = t.shape().slot_dims();
    let u_slot = t.shape().slot(undilated, 0)?;
    // reorder so the undilated slot comes first: table index = u_index·R + rest
    let mut order: Vec<usize> = vec![u_slot];
    order.extend((0..slot_dims.len()).filter(|&s| s != u_slot));
    let perm_dims: Vec<usize> = order.iter().map(|&s| slot_dims[s]).collect();
    let perm_lists: Vec<&[ComplexMatrix]> = order.iter().map(|&s| lists[s]).collect();
    let tables: Vec<Vec<f64>> = [&plus, &minus]
        .iter()
        .map(|m| {
            let pm = crate::tensor::permute_factors(m, &slot_dims, &order)?;
            Ok(effect_table(&pm, &perm_dims, &perm_lists)?.iter().map(|z| z.re).collect())
        })
        .collect::<Result<_>>()?;
    let rest: usize = rest_radices.iter().product();
    let identity_row = s_u * k_u;

    let radices = slot_radices(&settings, &povms.outcome_sizes());
    let u_offset: usize = settings[..undilated].iter().sum();
    let mut weights = Vec::with_capacity(radices.iter().product());
    for lambda in tuples(&radices) {
        let rest_tuple: Vec<usize> = lambda[..u_offset]
            .iter()
            .chain(&lambda[u_offset + s_u..])
            .copied()
            .collect();
        let r = flat_index(&rest_tuple, &rest_radices);
        let mut w = 0.0;
        for (sign, table) in [(0.5, &tables[0]), (-0.5, &tables[1])] {
            let marginal = table[identity_row * rest + r];
            let mut prod = marginal;
            for s in 0..s_u {
                let alpha = if marginal.abs() < ZERO_MARGINAL {
                    1.0 / k_u as f64
                } else {
                    table[(s * k_u + lambda[u_offset + s]) * rest + r] / marginal
                };
                prod *= alpha;
            }
            w += sign * prod;
        }
        weights.push(w);
    }
    SignedMeasure::new(settings, povms.outcome_sizes(), weights)
}

/// Parametrized rank-one projective measurements for a search over
/// measurement families.
#[derive(Debug, Clone)]
pub struct MeasurementParametrization {
    dims: Vec<usize>,
    settings: Vec<usize>,
    outcomes: Vec<usize>,
}

impl MeasurementParametrization {
    pub fn new(dims: &[usize], settings: &[usize], outcomes: &[usize]) -> Result<Self> {
        if dims.len() != settings.len() || dims.len() != outcomes.len() {
            return Err(Error::Shape("dims, settings and outcomes must have equal length".into()));
        }
        if dims.iter().chain(settings).chain(outcomes).any(|&x| x == 0) {
            return Err(Error::Argument("dims, settings and outcomes must be >= 1".into()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            settings: settings.to_vec(),
            outcomes: outcomes.to_vec(),
        })
    }

    fn is_bloch(&self, site: usize) -> bool {
        self.dims[site] == 2 && self.outcomes[site] == 2
    }

    fn params_per_setting(&self, site: usize) -> usize {
        if self.is_bloch(site) {
            2
        } else {
            self.dims[site] * self.dims[site]
        }
    }

    pub fn len(&self) -> usize {
        (0..self.dims.len()).map(|n| self.settings[n] * self.params_per_setting(n)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measurements for a parameter vector: Bloch angles `(θ, φ)` for
    /// two-outcome qubit sites, otherwise the eigenbasis of `exp(iH)` with `H`
    /// built from `d²` reals; surplus basis projectors merge into the last
    /// outcome and missing ones are zero effects.
    pub fn povms(&self, params: &[f64]) -> Result<PovmFamily> {
        if params.len() != self.len() {
            return Err(Error::Shape(format!("{} parameters, expected {}", params.len(), self.len())));
        }
        let mut at = 0;
        let mut effects = Vec::with_capacity(self.dims.len());
        for n in 0..self.dims.len() {
            let mut site = Vec::with_capacity(self.settings[n]);
            for _ in 0..self.settings[n] {
                let p = &params[at..at + self.params_per_setting(n)];
                at += p.len();
                site.push(if self.is_bloch(n) {
                    qubit_projective(p[0], p[1])
                } else {
                    basis_measurement(self.dims[n], self.outcomes[n], p)?
                });
            }
            effects.push(site);
        }
        PovmFamily::new(effects)
    }

    /// A parameter vector drawn from the coarse grid (`24` polar × `12`
    /// azimuthal steps for Bloch angles, `12` steps of `[−π, π)` otherwise).
    fn grid_point(&self, rng: &mut crate::random::SeededRng) -> Vec<f64> {
        use rand::Rng;
        use std::f64::consts::PI;
        let mut out = Vec::with_capacity(self.len());
        for n in 0..self.dims.len() {
            for _ in 0..self.settings[n] {
                if self.is_bloch(n) {
                    out.push(PI * rng.random_range(0..24) as f64 / 24.0);
                    out.push(2.0 * PI * rng.random_range(0..12) as f64 / 12.0);
                } else {
                    for _ in 0..self.params_per_setting(n) {
                        out.push(-PI + 2.0 * PI * rng.random_range(0..12) as f64 / 12.0);
                    }
                }
            }
        }
        out
    }
}

fn basis_measurement(d: usize, k: usize, p: &[f64]) -> Result<Vec<ComplexMatrix>> {
    // Hermitian generator: diagonal from the first d entries, then real and
    // imaginary parts of the upper triangle
    let mut h = ComplexMatrix::zeros(d, d);
    let mut idx = d;
    for i in 0..d {
        h[(i, i)] = C64::new(p[i], 0.0);
        for j in i + 1..d {
            let z = C64::new(p[idx], p[idx + 1]);
            idx += 2;
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    let e = eig_hermitian(&h)?;
    let phases: Vec<C64> = e.values.iter().map(|&l| C64::from_polar(1.0, l)).collect();
    let u = ComplexMatrix::from_fn(d, d, |r, c| {
        (0..d).map(|m| e.vectors[(r, m)] * phases[m] * e.vectors[(c, m)].conj()).sum()
    });
    let column = |c: usize| (0..d).map(|r| u[(r, c)]).collect::<Vec<_>>();
    let mut effects = Vec::with_capacity(k);
    for o in 0..k {
        if o + 1 == k {
            let mut acc = ComplexMatrix::zeros(d, d);
            for c in o..d {
                acc = &acc + &ComplexMatrix::projector(&column(c));
            }
            effects.push(acc);
        } else if o < d {
            effects.push(ComplexMatrix::projector(&column(o)));
        } else {
            effects.push(ComplexMatrix::zeros(d, d));
        }
    }
    Ok(effects)
}

/// Best measurements found by [`estimate_upsilon`].
#[derive(Debug, Clone)]
pub struct UpsilonEstimate {
    pub best_gamma: f64,
    pub best_povms: PovmFamily,
    pub best_params: Vec<f64>,
    pub evaluations: usize,
}

fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, budget: usize) -> (Vec<f64>, f64, usize) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut used = n + 1;
    while used < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() < 1e-13 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        used += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            used += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            used += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
                used += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))).expect("non-empty");
    (simplex[best].clone(), values[best], used)
}

/// Lower bound on the state parameter at the given settings and outcome
/// counts: the largest γ found over rank-one projective measurements.
/// Roughly half of `budget` LP evaluations go to grid sampling, the rest to
/// Nelder–Mead refinement of the best samples.
pub fn estimate_upsilon(
    state: &QuantumState,
    settings: &[usize],
    outcome_sizes: &[usize],
    budget: usize,
    seed: u64,
    exec: Exec,
) -> Result<UpsilonEstimate> {
    let param = MeasurementParametrization::new(state.site_dims(), settings, outcome_sizes)?;
    let outcomes = OutcomeSpace::indexed(outcome_sizes)?;
    cell_count(settings, outcome_sizes, DEFAULT_CELL_CAP)?;
    let evaluate = |p: &[f64]| -> Result<f64> {
        let povms = param.povms(p)?;
        let sc = Scenario::new(state.clone(), povms, outcomes.clone())?;
        Ok(compute_gamma(&sc)?.gamma)
    };
    let budget = budget.max(1);
    let samples = (budget / 2).max(1);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|i| param.grid_point(&mut stream(seed, i as u64)))
        .collect();
    let scores = exec.map_slice(&points, |p| evaluate(p));
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(samples);
    for (i, s) in scores.into_iter().enumerate() {
        ranked.push((s?, i));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let starts: Vec<usize> = ranked.iter().take(4).map(|&(_, i)| i).collect();
    let remaining = budget.saturating_sub(samples);
    let per_start = remaining / starts.len().max(1);
    let refined = exec.map_slice(&starts, |&i| {
        if per_start <= param.len() + 1 {
            return (points[i].clone(), -ranked.iter().find(|r| r.1 == i).expect("ranked").0, 0);
        }
        let objective = |p: &[f64]| -> f64 { evaluate(p).map(|g| -g).unwrap_or(f64::INFINITY) };
        nelder_mead(&objective, &points[i], 0.15, per_start)
    });
    let mut best_params = points[ranked[0].1].clone();
    let mut best_gamma = ranked[0].0;
    let mut evaluations = samples;
    for (p, v, used) in refined {
        evaluations += used;
        if -v > best_gamma {
            best_gamma = -v;
            best_params = p;
        }
    }
    let best_povms = param.povms(&best_params)?;
    // report the exact LP value at the returned measurements
    let best_gamma = evaluate(&best_params)?;
    Ok(UpsilonEstimate {
        best_gamma,
        best_povms,
        best_params,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, seeded};
    use crate::scenarios::{chsh_scenario, quantum_value, violation_ratio, CHSH_ALICE, CHSH_BOB};
    use crate::source_ops::{build_separable_positive, build_singlet_special, build_tau, build_tau_tilde};
    use crate::states::{make_product, make_singlet, ProductComponent};
    use rand::Rng;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn random_projective_family(rng: &mut impl Rng, settings: &[usize]) -> PovmFamily {
        PovmFamily::new(
            settings
                .iter()
                .map(|&s| {
                    (0..s)
                        .map(|_| qubit_projective(rng.random::<f64>() * 3.2, rng.random::<f64>() * 6.3))
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chsh_gamma_is_sqrt2() {
        let sc = chsh_scenario(make_singlet(), CHSH_ALICE, CHSH_BOB).unwrap();
        let g = compute_gamma(&sc).unwrap();
        assert_eq!((g.variables, g.constraints), (32, 16));
        assert!((g.gamma - SQRT2).abs() < 1e-9, "{}", g.gamma);
        assert!(!g.lhv);
        assert!(g.optimal_measure.marginal_deviation(&sc).unwrap() < 1e-10);
        assert!((g.optimal_measure.total_mass() - 1.0).abs() < 1e-10);
        let f = extract_optimal_functional(&g);
        let ratio = violation_ratio(&sc, &f, Exec::Sequential).unwrap();
        assert!((ratio - g.gamma).abs() < 1e-9);
        let c = lhv_constants(&f, Exec::Sequential).unwrap();
        assert!((c.b_abs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_setting_sites_are_lhv() {
        let mut rng = seeded(3);
        let rho = QuantumState::new(vec![2, 2], random_density(&mut rng, 4, 1)).unwrap();
        let sc = Scenario::new(rho, random_projective_family(&mut rng, &[1, 3]), OutcomeSpace::plus_minus(2)).unwrap();
        let g = compute_gamma(&sc).unwrap();
        assert!((g.gamma - 1.0).abs() < 1e-7 && g.lhv);
        let f = extract_optimal_functional(&g);
        assert!(violation_ratio(&sc, &f, Exec::Sequential).unwrap() <= 1.0 + 1e-6);
    }

    #[test]
    fn reducing_settings_never_increases_gamma() {
        let mut rng = seeded(4);
        let rho = QuantumState::new(vec![2, 2], random_density(&mut rng, 4, 1)).unwrap();
        let sc = Scenario::new(rho, random_projective_family(&mut rng, &[3, 2]), OutcomeSpace::plus_minus(2)).unwrap();
        let full = compute_gamma(&sc).unwrap().gamma;
        let reduced = compute_gamma(&sc.restrict_settings(&[vec![0, 2], vec![0, 1]]).unwrap()).unwrap().gamma;
        assert!(reduced <= full + 1e-8);
    }

    #[test]
    fn measure_from_separable_operator_is_probability() {
        let mut rng = seeded(5);
        let comps: Vec<ProductComponent> = (0..2)
            .map(|_| ProductComponent {
                weight: 0.5,
                factors: vec![
                    QuantumState::new(vec![2], random_density(&mut rng, 2, 2)).unwrap(),
                    QuantumState::new(vec![2], random_density(&mut rng, 2, 2)).unwrap(),
                ],
            })
            .collect();
        let t = build_separable_positive(&comps, &[2, 2]).unwrap();
        let povms = random_projective_family(&mut rng, &[2, 2]);
        let out = OutcomeSpace::plus_minus(2);
        let mu = measure_from_source_operator(&t, &povms, &out).unwrap();
        assert!(mu.weights.iter().all(|&w| w >= -1e-10));
        assert!((mu.total_variation() - 1.0).abs() < 1e-10);
        let sc = Scenario::new(t.state().clone(), povms.clone(), out.clone()).unwrap();
        assert!(mu.marginal_deviation(&sc).unwrap() < 1e-10);
    }

    #[test]
    fn singlet_operator_measures() {
        let t = build_singlet_special();
        let povms = PovmFamily::new(vec![
            vec![qubit_projective(0.0, 0.0)],
            vec![qubit_projective(0.0, 0.0), qubit_projective(std::f64::consts::FRAC_PI_2, 0.0)],
        ])
        .unwrap();
        let out = OutcomeSpace::plus_minus(2);
        let mu = measure_from_source_operator(&t, &povms, &out).unwrap();
        let sc = Scenario::new(make_singlet(), povms, out.clone()).unwrap();
        assert!(mu.marginal_deviation(&sc).unwrap() < 1e-12);
        assert!(mu.total_variation() <= 3f64.sqrt() + 1e-9);
        let id = (mu.total_variation() - (1.0 + 2.0 * mu.negative_mass())).abs();
        assert!(id < 1e-12);

        // 2×2 scenario through the covering split at the undilated first site
        let sc = chsh_scenario(make_singlet(), CHSH_ALICE, CHSH_BOB).unwrap();
        let nu = covering_split_measure(&t, sc.povms(), &out, 0).unwrap();
        assert!(nu.marginal_deviation(&sc).unwrap() < 1e-10);
        assert!((nu.total_mass() - 1.0).abs() < 1e-10);
        assert!(nu.total_variation() <= 3f64.sqrt() + 1e-8);
        assert!(nu.total_variation() >= compute_gamma(&sc).unwrap().gamma - 1e-8);
    }

    #[test]
    fn covering_split_with_zero_marginals() {
        // deterministic effect pair (I, 0) at the dilated site
        let t = build_tau(&make_singlet(), &[1, 2], None).unwrap();
        let povms = PovmFamily::new(vec![
            vec![qubit_projective(0.3, 0.0), qubit_projective(1.2, 0.4)],
            vec![
                vec![ComplexMatrix::identity(2), ComplexMatrix::zeros(2, 2)],
                qubit_projective(0.7, 1.0),
            ],
        ])
        .unwrap();
        let out = OutcomeSpace::plus_minus(2);
        let nu = covering_split_measure(&t, &povms, &out, 0).unwrap();
        let sc = Scenario::new(make_singlet(), povms, out).unwrap();
        assert!(nu.marginal_deviation(&sc).unwrap() < 1e-10);
        assert!(nu.total_variation() <= t.trace_norm().unwrap() + 1e-8);
    }

    #[test]
    fn separable_covering_split_is_probability() {
        let a = crate::states::basis_state(2, 0).unwrap();
        let b = crate::states::basis_state(2, 1).unwrap();
        let t = build_tau_tilde(&make_product(&[a, b]).unwrap(), &[1, 2]).unwrap();
        let mut rng = seeded(6);
        let povms = random_projective_family(&mut rng, &[2, 2]);
        let nu = covering_split_measure(&t, &povms, &OutcomeSpace::plus_minus(2), 0).unwrap();
        assert!(nu.weights.iter().all(|&w| w >= -1e-12));
        assert!((nu.total_variation() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parametrized_measurements_are_valid() {
        let param = MeasurementParametrization::new(&[3, 2], &[2, 1], &[2, 2]).unwrap();
        let mut rng = seeded(7);
        let p: Vec<f64> = (0..param.len()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let povms = param.povms(&p).unwrap();
        assert_eq!(povms.outcome_sizes(), vec![2, 2]);
        let param = MeasurementParametrization::new(&[2], &[1], &[3]).unwrap();
        let povms = param.povms(&vec![0.1; param.len()]).unwrap();
        assert_eq!(povms.outcome_sizes(), vec![3]);
    }

    #[test]
    fn upsilon_search_on_product_state() {
        let a = crate::states::basis_state(2, 0).unwrap();
        let b = crate::states::basis_state(2, 1).unwrap();
        let e = estimate_upsilon(&make_product(&[a, b]).unwrap(), &[2, 2], &[2, 2], 40, 1, Exec::Sequential).unwrap();
        assert!((e.best_gamma - 1.0).abs() < 1e-7);
    }

    #[test]
    fn upsilon_modes_agree() {
        let s = make_singlet();
        let a = estimate_upsilon(&s, &[2, 2], &[2, 2], 60, 3, Exec::Sequential).unwrap();
        let b = estimate_upsilon(&s, &[2, 2], &[2, 2], 60, 3, Exec::Parallel).unwrap();
        assert_eq!(a.best_gamma, b.best_gamma);
        assert_eq!(a.best_params, b.best_params);
        let sc = Scenario::new(s, a.best_povms.clone(), OutcomeSpace::indexed(&[2, 2]).unwrap()).unwrap();
        let g = compute_gamma(&sc).unwrap();
        assert_eq!(g.gamma, a.best_gamma);
        let _ = quantum_value(&sc, &g.dual_functional).unwrap();
    }
}
