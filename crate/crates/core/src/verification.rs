//! Theorem-level experiments: operator-norm estimation over a function bank and the
//! necessity/sufficiency checks built on it.
//!
//! Hypotheses are measured against configured caps. Necessity directions are asserted;
//! sufficiency directions are recorded as finite ratios.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::coverings::whitney::{minimal_t, whitney_cube_at};
use crate::cube::{box_in_family, Cube};
use crate::domain::{Domain, DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{GridBox, Idx, MAX_DIM};
use crate::maximal::{evaluate, lattice_sides, lp_norm, Lattice, MaximalRequest, Mode};
use crate::report::{json_hash, Check, Hypothesis, Report, Status};
use crate::weights::{
    ainfty_estimate, apq_constant, apq_value, doubling_constant, dual_weight, finite_union_testing_constant,
    improved_exponents, mass, power_pair_gamma, reverse_holder_exponent, sawyer_testing_constant, CubeFamily,
    ExponentPair, TestingSetup,
};

/// Independent random stream `k` of a seed.
pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// Source of a single weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FieldSpec {
    Constant { value: f64 },
    /// `|x - center|^alpha` (Euclidean), as cell averages.
    Power { alpha: f64, center: Vec<f64> },
    Checkerboard { block: usize, high: f64, low: f64 },
    /// Binary field file, resolved against the config directory.
    File { path: String },
}

impl FieldSpec {
    pub fn build(&self, domain: &Domain, base: Option<&Path>) -> Result<ScalarField> {
        let g = domain.grid();
        match self {
            FieldSpec::Constant { value } => ScalarField::constant(g, *value),
            FieldSpec::Power { alpha, center } => ScalarField::power(g, *alpha, center),
            FieldSpec::Checkerboard { block, high, low } => ScalarField::checkerboard(g, *block, *high, *low),
            FieldSpec::File { path } => {
                let p = base.map_or_else(|| Path::new(path).to_path_buf(), |b| b.join(path));
                ScalarField::read(&p, g)
            }
        }
    }
}

/// The weight pair `(u, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum WeightPairSpec {
    /// `u = v = 1`.
    Unit,
    /// `u = |x - c|^alpha`, `v = |x - c|^gamma` with `gamma = (alpha + n) p / q - n`.
    PowerPair {
        alpha: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Fields { u: FieldSpec, v: FieldSpec },
}

/// Composition of the test-function bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankSpec {
    /// Number of sampled `F_beta` cubes `Q` contributing `sigma chi_Q`.
    pub family_cubes: usize,
    /// Cube sides (cells) of the sampled family.
    pub sides: Vec<usize>,
    pub whitney_cubes: usize,
    pub bumps: usize,
    /// Exponents `a` of the power profiles `|x - c|^a`.
    pub powers: Vec<f64>,
    /// Random finite unions for the finite-union testing quantity.
    pub unions: usize,
}

impl Default for BankSpec {
    fn default() -> Self {
        BankSpec { family_cubes: 24, sides: vec![1, 2, 4, 8], whitney_cubes: 8, bumps: 8, powers: vec![-0.5, 0.5], unions: 6 }
    }
}

impl BankSpec {
    /// The same bank with every sampled count multiplied by `k`.
    pub fn scaled(&self, k: usize) -> Self {
        BankSpec {
            family_cubes: self.family_cubes * k,
            whitney_cubes: self.whitney_cubes * k,
            bumps: self.bumps * k,
            unions: self.unions * k,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub doubling_cap: f64,
    /// Intercept cap of the `A_infinity` envelope fit.
    pub ainfty_c_cap: f64,
    /// Smallest admissible envelope exponent.
    pub ainfty_min_delta: f64,
    pub rhi_cap: f64,
    pub apq_cap: f64,
    /// Floor applied to `v` before the dual power.
    pub floor: f64,
    /// Relative slack for floating-point comparisons of exact inequalities.
    pub relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            doubling_cap: 64.0,
            ainfty_c_cap: 2.0,
            ainfty_min_delta: 1e-3,
            rhi_cap: 4.0,
            apq_cap: 1e6,
            floor: 1e-12,
            relative: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub weights: WeightPairSpec,
    pub p: f64,
    pub q: f64,
    pub beta: Beta,
    #[serde(default = "default_lattice")]
    pub lattice: Lattice,
    #[serde(default)]
    pub bank: BankSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_lattice() -> Lattice {
    Lattice::Dyadic
}

impl ExperimentConfig {
    pub fn new(domain: &Domain, weights: WeightPairSpec, exps: ExponentPair, beta: Beta) -> Self {
        ExperimentConfig {
            domain: domain.spec(),
            weights,
            p: exps.p,
            q: exps.q,
            beta,
            lattice: Lattice::Dyadic,
            bank: BankSpec::default(),
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

/// A bank member: an id and a nonnegative field vanishing off the domain.
#[derive(Clone, Debug)]
pub struct BankMember {
    pub id: String,
    pub field: ScalarField,
    /// The cube `Q` when the member is `sigma chi_Q`.
    pub testing_cube: Option<Cube>,
}

/// A configuration with its fields, weights and bank materialised.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub domain: Domain,
    pub exps: ExponentPair,
    pub u: ScalarField,
    pub v: ScalarField,
    pub sigma: ScalarField,
    pub testing: CubeFamily,
    pub bank: Vec<BankMember>,
    pub unions: Vec<Vec<Cube>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub mode: Mode,
    /// `max ||M f||_(L^q(u)) / ||f||_(L^p(v))` over the bank.
    pub ratio: f64,
    pub witness: String,
    pub bank_size: usize,
    /// Members with zero norm.
    pub skipped: Vec<String>,
    pub member_ratios: Vec<(String, f64)>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, base: Option<&Path>) -> Result<Self> {
        let domain = Domain::from_spec(&cfg.domain, base)?;
        let exps = ExponentPair::new(cfg.p, cfg.q)?;
        let dim = domain.dim();
        let (u, v) = match &cfg.weights {
            WeightPairSpec::Unit => {
                let one = ScalarField::constant(domain.grid(), 1.0)?;
                (one.clone(), one)
            }
            WeightPairSpec::PowerPair { alpha, center } => {
                let c = center.clone().unwrap_or_else(|| default_center(&domain));
                let gamma = power_pair_gamma(*alpha, dim, exps);
                (ScalarField::power(domain.grid(), *alpha, &c)?, ScalarField::power(domain.grid(), gamma, &c)?)
            }
            WeightPairSpec::Fields { u, v } => (u.build(&domain, base)?, v.build(&domain, base)?),
        };
        u.check_same_grid(&v)?;
        let sigma = dual_weight(&v, exps.p, cfg.tolerances.floor)?;
        let testing =
            CubeFamily::local(&domain, cfg.beta, &cfg.bank.sides, 1).subsample(cfg.bank.family_cubes, &mut stream(cfg.seed, 0));
        if testing.is_empty() {
            return Err(Error::Precondition("no F_beta cube of the configured sides fits the grid".into()));
        }
        let mut exp = Experiment { cfg, domain, exps, u, v, sigma, testing, bank: Vec::new(), unions: Vec::new() };
        exp.bank = exp.build_bank()?;
        exp.unions = exp.sample_unions(&mut stream(exp.cfg.seed, 3));
        Ok(exp)
    }

    fn restrict(&self, samples: Vec<f64>) -> Result<ScalarField> {
        let flags = self.domain.interior_flags();
        let s = samples.into_iter().zip(flags).map(|(x, &k)| if k { x } else { 0.0 }).collect();
        ScalarField::from_samples(self.domain.grid().clone(), s)
    }

    fn sigma_chi(&self, q: &Cube) -> Result<ScalarField> {
        let g = self.domain.grid();
        let b = q.as_grid_box(g).ok_or_else(|| Error::Usage("testing cube is not grid-aligned".into()))?;
        let mut s = vec![0.0; g.cell_count()];
        for i in b.cells() {
            let k = g.flat(i);
            s[k] = self.sigma.samples()[k];
        }
        self.restrict(s)
    }

    fn interior_cells(&self) -> Vec<Idx> {
        let g = self.domain.grid();
        g.cell_indices().filter(|&i| self.domain.is_interior_cell(i)).collect()
    }

    /// Each component draws from its own stream, so a larger bank extends a smaller one.
    fn build_bank(&self) -> Result<Vec<BankMember>> {
        let g = self.domain.grid();
        let dim = g.dim();
        let mut bank = Vec::new();
        for (k, q) in self.testing.cubes.iter().enumerate() {
            bank.push(BankMember { id: format!("sigma-chi-{k}"), field: self.sigma_chi(q)?, testing_cube: Some(*q) });
        }
        let interior = self.interior_cells();
        if interior.is_empty() {
            return Err(Error::Degenerate("domain has no interior cell".into()));
        }
        if self.domain.is_analytic() {
            let t = minimal_t(self.cfg.beta, 5);
            let rng = &mut stream(self.cfg.seed, 1);
            for k in 0..self.cfg.bank.whitney_cubes {
                let i = interior[rng.gen_range(0..interior.len())];
                let c = g.cell_center(i);
                let w = whitney_cube_at(&self.domain, t, &c[..dim])?;
                let b = w.cube.inner_cells(g).unwrap_or(GridBox::cube(dim, i, 1));
                let f = ScalarField::indicator(g, &b)?;
                bank.push(BankMember { id: format!("whitney-{k}"), field: self.restrict(f.samples().to_vec())?, testing_cube: None });
            }
        }
        let rng = &mut stream(self.cfg.seed, 2);
        for k in 0..self.cfg.bank.bumps {
            let mut s = vec![0.0; g.cell_count()];
            for _ in 0..3 {
                let i = interior[rng.gen_range(0..interior.len())];
                let side = rng.gen_range(1..=4usize);
                let amp = rng.gen_range(1..=8) as f64;
                let cells = g.cells();
                let mut lo = [0; MAX_DIM];
                for a in 0..dim {
                    lo[a] = i[a].min(cells[a] - side.min(cells[a]));
                }
                for j in GridBox::cube(dim, lo, side.min((0..dim).map(|a| cells[a]).min().unwrap())).cells() {
                    s[g.flat(j)] += amp;
                }
            }
            bank.push(BankMember { id: format!("bump-{k}"), field: self.restrict(s)?, testing_cube: None });
        }
        let (lo, hi) = (g.bbox_lo(), g.bbox_hi());
        let center: Vec<f64> = (0..dim).map(|a| (lo[a] + hi[a]) / 2.0).collect();
        for &a in &self.cfg.bank.powers {
            let f = ScalarField::power(g, a, &center)?;
            bank.push(BankMember { id: format!("power-{a}"), field: self.restrict(f.samples().to_vec())?, testing_cube: None });
        }
        Ok(bank)
    }

    fn sample_unions(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<Cube>> {
        let n = self.testing.len();
        (0..self.cfg.bank.unions)
            .map(|_| {
                let m = rng.gen_range(1..=3usize.min(n));
                let mut pick: Vec<usize> = rand::seq::index::sample(rng, n, m).into_vec();
                pick.sort_unstable();
                pick.into_iter().map(|k| self.testing.cubes[k]).collect()
            })
            .collect()
    }

    fn request<'a>(&'a self, f: &'a ScalarField, beta: Beta, mode: Mode, lattice: &Lattice) -> MaximalRequest<'a> {
        let r = MaximalRequest::new(&self.domain, f, beta, mode).lattice(lattice.clone());
        if mode == Mode::Weighted {
            r.sigma(&self.sigma)
        } else {
            r
        }
    }

    /// `||M f||_(L^q(u))` and `||f||_(L^p(v))` over the domain.
    pub fn member_norms(&self, f: &ScalarField, beta: Beta, mode: Mode, lattice: &Lattice) -> Result<(f64, f64)> {
        let g = self.domain.grid();
        let mask = self.domain.interior_flags();
        let res = evaluate(&self.request(f, beta, mode, lattice))?;
        let num = lp_norm(g, &res.values, Some(&self.u), self.exps.q, Some(mask))?;
        let den = lp_norm(g, f.samples(), Some(&self.v), self.exps.p, Some(mask))?;
        Ok((num, den))
    }

    pub fn estimate_operator_norm(&self, mode: Mode) -> Result<NormEstimate> {
        self.estimate_with(self.cfg.beta, mode, &self.cfg.lattice)
    }

    pub fn estimate_with(&self, beta: Beta, mode: Mode, lattice: &Lattice) -> Result<NormEstimate> {
        if self.bank.is_empty() {
            return Err(Error::Precondition("empty test-function bank".into()));
        }
        let norms: Vec<Result<(f64, f64)>> =
            self.bank.par_iter().map(|m| self.member_norms(&m.field, beta, mode, lattice)).collect();
        let mut est = NormEstimate {
            mode,
            ratio: 0.0,
            witness: String::new(),
            bank_size: self.bank.len(),
            skipped: Vec::new(),
            member_ratios: Vec::new(),
        };
        for (m, r) in self.bank.iter().zip(norms) {
            let (num, den) = r?;
            if !(den > 0.0) {
                est.skipped.push(m.id.clone());
                continue;
            }
            let ratio = num / den;
            est.member_ratios.push((m.id.clone(), ratio));
            if ratio > est.ratio || est.witness.is_empty() {
                est.ratio = est.ratio.max(ratio);
                est.witness = m.id.clone();
            }
        }
        Ok(est)
    }

    fn setup(&self, mode: Mode) -> TestingSetup<'_> {
        TestingSetup { domain: &self.domain, u: &self.u, sigma: &self.sigma, exps: self.exps, beta: self.cfg.beta, mode }
    }

    pub fn sigma_doubling(&self, beta: Beta) -> Hypothesis {
        let fam = CubeFamily::local(&self.domain, beta, &self.cfg.bank.sides, 1);
        Hypothesis::below("sigma in D_beta", doubling_constant(&self.sigma, &self.domain, beta, &fam).constant, self.cfg.tolerances.doubling_cap)
    }

    pub fn u_doubling(&self, beta: Beta) -> Hypothesis {
        let fam = CubeFamily::local(&self.domain, beta, &self.cfg.bank.sides, 1);
        Hypothesis::below("u in D_beta", doubling_constant(&self.u, &self.domain, beta, &fam).constant, self.cfg.tolerances.doubling_cap)
    }

    /// `sigma in A_infinity^beta`: the envelope fit must reach `delta >= ainfty_min_delta`.
    pub fn sigma_ainfty(&self) -> (Hypothesis, f64, f64) {
        let r = ainfty_estimate(&self.sigma, &self.testing, &mut stream(self.cfg.seed, 4), self.cfg.tolerances.ainfty_c_cap);
        let (c, delta) = (r.aux["c"], r.aux["delta"]);
        let h = Hypothesis {
            name: "sigma in A_infinity^beta".into(),
            measured: delta,
            cap: self.cfg.tolerances.ainfty_min_delta,
            met: c.is_finite() && delta >= self.cfg.tolerances.ainfty_min_delta,
        };
        (h, c, delta)
    }

    fn apq(&self, beta: Beta) -> Result<(f64, CubeFamily)> {
        let fam = if beta == self.cfg.beta {
            self.testing.clone()
        } else {
            CubeFamily::local(&self.domain, beta, &self.cfg.bank.sides, 1)
        };
        Ok((apq_constant(&self.u, &self.sigma, self.exps, &fam, true)?.constant, fam))
    }

    fn report(&self, name: &str) -> Report {
        Report::new(name, &self.cfg.hash(), self.cfg.seed)
    }

    fn le(&self, a: f64, b: f64) -> bool {
        a <= b * (1.0 + self.cfg.tolerances.relative)
    }

    /// Lower bound of `||M (sigma chi_Q)||_(L^q(u)) / ||sigma chi_Q||_(L^p(v))` read off from
    /// cubes that contain `Q` and are candidates at every node of `Q`.
    pub fn necessity_bound(&self, q: &Cube, mode: Mode) -> Result<f64> {
        let g = self.domain.grid();
        let dim = g.dim();
        let b = q.as_grid_box(g).ok_or_else(|| Error::Usage("testing cube is not grid-aligned".into()))?;
        let k = b.hi[0] - b.lo[0];
        let sq = mass(&self.sigma, q);
        if !(sq > 0.0) {
            return Ok(0.0);
        }
        let hn = g.cell_volume();
        let beta = self.cfg.beta;
        let mut acc = 0.0;
        match mode {
            Mode::Uncentered => {
                let cells = g.cells();
                let sides = lattice_sides(&self.cfg.lattice, false, (0..dim).map(|a| cells[a]).min().unwrap());
                if !sides.contains(&k) || !box_in_family(&b, beta, &self.domain) {
                    return Ok(0.0);
                }
                let avg = sq / q.volume();
                acc = avg.powf(self.exps.q) * mass(&self.u, q);
            }
            Mode::Centered => {
                let cells = g.cells();
                let max_side = (0..dim).map(|a| cells[a]).min().unwrap();
                let sides = lattice_sides(&self.cfg.lattice, true, max_side);
                for x in b.cells() {
                    let reach = (0..dim).map(|a| (x[a] - b.lo[a]).max(b.hi[a] - 1 - x[a])).max().unwrap();
                    let found = sides.iter().copied().filter(|&s| s > 2 * reach).find(|&s| {
                        let r = (s - 1) / 2;
                        (0..dim).all(|a| x[a] >= r && x[a] + r < cells[a]) && {
                            let mut lo = [0; MAX_DIM];
                            for a in 0..dim {
                                lo[a] = x[a] - r;
                            }
                            box_in_family(&GridBox::cube(dim, lo, s), beta, &self.domain)
                        }
                    });
                    if let Some(s) = found {
                        let avg = sq / ((s as f64).powi(dim as i32) * hn);
                        acc += avg.powf(self.exps.q) * self.u.sample(x) * hn;
                    }
                }
            }
            _ => return Err(Error::Usage("necessity bound is defined for the uncentered and centered modes".into())),
        }
        Ok(acc.powf(1.0 / self.exps.q) / sq.powf(1.0 / self.exps.p))
    }
}

/// Sawyer testing constant against the uncentered norm.
pub fn verify_theorem2(exp: &Experiment) -> Result<Report> {
    let mut r = exp.report("theorem2");
    let dbl = exp.sigma_doubling(exp.cfg.beta);
    let norm = exp.estimate_operator_norm(Mode::Uncentered)?;
    let saw = sawyer_testing_constant(&exp.setup(Mode::Uncentered), &exp.cfg.lattice, &exp.testing)?;
    r.measure("norm", norm.ratio);
    r.measure("testing", saw.constant);
    r.measure("bank_size", norm.bank_size as f64);
    r.checks.push(
        Check::assert("testing constant <= norm estimate", exp.le(saw.constant, norm.ratio), format!("witness {}", norm.witness))
            .with("testing", saw.constant)
            .with("norm", norm.ratio),
    );
    let gap = norm.ratio / saw.constant;
    r.measure("gap", gap);
    r.checks.push(Check::gated("norm / testing finite", &[&dbl], gap.is_finite(), "converse gap").with("gap", gap));
    r.hypotheses.push(dbl);
    Ok(r)
}

/// `A_(p,q)^beta` necessity through `f = sigma chi_Q` and sufficiency ratios, for the
/// uncentered and the centered operator.
pub fn verify_theorem3_and_4(exp: &Experiment) -> Result<Report> {
    let mut r = exp.report("theorem3_and_4");
    let ud = exp.u_doubling(exp.cfg.beta);
    let (ainf, c, delta) = exp.sigma_ainfty();
    r.measure("ainfty_c", c);
    r.measure("ainfty_delta", delta);
    let (apq, _) = exp.apq(exp.cfg.beta)?;
    r.measure("apq", apq);
    for (mode, label, hyps) in [(Mode::Uncentered, "uncentered", vec![&ud, &ainf]), (Mode::Centered, "centered", vec![&ainf])] {
        let norm = exp.estimate_operator_norm(mode)?;
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for q in &exp.testing.cubes {
            let lb = exp.necessity_bound(q, mode)?;
            worst = worst.max(lb);
            if !exp.le(lb, norm.ratio) {
                violations += 1;
            }
        }
        r.measure(&format!("{label}_norm"), norm.ratio);
        r.measure(&format!("{label}_necessity"), worst);
        r.checks.push(
            Check::assert(&format!("{label}: sigma chi_Q necessity"), violations == 0, format!("{violations} violations over {} cubes", exp.testing.len()))
                .with("necessity", worst)
                .with("norm", norm.ratio),
        );
        let ratio = norm.ratio / apq.powf(1.0 / exp.exps.p);
        r.measure(&format!("{label}_sufficiency_ratio"), ratio);
        r.checks.push(Check::gated(&format!("{label}: norm / A_pq^(1/p) finite"), &hyps, ratio.is_finite(), "sufficiency ratio").with("ratio", ratio));
    }
    // M_beta <= 2^n M_gamma^c + M_(beta/4, beta] per bank member, dense lattice
    let beta = exp.cfg.beta;
    let gamma = beta.div_int(4)?.centered_companion()?;
    let cn = 2f64.powi(exp.domain.dim() as i32);
    let mut chain_bad = 0;
    let mut chain_ratio: f64 = 0.0;
    for m in &exp.bank {
        let (full, den) = exp.member_norms(&m.field, beta, Mode::Uncentered, &Lattice::Dense)?;
        if !(den > 0.0) {
            continue;
        }
        let (cen, _) = exp.member_norms(&m.field, gamma, Mode::Centered, &Lattice::Dense)?;
        let (tr, _) = exp.member_norms(&m.field, beta, Mode::Truncated, &Lattice::Dense)?;
        let rhs = cn * cen + tr;
        if !exp.le(full, rhs) {
            chain_bad += 1;
        }
        if rhs > 0.0 {
            chain_ratio = chain_ratio.max(full / rhs);
        }
    }
    r.measure("chain_ratio", chain_ratio);
    r.checks.push(
        Check::assert("||M_beta f|| <= 2^n ||M_gamma^c f|| + ||M_(beta/4,beta] f||", chain_bad == 0, format!("{chain_bad} violations"))
            .with("max_ratio", chain_ratio),
    );
    r.hypotheses.push(ud);
    r.hypotheses.push(ainf);
    Ok(r)
}

/// Truncated operator bounds.
pub fn verify_prop45(exp: &Experiment) -> Result<Report> {
    let mut r = exp.report("prop45");
    let (apq, _) = exp.apq(exp.cfg.beta)?;
    let hyp_a = Hypothesis::below("A_pq^beta finite", apq, exp.cfg.tolerances.apq_cap);
    let dbl = exp.sigma_doubling(exp.cfg.beta);
    let tr = exp.estimate_operator_norm(Mode::Truncated)?;
    let un = exp.estimate_operator_norm(Mode::Uncentered)?;
    let per_member_ok = tr.member_ratios.iter().zip(&un.member_ratios).all(|((_, a), (_, b))| exp.le(*a, *b));
    r.checks.push(Check::assert("truncated <= uncentered per member", per_member_ok, "candidate subset").with("truncated", tr.ratio).with("uncentered", un.ratio));
    // truncated candidates are never in F_(beta/4)
    let quarter = exp.cfg.beta.div_int(4)?;
    let g = exp.domain.grid();
    let dim = g.dim();
    let sides = lattice_sides(&exp.cfg.lattice, false, (0..dim).map(|a| g.cells()[a]).min().unwrap());
    let mut overlap = 0usize;
    let mut truncated = 0usize;
    for &k in &sides {
        let cells = g.cells();
        let mut hi = [1; MAX_DIM];
        for a in 0..dim {
            hi[a] = cells[a] + 1 - k;
        }
        for lo in (GridBox { lo: [0; MAX_DIM], hi }).cells() {
            let b = GridBox::cube(dim, lo, k);
            if box_in_family(&b, exp.cfg.beta, &exp.domain) && !box_in_family(&b, quarter, &exp.domain) {
                truncated += 1;
                let q = Cube::from_grid_box(g, &b);
                if crate::cube::in_family_exact(&q, quarter, &exp.domain) {
                    overlap += 1;
                }
            }
        }
    }
    r.checks.push(Check::assert("truncated candidates avoid F_(beta/4)", overlap == 0, format!("{truncated} truncated candidates")));
    let cmp = tr.ratio / apq.powf(1.0 / exp.exps.p);
    r.measure("truncated_norm", tr.ratio);
    r.measure("apq", apq);
    r.measure("comparison", cmp);
    r.checks.push(Check::gated("truncated norm / A_pq^(1/p) finite", &[&hyp_a, &dbl], cmp.is_finite(), "comparison constant").with("comparison", cmp));
    r.hypotheses.push(hyp_a);
    r.hypotheses.push(dbl);
    Ok(r)
}

/// `k` with `2^(k-1) < beta/alpha <= 2^k`.
pub fn dilation_steps(alpha: Beta, beta: Beta) -> u32 {
    let ratio = beta.ratio() / alpha.ratio();
    (0..64).find(|&k| ratio <= num_rational::Ratio::from_integer(1i64 << k)).unwrap()
}

/// Constants at `alpha < beta` against the doubling-predicted factor.
pub fn verify_beta_independence(exp: &Experiment, alpha: Beta) -> Result<Report> {
    let beta = exp.cfg.beta;
    if alpha >= beta {
        return Err(Error::Usage(format!("need alpha < beta, got {alpha} and {beta}")));
    }
    let mut r = exp.report("beta_independence");
    let ud = exp.u_doubling(alpha);
    let sd = exp.sigma_doubling(alpha);
    let (a_alpha, _) = exp.apq(alpha)?;
    let fam_beta = CubeFamily::local(&exp.domain, beta, &exp.cfg.bank.sides, 1);
    let a_beta = apq_constant(&exp.u, &exp.sigma, exp.exps, &fam_beta, true)?.constant;
    let k = dilation_steps(alpha, beta) as i32;
    let factor = ud.measured.powi(k).powf(exp.exps.p / exp.exps.q) * sd.measured.powi(k).powf(exp.exps.p - 1.0);
    r.measure("apq_alpha", a_alpha);
    r.measure("apq_beta", a_beta);
    r.measure("k", k as f64);
    r.measure("predicted_factor", factor);
    r.checks.push(Check::assert("A_alpha <= A_beta", exp.le(a_alpha, a_beta), "family inclusion"));
    r.checks.push(
        Check::gated("A_beta <= factor * A_alpha", &[&ud, &sd], exp.le(a_beta, factor * a_alpha), format!("k = {k}"))
            .with("ratio", a_beta / a_alpha)
            .with("factor", factor),
    );
    r.hypotheses.push(ud);
    r.hypotheses.push(sd);
    Ok(r)
}

/// Reverse Hoelder improvement of the exponent pair.
pub fn verify_self_improvement(exp: &Experiment) -> Result<Report> {
    let mut r = exp.report("self_improvement");
    let tol = &exp.cfg.tolerances;
    let rh = reverse_holder_exponent(&exp.sigma, &exp.testing, tol.rhi_cap)?;
    let hyp = Hypothesis::below("sigma reverse Hoelder", rh.constant, tol.rhi_cap);
    let eps = match rh.aux.get("epsilon") {
        Some(&e) => e,
        None => {
            r.checks.push(Check::gated("improved A_pq finite", &[&hyp], false, "no epsilon passes the cap"));
            r.hypotheses.push(hyp);
            return Ok(r);
        }
    };
    let (delta, pt, qt) = improved_exponents(exp.exps, eps);
    r.measure("epsilon", eps);
    r.measure("delta", delta);
    r.measure("p_tilde", pt);
    r.measure("q_tilde", qt);
    let ident = (pt / qt - exp.exps.p / exp.exps.q).abs();
    r.checks.push(Check::assert("p~/q~ = p/q", ident <= 1e-12, "exponent identity").with("error", ident));
    let sigma_t = exp.sigma.map(|s| s.powf(1.0 + eps))?;
    let dual_t = dual_weight(&exp.v, pt, tol.floor)?;
    let nodewise = sigma_t
        .samples()
        .iter()
        .zip(dual_t.samples())
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) })
        .fold(0.0, f64::max);
    r.checks.push(Check::assert("sigma^(1+eps) = v^(-1/(p~-1))", nodewise <= 1e-12, "nodewise").with("relative_error", nodewise));
    let improved = ExponentPair::new(pt, qt)?;
    let mut worst: f64 = 0.0;
    for q in &exp.testing.cubes {
        worst = worst.max(apq_value(&exp.u, &sigma_t, improved, q));
    }
    r.measure("apq_improved", worst);
    r.checks.push(Check::gated("improved A_pq finite", &[&hyp], worst.is_finite() && worst < tol.apq_cap, "below the configured cap").with("apq", worst));
    r.hypotheses.push(hyp);
    Ok(r)
}

/// The three finite-union quantities, reported jointly (requires `p = q`).
pub fn verify_finite_unions(exp: &Experiment) -> Result<Report> {
    let mut r = exp.report("finite_unions");
    if exp.exps.p != exp.exps.q {
        let h = Hypothesis { name: "p = q".into(), measured: exp.exps.q - exp.exps.p, cap: 0.0, met: false };
        r.checks.push(Check::gated("finite-union quantities finite", &[&h], false, "needs p = q"));
        r.hypotheses.push(h);
        return Ok(r);
    }
    let fu = finite_union_testing_constant(&exp.setup(Mode::Uncentered), &exp.cfg.lattice, &exp.unions, "sampled unions of testing cubes")?;
    let norm = exp.estimate_operator_norm(Mode::Uncentered)?;
    let weighted = fu.aux["weighted_operator_norm_lower"];
    r.measure("union_testing", fu.constant);
    r.measure("weighted_norm_lower", weighted);
    r.measure("norm", norm.ratio);
    let all = fu.constant.is_finite() && weighted.is_finite() && norm.ratio.is_finite();
    r.checks.push(Check::assert("finite-union quantities finite", all, format!("{} unions", exp.unions.len())));
    r.checks.push(Check::assert("union testing <= norm^p", exp.le(fu.constant, norm.ratio.powf(exp.exps.p)), "necessity"));
    Ok(r)
}

/// Runs every experiment on one configuration.
pub fn verify_all(exp: &Experiment) -> Result<Vec<Report>> {
    let beta = exp.cfg.beta;
    let mut out = vec![verify_theorem2(exp)?, verify_theorem3_and_4(exp)?, verify_prop45(exp)?];
    out.push(verify_beta_independence(exp, Beta::from_ratio(beta.ratio() / 2)?)?);
    out.push(verify_self_improvement(exp)?);
    out.push(verify_finite_unions(exp)?);
    Ok(out)
}

/// Point where the default power pair is centered.
pub fn default_center(domain: &Domain) -> Vec<f64> {
    match domain.kind() {
        DomainKind::PuncturedSpace { center } => center.clone(),
        DomainKind::BoxAnnulus { inner_lo, inner_hi, .. } => inner_lo.iter().zip(inner_hi).map(|(a, b)| (a + b) / 2.0).collect(),
        _ => vec![0.0; domain.dim()],
    }
}

/// Summary row of one experiment configuration (used by sweeps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub domain: String,
    pub cells: usize,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub norm: f64,
    pub testing: f64,
    pub apq: f64,
    pub gap: f64,
    pub status: Status,
}

/// Norm, testing constant and the `A_(p,q)` constant summarised for one configuration.
pub fn sweep_row(name: &str, exp: &Experiment) -> Result<(SweepRow, Report)> {
    let rep = verify_theorem2(exp)?;
    let (apq, _) = exp.apq(exp.cfg.beta)?;
    let cells = exp.domain.grid().cells()[0];
    let row = SweepRow {
        domain: name.into(),
        cells,
        beta: exp.cfg.beta.value(),
        p: exp.exps.p,
        q: exp.exps.q,
        norm: rep.measurements["norm"],
        testing: rep.measurements["testing"],
        apq,
        gap: rep.measurements["gap"],
        status: rep.status(),
    };
    Ok((row, rep))
}

/// Flattened measurements of several reports.
pub fn merged_measurements(reports: &[Report]) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for r in reports {
        for (k, v) in &r.measurements {
            m.insert(format!("{}.{}", r.experiment, k), *v);
        }
    }
    m
}
