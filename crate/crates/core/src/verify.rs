//! The acceptance checks, grouped into suites. Each check reports pass/fail
//! with a one-line detail; a check that errors counts as a failure.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bernstein::{corollary_bound, BernsteinPoly, GAP_GRID};
use crate::demand::{
    build_tree, example2_path, sample_gp_path, Demand, DemandPath, GpModel, ProbRule, StepDemand, TimeGrid, TreeSpec,
    ValueRule,
};
use crate::feasible::{check, FeasibleSet, Layout, Policy, ProjectOptions};
use crate::oracle::{augmented_lagrangian_projection, random_feasible_policy};
use crate::poa::{
    corollary1_poa, lower_bound_value, poa_linear, quadratic_poa_from_k, sweep_axis, sweep_monomial, theorem2_poa,
    theorem5_instance, PoaCase, SWEEP_MARGIN,
};
use crate::prices::PriceFunction;
use crate::solvers::{
    brute_force_policy, certificate_linear, k_lower_bound, k_star_quadratic, rev, solve_cb_averaging, solve_cb_linear,
    solve_dcb_linear, solve_dcb_step, wel, Battery, CertificateOptions, Objective, StepOptions,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} [{:>2}] {}: {} ({:.1}s)",
            self.id, self.name, self.detail, self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Linear,
    Monomial,
    Counterexample,
    Bernstein,
    Stochastic,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["all", "linear", "monomial", "counterexample", "bernstein", "stochastic"];

    pub fn ids(self) -> &'static [u8] {
        match self {
            Suite::All => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
            Suite::Linear => &[1, 2, 3, 10],
            Suite::Monomial => &[4, 5, 6, 11],
            Suite::Counterexample => &[7],
            Suite::Bernstein => &[8],
            Suite::Stochastic => &[9],
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "all" => Suite::All,
            "linear" => Suite::Linear,
            "monomial" => Suite::Monomial,
            "counterexample" => Suite::Counterexample,
            "bernstein" => Suite::Bernstein,
            "stochastic" => Suite::Stochastic,
            _ => {
                return Err(format!(
                    "unknown suite {s:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                ))
            }
        })
    }
}

pub const CHECK_NAMES: [&str; 11] = [
    "example 2 reproduction",
    "linear universality",
    "linear tightness",
    "quadratic step supremum",
    "monomial upper bound",
    "monomial lower-bound family",
    "counterexample ladder",
    "lifted counterexample",
    "scenario tree linear",
    "oracle equivalence",
    "numeric lemmas",
];

/// Runs one check by id (1-based).
pub fn run_check(id: u8) -> Check {
    let start = Instant::now();
    let outcome = match id {
        1 => example2(),
        2 => linear_universality(),
        3 => linear_tightness(),
        4 => quadratic_step(),
        5 => monomial_upper(),
        6 => monomial_lower(),
        7 => counterexample_ladder(),
        8 => lifted_counterexample(),
        9 => scenario_tree(),
        10 => oracle_equivalence(),
        11 => numeric_lemmas(),
        _ => Err(format!("no check {id}").into()),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        id,
        name: CHECK_NAMES
            .get(usize::from(id).wrapping_sub(1))
            .copied()
            .unwrap_or("unknown"),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    suite.ids().iter().map(|&id| run_check(id)).collect()
}

/// Collects failed conditions; the check passes when none fail.
#[derive(Default)]
struct Tally {
    fails: Vec<String>,
}

impl Tally {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.fails.push(what());
        }
    }

    fn finish(self, summary: String) -> Outcome {
        if self.fails.is_empty() {
            Ok((true, summary))
        } else {
            let shown: Vec<&str> = self.fails.iter().take(3).map(String::as_str).collect();
            Ok((
                false,
                format!("{summary}; {} failure(s): {}", self.fails.len(), shown.join("; ")),
            ))
        }
    }
}

fn example2() -> Outcome {
    let d: Demand = example2_path(TimeGrid::new(2000)?).into();
    let p = PriceFunction::linear(2.0, 0.0)?;
    let set = FeasibleSet::default();
    let rep = poa_linear(&d, &set, 2.0, 0.0, &ProjectOptions::default())?;
    let rev_cb = rev(&rep.cb.policy, &d, &p)?;
    let mut t = Tally::default();
    t.require((rep.cb.wel - 0.5).abs() <= 1e-3, || format!("WEL_CB {}", rep.cb.wel));
    t.require((rep.dcb.wel - 0.375).abs() <= 1e-3, || {
        format!("WEL_DCB {}", rep.dcb.wel)
    });
    t.require((rep.poa.ratio() - 4.0 / 3.0).abs() <= 5e-3, || {
        format!("PoA {}", rep.poa.ratio())
    });
    t.require(rev_cb.abs() <= 1e-3, || format!("REV at CB {rev_cb}"));
    t.finish(format!(
        "WEL_CB={:.6} WEL_DCB={:.6} PoA={:.6} REV(B_CB)={:.2e}",
        rep.cb.wel,
        rep.dcb.wel,
        rep.poa.ratio(),
        rev_cb
    ))
}

/// Grid sizes for the randomized linear instances; every probe runs a full
/// projection, so these stay small.
const UNIVERSALITY_GRIDS: [usize; 3] = [8, 12, 16];

/// When both batteries land on nearly the same point the PoA is a ratio of
/// two almost equal small numbers, so the lower bound of 1 needs a tighter
/// stopping rule than the default.
const UNIVERSALITY_PROJECTION: ProjectOptions = ProjectOptions {
    tol: 1e-12,
    max_iter: None,
};

pub(crate) fn random_linear_instance(
    i: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Demand, FeasibleSet, f64, f64), Box<dyn std::error::Error + Send + Sync>> {
    let n = UNIVERSALITY_GRIDS[rng.random_range(0..UNIVERSALITY_GRIDS.len())];
    let demand: Demand = match i % 3 {
        0 => StepDemand::new(rng.random(), rng.random(), rng.random_range(0.05..0.95))?.into(),
        1 => {
            let base = rng.random_range(0.2..0.8);
            let amp = rng.random_range(0.0..1.0) * f64::min(base, 1.0 - base);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = f64::from(rng.random_range(1..=3u8));
            DemandPath::from_fn(
                TimeGrid::new(n)?,
                |t| base + amp * (std::f64::consts::TAU * freq * t + phase).sin(),
                0.0,
                1.0,
            )?
            .into()
        }
        _ => {
            let model = GpModel::with_length_scale(rng.random_range(0.05..0.5));
            sample_gp_path(model, TimeGrid::new(n)?, rng.random())?.path.into()
        }
    };
    let layout = Layout::of(&demand);
    let min = layout.demand.iter().copied().fold(f64::INFINITY, f64::min);
    let max = layout.demand.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let set = FeasibleSet {
        net_box: Some((min * rng.random::<f64>(), max + (1.0 - max) * rng.random::<f64>())),
        power: rng.random_bool(0.5).then(|| rng.random_range(0.005..0.5)),
        capacity: rng.random_bool(0.5).then(|| rng.random_range(0.005..0.2)),
        ramp: rng.random_bool(0.5).then(|| rng.random_range(0.5..20.0)),
    };
    Ok((demand, set, rng.random_range(0.1..5.0), rng.random_range(0.0..2.0)))
}

fn linear_universality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut t = Tally::default();
    let (mut sup, mut inf, mut worst_res) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut unity = 0;
    for i in 0..200 {
        let (d, set, a, b) = random_linear_instance(i, &mut rng)?;
        let rep = poa_linear(&d, &set, a, b, &UNIVERSALITY_PROJECTION)?;
        let r = rep.poa.ratio();
        if rep.poa.case == PoaCase::Unity {
            unity += 1;
        }
        sup = sup.max(r);
        inf = inf.min(r);
        t.require(r <= 4.0 / 3.0 + 1e-3, || format!("instance {i}: PoA {r}"));
        t.require(r >= 1.0 - 1e-9, || format!("instance {i}: PoA {r}"));
        t.require(rep.cb.converged && rep.dcb.converged, || {
            format!("instance {i}: projection did not converge")
        });
        for (which, res, other) in [(Battery::Cb, &rep.cb, &rep.dcb), (Battery::Dcb, &rep.dcb, &rep.cb)] {
            let copts = CertificateOptions {
                seed: i as u64,
                extra: vec![other.policy.clone()],
                ..Default::default()
            };
            let residual = certificate_linear(res, &d, &set, which, &copts)?;
            worst_res = worst_res.max(residual);
            t.require(residual <= 1e-6, || {
                format!("instance {i} {which:?}: residual {residual}")
            });
        }
    }
    t.finish(format!(
        "200 instances, PoA in [{inf:.6}, {sup:.6}] ({unity} unity), worst certificate residual {worst_res:.2e}"
    ))
}

fn linear_tightness() -> Outcome {
    let f = theorem5_instance(1, 1e-3)?;
    let r = f.poa.ratio();
    let mut t = Tally::default();
    t.require(r >= 4.0 / 3.0 - 5e-3, || format!("PoA {r}"));
    t.finish(format!("d=1 eps=1e-3 PoA={r:.6}"))
}

fn quadratic_step() -> Outcome {
    let mut t = Tally::default();
    let table = sweep_monomial(2, 100, 100)?;
    let (sup, _) = table.supremum.ok_or("no finite cells")?;
    t.require(sup <= 27.0 / 19.0 + 1e-6, || format!("supremum {sup}"));
    let corner = table
        .cells
        .iter()
        .find(|c| c.x == Some(SWEEP_MARGIN) && c.eps == Some(SWEEP_MARGIN))
        .ok_or("corner cell missing")?;
    let corner_poa = corner.poa.ratio();
    t.require((corner_poa - 27.0 / 19.0).abs() <= 1e-3, || {
        format!("corner PoA {corner_poa}")
    });

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let price = PriceFunction::monomial(3.0, 2)?;
    let (mut worst_k, mut worst_id) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let x = rng.random_range(1e-3..0.999);
        let eps = rng.random_range(1e-3..=1.0);
        let closed = k_star_quadratic(x, eps)?;
        let grid = solve_dcb_step(&StepDemand::from_params(x, eps)?, &price, &StepOptions::default())?;
        let Policy::ScalarK { k } = grid.policy else {
            return Err("step solve returned no k".into());
        };
        worst_k = worst_k.max((k - closed).abs());
        let id = x * (3.0 * closed * closed - 1.0) - (1.0 - eps * x) * (3.0 * closed * closed - 4.0 * closed + 1.0);
        worst_id = worst_id.max(id.abs());
    }
    t.require(worst_k <= 1e-6, || format!("closed vs grid k* {worst_k}"));
    t.require(worst_id <= 1e-9, || format!("identity residual {worst_id}"));
    t.finish(format!(
        "sup={sup:.9} (27/19={:.9}), corner={corner_poa:.6}, max |k*-grid|={worst_k:.1e}, identity={worst_id:.1e}",
        27.0 / 19.0
    ))
}

fn monomial_upper() -> Outcome {
    let mut t = Tally::default();
    let mut sups = String::new();
    let mut worst_gap = f64::NEG_INFINITY;
    for d in 1..=8u32 {
        let table = sweep_monomial(d, 60, 60)?;
        let (sup, _) = table.supremum.ok_or("no finite cells")?;
        t.require(sup <= 2.0 + 1e-6, || format!("d={d}: supremum {sup}"));
        for c in &table.cells {
            let (x, k) = (c.x.unwrap_or(f64::NAN), c.k_star.unwrap_or(f64::NAN));
            let lb = k_lower_bound(x, d)?;
            worst_gap = worst_gap.max(lb - k);
            t.require(lb <= k + 1e-6, || format!("d={d} x={x}: k_lower {lb} > k* {k}"));
        }
        let _ = write!(sups, "{}{d}:{sup:.4}", if d > 1 { " " } else { "" });
        let flagged = table.flagged().count();
        if flagged > 0 {
            let _ = write!(sups, "({flagged} flagged)");
        }
    }
    t.finish(format!("sup by d [{sups}], max(k_lower - k*)={worst_gap:.1e}"))
}

fn monomial_lower() -> Outcome {
    let mut t = Tally::default();
    let eps = 1e-3;
    let mut worst_margin = f64::INFINITY;
    for d in 1..=10u32 {
        let f = theorem5_instance(d, eps)?;
        let bound = (1.0 - eps.powi(d as i32)) / (1.0 - (f64::from(d) / f64::from(d + 1)).powi(d as i32 + 1));
        let r = f.poa.ratio();
        worst_margin = worst_margin.min(r - bound);
        t.require(r >= bound - 1e-6, || format!("d={d}: PoA {r} < {bound}"));
        let cap = 1.0 / f64::from(d + 1);
        t.require(f.x_star <= cap + 1e-6, || format!("d={d}: x* {} > {cap}", f.x_star));
    }
    let e = std::f64::consts::E;
    let big = lower_bound_value(10_000)?;
    t.require((big - e / (e - 1.0)).abs() <= 1e-4, || {
        format!("lower_bound_value(1e4) {big}")
    });
    let mut prev = 0.0;
    for d in 1..=10_000u64 {
        let v = lower_bound_value(d)?;
        t.require(v >= prev, || format!("lower_bound_value decreases at d={d}"));
        prev = v;
    }
    t.finish(format!(
        "d=1..10 min(PoA - bound)={worst_margin:.2e}, lower_bound_value(1e4)={big:.6}"
    ))
}

fn counterexample_ladder() -> Outcome {
    let mut t = Tally::default();
    let mut last = f64::NEG_INFINITY;
    let mut row = String::new();
    for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
        let f = theorem2_poa(delta)?;
        let r = f.poa.ratio();
        let want = delta - delta * delta;
        t.require((f.x_star - want).abs() <= 1e-4, || {
            format!("delta={delta}: x* {} vs {want}", f.x_star)
        });
        t.require(r >= f.bound - 1e-6, || {
            format!("delta={delta}: PoA {r} < bound {}", f.bound)
        });
        t.require(r > last, || format!("delta={delta}: PoA {r} not above {last}"));
        last = r;
        let _ = write!(
            row,
            "{}{delta:e}:{r:.4}>={:.4}",
            if row.is_empty() { "" } else { " " },
            f.bound
        );
    }
    t.require(last > 5.9, || format!("PoA(1e-4) {last}"));
    t.finish(format!("PoA vs bound [{row}]"))
}

fn lifted_counterexample() -> Outcome {
    let (delta, eps_target) = (0.01, 0.01);
    let mut t = Tally::default();
    let source = PriceFunction::counterexample(delta)?;
    let lifted = corollary1_poa(delta, eps_target)?;
    let bn = BernsteinPoly::from_price(&source, lifted.degree)?;
    let b2n = BernsteinPoly::from_price(&source, 2 * lifted.degree)?;
    let report = PriceFunction::Bernstein(bn.clone()).validate();
    t.require(report.is_valid(), || {
        format!("lifted price fails validation: {:?}", report.first_violation)
    });
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=GAP_GRID {
        let z = i as f64 / GAP_GRID as f64;
        let (a, b, p) = (bn.eval(z)?, b2n.eval(z)?, source.price(z)?);
        worst = worst.max(b - a).max(p - b);
    }
    t.require(worst <= 1e-9, || format!("ordering violated by {worst}"));
    let bound = corollary_bound(delta)?;
    let r = lifted.family.poa.ratio();
    t.require(r >= bound - 1e-6, || format!("PoA {r} < {bound}"));
    t.finish(format!(
        "degree {}, gap {:.2e}, max ordering violation {worst:.1e}, PoA={r:.4} >= {bound:.4}, x*={:.5}",
        lifted.degree, lifted.gap, lifted.family.x_star
    ))
}

fn scenario_tree() -> Outcome {
    let mut t = Tally::default();
    let p = PriceFunction::linear(1.0, 0.0)?;
    let (mut sup, mut worst_diff, mut worst_per) = (0.0_f64, 0.0_f64, 0.0_f64);
    let cases = [
        (ProbRule::Uniform, None),
        (ProbRule::Random, None),
        (ProbRule::Uniform, Some(0.1)),
        (ProbRule::Random, Some(0.05)),
    ];
    for (seed, (probs, power)) in cases.into_iter().enumerate() {
        let spec = TreeSpec {
            depth: 3,
            branching: 2,
            values: ValueRule::UpDown { start: 0.5, step: 0.2 },
            probs,
        };
        let d: Demand = build_tree(&spec, seed as u64)?.into();
        let set = FeasibleSet {
            power,
            ..Default::default()
        };
        let rep = poa_linear(&d, &set, 1.0, 0.0, &ProjectOptions::default())?;
        let r = rep.poa.ratio();
        sup = sup.max(r);
        t.require(r <= 4.0 / 3.0 + 1e-6, || format!("tree {seed}: PoA {r}"));

        let layout = Layout::of(&d);
        let half: Vec<f64> = layout.demand.iter().map(|v| 0.5 * v).collect();
        let oracle = augmented_lagrangian_projection(&d, &set, &half)?;
        let dcb = solve_dcb_linear(&d, &p, &set, &ProjectOptions::default())?
            .policy
            .to_vector(&d)?;
        let diff: Vec<f64> = dcb.iter().zip(&oracle.point).map(|(a, b)| a - b).collect();
        let dist = layout.norm(&diff);
        worst_diff = worst_diff.max(dist);
        t.require(dist <= 1e-4, || format!("tree {seed}: oracle distance {dist}"));
        for res in [&rep.cb, &rep.dcb] {
            let per = check(&res.policy, &d, &set, 1e-8)?.periodicity;
            worst_per = worst_per.max(per);
            t.require(per <= 1e-8, || format!("tree {seed}: periodicity residual {per}"));
        }
    }
    t.finish(format!(
        "4 depth-3 binary trees, max PoA={sup:.6}, max oracle distance={worst_diff:.1e}, max periodicity residual={worst_per:.1e}"
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0_f64;
    for i in 0..10 {
        let values: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d: Demand = DemandPath::unit(values)?.into();
        let set = FeasibleSet::with_box(min * rng.random::<f64>(), max + (1.0 - max) * rng.random::<f64>());
        let p = PriceFunction::linear(rng.random_range(0.5..3.0), rng.random_range(0.0..1.0))?;
        let cb = solve_cb_linear(&d, &p, &set, &ProjectOptions::default())?;
        let dcb = solve_dcb_linear(&d, &p, &set, &ProjectOptions::default())?;
        let bf_w = brute_force_policy(&d, &p, &set, 200, Objective::Wel)?;
        let bf_r = brute_force_policy(&d, &p, &set, 200, Objective::Rev)?;
        let (dw, dr) = ((cb.wel - bf_w.wel).abs(), (dcb.rev - bf_r.rev).abs());
        worst = worst.max(dw).max(dr);
        t.require(dw <= 2e-2, || format!("instance {i}: WEL gap {dw}"));
        t.require(dr <= 2e-2, || format!("instance {i}: REV gap {dr}"));
    }

    let mut min_margin = f64::INFINITY;
    for i in 0..20 {
        let d: Demand = if i % 4 == 3 {
            StepDemand::new(rng.random(), rng.random(), rng.random_range(0.05..0.95))?.into()
        } else {
            let n = rng.random_range(3..40);
            DemandPath::unit((0..n).map(|_| rng.random()).collect())?.into()
        };
        let price = match i % 3 {
            0 => PriceFunction::linear(rng.random_range(0.5..3.0), rng.random_range(0.0..1.0))?,
            1 => PriceFunction::monomial(rng.random_range(0.5..3.0), rng.random_range(1..=5))?,
            _ => PriceFunction::counterexample(rng.random_range(0.01..0.4))?,
        };
        let set = FeasibleSet::unconstrained();
        let best = solve_cb_averaging(&d, &price, &set)?.wel;
        for _ in 0..10_000 {
            let b = random_feasible_policy(&d, &set, &mut rng)?;
            let w = wel(&b, &d, &price)?;
            min_margin = min_margin.min(best - w);
            t.require(w <= best + 1e-12, || {
                format!("instance {i}: random policy WEL {w} > {best}")
            });
        }
    }
    t.finish(format!(
        "n=3 lattice max gap={worst:.2e}; averaging beats 2e5 random policies, min margin={min_margin:.2e}"
    ))
}

/// Relative slack for comparing φ values.
const PHI_SLACK: f64 = 1e-10;

fn numeric_lemmas() -> Outcome {
    let mut t = Tally::default();
    let axis = sweep_axis(20, SWEEP_MARGIN);
    let ks: Vec<f64> = (0..20).map(|j| 0.01 + 0.99 * j as f64 / 19.0).collect();
    let phi =
        |x: f64, eps: f64, k: f64, price: &PriceFunction| -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
            let d: Demand = StepDemand::from_params(x, eps)?.into();
            Ok(wel(&Policy::ScalarK { k: 1.0 }, &d, price)? / wel(&Policy::ScalarK { k }, &d, price)?)
        };
    // φ is flat in ε for d = 1, so equal values differ only by roundoff
    let rel = |a: f64, b: f64| PHI_SLACK * a.abs().max(b.abs());
    let mut worst = 0.0_f64;
    for d in [1u32, 2, 3, 5, 8] {
        let price = PriceFunction::monomial(f64::from(d) + 1.0, d)?;
        let mut table = vec![0.0; 20 * 20 * 20];
        for (ix, &x) in axis.iter().enumerate() {
            for (ie, &eps) in axis.iter().enumerate() {
                for (ik, &k) in ks.iter().enumerate() {
                    table[(ix * 20 + ie) * 20 + ik] = phi(x, eps, k, &price)?;
                }
            }
        }
        let at = |ix: usize, ie: usize, ik: usize| table[(ix * 20 + ie) * 20 + ik];
        for ix in 0..20 {
            for ie in 0..20 {
                for ik in 0..20 {
                    if ik + 1 < 20 {
                        let (a, b) = (at(ix, ie, ik), at(ix, ie, ik + 1));
                        worst = worst.max((b - a) / a.abs().max(b.abs()));
                        t.require(b <= a + rel(a, b), || {
                            format!("d={d}: phi rises in k at x={} eps={}", axis[ix], axis[ie])
                        });
                    }
                    if ie + 1 < 20 {
                        let (a, b) = (at(ix, ie, ik), at(ix, ie + 1, ik));
                        worst = worst.max((a - b) / a.abs().max(b.abs()));
                        t.require(b >= a - rel(a, b), || {
                            format!("d={d}: phi falls in eps at x={} k={}", axis[ix], ks[ik])
                        });
                    }
                }
            }
        }
    }

    let grid50 = sweep_axis(50, SWEEP_MARGIN);
    for (i, &x) in grid50.iter().enumerate() {
        for (j, &eps) in grid50.iter().enumerate() {
            let k = k_star_quadratic(x, eps)?;
            if i + 1 < 50 {
                let kx = k_star_quadratic(grid50[i + 1], eps)?;
                t.require(kx >= k, || format!("k* falls in x at ({x}, {eps})"));
            }
            if j + 1 < 50 {
                let ke = k_star_quadratic(x, grid50[j + 1])?;
                t.require(ke >= k, || format!("k* falls in eps at ({x}, {eps})"));
            }
        }
    }

    let (lo, hi) = (1.0 / 3.0 + 1e-4, 3f64.sqrt() / 3.0 - 1e-4);
    let mut prev = f64::INFINITY;
    for i in 0..1000 {
        let k = lo + (hi - lo) * i as f64 / 999.0;
        let v = quadratic_poa_from_k(k);
        t.require(v < prev, || format!("d=2 PoA(k) not decreasing at k={k}"));
        prev = v;
    }
    t.finish(format!(
        "phi monotone in k and eps (d=1,2,3,5,8 on 20^3, worst relative violation {worst:.1e}), k* monotone on 50^2, PoA(k*) decreasing on 1e3 points"
    ))
}
