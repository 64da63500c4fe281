//! CSV renderings. Each function returns the whole document so callers can
//! write it in one step.

use crate::demand::{Demand, DemandError, GpModel, GpSampler, TimeGrid};
use crate::feasible::{FeasibleError, Layout};
use crate::poa::{PoaCase, SweepTable};
use crate::prices::{PriceError, PriceFunction};
use crate::solvers::{Battery, SolveResult};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Feasible(#[from] FeasibleError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ExportError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Interval start time of every node.
fn start_times(layout: &Layout) -> Vec<f64> {
    let mut t = vec![0.0; layout.len()];
    for v in 0..layout.len() {
        if let Some(p) = layout.parent[v] {
            t[v] = t[p] + layout.dt[p];
        }
    }
    t
}

/// One row per node and battery: `objective, node, parent, t, dt, prob,
/// demand, battery, net, price, cost, saving`. `cost` is `G(net)` and
/// `saving` is `G(D) - G(net)`, so `Σ prob·dt·saving` is the welfare.
pub fn solve_csv(
    demand: &Demand,
    price: &PriceFunction,
    results: &[(Battery, &SolveResult)],
) -> Result<String, ExportError> {
    let layout = Layout::of(demand);
    let times = start_times(&layout);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "objective",
        "node",
        "parent",
        "t",
        "dt",
        "prob",
        "demand",
        "battery",
        "net",
        "price",
        "cost",
        "saving",
    ])?;
    for (which, r) in results {
        let name = match which {
            Battery::Cb => "cb",
            Battery::Dcb => "dcb",
        };
        let b = r.policy.to_vector(demand)?;
        for v in 0..layout.len() {
            let d = layout.demand[v];
            let net = d - b[v];
            w.write_record([
                name.to_string(),
                v.to_string(),
                layout.parent[v].map(|p| p.to_string()).unwrap_or_default(),
                times[v].to_string(),
                layout.dt[v].to_string(),
                layout.prob[v].to_string(),
                d.to_string(),
                b[v].to_string(),
                net.to_string(),
                price.price(net)?.to_string(),
                price.cost(net)?.to_string(),
                price.cost_saving(d, b[v])?.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// Sweep cells, then a `#` summary line with the supremum and its cell.
pub fn sweep_csv(table: &SweepTable) -> Result<String, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "x", "eps", "d", "delta", "case", "poa", "k_star", "wel_cb", "wel_dcb", "bound", "flagged",
    ])?;
    for c in &table.cells {
        let case = match c.poa.case {
            PoaCase::Finite => "finite",
            PoaCase::Unity => "unity",
            PoaCase::Infinite => "infinite",
        };
        w.write_record([
            opt(c.x),
            opt(c.eps),
            c.d.map(|d| d.to_string()).unwrap_or_default(),
            opt(c.delta),
            case.to_string(),
            c.poa.ratio().to_string(),
            opt(c.k_star),
            c.poa.wel_cb.to_string(),
            c.poa.wel_dcb_min.to_string(),
            opt(c.bound),
            c.flagged.to_string(),
        ])?;
    }
    let mut out = finish(w)?;
    out.push_str(&sweep_summary(table));
    out.push('\n');
    Ok(out)
}

/// `# family=…, supremum=…` followed by the coordinates of the argmax cell.
pub fn sweep_summary(table: &SweepTable) -> String {
    let mut s = format!("# family={}", table.family);
    match table.argmax() {
        Some(c) => {
            s.push_str(&format!(", supremum={}", c.poa.ratio()));
            for (name, v) in [("x", c.x), ("eps", c.eps), ("delta", c.delta)] {
                if let Some(v) = v {
                    s.push_str(&format!(", {name}={v}"));
                }
            }
            if let Some(d) = c.d {
                s.push_str(&format!(", d={d}"));
            }
        }
        None => s.push_str(", supremum=none"),
    }
    let flagged = table.flagged().count();
    s.push_str(&format!(", flagged={flagged}"));
    s
}

/// GP figure data: `t, mean, lower, upper, path_1..path_k` with the
/// envelope at `mean ± 3σ`. Path `j` uses seed `seed + j - 1`.
pub fn sample_demand_csv(model: GpModel, grid: TimeGrid, paths: usize, seed: u64) -> Result<String, ExportError> {
    let sampler = GpSampler::new(model, grid)?;
    let samples: Vec<Vec<f64>> = (0..paths as u64)
        .map(|j| sampler.sample(seed.wrapping_add(j)).path.values().to_vec())
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "mean".into(), "lower".into(), "upper".into()];
    header.extend((1..=paths).map(|j| format!("path_{j}")));
    w.write_record(&header)?;
    for (i, t) in grid.times().into_iter().enumerate() {
        let (m, s) = (sampler.mean()[i], sampler.sigma()[i]);
        let mut row = vec![
            t.to_string(),
            m.to_string(),
            (m - 3.0 * s).to_string(),
            (m + 3.0 * s).to_string(),
        ];
        row.extend(samples.iter().map(|p| p[i].to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}
