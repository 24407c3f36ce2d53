//! File formats for chains, summary tables and density grids.
//!
//! A chain is stored as `NAME.csv` (one row per stored draw, one column per
//! parameter) next to `NAME.meta.json` holding the spec, configs, seed, run
//! time and the final imputed strata.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::format_real;
use crate::error::{Error, Result};
use crate::model::{parameter_names, ParameterVector, PrincipalStratum, SpecKind};
use crate::posterior::{summarize_functional, DensityGrid, DiagnosticRow, Functional, SummaryRow};
use crate::sampler::{Chain, ChainMeta};
use crate::sensitivity::{IpwReport, SensitivityReport};
use crate::simgen::{true_ates, ScenarioConfig};

#[derive(Serialize, Deserialize)]
struct ChainSidecar {
    spec: SpecKind,
    draws: usize,
    meta: ChainMeta,
    final_strata: Vec<PrincipalStratum>,
}

/// `chain.csv` -> `chain.meta.json`
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<csv writer>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<csv writer>", e))
}

pub fn write_chain_csv<W: Write>(chain: &Chain, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(parameter_names(chain.spec))?;
    for d in &chain.draws {
        w.write_record(d.to_vec().into_iter().map(format_real))?;
    }
    flush(w)
}

pub fn save_chain(chain: &Chain, path: &Path) -> Result<()> {
    write_chain_csv(chain, create(path)?)?;
    let side = ChainSidecar {
        spec: chain.spec,
        draws: chain.len(),
        meta: chain.meta.clone(),
        final_strata: chain.final_strata.clone(),
    };
    let mp = meta_path(path);
    let mut f = create(&mp)?;
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.flush().map_err(|e| Error::io(&mp, e))
}

pub fn load_chain(path: &Path) -> Result<Chain> {
    let mp = meta_path(path);
    let side: ChainSidecar = {
        let f = std::fs::File::open(&mp).map_err(|e| Error::io(&mp, e))?;
        serde_json::from_reader(std::io::BufReader::new(f))?
    };
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(f));
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let expected = parameter_names(side.spec);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(parse_err(
            1,
            format!(
                "header does not match the {} parameter names",
                side.spec.label()
            ),
        ));
    }
    let mut draws = Vec::with_capacity(side.draws);
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad number `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let theta =
            ParameterVector::from_slice(&vals).map_err(|e| parse_err(line, e.to_string()))?;
        draws.push(theta);
    }
    if draws.len() != side.draws {
        return Err(parse_err(
            0,
            format!(
                "metadata records {} draws, file has {}",
                side.draws,
                draws.len()
            ),
        ));
    }
    Ok(Chain {
        spec: side.spec,
        draws,
        final_strata: side.final_strata,
        meta: side.meta,
    })
}

/// Sidecar of a simulated dataset: the generating configuration and its true
/// effects.
#[derive(Serialize)]
struct DatasetSidecar<'a> {
    seed: u64,
    n: usize,
    p_w1: f64,
    spec: SpecKind,
    theta_true: &'a ParameterVector,
    true_ates: Vec<(String, f64)>,
}

pub fn save_dataset_meta(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    let side = DatasetSidecar {
        seed: cfg.seed,
        n: cfg.n,
        p_w1: cfg.p_w1,
        spec: cfg.spec,
        theta_true: &cfg.theta_true,
        true_ates: true_ates(&cfg.theta_true)?,
    };
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.flush().map_err(|e| Error::io(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// Rows of the comparison table: the six ATEs, then the stratum
/// probabilities.
fn table_functionals() -> Vec<Functional> {
    Functional::ates()
        .into_iter()
        .chain(Functional::stratum_probs())
        .collect()
}

/// Side-by-side summary of one or more fits: `estimand` then
/// `mean, sd, q025, q975` per fit (prefixed by the spec label when there is
/// more than one fit). Estimands a fit does not define are written as `-`.
pub fn write_summary_table<W: Write>(chains: &[Chain], writer: W) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::contract("no chains to summarize"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let stats = ["mean", "sd", "q025", "q975"];
    let mut header = vec!["estimand".to_string()];
    for c in chains {
        for s in stats {
            header.push(if chains.len() == 1 {
                s.to_string()
            } else {
                format!("{}_{s}", c.spec.label())
            });
        }
    }
    w.write_record(&header)?;
    for f in table_functionals() {
        let mut rec = vec![f.name()];
        for c in chains {
            if matches!(f, Functional::StratumProb(_)) && !c.spec.has_strata() {
                rec.extend(std::iter::repeat_n("-".to_string(), 4));
                continue;
            }
            let s = summarize_functional(c, f)?;
            rec.extend([s.mean, s.sd, s.q025, s.q975].map(fmt));
        }
        w.write_record(&rec)?;
    }
    flush(w)
}

/// Posterior quartiles of the eight second-period assignment probabilities.
pub fn write_assignment_table<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "estimand", "mean", "sd", "q025", "q25", "median", "q75", "q975",
    ])?;
    for r in rows {
        let mut rec = vec![r.name.clone()];
        rec.extend([r.mean, r.sd, r.q025, r.q25, r.median, r.q75, r.q975].map(fmt));
        w.write_record(&rec)?;
    }
    flush(w)
}

pub fn write_sensitivity_table<W: Write>(report: &SensitivityReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "pairing",
        "w1",
        "strata",
        "gap_mean",
        "gap_sd",
        "gap_lower",
        "gap_upper",
        "excludes_zero",
    ])?;
    for g in &report.gaps {
        let p = g.pairing;
        w.write_record([
            p.id.to_string(),
            u8::from(p.w1).to_string(),
            format!("{}-{}", p.first, p.second),
            fmt(g.summary.mean),
            fmt(g.summary.sd),
            fmt(g.lower),
            fmt(g.upper),
            g.excludes_zero.to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_ipw_table<W: Write>(report: &IpwReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimand", "estimate", "se", "replicates_used"])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt);
    for e in &report.estimates {
        w.write_record([
            e.name.clone(),
            opt(e.estimate),
            opt(e.se),
            e.replicates_used.to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_diagnostics_table<W: Write>(rows: &[DiagnosticRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "parameter",
        "ess",
        "rhat",
        "split_rhat",
        "first_half_mean",
        "second_half_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            format!("{:.1}", r.ess),
            r.rhat
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")),
            format!("{:.4}", r.split_rhat),
            fmt(r.first_half_mean),
            fmt(r.second_half_mean),
        ])?;
    }
    flush(w)
}

/// Two columns `x,density`; a point mass is written as a single row with
/// density `inf`.
pub fn write_density<W: Write>(grid: &DensityGrid, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "density"])?;
    match grid {
        DensityGrid::Grid(points) => {
            for (x, d) in points {
                w.write_record([format_real(*x), format_real(*d)])?;
            }
        }
        DensityGrid::PointMass(x) => w.write_record([format_real(*x), "inf".to_string()])?,
    }
    flush(w)
}

pub fn save_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{run_gibbs, McmcConfig, PriorConfig};
    use crate::simgen::generate;

    fn small_chain(spec: SpecKind) -> Chain {
        let mut cfg = ScenarioConfig::reference_lsi();
        cfg.n = 150;
        let data = generate(&cfg).unwrap();
        let mcmc = McmcConfig {
            burn_in: 5,
            kept: 12,
            thin: 1,
            seed: 8,
            ..McmcConfig::default()
        };
        run_gibbs(&data, spec, &PriorConfig::default(), &mcmc).unwrap()
    }

    #[test]
    fn chain_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        for spec in SpecKind::ALL {
            let chain = small_chain(spec);
            let path = dir.path().join(format!("{}.csv", spec.label()));
            save_chain(&chain, &path).unwrap();
            let back = load_chain(&path).unwrap();
            assert_eq!(back, chain);
        }
    }

    #[test]
    fn corrupt_chain_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let chain = small_chain(SpecKind::Si1);
        let path = dir.path().join("c.csv");
        save_chain(&chain, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(load_chain(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn summary_table_shapes() {
        let chains: Vec<Chain> = SpecKind::ALL.iter().map(|&s| small_chain(s)).collect();
        let mut one = Vec::new();
        write_summary_table(&chains[..1], &mut one).unwrap();
        let one = String::from_utf8(one).unwrap();
        assert_eq!(one.lines().next().unwrap(), "estimand,mean,sd,q025,q975");
        assert_eq!(one.lines().count(), 1 + 6 + 4);

        let mut three = Vec::new();
        write_summary_table(&chains, &mut three).unwrap();
        let three = String::from_utf8(three).unwrap();
        let header: Vec<&str> = three.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 13);
        assert_eq!(header[1], "LSI_mean");
        assert_eq!(header[12], "SI-2_q975");
        let pi_row = three.lines().find(|l| l.starts_with("pi_00")).unwrap();
        assert!(pi_row.ends_with("-,-,-,-"));
    }
}
