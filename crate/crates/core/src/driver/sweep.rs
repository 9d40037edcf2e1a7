use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{run_single, Method, RunConfig, RunOptions, RunRecord};
use crate::error::{Error, Result};
use crate::hartree_fock::SpinConfiguration;
use crate::lattice::{cluster_by_label, dimer_along_100};

/// One sweep dimension, written `name=v1,v2,...` on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Dimer separations along [100] in nm, rounded to whole lattice
    /// constants.
    Separation(Vec<f64>),
    /// Labels from the cluster catalog.
    Cluster(Vec<char>),
    /// Box edges in nm.
    BoxEdge(Vec<f64>),
    /// Box edges in conventional cells.
    Cells(Vec<usize>),
    Spins(Vec<SpinConfiguration>),
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Configuration(format!("axis {s:?} is not of the form name=v1,v2")))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::Configuration(format!("axis {name} has no values")));
        }
        let nums = || -> Result<Vec<f64>> {
            items
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Configuration(format!("{v:?} is not a number"))))
                .collect()
        };
        Ok(match name.trim() {
            "separation" => SweepAxis::Separation(nums()?),
            "box" => SweepAxis::BoxEdge(nums()?),
            "cells" => SweepAxis::Cells(
                items
                    .iter()
                    .map(|v| v.parse().map_err(|_| Error::Configuration(format!("{v:?} is not a cell count"))))
                    .collect::<Result<_>>()?,
            ),
            "cluster" => SweepAxis::Cluster(
                items
                    .iter()
                    .map(|v| {
                        let mut c = v.chars();
                        match (c.next(), c.next()) {
                            (Some(l), None) if cluster_by_label(l).is_some() => Ok(l.to_ascii_uppercase()),
                            _ => Err(Error::Configuration(format!("unknown cluster {v:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?,
            ),
            "spins" => SweepAxis::Spins(items.iter().map(|v| v.parse()).collect::<Result<_>>()?),
            other => {
                return Err(Error::Configuration(format!(
                    "unknown axis {other}; expected separation, cluster, box, cells or spins"
                )))
            }
        })
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Separation(_) => "separation_nm",
            SweepAxis::Cluster(_) => "cluster",
            SweepAxis::BoxEdge(_) => "box_edge_nm",
            SweepAxis::Cells(_) => "cells",
            SweepAxis::Spins(_) => "spins",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Separation(v) | SweepAxis::BoxEdge(v) => v.len(),
            SweepAxis::Cluster(v) => v.len(),
            SweepAxis::Cells(v) => v.len(),
            SweepAxis::Spins(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sets point `i` on `config`; returns its label and sort key.
    fn apply(&self, i: usize, config: &mut RunConfig) -> Result<(String, f64)> {
        let a = config.geometry.lattice_constant;
        let ccc = || {
            config
                .geometry
                .impurities
                .first()
                .map(|s| s.central_cell_correction)
                .ok_or_else(|| Error::Configuration("impurity sweeps need an impurity in the template".into()))
        };
        Ok(match self {
            SweepAxis::Separation(v) => {
                let cells = (v[i] / a).round().max(1.0);
                config.geometry.impurities = dimer_along_100(cells as u32, ccc()?).to_vec();
                let d = cells * a;
                (format!("{d:.4}"), d)
            }
            SweepAxis::Cluster(v) => {
                let c = cluster_by_label(v[i]).expect("validated on parse");
                config.geometry.impurities = c.impurities(ccc()?).to_vec();
                (v[i].to_string(), c.separation(a))
            }
            SweepAxis::BoxEdge(v) => {
                config.geometry.box_edge = v[i];
                (format!("{}", v[i]), v[i])
            }
            SweepAxis::Cells(v) => {
                config.geometry.box_edge = v[i] as f64 * a;
                (v[i].to_string(), v[i] as f64)
            }
            SweepAxis::Spins(v) => {
                config.spins = v[i].clone();
                (v[i].to_string(), i as f64)
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: usize,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    /// `(axis, value)` per axis.
    pub point: Vec<(String, String)>,
    pub keys: Vec<f64>,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub sweep_id: String,
    /// Sorted by axis values.
    pub entries: Vec<SweepEntry>,
    pub table: String,
    pub index_path: PathBuf,
    pub table_path: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.record.is_none()).count()
    }
}

fn append_index(path: &Path, header: &str, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.lock()?;
    let mut text = String::new();
    if f.metadata()?.len() == 0 {
        text.push_str(header);
    }
    text.push_str(line);
    let res = f.write_all(text.as_bytes()).and_then(|_| f.flush());
    f.unlock()?;
    Ok(res?)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn collate(axes: &[SweepAxis], entries: &[SweepEntry]) -> String {
    let mut out = String::new();
    for a in axes {
        out.push_str(a.name());
        out.push('\t');
    }
    out.push_str(
        "run_id\tstatus\tenergy_ev\tce_tb_hf_mev\tbe_tb_hf_mev\tce_fci_tb_mev\tbe_fci_tb_mev\tce_ci0_hf_mev\tbe_ci0_hf_mev\tr_hf_nm\tr_tb_nm\n",
    );
    for e in entries {
        for (_, v) in &e.point {
            out.push_str(v);
            out.push('\t');
        }
        match &e.record {
            Some(r) => {
                let col = |m: Method| {
                    let rep = r.report(m);
                    [
                        fmt_opt(rep.and_then(|x| x.charging_energy), 6),
                        fmt_opt(rep.and_then(|x| x.binding_energy), 6),
                    ]
                };
                let [ce, be] = col(Method::TbHf);
                let [cf, bf] = col(Method::FciTb);
                let [cc, bc] = col(Method::Ci0Hf);
                let d = r.dispersion.as_ref();
                out.push_str(&format!(
                    "{}\tok\t{:.9}\t{ce}\t{be}\t{cf}\t{bf}\t{cc}\t{bc}\t{}\t{}\n",
                    r.run_id,
                    r.main().energy,
                    fmt_opt(d.map(|d| d.hf.mean_radius), 6),
                    fmt_opt(d.map(|d| d.tb.mean_radius), 6),
                ));
            }
            None => {
                let msg = e.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ");
                out.push_str(&format!("-\tfailed: {msg}\t-\t-\t-\t-\t-\t-\t-\t-\t-\n"));
            }
        }
    }
    out
}

/// Runs the cartesian product of `axes` over `template` on a bounded
/// worker pool. Failed points are recorded and the sweep continues; it is
/// an error only when every point fails.
pub fn run_sweep(template: &RunConfig, axes: &[SweepAxis], options: &SweepOptions) -> Result<SweepOutcome> {
    if axes.is_empty() || axes.iter().any(SweepAxis::is_empty) {
        return Err(Error::Configuration("a sweep needs at least one nonempty axis".into()));
    }
    template.validate()?;
    let mut h = Sha256::new();
    h.update(template.canonical_json()?.as_bytes());
    h.update(format!("{axes:?}").as_bytes());
    let sweep_id = hex::encode(h.finalize())[..16].to_string();
    std::fs::create_dir_all(&template.output)?;
    let index_path = template.output.join(format!("sweep-{sweep_id}.index"));
    let table_path = template.output.join(format!("sweep-{sweep_id}.tsv"));
    let header = format!(
        "{}\trun_id\tstatus\n",
        axes.iter().map(|a| a.name()).collect::<Vec<_>>().join("\t")
    );

    let mut points = vec![Vec::<usize>::new()];
    for a in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..a.len()).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Configuration(format!("worker pool: {e}")))?;
    let run_options = RunOptions {
        force: options.force,
        stop_after: None,
    };
    let mut entries: Vec<SweepEntry> = pool.install(|| {
        points
            .par_iter()
            .map(|idx| {
                let mut config = template.clone();
                let mut point = Vec::new();
                let mut keys = Vec::new();
                let prepared = axes.iter().zip(idx).try_for_each(|(a, &i)| {
                    let (label, key) = a.apply(i, &mut config)?;
                    point.push((a.name().to_string(), label));
                    keys.push(key);
                    Ok::<_, Error>(())
                });
                let result = prepared.and_then(|_| run_single(&config, &run_options));
                let values: Vec<&str> = point.iter().map(|(_, v)| v.as_str()).collect();
                let line = match &result {
                    Ok(r) => format!("{}\t{}\tok\n", values.join("\t"), r.run_id),
                    Err(e) => format!("{}\t-\tfailed: {}\n", values.join("\t"), e.to_string().replace(['\t', '\n'], " ")),
                };
                if let Err(e) = append_index(&index_path, &header, &line) {
                    log::warn!("sweep index {}: {e}", index_path.display());
                }
                match result {
                    Ok(r) => SweepEntry {
                        point,
                        keys,
                        record: Some(r),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("sweep point {values:?} failed: {e}");
                        SweepEntry {
                            point,
                            keys,
                            record: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    entries.sort_by(|a, b| {
        a.keys
            .iter()
            .zip(&b.keys)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let table = collate(axes, &entries);
    std::fs::write(&table_path, &table)?;
    let outcome = SweepOutcome {
        sweep_id,
        entries,
        table,
        index_path,
        table_path,
    };
    if outcome.failures() == outcome.entries.len() {
        let first = outcome.entries[0].error.clone().unwrap_or_default();
        return Err(Error::SweepFailed(format!("every point failed; first: {first}")));
    }
    Ok(outcome)
}
