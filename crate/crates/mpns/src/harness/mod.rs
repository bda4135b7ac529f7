//! Experiment orchestration: the ablation grid over spurious-correlation
//! levels, modes, and seeds; CSV result persistence; and the directional
//! trend checks over seed-averaged distance correlations.
//!
//! Cells are independent jobs on a worker pool. For a fixed `(s, seed)` every
//! mode trains from the same dataset and the same primary-extractor
//! initialization, so modes differ only in loss weights. A failed cell is
//! recorded and the rest of the grid continues.

mod config;

pub use config::{parse_config, parse_config_text, ExperimentGrid, FullConfig};

use crate::eval::{
    evaluate_accuracy, evaluate_dcor, probe_discriminator, LatentVar, ProbeConfig, RepPart,
};
use crate::loss::AblationMode;
use crate::synth::{generate_dataset, parse_f64, parse_u64, parse_usize, Dataset, GenParams};
use crate::train::{train, TrainConfig};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Mixes a base seed with tag words into an independent stream seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base ^ 0x9e3779b97f4a7c15;
    for &t in tags {
        x ^= t.wrapping_mul(0xff51afd7ed558ccd);
        // splitmix64 finalizer
        x = x.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        x = z ^ (z >> 31);
    }
    x
}

// Tag words for per-cell stream derivation.
const TAG_TRAIN_DATA: u64 = 1;
const TAG_EVAL_DATA: u64 = 2;
const TAG_TRAIN_SEED: u64 = 3;
const TAG_PROBE: u64 = 4;

/// One dcor measurement cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DcorRow {
    pub s: f64,
    pub mode: AblationMode,
    pub seed: usize,
    pub modality: usize,
    pub variable: LatentVar,
    pub part: RepPart,
    pub dcor: f64,
}

/// One accuracy measurement cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AccRow {
    pub s: f64,
    pub mode: AblationMode,
    pub seed: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GridResult {
    pub dcor_rows: Vec<DcorRow>,
    pub acc_rows: Vec<AccRow>,
    /// `(s, mode, seed)` cells that failed, with their error text.
    pub failures: Vec<(f64, AblationMode, usize, String)>,
}

impl GridResult {
    pub fn completed_cells(&self) -> usize {
        let mut keys: Vec<(u64, &str, usize)> = self
            .dcor_rows
            .iter()
            .map(|r| (r.s.to_bits(), r.mode.name(), r.seed))
            .collect();
        keys.sort();
        keys.dedup();
        keys.len()
    }
}

/// Datasets for one `(s, seed)` pair, shared by every mode.
pub fn cell_datasets(cfg: &FullConfig, s_idx: usize, seed: usize) -> Result<(Dataset, Dataset)> {
    let s = cfg.grid.s_values[s_idx];
    let train_params = GenParams {
        s,
        seed: derive_seed(cfg.grid.base_seed, &[TAG_TRAIN_DATA, s_idx as u64, seed as u64]),
        ..cfg.gen.clone()
    };
    let eval_params = GenParams {
        s,
        seed: derive_seed(cfg.grid.base_seed, &[TAG_EVAL_DATA, s_idx as u64, seed as u64]),
        ..cfg.gen.clone()
    };
    Ok((
        generate_dataset(&train_params, cfg.grid.n_train)?,
        generate_dataset(&eval_params, cfg.grid.n_eval)?,
    ))
}

/// Training configuration for one cell: the seed is shared across modes so
/// initialization and batch schedules coincide.
pub fn cell_train_config(cfg: &FullConfig, s_idx: usize, seed: usize, mode: AblationMode) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.grid.base_seed, &[TAG_TRAIN_SEED, s_idx as u64, seed as u64]),
        mode,
        ..cfg.train.clone()
    }
}

/// Runs one cell to its dcor and accuracy rows.
fn run_cell(
    cfg: &FullConfig,
    s_idx: usize,
    mode: AblationMode,
    seed: usize,
    data: &(Dataset, Dataset),
) -> Result<(Vec<DcorRow>, Vec<AccRow>)> {
    let s = cfg.grid.s_values[s_idx];
    let (train_ds, eval_ds) = data;
    let train_cfg = cell_train_config(cfg, s_idx, seed, mode);
    let record = train(&cfg.model, &train_cfg, train_ds)?;

    let dcor = evaluate_dcor(&record.bundle, eval_ds)?;
    let mut dcor_rows = Vec::with_capacity(dcor.entries.len());
    for e in dcor.entries {
        dcor_rows.push(DcorRow {
            s,
            mode,
            seed,
            modality: e.modality,
            variable: e.variable,
            part: e.part,
            dcor: e.dcor,
        });
    }

    let acc = evaluate_accuracy(&record.bundle, eval_ds)?;
    let probe = probe_discriminator(
        &record.bundle,
        eval_ds,
        &ProbeConfig {
            seed: derive_seed(cfg.grid.base_seed, &[TAG_PROBE, s_idx as u64, seed as u64]),
            epochs: cfg.grid.probe_epochs,
            ..ProbeConfig::default()
        },
    )?;
    let mut acc_rows = vec![AccRow {
        s,
        mode,
        seed,
        metric: "full".into(),
        value: acc.full,
    }];
    for (m, sm) in acc.modality.iter().enumerate() {
        acc_rows.push(AccRow {
            s,
            mode,
            seed,
            metric: format!("f_i_m{}", m + 1),
            value: sm.invariant_head,
        });
        acc_rows.push(AccRow {
            s,
            mode,
            seed,
            metric: format!("f_m_m{}", m + 1),
            value: sm.specific_head,
        });
        acc_rows.push(AccRow {
            s,
            mode,
            seed,
            metric: format!("f_p_imputed_m{}", m + 1),
            value: sm.joint_zero_imputed,
        });
    }
    acc_rows.push(AccRow {
        s,
        mode,
        seed,
        metric: "disc_probe".into(),
        value: probe,
    });
    Ok((dcor_rows, acc_rows))
}

/// Runs the whole grid on a worker pool. Cell failures are recorded, not
/// fatal; the result is empty only if every cell failed.
pub fn run_grid(cfg: &FullConfig) -> Result<GridResult> {
    cfg.validate()?;
    let mut dataset_cache: BTreeMap<(usize, usize), Arc<(Dataset, Dataset)>> = BTreeMap::new();
    for s_idx in 0..cfg.grid.s_values.len() {
        for seed in 0..cfg.grid.seeds {
            dataset_cache.insert((s_idx, seed), Arc::new(cell_datasets(cfg, s_idx, seed)?));
        }
    }

    let cells: Vec<(usize, AblationMode, usize)> = (0..cfg.grid.s_values.len())
        .flat_map(|s_idx| {
            cfg.grid.modes.iter().flat_map(move |&mode| {
                (0..cfg.grid.seeds).map(move |seed| (s_idx, mode, seed))
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.grid.workers.unwrap_or_else(num_threads))
        .build()
        .map_err(|e| Error::validation(format!("worker pool: {e}")))?;

    let outcomes: Vec<(usize, AblationMode, usize, Result<(Vec<DcorRow>, Vec<AccRow>)>)> = pool
        .install(|| {
            use rayon::prelude::*;
            cells
                .par_iter()
                .map(|&(s_idx, mode, seed)| {
                    let data = Arc::clone(&dataset_cache[&(s_idx, seed)]);
                    let out = run_cell(cfg, s_idx, mode, seed, &data);
                    (s_idx, mode, seed, out)
                })
                .collect()
        });

    let mut result = GridResult::default();
    for (s_idx, mode, seed, out) in outcomes {
        match out {
            Ok((dcor, acc)) => {
                result.dcor_rows.extend(dcor);
                result.acc_rows.extend(acc);
            }
            Err(e) => {
                result
                    .failures
                    .push((cfg.grid.s_values[s_idx], mode, seed, e.to_string()));
            }
        }
    }
    Ok(result)
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

/// Writes the dcor table. The leading `#` timestamp line is the only part
/// allowed to differ between identical runs.
pub fn write_dcor_csv(rows: &[DcorRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# generated {}", timestamp());
    let _ = writeln!(out, "s,mode,seed,modality,variable,rep_part,dcor");
    let mut sorted = rows.to_vec();
    sorted.sort_by(row_order);
    for r in &sorted {
        let _ = writeln!(
            out,
            "{:?},{},{},{},{},{},{:?}",
            r.s,
            r.mode,
            r.seed,
            r.modality + 1,
            r.variable.name(),
            r.part.name(),
            r.dcor
        );
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn row_order(a: &DcorRow, b: &DcorRow) -> std::cmp::Ordering {
    (a.s.to_bits(), a.mode.name(), a.seed, a.modality, a.variable.name(), a.part.name()).cmp(&(
        b.s.to_bits(),
        b.mode.name(),
        b.seed,
        b.modality,
        b.variable.name(),
        b.part.name(),
    ))
}

pub fn write_accuracy_csv(rows: &[AccRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# generated {}", timestamp());
    let _ = writeln!(out, "s,mode,seed,metric,value");
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| {
        (a.s.to_bits(), a.mode.name(), a.seed, &a.metric).cmp(&(
            b.s.to_bits(),
            b.mode.name(),
            b.seed,
            &b.metric,
        ))
    });
    for r in &sorted {
        let _ = writeln!(out, "{:?},{},{},{},{:?}", r.s, r.mode, r.seed, r.metric, r.value);
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

pub fn read_dcor_csv(path: &Path) -> Result<Vec<DcorRow>> {
    let text = std::fs::read_to_string(path)?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("s,mode") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(perr(lineno, format!("expected 7 columns, got {}", parts.len())));
        }
        rows.push(DcorRow {
            s: parse_f64(parts[0]).map_err(|m| perr(lineno, m))?,
            mode: AblationMode::parse(parts[1])?,
            seed: parse_u64(parts[2]).map_err(|m| perr(lineno, m))? as usize,
            modality: parse_usize(parts[3]).map_err(|m| perr(lineno, m))?.saturating_sub(1),
            variable: LatentVar::parse(parts[4])?,
            part: RepPart::parse(parts[5])?,
            dcor: parse_f64(parts[6]).map_err(|m| perr(lineno, m))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Trend verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrendCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrendReport {
    pub checks: Vec<TrendCheck>,
    pub warning: Option<String>,
}

impl TrendReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "warning: {w}");
        }
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(out, "overall: {}", if self.pass() { "PASS" } else { "FAIL" });
        out
    }
}

/// The headline comparator: distance correlation of the concatenated
/// representation.
const HEADLINE_PART: RepPart = RepPart::Concatenated;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Seed-averaged headline dcor for one `(s, mode, modality, variable)` group.
fn group_mean(
    rows: &[DcorRow],
    s: f64,
    mode: AblationMode,
    modality: Option<usize>,
    variable: LatentVar,
) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| {
            r.s == s
                && r.mode == mode
                && r.variable == variable
                && r.part == HEADLINE_PART
                && modality.is_none_or(|m| r.modality == m)
        })
        .map(|r| r.dcor)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(mean(&vals))
    }
}

/// Directional checks over seed-averaged headline distance correlations:
///
/// (a) the full objective beats the base objective on NS for both modalities
///     at every `s`;
/// (b) dropping the invariant-side terms hurts NS at least as much as
///     dropping the specific-side terms (averaged over modalities, per `s`);
/// (c) SC correlation is nondecreasing in `s` for every mode.
///
/// Needs a complete grid over at least `{full_mpns, wo_pns}`; (b) is skipped
/// (with a note) when the two partial ablations are absent.
pub fn verify_trends(rows: &[DcorRow]) -> Result<TrendReport> {
    if rows.is_empty() {
        return Err(Error::validation("no dcor rows to verify"));
    }
    let mut s_values: Vec<f64> = rows.iter().map(|r| r.s).collect();
    s_values.sort_by(f64::total_cmp);
    s_values.dedup();
    let modalities: Vec<usize> = {
        let mut m: Vec<usize> = rows.iter().map(|r| r.modality).collect();
        m.sort();
        m.dedup();
        m
    };
    let seeds_of = |s: f64, mode: AblationMode| -> Vec<usize> {
        let mut v: Vec<usize> = rows
            .iter()
            .filter(|r| r.s == s && r.mode == mode)
            .map(|r| r.seed)
            .collect();
        v.sort();
        v.dedup();
        v
    };

    // Completeness over the required modes.
    let mut missing = Vec::new();
    for &s in &s_values {
        for mode in [AblationMode::FullMpns, AblationMode::WoPns] {
            if seeds_of(s, mode).is_empty() {
                missing.push(format!("(s={s}, mode={mode})"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "grid incomplete; missing cells: {}",
            missing.join(", ")
        )));
    }

    let n_seeds = seeds_of(s_values[0], AblationMode::FullMpns).len();
    let warning = (n_seeds < 2).then(|| {
        format!("single-seed grid ({n_seeds} seed): no spread statistics behind these means")
    });

    let mut report = TrendReport {
        checks: Vec::new(),
        warning,
    };

    // (a) full objective beats the base objective on NS per modality and s.
    for &s in &s_values {
        for &m in &modalities {
            let full = group_mean(rows, s, AblationMode::FullMpns, Some(m), LatentVar::Ns).unwrap();
            let wo = group_mean(rows, s, AblationMode::WoPns, Some(m), LatentVar::Ns).unwrap();
            report.checks.push(TrendCheck {
                name: format!("ns_gain_s{s}_m{}", m + 1),
                pass: full > wo,
                detail: format!("full {full:.4} vs base {wo:.4}"),
            });
        }
    }

    // (b) invariant-side ablation hurts at least as much as specific-side.
    let have_partial = s_values.iter().all(|&s| {
        !seeds_of(s, AblationMode::WoInvPns).is_empty()
            && !seeds_of(s, AblationMode::WoSpecPns).is_empty()
    });
    if have_partial {
        for &s in &s_values {
            let wo_inv = group_mean(rows, s, AblationMode::WoInvPns, None, LatentVar::Ns).unwrap();
            let wo_spec =
                group_mean(rows, s, AblationMode::WoSpecPns, None, LatentVar::Ns).unwrap();
            report.checks.push(TrendCheck {
                name: format!("invariant_term_matters_more_s{s}"),
                pass: wo_inv <= wo_spec,
                detail: format!("without-invariant {wo_inv:.4} <= without-specific {wo_spec:.4}"),
            });
        }
    } else {
        report.checks.push(TrendCheck {
            name: "invariant_term_matters_more".into(),
            pass: true,
            detail: "skipped: partial-ablation modes absent from the grid".into(),
        });
    }

    // (c) SC correlation rises with s for every mode present at all s.
    let mut modes: Vec<AblationMode> = rows.iter().map(|r| r.mode).collect();
    modes.sort_by_key(|m| m.name());
    modes.dedup();
    for mode in modes {
        if s_values.iter().any(|&s| seeds_of(s, mode).is_empty()) {
            continue;
        }
        let series: Vec<f64> = s_values
            .iter()
            .map(|&s| group_mean(rows, s, mode, None, LatentVar::Sc).unwrap())
            .collect();
        let nondecreasing = series.windows(2).all(|w| w[1] >= w[0] - 1e-9);
        report.checks.push(TrendCheck {
            name: format!("sc_rises_with_s_{mode}"),
            pass: nondecreasing,
            detail: format!(
                "{}",
                series
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            ),
        });
    }

    Ok(report)
}
