//! Synthetic two-modality benchmark generator.
//!
//! Four latent variables drive each sample: a necessary-and-sufficient bit
//! `NS` that determines the label up to flip noise, a sufficient-but-
//! unnecessary bit `SF`, a necessary-but-insufficient bit `NC`, and a
//! spurious scalar `SC` whose coupling to `NS` is controlled by the level
//! `s`. The latents are broadcast into a noisy vector `h`, split into an
//! invariant third and two modality-specific thirds, and pushed through
//! bounded nonlinearities to produce the observed pair `(x1, x2)`.
//!
//! Generation is deterministic given the seed. Three independent ChaCha
//! streams (latent draws, `h` noise, `SC` draws) keep the pieces
//! independently reproducible, and every sample consumes a fixed number of
//! draws from each stream regardless of branch outcomes.

use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Generator parameters. `d` is the per-variable broadcast width; observed
/// modality vectors have length `8d/3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    /// Spurious correlation level in `[0, 1)`.
    pub s: f64,
    /// Broadcast width per latent variable; must be divisible by 3.
    pub d: usize,
    /// Nonlinearity scales `(inner_1, outer_1, inner_2, outer_2)`.
    pub betas: [f64; 4],
    /// Gaussian noise level added to `h`, interpreted per `noise_is_variance`.
    pub noise_std_h: f64,
    /// Treat `noise_std_h` as a variance instead of a standard deviation.
    pub noise_is_variance: bool,
    /// Probability the label flips away from `NS`.
    pub flip_prob: f64,
    /// `P(SF = 1 | NS = 0)`.
    pub sf_prob: f64,
    /// `P(NC = 1 | NS = 1)`.
    pub nc_prob: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            s: 0.0,
            d: 15,
            betas: [2.0, 1.8, 1.5, 1.2],
            noise_std_h: 0.3,
            noise_is_variance: false,
            flip_prob: 0.15,
            sf_prob: 0.1,
            nc_prob: 0.9,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.s) {
            return Err(Error::validation(format!(
                "spurious level s must be in [0, 1), got {}",
                self.s
            )));
        }
        if self.d == 0 || self.d % 3 != 0 {
            return Err(Error::validation(format!(
                "d must be a positive multiple of 3, got {}",
                self.d
            )));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("sf_prob", self.sf_prob),
            ("nc_prob", self.nc_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.noise_std_h < 0.0 {
            return Err(Error::validation(format!(
                "noise_std_h must be nonnegative, got {}",
                self.noise_std_h
            )));
        }
        Ok(())
    }

    /// Observed vector length per modality: `z1` (4d/3 dims) concatenated
    /// with a transformed specific block (4d/3 dims).
    pub fn modality_dim(&self) -> usize {
        8 * self.d / 3
    }

    fn noise_std(&self) -> f64 {
        if self.noise_is_variance {
            self.noise_std_h.sqrt()
        } else {
            self.noise_std_h
        }
    }
}

/// Ground-truth latents for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentRecord {
    pub ns: u8,
    pub sf: u8,
    pub nc: u8,
    pub sc: f64,
    pub y: u8,
}

/// One observed pair with its latents retained for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y: u8,
    pub latents: LatentRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub params: GenParams,
    pub samples: Vec<MultimodalSample>,
}

/// Named RNG streams so latents, `h` noise, and `SC` draws replay
/// independently of one another.
pub struct GeneratorStreams {
    latents: ChaCha8Rng,
    h_noise: ChaCha8Rng,
    sc: ChaCha8Rng,
}

const STREAM_LATENTS: u64 = 0;
const STREAM_H_NOISE: u64 = 1;
const STREAM_SC: u64 = 2;

impl GeneratorStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            latents: stream(STREAM_LATENTS),
            h_noise: stream(STREAM_H_NOISE),
            sc: stream(STREAM_SC),
        }
    }
}

/// Draws one latent record. Always consumes four uniforms from the latent
/// stream and one normal from the SC stream, so the streams stay aligned
/// across samples whatever the branch outcomes.
pub fn sample_latents(params: &GenParams, streams: &mut GeneratorStreams) -> LatentRecord {
    let u_ns: f64 = streams.latents.gen();
    let u_flip: f64 = streams.latents.gen();
    let u_sf: f64 = streams.latents.gen();
    let u_nc: f64 = streams.latents.gen();
    let normal: f64 = streams.sc.sample(StandardNormal);

    let ns = u8::from(u_ns < 0.5);
    let y = ns ^ u8::from(u_flip < params.flip_prob);
    let sf = if ns == 1 {
        1
    } else {
        u8::from(u_sf < params.sf_prob)
    };
    let nc = if ns == 1 {
        u8::from(u_nc < params.nc_prob)
    } else {
        0
    };
    let sc = params.s * f64::from(ns) + (1.0 - params.s) * normal;
    LatentRecord { ns, sf, nc, sc, y }
}

/// Broadcasts the latents into the `4d` vector
/// `[NS*1_d, SF*1_d, NC*1_d, SC*1_d]` plus per-dimension Gaussian noise.
pub fn build_h(
    latents: &LatentRecord,
    params: &GenParams,
    streams: &mut GeneratorStreams,
) -> Vec<f64> {
    let d = params.d;
    let std = params.noise_std();
    let blocks = [
        f64::from(latents.ns),
        f64::from(latents.sf),
        f64::from(latents.nc),
        latents.sc,
    ];
    let mut h = Vec::with_capacity(4 * d);
    for &base in &blocks {
        for _ in 0..d {
            let n: f64 = streams.h_noise.sample(StandardNormal);
            h.push(base + std * n);
        }
    }
    h
}

/// Splits `h` into invariant and specific components: within each of the
/// four variable blocks, the first `d/3` dimensions go to `z1`, the middle
/// third to `z2`, and the last third to `z3`, preserving block order.
pub fn split_blocks(h: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if d == 0 || d % 3 != 0 {
        return Err(Error::validation(format!(
            "d must be a positive multiple of 3, got {d}"
        )));
    }
    if h.len() != 4 * d {
        return Err(Error::validation(format!(
            "h has length {}, expected 4d = {}",
            h.len(),
            4 * d
        )));
    }
    let third = d / 3;
    let mut z1 = Vec::with_capacity(4 * third);
    let mut z2 = Vec::with_capacity(4 * third);
    let mut z3 = Vec::with_capacity(4 * third);
    for block in 0..4 {
        let base = block * d;
        z1.extend_from_slice(&h[base..base + third]);
        z2.extend_from_slice(&h[base + third..base + 2 * third]);
        z3.extend_from_slice(&h[base + 2 * third..base + d]);
    }
    Ok((z1, z2, z3))
}

/// Bounded nonlinearity `kappa(z, beta) = beta * tanh(z)`, elementwise.
pub fn kappa(z: &[f64], beta: f64) -> Vec<f64> {
    z.iter().map(|&v| beta * v.tanh()).collect()
}

/// Observed modalities:
/// `x1 = kappa([z1, kappa(z2, b1)], b2)` and
/// `x2 = kappa([z1, kappa(z3, b3)], b4)`.
pub fn make_modalities(
    z1: &[f64],
    z2: &[f64],
    z3: &[f64],
    params: &GenParams,
) -> (Vec<f64>, Vec<f64>) {
    let [b1, b2, b3, b4] = params.betas;
    let mut inner1 = z1.to_vec();
    inner1.extend(kappa(z2, b1));
    let x1 = kappa(&inner1, b2);
    let mut inner2 = z1.to_vec();
    inner2.extend(kappa(z3, b3));
    let x2 = kappa(&inner2, b4);
    (x1, x2)
}

/// Generates `n` i.i.d. samples, deterministic given `params.seed`.
pub fn generate_dataset(params: &GenParams, n: usize) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::validation("dataset size must be at least 1"));
    }
    let mut streams = GeneratorStreams::new(params.seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let latents = sample_latents(params, &mut streams);
        let h = build_h(&latents, params, &mut streams);
        let (z1, z2, z3) = split_blocks(&h, params.d)?;
        let (x1, x2) = make_modalities(&z1, &z2, &z3, params);
        samples.push(MultimodalSample {
            x1,
            x2,
            y: latents.y,
            latents,
        });
    }
    Ok(Dataset {
        params: params.clone(),
        samples,
    })
}

const DATASET_MAGIC: &str = "MPNS-DATASET-V1";

/// Serializes a dataset as text: a `key = value` header, then one line per
/// sample with `x1 | x2 | y | ns sf nc sc` groups. Floats use the shortest
/// round-trip decimal form, so write/read is lossless and byte-stable.
pub fn format_dataset(ds: &Dataset) -> String {
    let p = &ds.params;
    let mut out = String::new();
    let _ = writeln!(out, "{DATASET_MAGIC}");
    let _ = writeln!(out, "s = {:?}", p.s);
    let _ = writeln!(out, "d = {}", p.d);
    let _ = writeln!(
        out,
        "betas = {:?}, {:?}, {:?}, {:?}",
        p.betas[0], p.betas[1], p.betas[2], p.betas[3]
    );
    let _ = writeln!(out, "noise_std_h = {:?}", p.noise_std_h);
    let _ = writeln!(out, "noise_is_variance = {}", p.noise_is_variance);
    let _ = writeln!(out, "flip_prob = {:?}", p.flip_prob);
    let _ = writeln!(out, "sf_prob = {:?}", p.sf_prob);
    let _ = writeln!(out, "nc_prob = {:?}", p.nc_prob);
    let _ = writeln!(out, "seed = {}", p.seed);
    let _ = writeln!(out, "n = {}", ds.samples.len());
    let _ = writeln!(out, "samples:");
    for s in &ds.samples {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let l = &s.latents;
        let _ = writeln!(
            out,
            "{} | {} | {} | {} {} {} {:?}",
            join(&s.x1),
            join(&s.x2),
            s.y,
            l.ns,
            l.sf,
            l.nc,
            l.sc
        );
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(format_dataset(ds).as_bytes())?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line: line + 1,
        msg,
    };

    let (ln, first) = match lines.next() {
        Some((i, r)) => (i, r?),
        None => return Err(perr(0, "empty file".into())),
    };
    if first.trim() != DATASET_MAGIC {
        return Err(perr(ln, format!("expected magic {DATASET_MAGIC:?}")));
    }

    let mut params = GenParams::default();
    let mut n = 0usize;
    for (i, line) in lines.by_ref() {
        let line = line?;
        let line = line.trim();
        if line == "samples:" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(i, format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "s" => params.s = parse_f64(value).map_err(|m| perr(i, m))?,
            "d" => params.d = parse_usize(value).map_err(|m| perr(i, m))?,
            "betas" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(perr(i, "betas needs exactly 4 values".into()));
                }
                for (k, part) in parts.iter().enumerate() {
                    params.betas[k] = parse_f64(part).map_err(|m| perr(i, m))?;
                }
            }
            "noise_std_h" => params.noise_std_h = parse_f64(value).map_err(|m| perr(i, m))?,
            "noise_is_variance" => {
                params.noise_is_variance = parse_bool(value).map_err(|m| perr(i, m))?
            }
            "flip_prob" => params.flip_prob = parse_f64(value).map_err(|m| perr(i, m))?,
            "sf_prob" => params.sf_prob = parse_f64(value).map_err(|m| perr(i, m))?,
            "nc_prob" => params.nc_prob = parse_f64(value).map_err(|m| perr(i, m))?,
            "seed" => params.seed = parse_u64(value).map_err(|m| perr(i, m))?,
            "n" => n = parse_usize(value).map_err(|m| perr(i, m))?,
            other => return Err(perr(i, format!("unknown dataset key {other:?}"))),
        }
    }

    let dim = params.modality_dim();
    let mut samples = Vec::with_capacity(n);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let groups: Vec<&str> = line.split('|').map(str::trim).collect();
        if groups.len() != 4 {
            return Err(perr(
                i,
                format!("expected 4 `|` groups, got {}", groups.len()),
            ));
        }
        let floats = |s: &str| -> std::result::Result<Vec<f64>, String> {
            s.split_whitespace().map(parse_f64).collect()
        };
        let x1 = floats(groups[0]).map_err(|m| perr(i, m))?;
        let x2 = floats(groups[1]).map_err(|m| perr(i, m))?;
        if x1.len() != dim || x2.len() != dim {
            return Err(perr(
                i,
                format!("modality width {} / {}, expected {dim}", x1.len(), x2.len()),
            ));
        }
        let y: u8 = groups[2]
            .parse()
            .map_err(|_| perr(i, "bad label".into()))?;
        let lat: Vec<&str> = groups[3].split_whitespace().collect();
        if lat.len() != 4 {
            return Err(perr(i, "latent group needs `ns sf nc sc`".into()));
        }
        let latents = LatentRecord {
            ns: lat[0].parse().map_err(|_| perr(i, "bad ns".into()))?,
            sf: lat[1].parse().map_err(|_| perr(i, "bad sf".into()))?,
            nc: lat[2].parse().map_err(|_| perr(i, "bad nc".into()))?,
            sc: parse_f64(lat[3]).map_err(|m| perr(i, m))?,
            y,
        };
        samples.push(MultimodalSample { x1, x2, y, latents });
    }
    if samples.len() != n {
        return Err(Error::validation(format!(
            "dataset header says n = {n} but {} sample rows were read",
            samples.len()
        )));
    }
    Ok(Dataset { params, samples })
}

pub(crate) fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

pub(crate) fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("not an integer: {s:?}"))
}

pub(crate) fn parse_u64(s: &str) -> std::result::Result<u64, String> {
    s.parse::<u64>()
        .map_err(|_| format!("not an integer: {s:?}"))
}

pub(crate) fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true/false, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ns_one_forces_sf_and_ns_zero_forces_nc() {
        let params = GenParams {
            seed: 7,
            ..GenParams::default()
        };
        let ds = generate_dataset(&params, 5000).unwrap();
        for s in &ds.samples {
            if s.latents.ns == 1 {
                assert_eq!(s.latents.sf, 1);
            }
            if s.latents.ns == 0 {
                assert_eq!(s.latents.nc, 0);
            }
        }
    }

    #[test]
    fn s_zero_decouples_sc_from_ns() {
        let params = GenParams {
            s: 0.0,
            seed: 3,
            ..GenParams::default()
        };
        let ds = generate_dataset(&params, 15000).unwrap();
        let ns: Vec<f64> = ds.samples.iter().map(|s| f64::from(s.latents.ns)).collect();
        let sc: Vec<f64> = ds.samples.iter().map(|s| s.latents.sc).collect();
        let corr = pearson(&ns, &sc);
        assert!(corr.abs() < 0.03, "corr = {corr}");

        let coupled = GenParams {
            s: 0.7,
            seed: 3,
            ..GenParams::default()
        };
        let ds = generate_dataset(&coupled, 15000).unwrap();
        let ns: Vec<f64> = ds.samples.iter().map(|s| f64::from(s.latents.ns)).collect();
        let sc: Vec<f64> = ds.samples.iter().map(|s| s.latents.sc).collect();
        let corr = pearson(&ns, &sc);
        assert!(corr > 0.5, "corr = {corr}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        num / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn noiseless_h_is_exact_block_broadcast() {
        let params = GenParams {
            noise_std_h: 0.0,
            d: 3,
            ..GenParams::default()
        };
        let latents = LatentRecord {
            ns: 1,
            sf: 1,
            nc: 0,
            sc: 0.0,
            y: 1,
        };
        let mut streams = GeneratorStreams::new(0);
        let h = build_h(&latents, &params, &mut streams);
        assert_eq!(
            h,
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn h_noise_mean_recovers_block_value() {
        let params = GenParams {
            seed: 9,
            ..GenParams::default()
        };
        let latents = LatentRecord {
            ns: 1,
            sf: 1,
            nc: 1,
            sc: 0.0,
            y: 1,
        };
        let mut streams = GeneratorStreams::new(params.seed);
        let mut sum = 0.0;
        let trials = 10_000;
        for _ in 0..trials {
            let h = build_h(&latents, &params, &mut streams);
            assert_eq!(h.len(), 4 * params.d);
            sum += h[..params.d].iter().sum::<f64>() / params.d as f64;
        }
        let mean = sum / trials as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn split_blocks_unrolls_the_definition() {
        // d = 3: blocks (a b c e), thirds map first/middle/last elements.
        let h: Vec<f64> = (1..=12).map(f64::from).collect();
        let (z1, z2, z3) = split_blocks(&h, 3).unwrap();
        assert_eq!(z1, vec![1.0, 4.0, 7.0, 10.0]);
        assert_eq!(z2, vec![2.0, 5.0, 8.0, 11.0]);
        assert_eq!(z3, vec![3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn split_blocks_partitions_h() {
        let d = 15;
        let h: Vec<f64> = (0..4 * d).map(|i| i as f64 * 0.5).collect();
        let (z1, z2, z3) = split_blocks(&h, d).unwrap();
        assert_eq!(z1.len(), 20);
        assert_eq!(z2.len(), 20);
        assert_eq!(z3.len(), 20);
        // Reassemble in interleaved order and compare.
        let third = d / 3;
        let mut back = Vec::new();
        for block in 0..4 {
            back.extend_from_slice(&z1[block * third..(block + 1) * third]);
            back.extend_from_slice(&z2[block * third..(block + 1) * third]);
            back.extend_from_slice(&z3[block * third..(block + 1) * third]);
        }
        assert_eq!(back, h);
    }

    #[test]
    fn split_blocks_rejects_indivisible_d() {
        let h = vec![0.0; 16];
        assert!(split_blocks(&h, 4).is_err());
    }

    #[test]
    fn zero_latent_vector_maps_to_zero_modalities() {
        let params = GenParams::default();
        let z = vec![0.0; 20];
        let (x1, x2) = make_modalities(&z, &z, &z, &params);
        assert!(x1.iter().all(|&v| v == 0.0));
        assert!(x2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn modalities_are_bounded_by_outer_betas() {
        let params = GenParams {
            seed: 21,
            ..GenParams::default()
        };
        let ds = generate_dataset(&params, 2000).unwrap();
        for s in &ds.samples {
            assert!(s.x1.iter().all(|&v| v.abs() <= 1.8));
            assert!(s.x2.iter().all(|&v| v.abs() <= 1.2));
            assert_eq!(s.x1.len(), 40);
            assert_eq!(s.x2.len(), 40);
        }
    }

    #[test]
    fn scalar_pipeline_hand_evaluated() {
        // z1 = 1 feeds the untransformed half of x1, so its first coordinate
        // is b2 * tanh(1).
        let params = GenParams::default();
        let z1 = vec![1.0];
        let z2 = vec![0.0];
        let z3 = vec![0.0];
        let (x1, _) = make_modalities(&z1, &z2, &z3, &params);
        let expected = 1.8 * 1.0_f64.tanh();
        assert!((x1[0] - expected).abs() < 1e-12);
        assert!((expected - 1.3704).abs() < 1e-3);
    }

    #[test]
    fn same_seed_gives_bit_identical_datasets() {
        let params = GenParams {
            s: 0.3,
            seed: 1234,
            ..GenParams::default()
        };
        let a = generate_dataset(&params, 500).unwrap();
        let b = generate_dataset(&params, 500).unwrap();
        assert_eq!(a, b);
        assert_eq!(format_dataset(&a), format_dataset(&b));
    }

    #[test]
    fn empirical_rates_match_generator_probabilities() {
        let params = GenParams {
            seed: 99,
            ..GenParams::default()
        };
        let ds = generate_dataset(&params, 15000).unwrap();
        assert_eq!(ds.samples.len(), 15000);

        let flip_rate = ds
            .samples
            .iter()
            .filter(|s| s.y != s.latents.ns)
            .count() as f64
            / 15000.0;
        assert!((flip_rate - 0.15).abs() < 0.01, "flip rate {flip_rate}");

        let ns0: Vec<_> = ds.samples.iter().filter(|s| s.latents.ns == 0).collect();
        let sf_rate = ns0.iter().filter(|s| s.latents.sf == 1).count() as f64 / ns0.len() as f64;
        assert!((sf_rate - 0.1).abs() < 0.01, "sf rate {sf_rate}");

        let ns1: Vec<_> = ds.samples.iter().filter(|s| s.latents.ns == 1).collect();
        let nc_rate = ns1.iter().filter(|s| s.latents.nc == 1).count() as f64 / ns1.len() as f64;
        assert!((nc_rate - 0.9).abs() < 0.01, "nc rate {nc_rate}");

        let y1_ns1 = ns1.iter().filter(|s| s.y == 1).count() as f64 / ns1.len() as f64;
        let y1_ns0 = ns0.iter().filter(|s| s.y == 1).count() as f64 / ns0.len() as f64;
        assert!((y1_ns1 - 0.85).abs() < 0.01);
        assert!((y1_ns0 - 0.15).abs() < 0.01);
    }

    #[test]
    fn dataset_round_trips_through_text() {
        let params = GenParams {
            s: 0.7,
            seed: 5,
            ..GenParams::default()
        };
        let ds = generate_dataset(&params, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.txt");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = GenParams {
            s: 1.0,
            ..GenParams::default()
        };
        assert!(p.validate().is_err());
        let p = GenParams {
            d: 14,
            ..GenParams::default()
        };
        assert!(p.validate().is_err());
        let p = GenParams {
            flip_prob: 1.5,
            ..GenParams::default()
        };
        assert!(p.validate().is_err());
    }
}
