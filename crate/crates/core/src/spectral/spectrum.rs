use std::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::lindblad::OccupationRecord;
use crate::numerics::dft_real_half;

/// Power spectra of the four occupation series.
///
/// Frequencies are angular and in MeV (ħ = 1): bin `k` sits at `2πk/(nδt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum {
    pub dt: f64,
    /// Record length the transform was taken over.
    pub n: usize,
    /// Bins `0..=n/2`.
    pub frequencies: Vec<f64>,
    pub per_state: [Vec<f64>; 4],
    pub summed: Vec<f64>,
    /// Summed spectrum of Hann-tapered series, used for peak detection.
    pub tapered: Vec<f64>,
}

impl PowerSpectrum {
    pub fn bin_width(&self) -> f64 {
        TAU / (self.n as f64 * self.dt)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_MeV,P0,P1,P2,P3,summed\n");
        for k in 0..self.frequencies.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(self.frequencies[k]),
                fmt_f64(self.per_state[0][k]),
                fmt_f64(self.per_state[1][k]),
                fmt_f64(self.per_state[2][k]),
                fmt_f64(self.per_state[3][k]),
                fmt_f64(self.summed[k])
            ));
        }
        out
    }
}

fn centred(x: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    match weights {
        None => x.iter().map(|v| v - mean).collect(),
        Some(w) => x.iter().zip(w).map(|(v, w)| (v - mean) * w).collect(),
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|k| 0.5 * (1.0 - (TAU * k as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Mean-subtracted unitary DFT power of each `P_m`, bins `0..=n/2`.
pub fn power_spectrum(record: &OccupationRecord) -> Result<PowerSpectrum> {
    let n = record.len();
    if n < 8 {
        return invalid(format!("record has {n} rows, need at least 8"));
    }
    if !(record.dt > 0.0 && record.dt.is_finite()) {
        return invalid(format!("record time step must be positive, got {}", record.dt));
    }
    let w = hann(n);
    let bins = n / 2 + 1;
    let mut per_state: [Vec<f64>; 4] = Default::default();
    let mut summed = vec![0.0; bins];
    let mut tapered = vec![0.0; bins];
    for m in 0..4 {
        let s = record.series(m);
        let p: Vec<f64> = dft_real_half(&centred(&s, None)).iter().map(|z| z.norm_sqr()).collect();
        let t: Vec<f64> = dft_real_half(&centred(&s, Some(&w)))
            .iter()
            .map(|z| z.norm_sqr())
            .collect();
        for k in 0..bins {
            summed[k] += p[k];
            tapered[k] += t[k];
        }
        per_state[m] = p;
    }
    let frequencies = (0..bins).map(|k| TAU * k as f64 / (n as f64 * record.dt)).collect();
    Ok(PowerSpectrum {
        dt: record.dt,
        n,
        frequencies,
        per_state,
        summed,
        tapered,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `median + 5·MAD` of the tapered spectrum over the non-DC bins.
pub fn noise_floor(spec: &PowerSpectrum) -> f64 {
    let mut vals: Vec<f64> = spec.tapered[1..].to_vec();
    let med = median(&mut vals);
    let mut dev: Vec<f64> = vals.iter().map(|v| (v - med).abs()).collect();
    med + 5.0 * median(&mut dev)
}

/// Half-width (bins) over which a candidate must be the maximum; spans the
/// Hann main lobe, so sidelobes never qualify.
const PEAK_NEIGHBOURHOOD: usize = 2;

/// Up to `d(d−1)/2` local maxima above the noise floor, ascending in frequency.
pub fn find_peaks(spec: &PowerSpectrum, d: usize) -> Result<Vec<f64>> {
    if spec.tapered.len() < 4 {
        return invalid("spectrum too short for peak search");
    }
    let floor = noise_floor(spec);
    let s = &spec.tapered;
    let last = s.len() - 1;
    let mut cands: Vec<(usize, f64)> = Vec::new();
    for k in 2..=last {
        if !(s[k] > floor) {
            continue;
        }
        let lo = k.saturating_sub(PEAK_NEIGHBOURHOOD).max(1);
        let hi = (k + PEAK_NEIGHBOURHOOD).min(last);
        let is_max = (lo..=hi).all(|j| j == k || s[j] < s[k]);
        if is_max {
            cands.push((k, s[k]));
        }
    }
    if cands.is_empty() {
        return Err(Error::NoPeaks { floor });
    }
    let keep = d * d.saturating_sub(1) / 2;
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(keep.max(1));
    let mut out: Vec<f64> = cands.iter().map(|(k, _)| spec.frequencies[*k]).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}
