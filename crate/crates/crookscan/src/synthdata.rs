//! Seeded generator of synthetic proximal-RCA-like centerlines.
//!
//! Each curve is traced by integrating a unit heading field at a fixed
//! 0.25 mm step, so spacing is exact before noise. The heading combines
//!
//! * a base course: a gentle arc that descends from the ostium,
//! * a harmless "distractor" hump of random size and position,
//! * the crook: an elevation loop within the first ~20 mm whose amplitude
//!   and twist scale with the latent severity.
//!
//! Correlated Gaussian jitter is then added to the points and the noisy
//! polyline is re-sampled so consecutive points are exactly one spacing
//! apart again.
//!
//! Labels follow the latent severity: above `tau_pos` is positive, in
//! `(tau_unsure, tau_pos]` unsure, anything else negative.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Centerline, Point, N_POINTS, SPACING_MM};
use crate::seed;

/// Number of points spanning the proximal 20 mm.
pub const PROXIMAL_POINTS: usize = 80;

const TAG_LABELS: u64 = 0x4c41_4245;
const TAG_SAMPLE: u64 = 0x5341_4d50;

/// Extra length traced before noise so re-sampling never runs short.
const TRACE_POINTS: usize = 340;
/// Correlation length of the point jitter, in points.
const JITTER_SMOOTHING: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotation {
    Negative,
    Unsure,
    Positive,
}

impl Annotation {
    pub fn as_str(self) -> &'static str {
        match self {
            Annotation::Negative => "negative",
            Annotation::Unsure => "unsure",
            Annotation::Positive => "positive",
        }
    }

    pub fn is_sure(self) -> bool {
        self != Annotation::Unsure
    }
}

impl std::str::FromStr for Annotation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Annotation::Negative),
            "unsure" => Ok(Annotation::Unsure),
            "positive" => Ok(Annotation::Positive),
            other => Err(Error::InvalidInput(format!("unknown annotation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub n_positive: usize,
    pub n_unsure: usize,
    /// Standard deviation of the point jitter, mm.
    pub noise_scale: f64,
    pub tau_unsure: f64,
    pub tau_pos: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_samples: 519,
            n_positive: 31,
            n_unsure: 22,
            noise_scale: 0.3,
            tau_unsure: 0.55,
            tau_pos: 0.7,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_positive + self.n_unsure > self.n_samples {
            return Err(Error::Config(format!(
                "{} positive + {} unsure exceeds {} samples",
                self.n_positive, self.n_unsure, self.n_samples
            )));
        }
        if !(0.0 < self.tau_unsure && self.tau_unsure < self.tau_pos && self.tau_pos < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < tau_unsure < tau_pos < 1, got {} and {}",
                self.tau_unsure, self.tau_pos
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("bad noise scale {}", self.noise_scale)));
        }
        Ok(())
    }

    pub fn n_negative(&self) -> usize {
        self.n_samples - self.n_positive - self.n_unsure
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: u64,
    pub centerline: Centerline,
    pub annotation: Annotation,
    /// Ground truth that only exists for synthetic data.
    pub latent_severity: Option<f64>,
}

pub fn severity_to_annotation(severity: f64, cfg: &GeneratorConfig) -> Result<Annotation> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::InvalidInput(format!("severity {severity} outside [0, 1]")));
    }
    Ok(if severity > cfg.tau_pos {
        Annotation::Positive
    } else if severity > cfg.tau_unsure {
        Annotation::Unsure
    } else {
        Annotation::Negative
    })
}

/// Shape parameters of one noise-free course.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseParams {
    pub initial_azimuth: f64,
    pub initial_elevation: f64,
    /// Total elevation drop over the traced length, radians.
    pub descent: f64,
    /// Total in-plane turn over the traced length, radians.
    pub arc: f64,
    pub distractor_amplitude: f64,
    pub distractor_start_mm: f64,
    pub distractor_length_mm: f64,
    pub crook_length_mm: f64,
    pub severity: f64,
    /// How strongly this vessel expresses its severity; independent of the
    /// label, so geometry is only a noisy view of it.
    pub crook_gain: f64,
}

/// Peak elevation swing of a fully developed crook, radians.
const CROOK_ELEVATION: f64 = 1.3;
/// Peak azimuth twist of a fully developed crook, radians.
const CROOK_TWIST: f64 = 0.9;
/// Log-scale spread of the per-vessel crook gain.
const CROOK_GAIN_SPREAD: f64 = 0.4;

impl CourseParams {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, severity: f64) -> Self {
        let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
        Self {
            initial_azimuth: rng.gen_range(-0.3..0.3),
            initial_elevation: -0.25 + 0.1 * normal(rng),
            descent: rng.gen_range(0.0..0.4),
            arc: rng.gen_range(0.8..1.6),
            distractor_amplitude: 0.25 * normal(rng).abs(),
            distractor_start_mm: rng.gen_range(0.0..30.0),
            distractor_length_mm: rng.gen_range(15.0..30.0),
            crook_length_mm: rng.gen_range(16.0..22.0),
            severity,
            crook_gain: (CROOK_GAIN_SPREAD * normal(rng)).exp(),
        }
    }

    fn heading(&self, s: f64) -> Point {
        let total = TRACE_POINTS as f64 * SPACING_MM;
        let mut elevation = self.initial_elevation - self.descent * s / total;
        let mut azimuth = self.initial_azimuth + self.arc * s / total;

        let local = s - self.distractor_start_mm;
        if (0.0..self.distractor_length_mm).contains(&local) {
            elevation += self.distractor_amplitude * (PI * local / self.distractor_length_mm).sin();
        }

        if s < self.crook_length_mm {
            let phase = 2.0 * PI * s / self.crook_length_mm;
            let strength = self.severity * self.crook_gain;
            elevation += strength * CROOK_ELEVATION * phase.sin();
            azimuth += strength * CROOK_TWIST * 0.5 * (1.0 - phase.cos());
        }

        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }

    /// Noise-free polyline of `n` points at exact spacing, starting at
    /// `ostium`.
    pub fn trace(&self, ostium: Point, n: usize) -> Vec<Point> {
        let mut points = Vec::with_capacity(n);
        let mut p = ostium;
        points.push(p);
        for i in 1..n {
            let d = self.heading((i as f64 - 0.5) * SPACING_MM);
            p = [
                p[0] + SPACING_MM * d[0],
                p[1] + SPACING_MM * d[1],
                p[2] + SPACING_MM * d[2],
            ];
            points.push(p);
        }
        points
    }
}

fn draw_severity<R: Rng + ?Sized>(rng: &mut R, annotation: Annotation, cfg: &GeneratorConfig) -> f64 {
    match annotation {
        Annotation::Negative => cfg.tau_unsure * rng.gen::<f64>(),
        // Open lower bound, closed upper bound.
        Annotation::Unsure => cfg.tau_pos - (cfg.tau_pos - cfg.tau_unsure) * rng.gen::<f64>(),
        Annotation::Positive => 1.0 - (1.0 - cfg.tau_pos) * rng.gen::<f64>(),
    }
    .clamp(0.0, 1.0)
}

/// Gaussian jitter correlated along the curve, with marginal std `scale`.
fn smoothed_jitter<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<Point> {
    let raw: Vec<Point> = (0..n)
        .map(|_| {
            [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ]
        })
        .collect();
    let half = (3.0 * JITTER_SMOOTHING).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / JITTER_SMOOTHING).powi(2)).exp())
        .collect();
    let energy = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
    kernel.iter_mut().for_each(|w| *w *= scale / energy);

    (0..n as isize)
        .map(|i| {
            let mut acc = [0.0; 3];
            for (k, w) in (-half..=half).zip(&kernel) {
                // Reflect at the ends.
                let mut j = i + k;
                if j < 0 {
                    j = -j;
                }
                if j >= n as isize {
                    j = 2 * (n as isize - 1) - j;
                }
                let r = raw[j as usize];
                acc[0] += w * r[0];
                acc[1] += w * r[1];
                acc[2] += w * r[2];
            }
            acc
        })
        .collect()
}

/// Walks `poly` and emits points whose consecutive Euclidean distance is
/// exactly `step`. Returns `None` if the polyline is too short.
pub fn resample_chords(poly: &[Point], step: f64, count: usize) -> Option<Vec<Point>> {
    let mut out = Vec::with_capacity(count);
    let mut current = *poly.first()?;
    out.push(current);
    let mut seg = 0usize;
    let mut lambda = 0.0;
    while out.len() < count {
        let mut found = None;
        while seg + 1 < poly.len() {
            let a = poly[seg];
            let b = poly[seg + 1];
            let d = geometry::sub(&b, &a);
            let f = geometry::sub(&a, &current);
            // |f + t d|^2 = step^2
            let qa = geometry::dot(&d, &d);
            let qb = 2.0 * geometry::dot(&f, &d);
            let qc = geometry::dot(&f, &f) - step * step;
            let disc = qb * qb - 4.0 * qa * qc;
            if qa > 0.0 && disc >= 0.0 {
                let t = (-qb + disc.sqrt()) / (2.0 * qa);
                if t >= lambda && t <= 1.0 {
                    found = Some((seg, t, [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]));
                    break;
                }
            }
            seg += 1;
            lambda = 0.0;
        }
        let (s, t, p) = found?;
        seg = s;
        lambda = t;
        current = p;
        out.push(p);
    }
    Some(out)
}

fn generate_sample(cfg: &GeneratorConfig, id: u64, annotation: Annotation) -> Result<LabeledSample> {
    let mut rng = seed::derived_rng(cfg.seed, &[TAG_SAMPLE, id]);
    let severity = draw_severity(&mut rng, annotation, cfg);
    debug_assert_eq!(severity_to_annotation(severity, cfg)?, annotation);
    let params = CourseParams::sample(&mut rng, severity);
    let ostium = [
        rng.gen_range(-40.0..40.0),
        rng.gen_range(-40.0..40.0),
        rng.gen_range(-40.0..40.0),
    ];
    let clean = params.trace(ostium, TRACE_POINTS);
    let points = if cfg.noise_scale > 0.0 {
        let jitter = smoothed_jitter(&mut rng, clean.len(), cfg.noise_scale);
        let noisy: Vec<Point> = clean
            .iter()
            .zip(&jitter)
            .map(|(p, j)| [p[0] + j[0], p[1] + j[1], p[2] + j[2]])
            .collect();
        resample_chords(&noisy, SPACING_MM, N_POINTS).ok_or_else(|| {
            Error::Config(format!("sample {id}: noise too large to re-sample the course"))
        })?
    } else {
        clean[..N_POINTS].to_vec()
    };
    Ok(LabeledSample {
        id,
        centerline: Centerline::new(points)?,
        annotation,
        latent_severity: Some(severity),
    })
}

/// Generates exactly the configured class counts, deterministically in
/// `cfg.seed`.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let mut labels = Vec::with_capacity(cfg.n_samples);
    labels.extend(std::iter::repeat_n(Annotation::Positive, cfg.n_positive));
    labels.extend(std::iter::repeat_n(Annotation::Unsure, cfg.n_unsure));
    labels.extend(std::iter::repeat_n(Annotation::Negative, cfg.n_negative()));
    labels.shuffle(&mut seed::derived_rng(cfg.seed, &[TAG_LABELS]));

    labels
        .into_iter()
        .enumerate()
        .map(|(i, a)| generate_sample(cfg, i as u64, a))
        .collect()
}

/// Largest rise above the ostium within the proximal 20 mm, mm.
pub fn proximal_elevation(points: &[Point]) -> f64 {
    let z0 = points[0][2];
    points[..=PROXIMAL_POINTS]
        .iter()
        .map(|p| p[2] - z0)
        .fold(0.0, f64::max)
}

/// Largest angle (radians) between the initial heading and any later
/// heading within the proximal 20 mm. Headings are 1 mm chords.
pub fn proximal_turn_angle(points: &[Point]) -> f64 {
    const CHORD: usize = 4;
    let heading = |i: usize| {
        let d = geometry::sub(&points[i + CHORD], &points[i]);
        let n = geometry::norm(&d);
        [d[0] / n, d[1] / n, d[2] / n]
    };
    let start = heading(0);
    (1..=PROXIMAL_POINTS - CHORD)
        .map(|i| geometry::dot(&start, &heading(i)).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max)
}

/// Hand-made crook score: proximal elevation times proximal turn angle.
/// Serves as a geometric baseline classifier.
pub fn crook_score(c: &Centerline) -> f64 {
    proximal_elevation(c.points()) * proximal_turn_angle(c.points())
}
