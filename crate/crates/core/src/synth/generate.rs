//! Seeded synthetic dataset generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    render_court, simulate_trajectory, Camera, CourtGeometry, DatasetRecord, LaunchParams, COURT_WIDTH, FRAME_RATE,
};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::model::{IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::vision::{extract_priors, VisionParams};

/// Retries allowed per record before giving up.
const MAX_ATTEMPTS: usize = 200;
/// Minimum distance in pixels between the prior corners and the frame edge.
const CORNER_MARGIN: f64 = 40.0;
/// Shortest in-frame stretch of any painted line, in pixels.
const MIN_VISIBLE_LINE: f64 = 150.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub count: usize,
    pub seed: u64,
    /// Fraction of records labelled "in".
    pub in_ratio: f64,
    /// Standard deviation of the noise added to trajectory pixels.
    pub pixel_noise_sd: f64,
    pub frame_rate: f64,
    /// Drag coefficients are drawn uniformly from this range (1/s).
    pub drag_range: (f64, f64),
    /// Landing distance from the line, drawn uniformly from this range (m).
    pub margin_range: (f64, f64),
    /// When set, priors come from running corner extraction on a rendered
    /// frame of each record's court instead of the analytic corners.
    pub vision_priors: bool,
    pub line_width: f64,
    pub image_noise_sd: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            count: 350,
            seed: 7,
            in_ratio: 0.5,
            pixel_noise_sd: 0.5,
            frame_rate: FRAME_RATE,
            drag_range: (0.0, 0.15),
            margin_range: (0.05, 2.0),
            vision_priors: false,
            line_width: 4.0,
            image_noise_sd: 1.0,
        }
    }
}

/// Deterministic label schedule: record `i` is "in" when
/// `⌊(i+1)·r⌋ > ⌊i·r⌋`, which spreads `r·N` positives evenly.
pub fn scheduled_label(i: usize, in_ratio: f64) -> u8 {
    u8::from(((i + 1) as f64 * in_ratio).floor() > (i as f64 * in_ratio).floor())
}

/// A camera somewhere behind the court interior, looking over the court
/// toward the prior line from a few metres up.
pub fn random_camera<R: Rng + ?Sized>(rng: &mut R) -> Camera {
    let mid = COURT_WIDTH / 2.0;
    Camera {
        position: [
            mid + rng.random_range(-1.5..1.5),
            -rng.random_range(10.0..14.0),
            rng.random_range(4.0..6.0),
        ],
        target: [mid + rng.random_range(-1.5..1.5), rng.random_range(-4.0..3.0), 0.0],
        focal: rng.random_range(850.0..1050.0),
        principal: Point2::new(IMAGE_WIDTH as f64 / 2.0, IMAGE_HEIGHT as f64 / 2.0),
    }
}

/// Length of the part of segment `a`–`b` inside the frame.
fn visible_length(a: Point2, b: Point2) -> f64 {
    const STEPS: usize = 256;
    let (w, h) = (IMAGE_WIDTH as f64, IMAGE_HEIGHT as f64);
    let inside = (0..=STEPS)
        .map(|i| a + (b - a) * (i as f64 / STEPS as f64))
        .filter(|p| p.x >= 0.0 && p.y >= 0.0 && p.x < w && p.y < h)
        .count();
    a.distance(b) * inside as f64 / (STEPS + 1) as f64
}

/// A camera whose prior corners fall well inside the frame, with enough of
/// every painted line in view for corner extraction.
pub fn random_geometry<R: Rng + ?Sized>(rng: &mut R) -> Result<CourtGeometry> {
    for _ in 0..MAX_ATTEMPTS {
        let g = CourtGeometry::from_camera(&random_camera(rng))?;
        let ok = g.pixel_corners.iter().all(|p| {
            p.x >= CORNER_MARGIN
                && p.y >= CORNER_MARGIN
                && p.x <= IMAGE_WIDTH as f64 - CORNER_MARGIN
                && p.y <= IMAGE_HEIGHT as f64 - CORNER_MARGIN
        });
        if !ok {
            continue;
        }
        if let Ok(segs) = g.pixel_segments() {
            if segs.iter().all(|&(a, b)| visible_length(a, b) >= MIN_VISIBLE_LINE) {
                return Ok(g);
            }
        }
    }
    Err(Error::Simulation("could not place the court inside the frame".into()))
}

/// A flight from somewhere over the court interior that comes down on
/// `landing` (ground metres).
fn random_launch<R: Rng + ?Sized>(rng: &mut R, landing: Point2, cfg: &GeneratorConfig) -> Result<LaunchParams> {
    let heading = rng.random_range(20f64..160.0).to_radians();
    let dist = rng.random_range(6.0..14.0);
    let start = [
        landing.x - dist * heading.cos(),
        landing.y - dist * heading.sin(),
        rng.random_range(0.3..1.2),
    ];
    let (d0, d1) = cfg.drag_range;
    let drag = if d1 > d0 { rng.random_range(d0..d1) } else { d0 };
    LaunchParams::aimed(start, landing, rng.random_range(0.7..1.3), drag, cfg.frame_rate)
}

/// The court geometry of the record generated from `seed`; it is the
/// first thing drawn from the record's generator.
pub fn record_geometry(seed: u64) -> Result<CourtGeometry> {
    random_geometry(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Generates one record with the requested label from its own seed.
pub fn generate_record(seed: u64, label: u8, cfg: &GeneratorConfig) -> Result<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = random_geometry(&mut rng)?;
    let (w, h) = (IMAGE_WIDTH as f64, IMAGE_HEIGHT as f64);
    let (m0, m1) = cfg.margin_range;
    for _ in 0..MAX_ATTEMPTS {
        let margin = if m1 > m0 { rng.random_range(m0..m1) } else { m0 };
        let side = if label == 1 { -1.0 } else { 1.0 };
        let landing = Point2::new(rng.random_range(0.3..COURT_WIDTH - 0.3), side * margin);
        let launch = random_launch(&mut rng, landing, cfg)?;
        let sample = match simulate_trajectory(&launch, &geometry, &mut rng, cfg.pixel_noise_sd) {
            Ok(s) => s,
            Err(Error::Simulation(_)) => continue,
            Err(e) => return Err(e),
        };
        if sample.label != Some(label) || !sample.in_extent(w - 1.0, h - 1.0) {
            continue;
        }
        let mut sample = sample;
        if cfg.vision_priors {
            let img = render_court(&geometry, IMAGE_WIDTH, IMAGE_HEIGHT, cfg.line_width, cfg.image_noise_sd, &mut rng)?;
            sample.prior = Some(extract_priors(&img, &VisionParams::default())?);
        }
        return Ok(DatasetRecord {
            sample,
            seed,
            launch: Some(launch),
        });
    }
    Err(Error::Simulation(format!("record seed {seed}: no valid flight in {MAX_ATTEMPTS} attempts")))
}

/// `cfg.count` records; record seeds are drawn from a generator seeded
/// with `cfg.seed`, so any record can be regenerated on its own.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Vec<DatasetRecord>> {
    generate_dataset_threads(cfg, 1)
}

/// As [`generate_dataset`], spreading records over up to `threads`
/// workers. The output does not depend on the thread count.
pub fn generate_dataset_threads(cfg: &GeneratorConfig, threads: usize) -> Result<Vec<DatasetRecord>> {
    if !(0.0..=1.0).contains(&cfg.in_ratio) {
        return Err(Error::Parameter(format!("in_ratio must lie in [0, 1], got {}", cfg.in_ratio)));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jobs: Vec<(u64, u8)> = (0..cfg.count)
        .map(|i| (master.random::<u64>(), scheduled_label(i, cfg.in_ratio)))
        .collect();
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(|&(seed, label)| generate_record(seed, label, cfg)).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    let parts: Vec<Result<Vec<DatasetRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&(seed, label)| generate_record(seed, label, cfg)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(jobs.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
