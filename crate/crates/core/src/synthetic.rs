//! Seeded synthetic cities for tests, benchmarks and demos.
//!
//! Blocks are laid out on a street grid in a projected metric frame. The
//! groundwater field varies smoothly over the city and includes a zone
//! without headroom, so some blocks end up without doublets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{BlockGeometry, Point, Polygon};
use crate::hydro::HydroSample;
use crate::io::field::azimuth_to_dir;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub blocks: usize,
    pub seed: u64,
    /// South-west corner of the city, m.
    pub origin: Point,
    /// Distance between field samples, m.
    pub field_spacing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            blocks: 100,
            seed: 42,
            origin: Point::new(690_000.0, 5_330_000.0),
            field_spacing: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub blocks: Vec<BlockGeometry>,
    pub field: Vec<(Point, HydroSample)>,
}

const PITCH: f64 = 110.0;
const STREET: f64 = 12.0;

/// Generate a city; the same config always gives the same city.
pub fn synthetic_city(cfg: &SynthConfig) -> SyntheticCity {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cols = (cfg.blocks as f64).sqrt().ceil().max(1.0) as usize;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for i in 0..cfg.blocks {
        let (row, col) = (i / cols, i % cols);
        let x0 = cfg.origin.x + col as f64 * PITCH + STREET;
        let y0 = cfg.origin.y + row as f64 * PITCH + STREET;
        let w = rng.gen_range(30.0..PITCH - 2.0 * STREET);
        let h = rng.gen_range(30.0..PITCH - 2.0 * STREET);
        // corners moved inwards keep the outline convex and simple
        let mut jitter = || rng.gen_range(0.0..4.0);
        let boundary = Polygon::new(
            vec![
                Point::new(x0 + jitter(), y0 + jitter()),
                Point::new(x0 + w - jitter(), y0 + jitter()),
                Point::new(x0 + w - jitter(), y0 + h - jitter()),
                Point::new(x0 + jitter(), y0 + h - jitter()),
            ],
            vec![],
        )
        .expect("convex quadrilateral");
        let n_buildings = rng.gen_range(0..=4);
        let buildings = (0..n_buildings)
            .map(|_| {
                let bw = rng.gen_range(8.0..25.0);
                let bh = rng.gen_range(8.0..25.0);
                let bx = x0 + rng.gen_range(-4.0..w - bw + 4.0);
                let by = y0 + rng.gen_range(-4.0..h - bh + 4.0);
                Polygon::rect(bx, by, bx + bw, by + bh).expect("positive size")
            })
            .filter(|b| b.intersects(&boundary))
            .collect();
        blocks.push(BlockGeometry {
            block_id: format!("B{i:04}"),
            boundary,
            buildings,
        });
    }

    let rows = cfg.blocks.div_ceil(cols);
    let width = cols as f64 * PITCH;
    let height = rows as f64 * PITCH;
    let phase: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let nx = (width / cfg.field_spacing).ceil() as usize + 1;
    let ny = (height / cfg.field_spacing).ceil() as usize + 1;
    let mut field = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let u = i as f64 / nx.max(2) as f64;
            let v = j as f64 / ny.max(2) as f64;
            let wave = |k: usize, fu: f64, fv: f64| (fu * u * 6.0 + fv * v * 6.0 + phase[k]).sin();
            let log_k = -2.4 + 0.4 * wave(0, 1.0, 0.4);
            let thickness = 9.0 + 6.0 * wave(1, 0.3, 1.0);
            // the eastern margin is already near the allowed level
            let headroom = if u > 0.85 {
                0.0
            } else {
                (1.6 + 1.3 * wave(2, 0.7, 0.7)).max(0.0)
            };
            let gradient = 2.0e-3 + 1.0e-3 * wave(3, 1.0, -0.5);
            let azimuth = 200.0 + 25.0 * wave(4, 0.5, 0.5);
            field.push((
                Point::new(
                    cfg.origin.x + i as f64 * cfg.field_spacing,
                    cfg.origin.y + j as f64 * cfg.field_spacing,
                ),
                HydroSample {
                    conductivity: 10f64.powf(log_k),
                    thickness,
                    natural_level: 515.0,
                    max_level: 515.0 + headroom,
                    gradient,
                    darcy_velocity: None,
                    flow_dir: azimuth_to_dir(azimuth),
                },
            ));
        }
    }
    SyntheticCity { blocks, field }
}
