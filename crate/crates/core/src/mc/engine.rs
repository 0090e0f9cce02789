use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{mix_seed, SimConfig};
use crate::error::{GeometryError, SimError};
use crate::geometry::{BoundaryPiece, BoundaryPieces, Location, MulticoneDomain, Point};

/// Paths per parallel work item.
const CHUNK: u64 = 1024;

pub(crate) const PURPOSE_PATHS: u64 = 1;
pub(crate) const PURPOSE_EXIT: u64 = 2;
pub(crate) const PURPOSE_TABLE: u64 = 3;

/// Single-step kernel shared by the horizon and exit runs.
pub(crate) struct Walker {
    pub pieces: BoundaryPieces,
    dim: usize,
    bridge: bool,
    adaptive: bool,
    sigmas: f64,
    dt_max: f64,
    dt_min: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PathState {
    pub pos: Point,
    pub dist: Vec<f64>,
    pub dmin: f64,
}

pub(crate) enum StepResult {
    Alive(Location),
    /// Index of the boundary piece blamed for the kill, and the step end.
    Killed { piece: usize, at: Point },
}

impl Walker {
    pub fn new(domain: &MulticoneDomain, cfg: &SimConfig, dt_max: f64) -> Self {
        Self {
            pieces: domain.pieces(),
            dim: domain.dimension,
            bridge: cfg.bridge,
            adaptive: cfg.adaptive,
            sigmas: cfg.boundary_sigmas,
            dt_max,
            dt_min: cfg.dt_min.min(dt_max),
        }
    }

    pub fn start(&self, x: Point) -> Result<PathState, SimError> {
        if x.0[self.dim..].iter().any(|&c| c != 0.0) {
            return Err(GeometryError::Dimension {
                expected: self.dim,
                got: 3,
            }
            .into());
        }
        if self.pieces.locate(&x) == Location::Outside {
            return Err(SimError::StartOutside);
        }
        let mut dist = vec![0.0; self.pieces.len()];
        let dmin = self.pieces.distances_into(&x, &mut dist);
        if !(dmin > 0.0) {
            return Err(SimError::StartOutside);
        }
        Ok(PathState { pos: x, dist, dmin })
    }

    /// `(d/σ)²` clamped to `[dt_min, dt_max]`, or `dt_max` without refinement.
    pub fn natural_step(&self, dmin: f64) -> f64 {
        if self.adaptive {
            let h = dmin / self.sigmas;
            (h * h).clamp(self.dt_min, self.dt_max)
        } else {
            self.dt_max
        }
    }

    pub fn step(
        &self,
        st: &mut PathState,
        scratch: &mut Vec<f64>,
        h: f64,
        rng: &mut ChaCha8Rng,
    ) -> StepResult {
        let s = h.sqrt();
        let mut y = st.pos;
        for c in y.0.iter_mut().take(self.dim) {
            let g: f64 = rng.sample(StandardNormal);
            *c += s * g;
        }
        scratch.resize(self.pieces.len(), 0.0);
        let loc = self.pieces.locate(&y);
        if loc == Location::Outside {
            // the piece nearest to the step; ties go to the earlier (lateral) piece
            for (i, slot) in scratch.iter_mut().enumerate() {
                *slot = self.pieces.distance(i, &y);
            }
            let piece = argmin(st.dist.iter().zip(scratch.iter()).map(|(a, b)| a + b));
            return StepResult::Killed { piece, at: y };
        }
        let dmin = self.pieces.distances_into(&y, scratch);
        if self.bridge {
            let mut survive = 1.0;
            let mut worst = (0, 0.0);
            for (i, (d1, d2)) in st.dist.iter().zip(scratch.iter()).enumerate() {
                let q = super::bridge_crossing_prob(*d1, *d2, h);
                if q > worst.1 {
                    worst = (i, q);
                }
                survive *= 1.0 - q;
            }
            if survive < 1.0 {
                let u: f64 = rng.random();
                if u >= survive {
                    return StepResult::Killed {
                        piece: worst.0,
                        at: y,
                    };
                }
            }
        }
        st.pos = y;
        std::mem::swap(&mut st.dist, scratch);
        st.dmin = dmin;
        StepResult::Alive(loc)
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Per-path generator: the purpose seed picks the key, the path index the stream.
pub(crate) fn path_rng(base: &ChaCha8Rng, path: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(path);
    rng
}

pub(crate) fn base_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, purpose))
}

/// Runs `work` over `0..paths` in fixed chunks on a pool of `workers`
/// threads, returning chunk results in path order.
pub(crate) fn run_chunked<T, F>(paths: u64, workers: usize, work: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
{
    let chunks = paths.div_ceil(CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(paths)))
            .collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KillRecord {
    pub path: u64,
    /// End of the step in which the path was killed.
    pub time: f64,
    pub piece: BoundaryPiece,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Survivor {
    pub path: u64,
    pub position: Point,
    pub location: Location,
}

/// Outcome of `paths` killed Brownian paths observed at one or more horizons.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub domain: MulticoneDomain,
    pub start: Point,
    pub horizons: Vec<f64>,
    pub config: SimConfig,
    /// Kill records in path order (paths alive at the last horizon have none).
    pub kills: Vec<KillRecord>,
    /// Survivors at each horizon, in path order.
    pub survivors: Vec<Vec<Survivor>>,
}

/// The ensemble seen at a single horizon.
#[derive(Debug, Clone, Copy)]
pub struct HorizonView<'a> {
    pub t: f64,
    pub paths: u64,
    pub start: Point,
    pub domain: &'a MulticoneDomain,
    pub survivors: &'a [Survivor],
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub horizon: f64,
    pub paths: u64,
    pub survivors: u64,
    pub survival: f64,
    pub killed: u64,
    pub branch_counts: Vec<u64>,
    pub core_count: u64,
    pub mean_position: [f64; 3],
    pub mean_square_radius: f64,
    pub seed: u64,
    pub config_hash: String,
}

struct ChunkOut {
    kills: Vec<KillRecord>,
    survivors: Vec<Vec<Survivor>>,
    error: Option<SimError>,
}

/// `N` killed paths from `x` observed at time `t`.
pub fn simulate_paths(
    domain: &MulticoneDomain,
    x: Point,
    t: f64,
    cfg: &SimConfig,
) -> Result<PathEnsemble, SimError> {
    simulate_paths_multi(domain, x, &[t], cfg)
}

/// One run observed at every horizon of an increasing list.
pub fn simulate_paths_multi(
    domain: &MulticoneDomain,
    x: Point,
    horizons: &[f64],
    cfg: &SimConfig,
) -> Result<PathEnsemble, SimError> {
    cfg.validate()?;
    if horizons.is_empty() {
        return Err(SimError::Config("at least one horizon is required".into()));
    }
    if !(horizons[0] > 0.0) || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::Config(
            "horizons must be positive and strictly increasing".into(),
        ));
    }
    let violations = domain.validate();
    if !violations.is_empty() {
        return Err(GeometryError::Invalid(violations).into());
    }
    let walker = Walker::new(domain, cfg, cfg.dt);
    let start = walker.start(x)?;
    let base = base_rng(cfg.seed, PURPOSE_PATHS);
    let nh = horizons.len();

    let chunks = run_chunked(cfg.paths, cfg.workers, |range| {
        let mut out = ChunkOut {
            kills: Vec::new(),
            survivors: vec![Vec::new(); nh],
            error: None,
        };
        let mut scratch = Vec::with_capacity(walker.pieces.len());
        for path in range {
            let mut rng = path_rng(&base, path);
            let mut st = start.clone();
            let mut time = 0.0;
            let mut next = 0;
            let mut steps = 0u64;
            loop {
                let target = horizons[next];
                let mut h = walker.natural_step(st.dmin);
                let reach = h >= target - time;
                if reach {
                    h = target - time;
                }
                match walker.step(&mut st, &mut scratch, h, &mut rng) {
                    StepResult::Killed { piece, .. } => {
                        out.kills.push(KillRecord {
                            path,
                            time: time + h,
                            piece: walker.pieces.tag(piece),
                        });
                        break;
                    }
                    StepResult::Alive(location) => {
                        if reach {
                            time = target;
                            out.survivors[next].push(Survivor {
                                path,
                                position: st.pos,
                                location,
                            });
                            next += 1;
                            if next == nh {
                                break;
                            }
                        } else {
                            time += h;
                        }
                    }
                }
                steps += 1;
                if steps >= cfg.max_steps {
                    out.error.get_or_insert(SimError::StepBudget {
                        path,
                        budget: cfg.max_steps,
                    });
                    break;
                }
            }
        }
        out
    })?;

    let mut kills = Vec::new();
    let mut survivors = vec![Vec::new(); nh];
    for chunk in chunks {
        if let Some(e) = chunk.error {
            return Err(e);
        }
        kills.extend(chunk.kills);
        for (all, part) in survivors.iter_mut().zip(chunk.survivors) {
            all.extend(part);
        }
    }
    Ok(PathEnsemble {
        domain: domain.clone(),
        start: x,
        horizons: horizons.to_vec(),
        config: cfg.clone(),
        kills,
        survivors,
    })
}

impl PathEnsemble {
    pub fn horizon(&self, i: usize) -> HorizonView<'_> {
        HorizonView {
            t: self.horizons[i],
            paths: self.config.paths,
            start: self.start,
            domain: &self.domain,
            survivors: &self.survivors[i],
        }
    }

    pub fn last(&self) -> HorizonView<'_> {
        self.horizon(self.horizons.len() - 1)
    }

    /// SHA-256 over the domain, start, horizons and config.
    pub fn config_hash(&self) -> String {
        let payload = serde_json::json!({
            "domain": self.domain,
            "start": self.start,
            "horizons": self.horizons,
            "config": self.config,
        });
        hex_digest(payload.to_string().as_bytes())
    }

    pub fn summary(&self, i: usize) -> EnsembleSummary {
        let view = self.horizon(i);
        let n = view.survivors.len() as u64;
        let mut branch_counts = vec![0u64; self.domain.branches.len()];
        let mut core_count = 0;
        let mut mean = [0.0; 3];
        let mut sq = 0.0;
        for s in view.survivors {
            match s.location {
                Location::Branch(j) => branch_counts[j] += 1,
                Location::Core => core_count += 1,
                Location::Outside => {}
            }
            for (m, c) in mean.iter_mut().zip(s.position.0) {
                *m += c;
            }
            sq += s.position.dot(&s.position);
        }
        if n > 0 {
            mean.iter_mut().for_each(|m| *m /= n as f64);
            sq /= n as f64;
        }
        EnsembleSummary {
            horizon: view.t,
            paths: view.paths,
            survivors: n,
            survival: n as f64 / view.paths as f64,
            killed: view.paths - n,
            branch_counts,
            core_count,
            mean_position: mean,
            mean_square_radius: sq,
            seed: self.config.seed,
            config_hash: self.config_hash(),
        }
    }

    /// One row per path at horizon `i`:
    /// `path,survived,x,y,z,location,kill_time,kill_piece`.
    pub fn write_csv<W: Write>(&self, i: usize, out: &mut W) -> std::io::Result<()> {
        let t = self.horizons[i];
        writeln!(out, "path,survived,x,y,z,location,kill_time,kill_piece")?;
        let mut alive = self.survivors[i].iter().peekable();
        let mut dead = self.kills.iter().filter(|k| k.time <= t).peekable();
        for path in 0..self.config.paths {
            if let Some(s) = alive.next_if(|s| s.path == path) {
                let p = s.position.0;
                writeln!(
                    out,
                    "{path},1,{},{},{},{},,",
                    p[0],
                    p[1],
                    p[2],
                    location_tag(s.location)
                )?;
            } else if let Some(k) = dead.next_if(|k| k.path == path) {
                writeln!(out, "{path},0,,,,,{},{}", k.time, piece_tag(k.piece))?;
            }
        }
        Ok(())
    }
}

pub fn location_tag(loc: Location) -> String {
    match loc {
        Location::Core => "core".into(),
        Location::Branch(j) => format!("branch{j}"),
        Location::Outside => "outside".into(),
    }
}

pub fn piece_tag(piece: BoundaryPiece) -> String {
    match piece {
        BoundaryPiece::Lateral(j) => format!("lateral{j}"),
        BoundaryPiece::Base(j) => format!("base{j}"),
        BoundaryPiece::CoreSphere(k) => format!("core{k}"),
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Opening, TruncatedCone};
    use std::f64::consts::PI;

    fn half_plane() -> MulticoneDomain {
        MulticoneDomain::single_cone(TruncatedCone::new(Point::ORIGIN, Opening::arc(0.0, PI), 1e-6))
    }

    #[test]
    fn ensemble_is_independent_of_worker_count() {
        let cfg = SimConfig {
            paths: 3000,
            seed: 11,
            dt: 1e-2,
            ..SimConfig::default()
        };
        let a = simulate_paths(&half_plane(), Point::new2(0.0, 0.5), 0.5, &cfg).unwrap();
        let b = simulate_paths(&half_plane(), Point::new2(0.0, 0.5), 0.5, &SimConfig { workers: 3, ..cfg }).unwrap();
        assert_eq!(a.kills, b.kills);
        assert_eq!(a.survivors, b.survivors);
    }

    #[test]
    fn rejects_start_outside() {
        let cfg = SimConfig::default();
        let r = simulate_paths(&half_plane(), Point::new2(0.0, -1.0), 1.0, &cfg);
        assert_eq!(r.unwrap_err(), SimError::StartOutside);
        let r = simulate_paths(&half_plane(), Point::new2(0.0, 1.0), 0.0, &cfg);
        assert!(matches!(r, Err(SimError::Config(_))));
    }

    #[test]
    fn multi_horizon_survivors_shrink() {
        let cfg = SimConfig {
            paths: 2000,
            ..SimConfig::default()
        };
        let e = simulate_paths_multi(&half_plane(), Point::new2(0.0, 1.0), &[0.5, 1.0, 2.0], &cfg).unwrap();
        let counts: Vec<_> = e.survivors.iter().map(Vec::len).collect();
        assert!(counts[0] >= counts[1] && counts[1] >= counts[2]);
        assert_eq!(e.kills.len() + counts[2], 2000);
        let mut csv = Vec::new();
        e.write_csv(1, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2001);
    }
}
