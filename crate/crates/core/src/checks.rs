//! Numerical self-checks run by `uvsplat gradcheck`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deform::{landmark_loss, laplacian_loss, normal_loss, semantic_pixel_mask, Landmark, LandmarkSet};
use crate::error::Result;
use crate::geometry::{six_view_rig_with, Camera, RegionWeights, RigOptions, Vec2, Vec3};
use crate::raster::{rasterize, GBuffer};
use crate::synth::oracle::{oracle_fuse, oracle_gradcheck};
use crate::synth::random::{random_features, random_gbuffer, random_view};
use crate::synth::{analytic_normal_maps, make_scene, SceneSpec, Shape};
use crate::uvsplat::{bilinear_taps, fuse_views, splat_level, FeatureMap, FusionConfig, FusionMode, ViewInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Adjoint,
    Gradients,
    Oracle,
    Partition,
    Constant,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "adjoint" => Suite::Adjoint,
            "gradients" | "fd" => Suite::Gradients,
            "oracle" => Suite::Oracle,
            "partition" => Suite::Partition,
            "constant" => Suite::Constant,
            "all" => Suite::All,
            _ => return Err(format!("unknown suite `{s}` (adjoint, gradients, oracle, partition, constant, all)")),
        })
    }
}

/// One row of the check table. `value` is the worst observed error.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status}  {:<22} {:>12.3e}  <= {:.0e}", self.name, self.value, self.tolerance)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Adjoint {
        out.push(adjoint(&mut rng, 50)?);
    }
    if all || suite == Suite::Gradients {
        out.push(fused_fd(&mut rng)?);
        out.extend(loss_fd(&mut rng)?);
    }
    if all || suite == Suite::Oracle {
        out.push(oracle(&mut rng, 200)?);
    }
    if all || suite == Suite::Partition {
        out.extend(partition(&mut rng, 100)?);
    }
    if all || suite == Suite::Constant {
        out.push(constant(&mut rng)?);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Instance {
    views: Vec<(GBuffer, Camera, FeatureMap)>,
    config: FusionConfig,
}

impl Instance {
    fn random<R: Rng>(rng: &mut R, res: &[usize], max_views: usize, max_levels: usize) -> Self {
        let nv = rng.gen_range(2..=max_views);
        let size = rng.gen_range(6..=20);
        let channels = rng.gen_range(1..=3);
        let coverage = rng.gen_range(0.2..0.9);
        let base_res = *res.choose(rng).unwrap();
        let views = (0..nv).map(|_| random_view(rng, size, size, channels, coverage)).collect();
        let config = FusionConfig {
            gamma: (0..nv).map(|_| rng.gen_range(0.1..1.0)).collect(),
            base_res,
            num_levels: rng.gen_range(1..=max_levels.min(base_res.ilog2() as usize + 1)),
            density_tau: rng.gen_range(0.3..2.0),
            mode: if rng.gen_bool(0.75) { FusionMode::HoleFilled } else { FusionMode::RawLevels },
            ..FusionConfig::default()
        };
        Instance { views, config }
    }

    fn inputs(&self) -> Vec<ViewInput<'_>> {
        self.views
            .iter()
            .map(|(gbuffer, camera, features)| ViewInput { gbuffer, camera, features })
            .collect()
    }
}

/// `|⟨F f, g⟩ − ⟨f, Fᵀ g⟩| / (‖f‖ ‖g‖)` over random instances.
pub fn adjoint<R: Rng>(rng: &mut R, trials: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let inst = Instance::random(rng, &[8, 16, 32, 64], 3, 3);
        let (out, tape) = fuse_views(&inst.inputs(), &inst.config)?;
        let feats: Vec<FeatureMap> = inst
            .views
            .iter()
            .map(|(gb, _, f)| random_features(rng, gb.width, gb.height, f.channels()))
            .collect();
        let g: Vec<f64> = (0..out.features.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fwd = tape.forward(&feats)?;
        let back = tape.backward(&g)?;
        let lhs = dot(&fwd, &g);
        let rhs: f64 = feats.iter().zip(&back).map(|(f, b)| dot(f.data(), b.data())).sum();
        let fnorm = feats.iter().map(|f| dot(f.data(), f.data())).sum::<f64>().sqrt();
        let scale = fnorm * norm(&g);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(Check {
        name: "adjoint identity",
        value: worst,
        tolerance: 1e-10,
    })
}

/// Central differences of `⟨g, fuse(f)⟩` against the adjoint at 100 input
/// coordinates.
pub fn fused_fd<R: Rng>(rng: &mut R) -> Result<Check> {
    let inst = Instance::random(rng, &[16, 32], 3, 3);
    let (out, tape) = fuse_views(&inst.inputs(), &inst.config)?;
    let g: Vec<f64> = (0..out.features.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad: Vec<f64> = tape.backward(&g)?.iter().flat_map(|f| f.data().to_vec()).collect();
    let shapes: Vec<(usize, usize, usize)> =
        inst.views.iter().map(|(_, _, f)| (f.width(), f.height(), f.channels())).collect();
    let x: Vec<f64> = inst.views.iter().flat_map(|(_, _, f)| f.data().to_vec()).collect();
    let coords: Vec<usize> = (0..100).map(|_| rng.gen_range(0..x.len())).collect();
    let objective = |x: &[f64]| {
        let mut at = 0;
        let maps: Vec<FeatureMap> = shapes
            .iter()
            .map(|&(w, h, c)| {
                let n = w * h * c;
                at += n;
                FeatureMap::new(w, h, c, x[at - n..at].to_vec()).unwrap()
            })
            .collect();
        dot(&tape.forward(&maps).unwrap(), &g)
    };
    Ok(Check {
        name: "fused uv fd",
        value: oracle_gradcheck(objective, &x, &grad, &coords, 1e-4, 1e-8),
        tolerance: 1e-5,
    })
}

fn flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflat(x: &[f64]) -> Vec<Vec3> {
    x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

/// Central differences of the three deformation losses on a jittered sphere.
pub fn loss_fd<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 2 }))?;
    let mesh = scene.mesh;
    let pos: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|p| p + Vec3::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)))
        .collect();
    let x = flat(&pos);
    let coords: Vec<usize> = (0..100).map(|_| rng.gen_range(0..x.len())).collect();
    let opts = RigOptions {
        width: 64,
        height: 64,
        ..Default::default()
    };
    let cams = six_view_rig_with(4.0, Vec3::zeros(), &opts)?;

    let gbs: Vec<GBuffer> = cams.iter().map(|c| rasterize(&mesh, &pos, c)).collect::<Result<_>>()?;
    let targets = analytic_normal_maps((1.0, 0.8, 1.2), &cams);
    let masks: Vec<Vec<bool>> = gbs.iter().map(|gb| semantic_pixel_mask(gb, &mesh)).collect();
    let nml = normal_loss(&gbs, &mesh, &pos, &targets, &masks)?;
    let nml_err = oracle_gradcheck(
        |x| normal_loss(&gbs, &mesh, &unflat(x), &targets, &masks).unwrap().value,
        &x,
        &flat(&nml.grad),
        &coords,
        1e-4,
        1e-6,
    );

    let entries = (0..40)
        .map(|_| {
            let vertex = rng.gen_range(0..pos.len());
            let camera = rng.gen_range(0..cams.len());
            let p = cams[camera].project(&pos[vertex]).pixel;
            Landmark {
                vertex,
                camera,
                target: Vec2::new(
                    (p.x + rng.gen_range(-4.0..4.0)).clamp(0.0, 63.0),
                    (p.y + rng.gen_range(-4.0..4.0)).clamp(0.0, 63.0),
                ),
            }
        })
        .collect();
    let lm = LandmarkSet::new(entries);
    let (lmk, _) = landmark_loss(&pos, &lm, &cams, mesh.mirror(), 0.1)?;
    let lmk_err = oracle_gradcheck(
        |x| landmark_loss(&unflat(x), &lm, &cams, mesh.mirror(), 0.1).unwrap().0.value,
        &x,
        &flat(&lmk.grad),
        &coords,
        1e-4,
        1e-4,
    );

    let rw = RegionWeights::default();
    let lap = laplacian_loss(&mesh, &pos, &rw)?;
    let lap_err = oracle_gradcheck(
        |x| laplacian_loss(&mesh, &unflat(x), &rw).unwrap().value,
        &x,
        &flat(&lap.grad),
        &coords,
        1e-4,
        1e-8,
    );
    Ok(vec![
        Check {
            name: "normal loss fd",
            value: nml_err,
            tolerance: 1e-4,
        },
        Check {
            name: "landmark loss fd",
            value: lmk_err,
            tolerance: 1e-5,
        },
        Check {
            name: "laplacian loss fd",
            value: lap_err,
            tolerance: 1e-6,
        },
    ])
}

/// Largest difference from the brute-force oracle over tiny instances.
pub fn oracle<R: Rng>(rng: &mut R, trials: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let inst = Instance::random(rng, &[1, 2, 3, 4, 5, 6, 7, 8], 3, 2);
        let (out, _) = fuse_views(&inst.inputs(), &inst.config)?;
        let refs: Vec<_> = inst.views.iter().map(|(g, c, f)| (g, c, f)).collect();
        let want = oracle_fuse(&refs, &inst.config)?;
        for (a, b) in out.features.iter().zip(&want.features) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in out.total_weight.iter().zip(&want.total_weight) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    Ok(Check {
        name: "fusion oracle",
        value: worst,
        tolerance: 1e-9,
    })
}

/// Bilinear weights sum to one for in-range pixels, and splatted density
/// equals the number of such pixels.
pub fn partition<R: Rng>(rng: &mut R, trials: usize) -> Result<Vec<Check>> {
    let mut taps_err: f64 = 0.0;
    let mut mass_err: f64 = 0.0;
    for _ in 0..trials {
        let res = rng.gen_range(2..=64);
        let size = rng.gen_range(4..=24);
        let half = 0.5 / res as f64;
        let coverage = rng.gen_range(0.1..1.0);
        let gb = random_gbuffer(rng, size, size, coverage, half, 1.0 - half);
        let f = FeatureMap::zeros(size, size, 1);
        let level = splat_level(&gb, &f, res)?;
        let mut count = 0usize;
        for p in gb.covered() {
            taps_err = taps_err.max((bilinear_taps(gb.uv[p], res).weight_sum() - 1.0).abs());
            count += 1;
        }
        let mass: f64 = level.d.iter().sum();
        mass_err = mass_err.max((mass - count as f64).abs() / (count.max(1) as f64));
    }
    Ok(vec![
        Check {
            name: "bilinear partition",
            value: taps_err,
            tolerance: 1e-12,
        },
        Check {
            name: "density conservation",
            value: mass_err,
            tolerance: 1e-12,
        },
    ])
}

/// A constant feature seen by six views fuses back to that constant.
pub fn constant<R: Rng>(rng: &mut R) -> Result<Check> {
    let c = rng.gen_range(-2.0..2.0);
    let config = FusionConfig {
        base_res: 64,
        ..FusionConfig::default()
    };
    let views: Vec<(GBuffer, Camera, FeatureMap)> = (0..6)
        .map(|_| {
            let (gb, cam, _) = random_view(rng, 24, 24, 1, 0.6);
            let f = FeatureMap::new(24, 24, 1, vec![c; 24 * 24]).unwrap();
            (gb, cam, f)
        })
        .collect();
    let inputs: Vec<ViewInput> = views
        .iter()
        .map(|(gbuffer, camera, features)| ViewInput { gbuffer, camera, features })
        .collect();
    let (out, _) = fuse_views(&inputs, &config)?;
    let worst = out
        .features
        .iter()
        .zip(&out.total_weight)
        .filter(|(_, &w)| w > 10.0 * config.epsilon)
        .map(|(f, _)| (f - c).abs())
        .fold(0.0, f64::max);
    Ok(Check {
        name: "constant preservation",
        value: worst,
        tolerance: 1e-6,
    })
}
