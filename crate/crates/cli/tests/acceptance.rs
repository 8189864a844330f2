//! End-to-end acceptance checks. One PASS/FAIL line per criterion; exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cpwl_geometry::analysis::stats::mean;
use cpwl_geometry::analysis::{density_scaling_correlation, dynamics_log_summary, ood_report, rank_sum, LatentBox};
use cpwl_geometry::descriptors::{descriptors_at, local_complexity, local_rank, local_scaling, ComplexityConfig, GridSpec};
use cpwl_geometry::guidance::{
    build_reward_dataset, decoder_psi, guidance_sweep, guided_sample, oracle_guided_sample, rescale_decoder_input,
    train_reward, GuidanceConfig, PsiTarget, RewardConfig, ShiftScale,
};
use cpwl_geometry::linalg::{rng, Matrix};
use cpwl_geometry::models::data::{synthetic_digits, uniform_noise_images};
use cpwl_geometry::models::ddpm::{
    denoise_trajectory, initial_noise, timestep_descriptors, train_ddpm, DdpmConfig, DiffusionModel, DuplicateConfig,
};
use cpwl_geometry::models::toy::{train_toy_generator, ToyConfig, ToyRun};
use cpwl_geometry::models::vae::{train_vae, VaeConfig};
use cpwl_geometry::net::{affine_at, mlp, Activation, CpwlNetwork, Init, MlpSpec};
use cpwl_geometry::partition2d::{compute_partition, square, Slice2D};

type Outcome = Result<String, String>;

struct Shared {
    toy: Option<(ToyConfig, ToyRun)>,
    ddpm: Option<(DdpmConfig, DiffusionModel)>,
}

impl Shared {
    fn toy(&mut self) -> &(ToyConfig, ToyRun) {
        self.toy.get_or_insert_with(|| {
            let cfg = ToyConfig::default();
            let run = train_toy_generator(&cfg).expect("toy training");
            (cfg, run)
        })
    }

    fn ddpm(&mut self) -> &(DdpmConfig, DiffusionModel) {
        self.ddpm.get_or_insert_with(|| {
            let cfg = DdpmConfig::default();
            let run = train_ddpm(&cfg.training_data(), &cfg).expect("ddpm training");
            (cfg, run.model)
        })
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_jacobian_oracle() -> Outcome {
    let mut r = rng::seeded(2024);
    let h = 1e-4;
    let (mut pairs, mut worst) = (0, 0.0f64);
    let mut net_seed = 0u64;
    while pairs < 500 {
        net_seed += 1;
        let depth = 1 + rng::uniform(&mut r, 0.0, 6.0) as usize;
        let hidden: Vec<usize> = (0..depth).map(|_| 1 + rng::uniform(&mut r, 0.0, 64.0) as usize).collect();
        let input = 1 + rng::uniform(&mut r, 0.0, 8.0) as usize;
        let output = 1 + rng::uniform(&mut r, 0.0, 8.0) as usize;
        let activation = if net_seed % 2 == 0 { Activation::Relu } else { Activation::leaky_default() };
        let spec = MlpSpec { input_dim: input, hidden, output_dim: output, activation, init: Init::He { bias_std: 0.5 } };
        let net = mlp(&spec, net_seed).map_err(|e| e.to_string())?;
        // Central differences are exact for an affine piece, so the stencil must stay in one region.
        let Some(z) = (0..20).map(|_| rng::normal_vec::<f64>(&mut r, input)).find(|z| stencil_in_region(&net, z, h)) else {
            continue;
        };
        let slope = affine_at(&net, &z).map_err(|e| e.to_string())?.slope;
        let scale = slope.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..input {
            let (mut a, mut b) = (z.clone(), z.clone());
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (net.eval(&a).unwrap(), net.eval(&b).unwrap());
            for i in 0..output {
                let fd = (fa[i] - fb[i]) / (2.0 * h);
                let s = slope[(i, j)];
                // Entries far below the matrix scale are compared against that floor.
                let rel = (s - fd).abs() / s.abs().max(1e-6 * scale).max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
        pairs += 1;
    }
    check(worst <= 1e-4, format!("{pairs} pairs, worst relative error {worst:.2e}"))
}

fn stencil_in_region(net: &CpwlNetwork<f64>, z: &[f64], h: f64) -> bool {
    let base = net.forward(z).unwrap().1;
    (0..z.len()).all(|j| {
        [h, -h].iter().all(|d| {
            let mut p = z.to_vec();
            p[j] += d;
            net.forward(&p).unwrap().1 == base
        })
    })
}

fn c2_descriptor_identities() -> Outcome {
    let diag = CpwlNetwork::linear(Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap(), vec![0.0; 2]).unwrap();
    let psi = local_scaling(&diag, &[0.3, -0.7]).unwrap().psi;
    let psi_err = (psi - 6f64.ln()).abs();
    let mut nu_err = 0.0f64;
    let mut delta_max = 0;
    for k in 1..=8 {
        let eye = CpwlNetwork::linear(Matrix::identity(k), vec![0.0; k]).unwrap();
        let z = vec![0.25; k];
        nu_err = nu_err.max((local_rank(&eye, &z).unwrap().nu - k as f64).abs());
        let cfg = ComplexityConfig::full(k, 1.0).unwrap();
        delta_max = delta_max.max(local_complexity(&eye, &z, &cfg).unwrap());
    }
    check(
        psi_err <= 1e-9 && nu_err <= 1e-6 && delta_max == 0,
        format!("|ψ − ln 6| {psi_err:.1e}, max |ν − k| {nu_err:.1e}, max δ(linear) {delta_max}"),
    )
}

fn c3_exact_partition(shared: &mut Shared) -> Outcome {
    let (cfg, toy) = shared.toy();
    let d = cfg.domain;
    let part = compute_partition(&toy.net, &Slice2D::identity(), &square(d)).map_err(|e| e.to_string())?;
    let n = 2048;
    let mut seen = HashSet::new();
    for i in 0..n {
        for j in 0..n {
            let p = [-d + 2.0 * d * (i as f64 + 0.5) / n as f64, -d + 2.0 * d * (j as f64 + 0.5) / n as f64];
            seen.insert(toy.net.forward(&p).unwrap().1);
        }
    }
    let regions = part.len();
    let ratio = seen.len() as f64 / regions as f64;
    let mut worst = 0.0f64;
    for region in &part.regions {
        let c = region.centroid();
        // Centroid plus the vertices pulled a fifth of the way in.
        let probes = std::iter::once(c).chain(region.vertices.iter().map(|v| [0.8 * v[0] + 0.2 * c[0], 0.8 * v[1] + 0.2 * c[1]]));
        for p in probes {
            let exact = toy.net.eval(&p).unwrap();
            let via = region.affine.apply(&p).unwrap();
            worst = exact.iter().zip(&via).fold(worst, |m, (a, b)| m.max((a - b).abs()));
        }
    }
    check(
        (0.98..=1.0).contains(&ratio) && worst <= 1e-6,
        format!("{regions} regions, {} sampled patterns ({:+.2}%), worst affine error {worst:.1e}", seen.len(), 100.0 * (ratio - 1.0)),
    )
}

fn c4_density_scaling(shared: &mut Shared) -> Outcome {
    let (cfg, toy) = shared.toy();
    let mut r = rng::seeded(1);
    let d = cfg.domain;
    let latents: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng::uniform(&mut r, -d, d), rng::uniform(&mut r, -d, d)]).collect();
    let c = density_scaling_correlation(&toy.net, &latents, 1.0, Some(&LatentBox::square(2, d)), 1).map_err(|e| e.to_string())?;
    check(c.spearman > 0.5, format!("Spearman {:.3} (Pearson {:.3}) over {} latents", c.spearman, c.pearson, c.n))
}

fn c5_ddpm_bands(shared: &mut Shared) -> Outcome {
    let (_, model) = shared.ddpm();
    let spec = GridSpec::square(3.0, 128);
    let cc = ComplexityConfig::full(2, 6.0 / 127.0).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for t in [17, 28, 39] {
        let g = timestep_descriptors(model, &spec, t, &cc, 1).map_err(|e| e.to_string())?;
        let (mut d_in, mut d_off, mut p_in, mut p_off) = (vec![], vec![], vec![], vec![]);
        for c in &g.cells {
            let inside = ((c.z[0].powi(2) + c.z[1].powi(2)).sqrt() - 2.0).abs() < 0.3;
            let (d, p) = if inside { (&mut d_in, &mut p_in) } else { (&mut d_off, &mut p_off) };
            d.push(c.delta as f64);
            if c.psi.is_finite() {
                p.push(c.psi);
            }
        }
        let pd = rank_sum(&d_off, &d_in).unwrap().p_greater;
        let pp = rank_sum(&p_off, &p_in).unwrap().p_less;
        ok &= mean(&d_in) > mean(&d_off) && mean(&p_in) < mean(&p_off) && pd < 0.01 && pp < 0.01;
        parts.push(format!(
            "t={t}: δ {:.2}/{:.2} p {pd:.1e}, ψ {:.3}/{:.3} p {pp:.1e}",
            mean(&d_in),
            mean(&d_off),
            mean(&p_in),
            mean(&p_off)
        ));
    }
    check(ok, format!("in/off band; {}", parts.join("; ")))
}

fn c6_vae_dynamics() -> Outcome {
    let train = synthetic_digits(2000, 1);
    let eval = synthetic_digits(400, 2);
    let mut ends = Vec::new();
    let mut parts = Vec::new();
    let mut ok = true;
    for noise in [0.0, 0.1] {
        let mut cfg = VaeConfig::default();
        cfg.latent_dim = 4;
        cfg.train.learning_rate = 3e-4;
        cfg.train.noise_std = noise;
        cfg.probe.samples = 400;
        let run = train_vae(&train, &eval, &cfg).map_err(|e| e.to_string())?;
        let s = dynamics_log_summary(&run.log).map_err(|e| e.to_string())?;
        let tail = &run.log[run.log.len() - 5..];
        let end_psi = mean(&tail.iter().map(|r| r.psi_mean).collect::<Vec<_>>());
        let end_delta = mean(&tail.iter().map(|r| r.delta_mean).collect::<Vec<_>>());
        let (ds, ps) = (s.delta.slopes[2], s.psi.slopes[2]);
        ok &= ds > 0.0 && ps < 0.0;
        parts.push(format!("noise {noise}: late slopes δ {ds:+.2e} ψ {ps:+.2e}, end δ {end_delta:.2} ψ {end_psi:.3}"));
        ends.push((end_psi, end_delta));
    }
    ok &= ends[1].1 > ends[0].1 && ends[1].0 < ends[0].0;
    check(ok, parts.join("; "))
}

fn c7_ood() -> Outcome {
    let cfg = VaeConfig::default();
    let train = synthetic_digits(2000, 1);
    let eval = synthetic_digits(1000, 2);
    let run = train_vae(&train, &eval, &cfg).map_err(|e| e.to_string())?;
    let noise = uniform_noise_images(1000, eval.width, eval.height, 3);
    let p = cfg.probe.subspace_dim.min(cfg.latent_dim);
    let cc = ComplexityConfig::random(p, cfg.latent_dim, cfg.probe.radius, cfg.probe.frame_seed).unwrap();
    let rep = ood_report(&run.vae.decoder, |x| run.vae.encode_mean(x), &eval.images, &noise.images, &cc, 1)
        .map_err(|e| e.to_string())?;
    let (psi_in, psi_out) = (mean(&rep.in_psi), mean(&rep.out_psi));
    let (nu_in, nu_out) = (mean(&rep.in_nu), mean(&rep.out_nu));
    check(
        rep.auroc_psi > 0.8 && psi_out > psi_in && nu_out > nu_in,
        format!("AUROC(ψ) {:.3}; mean ψ OOD {psi_out:.2} vs ID {psi_in:.2}; mean ν OOD {nu_out:.3} vs ID {nu_in:.3}", rep.auroc_psi),
    )
}

fn c8_memorization() -> Outcome {
    let point = [3.0, 0.0];
    let mut cfg = DdpmConfig::default();
    cfg.duplicate = Some(DuplicateConfig { point, multiplicity: 100 });
    let model = train_ddpm(&cfg.training_data(), &cfg).map_err(|e| e.to_string())?.model;
    let cc = ComplexityConfig::full(2, 0.05).unwrap();
    let (mut mem, mut other) = (vec![], vec![]);
    for s in 0..500u64 {
        let traj = denoise_trajectory(&model, &initial_noise(2, s), s, None).map_err(|e| e.to_string())?;
        let z0 = &traj.last().unwrap().1;
        let late: Vec<f64> = traj
            .iter()
            .filter(|(t, _)| (1..=10).contains(t))
            .map(|(t, z)| descriptors_at(&model.step_map(*t).unwrap(), z, &cc).unwrap().psi)
            .filter(|v| v.is_finite())
            .collect();
        let dist = ((z0[0] - point[0]).powi(2) + (z0[1] - point[1]).powi(2)).sqrt();
        if dist < 0.1 {
            mem.push(mean(&late));
        } else {
            other.push(mean(&late));
        }
    }
    if mem.is_empty() {
        return Err("no trajectory reached the duplicated point".into());
    }
    let p = rank_sum(&other, &mem).unwrap().p_less;
    check(
        mean(&mem) < mean(&other) && p < 0.05,
        format!("{} memorized ψ {:.3} vs {} others {:.3}, p {p:.1e}", mem.len(), mean(&mem), other.len(), mean(&other)),
    )
}

fn c9_guidance(shared: &mut Shared) -> Outcome {
    let decoder = rescale_decoder_input(&shared.toy().1.net, 0.85).unwrap();
    let (cfg, model) = shared.ddpm();
    let pts: Vec<Vec<f64>> = cfg.training_data().iter().take(500).map(|p| p.to_vec()).collect();
    let ds = build_reward_dataset(model, PsiTarget::Decoder(&decoder), &pts, 10, 1).map_err(|e| e.to_string())?;
    let rw = train_reward(&ds, model.num_timesteps(), &RewardConfig::default()).map_err(|e| e.to_string())?;

    let unguided = GuidanceConfig::new(0.0);
    let bit_equal = (0..20u64).all(|s| {
        let a = guided_sample(model, &rw.model, &unguided, s).unwrap();
        let b = denoise_trajectory(model, &initial_noise(2, s), s, None).unwrap();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.1.iter().zip(&y.1).all(|(u, v)| u.to_bits() == v.to_bits()))
    });

    let mut template = GuidanceConfig::new(0.0);
    template.scale = ShiftScale::Std;
    let rhos = [-1.5, -1.0, 0.0, 1.0, 1.5];
    let seeds: Vec<u64> = (0..500).collect();
    let sweep = guidance_sweep(model, &rw.model, "decoder", &rhos, &seeds, &template, decoder_psi(&decoder), 1)
        .map_err(|e| e.to_string())?;
    let means: Vec<f64> = sweep.outcomes.iter().map(|o| o.mean_final_psi).collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let max_p = sweep.adjacent.iter().fold(0.0f64, |m, a| m.max(a.p_greater));

    let report = &rw.report;
    let accuracy_ok = report.heldout_accuracy >= report.majority_baseline + 0.10;

    let oracle = |z: &[f64], _t: usize| local_scaling(&decoder, z).map(|s| s.psi);
    let final_psi = |traj: Vec<(usize, Vec<f64>)>| local_scaling(&decoder, &traj.last().unwrap().1).ok().map(|s| s.psi);
    let mut agree = Vec::new();
    for rho in [-1.0, 1.0] {
        let cfg = GuidanceConfig { rho, ..template.clone() };
        let (mut base, mut sur, mut exact) = (vec![], vec![], vec![]);
        for s in 0..100u64 {
            base.extend(final_psi(guided_sample(model, &rw.model, &unguided, s).unwrap()));
            sur.extend(final_psi(guided_sample(model, &rw.model, &cfg, s).unwrap()));
            exact.extend(final_psi(oracle_guided_sample(model, &oracle, &cfg, s, 0.1).unwrap()));
        }
        let (ds, dx) = (mean(&sur) - mean(&base), mean(&exact) - mean(&base));
        agree.push((rho, ds, dx, ds.signum() == dx.signum() && ds != 0.0));
    }
    let signs_ok = agree.iter().all(|a| a.3);

    let means_txt: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    let shifts: Vec<String> = agree.iter().map(|(r, s, x, _)| format!("ρ {r:+}: surrogate {s:+.4} oracle {x:+.4}")).collect();
    check(
        bit_equal && increasing && max_p < 0.01 && accuracy_ok && signs_ok,
        format!(
            "ρ=0 bit-identical {bit_equal}; means [{}], max adjacent p {max_p:.1e}; accuracy {:.3} vs baseline {:.3}; {}",
            means_txt.join(", "),
            report.heldout_accuracy,
            report.majority_baseline,
            shifts.join(", ")
        ),
    )
}

const TOY: &str = r#"
seed = 3
heldout_grid = 8

[model]
domain = 10.0

[model.train]
steps = 300
batch_size = 64
learning_rate = 3e-3
optimizer = "adam"
noise_std = 0.0
hidden = [12, 12]
activation = "relu"
log_every = 100

[model.surface]
centers = [[0.0, 0.0], [4.0, -3.0]]
amplitudes = [1.5, 0.8]
widths = [2.5, 2.0]
planar_scale = 0.2
"#;

const VAE_MODEL: &str = r#"
[model]
latent_dim = 4
kl_weight = 1.0

[model.train]
steps = 200
batch_size = 32
learning_rate = 1e-3
optimizer = "adam"
noise_std = 0.0
hidden = [32, 32]
activation = "relu"
log_every = 50

[model.probe]
samples = 20
subspace_dim = 2
radius = 0.05
frame_seed = 7
"#;

const DATA: &str = r#"
[data]
source = "synthetic"
train_size = 200
eval_size = 60
data_seed = 1
"#;

const DDPM: &str = r#"
seed = 2
samples = 20

[model]
num_samples = 300
data_seed = 0

[model.train]
steps = 400
batch_size = 64
learning_rate = 1e-3
optimizer = "adam"
noise_std = 0.0
hidden = [32, 32]
activation = "relu"
log_every = 100

[model.schedule]
num_timesteps = 20
beta_start = 1e-4
beta_end = 0.02

[model.dataset]
kind = "ring"
radius = 2.0
noise = 0.05

[model.duplicate]
point = [3.0, 0.0]
multiplicity = 20
"#;

/// Every subcommand with a small config, in dependency order.
fn cli_jobs() -> Vec<(&'static str, String)> {
    let complexity = "[complexity]\nradius = 0.05\nsubspace_dim = 2\nframe_seed = 7\n";
    vec![
        ("train-toy", TOY.to_string()),
        ("train-vae", format!("seed = 1\n{VAE_MODEL}{DATA}")),
        ("train-ddpm", DDPM.to_string()),
        (
            "descriptors",
            "seed = 4\n[map]\ncheckpoint = \"train-toy/toy.ckpt\"\nnetwork = \"generator\"\n\
             [complexity]\nradius = 0.05\n[latents]\nkind = \"uniform\"\ncount = 150\nhalf_width = 10.0\n\
             [density]\nreflect = true\n"
                .to_string(),
        ),
        (
            "grid",
            "seed = 0\n[map]\ncheckpoint = \"train-ddpm/ddpm.ckpt\"\nnetwork = \"denoiser\"\ntimestep = 10\n\
             [grid]\nx_range = [-3.0, 3.0]\ny_range = [-3.0, 3.0]\nresolution = 24\n\
             [band]\ncenter = [0.0, 0.0]\nradius = 2.0\nhalf_width = 0.3\n"
                .to_string(),
        ),
        (
            "slice",
            "seed = 0\nhalf_width = 10.0\ncoloring = \"psi\"\nmax_regions = 100000\n\
             [map]\ncheckpoint = \"train-toy/toy.ckpt\"\nnetwork = \"generator\"\n"
                .to_string(),
        ),
        (
            "ood",
            format!(
                "seed = 0\ncheckpoint = \"train-vae/vae.ckpt\"\nood_count = 60\n\
                 [data]\nsource = \"synthetic\"\ntrain_size = 1\neval_size = 60\ndata_seed = 1\n{complexity}"
            ),
        ),
        ("dynamics", format!("seed = 0\nnoise_levels = [0.0, 0.1]\ntail_rows = 2\n{VAE_MODEL}{DATA}")),
        (
            "trajectory",
            "seed = 0\ncheckpoint = \"train-ddpm/ddpm.ckpt\"\ncount = 40\n[complexity]\nradius = 0.05\n\
             [memorization]\npoint = [3.0, 0.0]\nradius = 0.3\nlate_steps = 5\n"
                .to_string(),
        ),
        (
            "train-reward",
            "seed = 0\ncheckpoint = \"train-ddpm/ddpm.ckpt\"\nn_timesteps = 4\n\
             [pipeline]\nkind = \"decoder\"\n[pipeline.decoder]\ncheckpoint = \"train-toy/toy.ckpt\"\nnetwork = \"generator\"\ninput_scale = 0.85\n\
             [data]\ncount = 100\ndata_seed = 1\n[data.dataset]\nkind = \"ring\"\nradius = 2.0\nnoise = 0.05\n\
             [reward]\nholdout_fraction = 0.2\n[reward.train]\nsteps = 200\nbatch_size = 64\nlearning_rate = 1e-3\n\
             optimizer = \"adam\"\nnoise_std = 0.0\nhidden = [16, 16]\nactivation = \"relu\"\nlog_every = 0\n"
                .to_string(),
        ),
        (
            "guide",
            "seed = 0\ncheckpoint = \"train-ddpm/ddpm.ckpt\"\nreward = \"train-reward/reward.ckpt\"\n\
             rhos = [-1.0, 0.0, 1.0]\ncount = 30\ntarget = \"maximize_psi\"\nscale = \"std\"\n\
             [pipeline]\nkind = \"decoder\"\n[pipeline.decoder]\ncheckpoint = \"train-toy/toy.ckpt\"\nnetwork = \"generator\"\ninput_scale = 0.85\n\
             [oracle]\nrho = 1.0\ncount = 10\nstep = 0.1\n"
                .to_string(),
        ),
        (
            "report",
            format!(
                "seed = 0\ncheckpoint = \"train-vae/vae.ckpt\"\ndescriptor = \"psi\"\nn_bins = 3\nfeatures = \"pixels\"\n\
                 [data]\nsource = \"synthetic\"\ntrain_size = 1\neval_size = 60\ndata_seed = 1\n{complexity}"
            ),
        ),
    ]
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn c10_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = root.path();
    let mut mismatched = Vec::new();
    let jobs = cli_jobs();
    for (cmd, cfg) in &jobs {
        let path = root.join(format!("{cmd}.toml"));
        std::fs::write(&path, cfg).unwrap();
        // The first run is the one downstream commands read from.
        let runs = [(cmd.to_string(), 1), (format!("{cmd}.again"), 1), (format!("{cmd}.w8"), 8)];
        for (dir, workers) in &runs {
            let o = Command::new(env!("CARGO_BIN_EXE_cpwl-geom"))
                .args([cmd, "--config", path.to_str().unwrap(), "--out", root.join(dir).to_str().unwrap()])
                .args(["--workers", &workers.to_string()])
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{cmd} --workers {workers} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
        }
        let first = files(&root.join(&runs[0].0));
        for (dir, _) in &runs[1..] {
            if files(&root.join(dir)) != first {
                mismatched.push(dir.clone());
            }
        }
    }
    check(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} commands byte-identical across re-runs and workers 1/8", jobs.len())
        } else {
            format!("differing outputs: {}", mismatched.join(", "))
        },
    )
}

fn main() {
    let mut shared = Shared { toy: None, ddpm: None };
    let mut failed = 0;
    let mut report = |id: usize, name: &str, started: Instant, outcome: Outcome| {
        let secs = Duration::as_secs_f64(&started.elapsed());
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {id:>2} {name} [{secs:.1}s]: {detail}");
    };
    let t = Instant::now();
    report(1, "jacobian-oracle", t, c1_jacobian_oracle());
    let t = Instant::now();
    report(2, "descriptor-identities", t, c2_descriptor_identities());
    let t = Instant::now();
    report(3, "exact-partition", t, c3_exact_partition(&mut shared));
    let t = Instant::now();
    report(4, "density-scaling", t, c4_density_scaling(&mut shared));
    let t = Instant::now();
    report(5, "ddpm-bands", t, c5_ddpm_bands(&mut shared));
    let t = Instant::now();
    report(6, "vae-dynamics", t, c6_vae_dynamics());
    let t = Instant::now();
    report(7, "ood", t, c7_ood());
    let t = Instant::now();
    report(8, "memorization", t, c8_memorization());
    let t = Instant::now();
    report(9, "guidance", t, c9_guidance(&mut shared));
    let t = Instant::now();
    report(10, "determinism", t, c10_determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
