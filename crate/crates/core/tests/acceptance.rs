//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teleop_core::control::{TargetQueue, Waypoint};
use teleop_core::feedback::ekf::{ekf_predict, ekf_update, min_eigenvalue, EkfConfig, EkfState, HandMotion};
use teleop_core::harness::output::{frames_csv, report_json, timeline_csv};
use teleop_core::harness::{m2m_latency, run, scenarios, M2mSemantics, Mode, SimConfig, SimOutput};
use teleop_core::kinematics::{forward_kinematics, jacobian, solve_ik, ArmModel, IkConfig, JointConfig};
use teleop_core::netsim::{Channel, ChannelConfig, Jitter};
use teleop_core::pointcloud::{
    classify_edges, n_max, render, scale_factor, scale_to_budget, ScalingConfig, SceneConfig, SceneSpec,
};
use teleop_core::pose::{pose_distance, secs_to_nanos};
use teleop_core::scheduler::{
    min_period_bound, paired_mean_latency, profile, run_contention_aware, run_unsynchronized, BoundMode, Duration,
    Functionality, Pipeline,
};
use teleop_core::{FeedbackSample, Pose, Timestamp};

const MS: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs `f` over `0..n` on all cores; results come back in index order.
fn par_map<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()) as u64;
    let mut out: Vec<(u64, T)> = std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|w| s.spawn(move || (w..n).step_by(threads as usize).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|p| p.0);
    out.into_iter().map(|p| p.1).collect()
}

fn c01_scale_factor() -> Outcome {
    let exact = scale_factor(1000, 400, 1200) == 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ones, mut zeros) = (true, true);
    for _ in 0..10_000 {
        let n_max: usize = rng.random_range(0..5000);
        let n_e: usize = rng.random_range(0..5000);
        let n_in: usize = rng.random_range(1..5000);
        let r = scale_factor(n_max, n_e, n_in);
        if n_e + n_in <= n_max {
            ones &= r == 1.0;
        }
        if n_e >= n_max {
            zeros &= r == 0.0;
        }
    }
    outcome(
        exact && ones && zeros,
        format!("r(1000,400,1200)={}, fits->1: {ones}, edges fill budget->0: {zeros}", scale_factor(1000, 400, 1200)),
    )
}

fn c02_scaling_safety() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let scene = match seed % 3 {
            0 => SceneSpec::CubeOnPlane {
                plane_depth: 1.5,
                size: 0.2 + 0.002 * seed as f64,
            },
            1 => SceneSpec::Step {
                near: 1.0,
                far: 2.0,
                column: 10 + (seed as usize % 40),
            },
            _ => SceneSpec::Plane {
                depth: 1.0 + 0.01 * seed as f64,
            },
        };
        let cloud = render(&SceneConfig {
            width: 64,
            height: 48,
            scene,
            seed,
            noise: 0.001 * (seed % 4) as f64,
            dropout: 0.02 * (seed % 5) as f64,
        })
        .expect("scene renders")
        .cloud;
        let mut cfg = ScalingConfig {
            point_size: 16,
            t_rt: 0.04,
            ..ScalingConfig::default()
        };
        let mask = classify_edges(&cloud, &cfg.canny);
        // budget: every edge point plus 0-99% of the interior
        let frac = ((seed * 37) % 100) as f64 / 100.0;
        let points = mask.n_e + (mask.n_in as f64 * frac) as usize;
        cfg.bandwidth = points as f64 * 16.0 / 0.04;
        let cap = n_max(&cfg);
        if mask.n_e > cap {
            continue;
        }
        checked += 1;
        let out = scale_to_budget(&cloud, &cfg);
        let kept_edges = mask
            .edge
            .iter()
            .enumerate()
            .filter(|&(i, &e)| e && cloud.depth[i] > 0.0)
            .all(|(i, _)| out.cloud.depth[i] == cloud.depth[i]);
        if out.cloud.point_count() > cap || !kept_edges {
            failures.push(seed);
        }
    }
    outcome(
        failures.is_empty() && checked == 200,
        format!("{checked}/200 clouds with N_e <= N_max checked, failures {failures:?}"),
    )
}

fn c03_n_max() -> Outcome {
    let n = n_max(&ScalingConfig {
        bandwidth: 1.6e6,
        t_rt: 0.04,
        point_size: 16,
        ..ScalingConfig::default()
    });
    outcome(n == 4000, format!("n_max = {n}"))
}

fn c04_queue_ordering() -> Outcome {
    let period = 20_000_000u64;
    let (violations, reordered) = par_map(1000, |seed| {
        let mut ch = Channel::new(ChannelConfig {
            base_latency: 0.05,
            jitter: Jitter::Uniform { half_width: 0.04 },
            seed,
            ..ChannelConfig::ideal()
        })
        .expect("valid channel");
        for k in 0..50u64 {
            ch.send(k.to_le_bytes().to_vec(), Timestamp(k * period)).expect("send");
        }
        let mut q = TargetQueue::new();
        let (mut newest_arrival, mut reordered) = (None, 0);
        // the robot reaches the head waypoint every 10 ms
        let mut now = 0;
        while now < 60 * period {
            now += 10_000_000;
            for m in ch.poll(Timestamp(now)) {
                let t = u64::from_le_bytes(m.payload.try_into().expect("8 bytes"));
                if newest_arrival.is_some_and(|n| t < n) {
                    reordered += 1;
                }
                newest_arrival = newest_arrival.max(Some(t));
                q.insert(Waypoint {
                    t_start: Timestamp(t * period),
                    cartesian: Pose::from_translation(t as f64, 0.0, 0.0),
                    joints: JointConfig(vec![]),
                    fist: 0.0,
                });
            }
            if let Some(head) = q.head().map(|w| w.cartesian) {
                q.prune_reached(&head, 1e-9);
            }
        }
        let bad = q.consumed().windows(2).filter(|w| w[0] >= w[1]).count();
        (bad, reordered)
    })
    .into_iter()
    .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    outcome(
        violations == 0 && reordered > 0,
        format!("1000 runs, {reordered} reordered arrivals, {violations} ordering violations"),
    )
}

fn c05_missing_waypoint() -> Outcome {
    let t = run(&scenarios::missing_waypoint(Mode::Telexr)).expect("runs");
    let b = run(&scenarios::missing_waypoint(Mode::Baseline)).expect("runs");
    let lost = t.report.drops["user_motion"].sent - t.report.drops["user_motion"].received;
    let (tp, bi) = (t.report.robot.hold_intervals_pending, b.report.robot.interior_stops);
    outcome(
        lost == 1 && tp == 0 && bi >= 1,
        format!(
            "uplink lost {lost}; telexr holds while queue non-empty {tp} (interior stops {}); baseline hold intervals {bi}",
            t.report.robot.interior_stops
        ),
    )
}

fn workload(seed: u64) -> Pipeline {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let stages: Vec<(f64, f64, bool)> = (0..n)
        .map(|_| {
            let low = rng.random_range(0.5..4.0);
            (low, low + rng.random_range(0.0..3.0), rng.random_bool(0.6))
        })
        .collect();
    let sum: f64 = stages.iter().map(|s| s.1).sum();
    let period = (sum + rng.random_range(0.0..5.0)) * MS;
    let funcs = stages
        .iter()
        .enumerate()
        .map(|(i, &(low, high, gpu))| Functionality {
            id: format!("s{i}"),
            period,
            duration: Duration::Uniform {
                low: low * MS,
                high: high * MS,
            },
            gpu_bound: gpu,
            order: i,
        })
        .collect();
    Pipeline::new(funcs, seed).expect("valid workload")
}

fn c06_scheduler() -> Outcome {
    let bound = min_period_bound(&[2.0 * MS, 3.0 * MS, 4.0 * MS], 5.0 * MS, BoundMode::ExcludeLast);
    let exact = bound == Ok(5.0 * MS);
    let (mut clean, mut no_worse) = (0, 0);
    for seed in 0..100 {
        let p = workload(seed);
        let horizon = 50.0 * p.stages[0].period;
        let ca = run_contention_aware(&p, horizon);
        let un = run_unsynchronized(&p, horizon);
        if ca.inversions == 0 && ca.total_blocked() == 0 {
            clean += 1;
        }
        if paired_mean_latency(&ca, &un).is_some_and(|(a, u)| a <= u) {
            no_worse += 1;
        }
    }
    outcome(
        exact && clean == 100 && no_worse == 100,
        format!("bound {bound:?}; no inversions/blocking {clean}/100; latency <= unsynchronized {no_worse}/100"),
    )
}

fn c07_profiling() -> Outcome {
    let constant = profile(&Duration::Constant { value: 5.0 * MS }, 1000, 3).expect("profiles").t_i;
    let within = (0..100)
        .filter(|&seed| {
            let t = profile(&Duration::Uniform { low: 0.0, high: 10.0 * MS }, 10_000, seed)
                .expect("profiles")
                .t_i;
            (9.7 * MS..=10.0 * MS).contains(&t)
        })
        .count();
    outcome(
        constant == 5.0 * MS && within >= 95,
        format!("constant t_i = {constant}; uniform t_i in [9.7, 10.0] ms in {within}/100"),
    )
}

fn c08_ekf() -> Outcome {
    let fb = |echo: u64, captured: u64, p: Vector3<f64>| FeedbackSample {
        captured: Timestamp(captured),
        t_start_echo: Some(Timestamp(echo)),
        ee_pose: Pose::new(p, Default::default()),
        gripper: 0.0,
        cloud: None,
    };
    let cfg = EkfConfig {
        r_diag: 1.0,
        p0_diag: 1.0,
        ..EkfConfig::default()
    };
    let mut s = EkfState::new(Pose::identity(), 0.0, &cfg);
    ekf_update(&mut s, &fb(1, 0, Vector3::new(2.0, 0.0, 0.0)), &cfg).expect("update");
    let shift = (s.x[0] - 1.0).abs();

    let cfg = EkfConfig {
        beta: 0.0,
        q_diag: 1e-6,
        r_diag: 1e-12,
        ..EkfConfig::default()
    };
    let (p0, v, dt) = (Vector3::new(0.4, 0.1, 0.3), Vector3::new(0.1, -0.05, 0.02), 0.02);
    let mut s = EkfState::new(Pose::new(p0, Default::default()), 0.0, &cfg);
    let (mut err, mut min_eig, mut asym) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for k in 1..=10u64 {
        let truth = p0 + v * (k as f64 * dt);
        ekf_update(&mut s, &fb(k, k * secs_to_nanos(dt), truth), &cfg).expect("update");
        let out = ekf_predict(&s, dt, &HandMotion::still(0.0), &cfg).expect("predict");
        err = (out.est_pose.position - (truth + v * dt)).norm();
        for p in [s.p, out.covariance] {
            min_eig = min_eig.min(min_eigenvalue(&p));
            asym = asym.max((p - p.transpose()).abs().max());
        }
    }
    outcome(
        shift < 1e-12 && err < 1e-6 && min_eig >= -1e-12 && asym == 0.0,
        format!("scalar shift error {shift:.1e}; CV prediction error after 10 updates {err:.2e} m; min eigenvalue {min_eig:.2e}"),
    )
}

fn c09_kinematics() -> Outcome {
    let m = ArmModel::default_7dof();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random_q = |rng: &mut ChaCha8Rng| {
        JointConfig(
            m.limits()
                .iter()
                .map(|&(lo, hi)| {
                    let pad = 0.05 * (hi - lo);
                    rng.random_range(lo + pad..hi - pad)
                })
                .collect(),
        )
    };
    let cfg = IkConfig::default();
    let (mut converged, mut worst_pos, mut worst_ang) = (0, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let target = forward_kinematics(&m, &random_q(&mut rng)).expect("in limits");
        if let Ok(sol) = solve_ik(&m, &m.mid_config(), &target, &cfg) {
            let (p, a) = pose_distance(&forward_kinematics(&m, &sol.q).expect("in limits"), &target).expect("unit");
            if p < 1e-4 && a < 1e-3 {
                converged += 1;
            }
            worst_pos = worst_pos.max(p);
            worst_ang = worst_ang.max(a);
        }
    }
    let h = 1e-6;
    let mut worst_jac = 0.0f64;
    for _ in 0..50 {
        let q = random_q(&mut rng);
        let jac = jacobian(&m, &q).expect("in limits");
        for j in 0..m.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp.0[j] += h;
            qm.0[j] -= h;
            let (fp, fm) = (forward_kinematics(&m, &qp).unwrap(), forward_kinematics(&m, &qm).unwrap());
            let lin = (fp.position - fm.position) / (2.0 * h);
            let ang = (fp.orientation * fm.orientation.inverse()).scaled_axis() / (2.0 * h);
            for r in 0..3 {
                worst_jac = worst_jac.max((jac[(r, j)] - lin[r]).abs());
                worst_jac = worst_jac.max((jac[(r + 3, j)] - ang[r]).abs());
            }
        }
    }
    outcome(
        converged >= 495 && worst_jac < 1e-5,
        format!(
            "IK converged {converged}/500 (worst {worst_pos:.1e} m, {worst_ang:.1e} rad); Jacobian vs central differences {worst_jac:.1e}"
        ),
    )
}

fn c10_one_unit_world() -> Outcome {
    let out = run(&scenarios::one_unit_world()).expect("runs");
    let s = 1_000_000_000u64;
    let u1 = out.logs.hand_sent[0];
    let f = &out.frames[0];
    let shows_u1 = f.display_time == Timestamp(s)
        && f.reconstructed
        && f.source_t_start == Some(u1)
        && f.feedback_t_start.is_none();
    let rec = m2m_latency(&out.frames, &[u1], M2mSemantics::Reconstructed)[0];
    let act = m2m_latency(&out.frames, &[u1], M2mSemantics::Actual)[0];
    // U1 leaves at 0, reaches the robot at 1, the robot echoes it at 2 and
    // the frame built on that feedback is shown at 3
    let echoed = out.frames.iter().find(|f| f.feedback_t_start == Some(u1)).map(|f| f.display_time);
    outcome(
        shows_u1 && rec == Some(1.0) && act == Some(3.0) && echoed == Some(Timestamp(3 * s)),
        format!("frame at t=1 reconstructed from U1: {shows_u1}; M2M reconstructed {rec:?}, actual {act:?} units"),
    )
}

fn c11_dual_reconstruction() -> Outcome {
    let run_one = |mode: Mode, drop: f64, seed: u64| {
        let mut cfg = scenarios::degraded_sinusoid(drop);
        cfg.mode = mode;
        cfg.seed = seed;
        run(&cfg).expect("runs")
    };
    let times = |o: &SimOutput| o.frames.iter().map(|f| f.display_time).collect::<Vec<_>>();
    let rows = par_map(100, |seed| {
        let t = run_one(Mode::Telexr, 0.1, seed);
        let b = run_one(Mode::Baseline, 0.1, seed);
        let t0 = run_one(Mode::Telexr, 0.0, seed);
        let b0 = run_one(Mode::Baseline, 0.0, seed);
        let better = t.report.teleop_error.mean_position < b.report.teleop_error.mean_position;
        let same_frames = times(&t) == times(&t0) && t.report.frames.rate == t0.report.frames.rate;
        (
            better,
            same_frames,
            b.report.frames.pose_update_rate,
            b0.report.frames.pose_update_rate,
        )
    });
    let wins = rows.iter().filter(|r| r.0).count();
    let steady = rows.iter().filter(|r| r.1).count();
    let (lossy, clean) = rows.iter().fold((0.0, 0.0), |a, r| (a.0 + r.2, a.1 + r.3));
    let ratio = lossy / clean;
    // baseline updates scale with delivered feedback, (1 - 0.1)
    let proportional = (ratio - 0.9).abs() <= 0.05;
    outcome(
        wins >= 95 && steady == 100 && proportional,
        format!(
            "telexr lower error {wins}/100; telexr frames unchanged by drop {steady}/100; baseline update-rate ratio {ratio:.3} (expect 0.90 +/- 0.05)"
        ),
    )
}

fn c12_drops() -> Outcome {
    let out = run(&scenarios::drop_count(0.1)).expect("runs");
    let pose = out.report.drops["pose"];
    let pct = pose.pct.unwrap_or(f64::NAN);
    let counted = pose.sent >= 10_000 && (pct - 10.0).abs() <= 2.0;
    let narrow = run(&scenarios::narrow_downlink()).expect("runs");
    let d = &narrow.report.drops;
    let (cloud, pose_n) = (d["cloud"].pct, d["pose"].pct);
    let ordered = matches!((cloud, pose_n), (Some(c), Some(p)) if c > p);
    outcome(
        counted && ordered,
        format!(
            "pose drop {pct:.2}% over {} sends; constrained link cloud {cloud:.1?}% vs pose {pose_n:.1?}%",
            pose.sent
        ),
    )
}

fn c13_determinism() -> Outcome {
    let mut identical = true;
    for (mode, cfg) in [
        (Mode::Telexr, scenarios::degraded_sinusoid(0.1)),
        (Mode::Baseline, scenarios::degraded_sinusoid(0.1)),
        (Mode::Telexr, SimConfig::default()),
    ] {
        let cfg = SimConfig { mode, seed: 42, ..cfg };
        let (a, b) = (run(&cfg).expect("runs"), run(&cfg).expect("runs"));
        identical &= report_json(&a.report) == report_json(&b.report)
            && frames_csv(&a) == frames_csv(&b)
            && timeline_csv(&a) == timeline_csv(&b);
    }
    outcome(identical, "reports, frame logs and timelines byte-identical across reruns")
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 13] = [
        ("scale factor", c01_scale_factor),
        ("scaling safety", c02_scaling_safety),
        ("N_max", c03_n_max),
        ("queue ordering", c04_queue_ordering),
        ("missing waypoint", c05_missing_waypoint),
        ("scheduler bound", c06_scheduler),
        ("profiling", c07_profiling),
        ("estimator", c08_ekf),
        ("kinematics", c09_kinematics),
        ("one-unit world", c10_one_unit_world),
        ("dual reconstruction", c11_dual_reconstruction),
        ("drop metrics", c12_drops),
        ("determinism", c13_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} {:>2} {name:<20} {} ({:.1} s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
