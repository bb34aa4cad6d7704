//! Quick invariant checks run by `bdris selftest`.

use bdris::analysis::mc_gain;
use bdris::harness::{run_experiment_with, Experiment, ExperimentConfig, Sweep, SweepAxis};
use bdris::netcore::{convert, predicates, NetworkKind, NetworkMatrix};
use bdris::optimize::{gain_bound, tree_admittance_align, unitary_align, SisoSolver};
use bdris::random::{mix_seed, random_complex, random_imag_symmetric, random_passive_symmetric, rng};
use bdris::topology::{build_topology, closed_form_complexity, Family, TopologyParams};
use bdris::{estimate::wh_patterns, CMatrix64, Error};

pub struct Report {
    pub text: String,
    pub passed: bool,
}

type Check = fn(u64) -> Result<(), String>;

fn err(e: Error) -> String {
    e.to_string()
}

fn rel(a: &CMatrix64, b: &CMatrix64) -> f64 {
    (a - b).norm() / b.norm()
}

fn round_trip(seed: u64) -> Result<(), String> {
    for k in 0..20 {
        let mut r = rng(mix_seed(seed, k, 0));
        let z = NetworkMatrix::impedance(random_passive_symmetric::<f64, _>(&mut r, 6, 50.0), 50.0).map_err(err)?;
        let back = convert(&convert(&convert(&z, NetworkKind::Scattering).map_err(err)?, NetworkKind::Admittance).map_err(err)?, NetworkKind::Impedance)
            .map_err(err)?;
        let e = rel(back.values(), z.values());
        if e > 1e-10 {
            return Err(format!("Z->S->Y->Z relative error {e:.2e}"));
        }
        let y = NetworkMatrix::admittance(random_imag_symmetric::<f64, _>(&mut r, 6, 0.02), 50.0).map_err(err)?;
        let s = convert(&y, NetworkKind::Scattering).map_err(err)?;
        let p = predicates(&s, 1e-9);
        if !(p.lossless && p.reciprocal) {
            return Err("lossless reciprocal admittance did not map to a symmetric unitary".into());
        }
    }
    Ok(())
}

fn alignment(seed: u64) -> Result<(), String> {
    for k in 0..50 {
        let mut r = rng(mix_seed(seed, k, 1));
        let h_ri = random_complex::<f64, _>(&mut r, 1, 12);
        let h_it = random_complex::<f64, _>(&mut r, 12, 1);
        let bound = gain_bound(&h_ri, &h_it);
        let u = unitary_align(&h_ri, &h_it).map_err(err)?.objective;
        let t = tree_admittance_align(&h_ri, &h_it, 0.02).map_err(err)?.objective;
        for (name, g) in [("unitary", u), ("tree", t)] {
            if ((g - bound) / bound).abs() > 1e-8 {
                return Err(format!("{name} gain {g} misses bound {bound}"));
            }
        }
    }
    Ok(())
}

fn patterns(_: u64) -> Result<(), String> {
    for m in 1..=6 {
        let tr = wh_patterns::<f64>(m).map_err(err)?.gram_trace_inverse().map_err(err)?;
        if (tr - m as f64).abs() > 1e-9 {
            return Err(format!("pattern trace {tr} != {m}"));
        }
    }
    Ok(())
}

fn complexity(_: u64) -> Result<(), String> {
    for m in 2..=16 {
        for family in Family::ALL {
            for p in 1..m {
                let params = TopologyParams { group_size: Some(p), band_width: Some(p), stem_width: Some(p), ..Default::default() };
                let (Ok(t), Ok(c)) = (build_topology(family, m, params.clone()), closed_form_complexity(family, m, &params)) else {
                    continue;
                };
                if t.complexity() != c {
                    return Err(format!("{family:?} m={m} p={p}: {:?} != {c:?}", t.complexity()));
                }
            }
        }
    }
    Ok(())
}

fn coupling(_: u64) -> Result<(), String> {
    let z = NetworkMatrix::impedance(CMatrix64::identity(8, 8).map(|v| v * bdris::C64::new(73.0, 42.5)), 50.0).map_err(err)?;
    let g = mc_gain(&z).map_err(err)?;
    if g != 1.0 {
        return Err(format!("uncoupled gain {g} != 1"));
    }
    Ok(())
}

fn determinism(seed: u64) -> Result<(), String> {
    let cfg = ExperimentConfig {
        name: "selftest".into(),
        seed,
        trials: 64,
        experiment: Experiment::ScalingLaw { solvers: vec![SisoSolver::Dris, SisoSolver::Tree] },
        sweep: Sweep { axis: SweepAxis::M, values: vec![4.0, 8.0] },
        fading: None,
        output: None,
        format: None,
    };
    let a = run_experiment_with(&cfg, Some(1)).map_err(err)?.to_csv();
    let b = run_experiment_with(&cfg, Some(3)).map_err(err)?.to_csv();
    if a != b {
        return Err("CSV differs between 1 and 3 threads".into());
    }
    Ok(())
}

pub fn run(seed: u64) -> Report {
    let checks: [(&str, Check); 6] = [
        ("network_round_trip", round_trip),
        ("alignment_bound", alignment),
        ("pattern_orthogonality", patterns),
        ("circuit_complexity", complexity),
        ("uncoupled_mc_gain", coupling),
        ("thread_determinism", determinism),
    ];
    let mut text = String::new();
    let mut passed = true;
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => text.push_str(&format!("ok   {name}\n")),
            Err(msg) => {
                passed = false;
                text.push_str(&format!("FAIL {name}: {msg}\n"));
            }
        }
    }
    text.push_str(if passed { "selftest passed\n" } else { "selftest failed\n" });
    Report { text, passed }
}
