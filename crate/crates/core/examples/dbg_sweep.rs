use edgesched::analysis::evaluate;
use edgesched::model::SystemParams;
use edgesched::policy::{make_baseline, Baseline};
use edgesched::synth::search_optimal;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let q: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let grid: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let alphas: Vec<f64> = if args.len() > 3 {
        args[3..].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        vec![0.05, 0.12, 0.16, 0.2, 0.3, 0.4]
    };
    for alpha in alphas {
        let p = SystemParams {
            alpha, beta: 0.4, slot_len: 0.02, buffer_cap: q, packets_per_task: 1,
            local_slots: 17, cloud_slots: 1, feedback_slots: 0.0, p_loc: 0.8, p_tx: 1.0, p_max: 1.2,
        };
        let t0 = Instant::now();
        match search_optimal(&p, grid) {
            Ok(r) => {
                let greedy = evaluate(&make_baseline(Baseline::Greedy, &p), &p).unwrap();
                let opt = evaluate(&r.policy, &p).unwrap();
                println!(
                    "q={q} alpha={alpha}: eta*={:.3} tbar*={:.9} (eval {:.9}, eta {:.4}, overflow {:.2e}) | greedy {:.9} (eta {:.3}) gap {:+.3e} | {:?}",
                    r.eta_star, r.t_bar_star, opt.t_bar, opt.eta, opt.overflow_mass,
                    greedy.t_bar, greedy.eta, r.t_bar_star - greedy.t_bar, t0.elapsed()
                );
            }
            Err(e) => println!("q={q} alpha={alpha}: ERR {e} ({:?})", t0.elapsed()),
        }
    }
}
