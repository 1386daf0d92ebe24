use edgesched::lpcore;
use edgesched::model::SystemParams;
use edgesched::synth::build_p2;
use std::time::Instant;

fn main() {
    for (q, alpha) in [(30usize, 0.2f64), (30, 0.4), (50, 0.2), (50, 0.4)] {
        let p = SystemParams {
            alpha, beta: 0.4, slot_len: 0.02, buffer_cap: q, packets_per_task: 1,
            local_slots: 17, cloud_slots: 1, feedback_slots: 0.0, p_loc: 0.8, p_tx: 1.0, p_max: 1.2,
        };
        for eta in [0.0, 0.3, 0.7] {
            let t0 = Instant::now();
            let inst = build_p2(&p, eta).unwrap();
            let t_build = t0.elapsed();
            let t1 = Instant::now();
            let sol = lpcore::solve(&inst.problem).unwrap();
            println!(
                "q={q} alpha={alpha} eta={eta}: n={} m={} status={:?} obj={:.4} build {:?} solve {:?}",
                inst.problem.n_vars, inst.problem.n_rows(), sol.status,
                sol.objective + inst.objective_constant, t_build, t1.elapsed()
            );
        }
    }
}
