use edgesched::chain::{policy_kernel, steady_state, DecisionKernel, Decision};
use edgesched::lpcore;
use edgesched::model::SystemParams;
use edgesched::synth::{build_p2, recover_policy, OccupationMeasure};
use std::time::Instant;

fn main() {
    let p = SystemParams {
        alpha: 0.2, beta: 0.4, slot_len: 0.02, buffer_cap: 30, packets_per_task: 1,
        local_slots: 17, cloud_slots: 1, feedback_slots: 0.0, p_loc: 0.8, p_tx: 1.0, p_max: 1.2,
    };
    let space = p.state_space();
    let inst = build_p2(&p, 0.01).unwrap();
    let t = Instant::now();
    let sol = lpcore::solve(&inst.problem).unwrap();
    println!("cold microlp at eta=0.01: {:?} obj={} {:?}", sol.status, sol.objective + inst.objective_constant, t.elapsed());
    let occ = OccupationMeasure::new(inst.vars.clone(), sol.x[..inst.vars.pairs().len()].to_vec());
    let marg = occ.marginals();
    let n_pos = marg.iter().filter(|&&m| m > 0.0).count();
    let n_junk = marg.iter().filter(|&&m| m > 0.0 && m < 1e-9).count();
    println!("support states: {n_pos}, of which below 1e-9: {n_junk}");
    let policy = recover_policy(&occ);
    let kernel = DecisionKernel::build(&p).unwrap();
    let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
    let tv: f64 = pi.pi.iter().zip(&marg).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    println!("TV = {tv:.3e}");
    let eta_rec = {
        let mut local = 0.0; let mut off = 0.0; let mut dual = 0.0;
        for (i, &m) in pi.pi.iter().enumerate() {
            let st = space.state(i);
            let g = policy.row(i);
            if Decision::Local.is_feasible(st) { local += m * g[0]; }
            if Decision::Offload.is_feasible(st) { off += m * g[1]; }
            if Decision::Both.is_feasible(st) { dual += m * g[2]; }
        }
        (local + dual) / (local + off + 2.0 * dual)
    };
    println!("recovered eta = {eta_rec}");
}
