use edgesched::lpcore;
use edgesched::model::SystemParams;
use edgesched::synth::P2Builder;
use std::time::Instant;

fn main() {
    let p = SystemParams {
        alpha: 0.2, beta: 0.4, slot_len: 0.02, buffer_cap: 30, packets_per_task: 1,
        local_slots: 17, cloud_slots: 1, feedback_slots: 0.0, p_loc: 0.8, p_tx: 1.0, p_max: 1.2,
    };
    let builder = P2Builder::new(&p).unwrap();
    let mut slow = 0;
    let mut total = std::time::Duration::ZERO;
    for j in 0..=100usize {
        let eta = j as f64 / 100.0;
        let inst = builder.instance(eta);
        let t = Instant::now();
        let sol = lpcore::solve_scan(&inst.problem).unwrap();
        let dt = t.elapsed();
        total += dt;
        if dt.as_millis() > 400 {
            slow += 1;
            println!("eta={eta}: {:?} {:?}", sol.status, dt);
        }
    }
    println!("total {total:?}, slow points {slow}");
}
