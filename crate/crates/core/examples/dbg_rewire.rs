use coplay::pipeline::{synth_corpus, SynthParams};
use coplay::rewire::{build_pools, generate_world, verify_world};
use coplay::seeds::derive_seed;

fn main() {
    let params = SynthParams { n_years: 4, sessions_per_year: 30, seed: 3, ..SynthParams::default() };
    let d = synth_corpus(&params).unwrap();
    let pools = build_pools(&d, 1).unwrap();
    for i in 0..4u64 {
        let world = generate_world(&d, &pools, derive_seed(9, 1000 + i));
        let report = verify_world(&d, &world).unwrap();
        println!("world {i}: infeasible={} report={:?}", world.infeasible_slots, report);
    }
}
