//! Times one start of the attack on a large random ensemble, phase by phase.
//!
//! `cargo run --release --example perf_probe [descent]`; with `descent` the
//! noise escape is skipped.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leaftuple::attack::{
    duplicate_threshold_groups, generate_initial, lt_attack, noise_escape, start_rng, AttackConfig,
};
use leaftuple::synth::{random_ensemble, random_point, SynthSpec};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(784);
    let e = random_ensemble(&mut rng, &SynthSpec::binary(400, 8, 784));
    let x0 = random_point(&mut rng, 784);
    let y0 = e.predict_class(&x0);
    let cfg = AttackConfig::default();
    let mut r = start_rng(0, 0, 0);

    let t = Instant::now();
    let init = generate_initial(&e, &x0, y0, &cfg, &mut r).expect("adversarial draw");
    println!("init     {:>10.3?}  draws {}", t.elapsed(), init.draws);

    let t = Instant::now();
    let out = lt_attack(&e, &x0, y0, &init.point, &cfg).expect("adversarial start");
    let s = &out.stats;
    println!(
        "descent  {:>10.3?}  iterations {}  bound trees {}  neighbours {}  distance {:.6}",
        t.elapsed(),
        s.iterations,
        s.bound_trees,
        s.tree_neighbors,
        out.infimum()
    );
    if std::env::args().nth(1).as_deref() == Some("descent") {
        return;
    }

    let dups = duplicate_threshold_groups(&e);
    let t = Instant::now();
    let esc = noise_escape(&e, &x0, y0, out, &cfg, &dups, &mut r);
    println!(
        "escape   {:>10.3?}  trials {}  improvements {}  distance {:.6}",
        t.elapsed(),
        esc.trials,
        esc.improvements,
        esc.outcome.infimum()
    );
}
