use btforge::env::load_level;
use btforge::learning::{learn, LearnerConfig};
use btforge::text;

fn main() {
    for (name, seeds) in [
        ("testbed1", vec![42u64, 0, 7]),
        ("testbed2", vec![42, 0, 7]),
        ("testbed3", vec![0, 1, 2, 3, 4]),
    ] {
        let src = std::fs::read_to_string(format!("levels/{name}.txt")).unwrap();
        let level = load_level(&src).unwrap();
        for seed in seeds {
            let config = LearnerConfig {
                rng_seed: seed,
                gp: btforge::genetics::GpConfig { rng_seed: seed, ..Default::default() },
                ..Default::default()
            };
            let t = std::time::Instant::now();
            let out = learn(&level, &config);
            let enemy_guard = out.tree.nodes().any(|(_, n)| matches!(
                n.kind(),
                btforge::bt::NodeKind::Condition(c) if c.predicate() == btforge::bt::Predicate::EnemyAt
            ));
            println!(
                "{name} seed {seed}: goal={} gamma={:.4} phases={} gp={} nodes={} enemyat={} {:?}",
                out.achieved_goal, out.gamma, out.phases.len(), out.gp_invocations,
                out.tree.node_count(), enemy_guard, t.elapsed()
            );
            println!("   {}", text::print_compact(&out.tree));
        }
    }
}
