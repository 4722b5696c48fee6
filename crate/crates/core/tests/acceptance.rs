use permlab::verify::{Status, Suite, CRITERIA};

fn main() {
    let scale = std::env::var("PERMLAB_ACCEPTANCE_SCALE").ok().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let only: Option<Vec<u32>> = std::env::var("PERMLAB_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let suite = Suite::new(20_240_611, scale);
    println!("acceptance suite: {CRITERIA} criteria, scale {scale}, {} threads", suite.threads);
    let mut failed = Vec::new();
    for id in 1..=CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let line = suite.run(id).expect("criterion in range");
        println!("{line}");
        if line.status == Status::Fail {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: FAILED criteria {failed:?}");
        std::process::exit(1);
    }
}
