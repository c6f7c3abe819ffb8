use wickchaos::selftest::{criterion_names, run_criterion, Options};

#[test]
fn acceptance_criteria() {
    let opts = Options::default();
    let mut failed = vec![];
    for (id, name) in criterion_names() {
        let r = run_criterion(id, &opts);
        println!("{}", r.line());
        for (k, v) in &r.metrics {
            println!("       {k} = {v:.6e}");
        }
        if !r.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
