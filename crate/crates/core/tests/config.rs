use proptest::prelude::*;

use sparsae::config::{Protocol, RunConfig};
use sparsae::Error;

#[test]
fn defaults_and_comments() {
    let c = RunConfig::parse("  # only comments\n\n#k = 0\n").unwrap();
    assert_eq!(c, RunConfig::default());
    let c = RunConfig::parse("protocol = untrained # frozen random encoder\nhead=mlp\nburn_in = 0\n").unwrap();
    assert_eq!(c.protocol, Protocol::Untrained);
    assert_eq!((c.head.as_str(), c.burn_in), ("mlp", 0));
}

#[test]
fn errors_name_the_line() {
    let e = RunConfig::parse("k = 4\n\nk = 0\n").unwrap_err();
    assert!(matches!(&e, Error::Config(m) if m.starts_with("line 3")), "{e}");
    for text in ["scale_min = 2\nscale_max = 1", "epochs = 0", "mse_weight = -1", "protocol = greedy", "augment = maybe"] {
        assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn settings_survive_the_summary(k in 1usize..64, grid in 1usize..200, batch in 1usize..64, seed in any::<u64>(), lr in 1e-5f64..1.0) {
        let text = format!("k = {k}\ngrid = {grid}\nbatch_size = {batch}\nseed = {seed}\nlr = {lr}\n");
        let c = RunConfig::parse(&text).unwrap();
        let s = c.summary();
        prop_assert_eq!(&s["k"], &k.to_string());
        prop_assert_eq!(&s["grid"], &grid.to_string());
        prop_assert_eq!(&s["batch_size"], &batch.to_string());
        prop_assert_eq!(&s["seed"], &seed.to_string());
        prop_assert_eq!(s["lr"].parse::<f64>().unwrap(), lr);
    }

    #[test]
    fn later_lines_win(a in 1usize..32, b in 1usize..32) {
        prop_assert_eq!(RunConfig::parse(&format!("k = {a}\nk = {b}")).unwrap().spec.k, b);
    }
}
