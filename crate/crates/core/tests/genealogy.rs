use nbbm::engine::{DenseEngine, Engine};
use nbbm::model::{make_initial, InitSpec, Params};
use nbbm::RngStream;

fn pair(n: usize, seed: u64) -> (DenseEngine, DenseEngine) {
    let params = Params::one_dimensional(n).unwrap();
    let init = make_initial(&InitSpec::AllAtOrigin, &params, &mut RngStream::new(seed, 1)).unwrap();
    let a = DenseEngine::with_pruning(&params, &init, RngStream::new(seed, 0), true).unwrap();
    let b = DenseEngine::with_pruning(&params, &init, RngStream::new(seed, 0), false).unwrap();
    (a, b)
}

#[test]
fn pruned_and_full_forests_agree() {
    for seed in 0..5 {
        let n = 30;
        let (mut a, mut b) = pair(n, seed);
        for k in 1..=8 {
            let t = 5.0 * k as f64;
            a.advance_events_to(t, |_| {}).unwrap();
            b.advance_events_to(t, |_| {}).unwrap();
            let (fa, fb) = (a.forest(), b.forest());
            assert_eq!(fa.alive_count(), n);
            assert_eq!(fa.mrca(), fb.mrca());
            assert!(fa.node_count() <= fb.node_count());
            for id in 0..n as u64 {
                assert_eq!(fa.has_living_descendant(id).unwrap(), fb.has_living_descendant(id).unwrap());
            }
        }
    }
}

#[test]
fn every_living_lineage_passes_through_the_mrca() {
    let (mut a, _) = pair(40, 9);
    a.advance_events_to(80.0, |_| {}).unwrap();
    let f = a.forest();
    let m = f.mrca().expect("a single family after a long run");
    assert!(f.mrca_age(80.0).unwrap() >= 0.0);
    for id in f.alive_ids() {
        assert!(f.lineage(id).unwrap().contains(&m.node), "{id}");
    }
}

#[test]
fn surviving_root_count_never_increases() {
    let (mut a, _) = pair(25, 3);
    let mut prev = 25;
    for k in 1..=40 {
        a.advance_events_to(k as f64, |_| {}).unwrap();
        let f = a.forest();
        let roots = (0..25u64).filter(|&id| f.has_living_descendant(id).unwrap()).count();
        assert!(roots >= 1 && roots <= prev);
        prev = roots;
    }
}
