use bnn_hmc::store::{sidecar_path, AcceptRecord, StoreMeta};
use bnn_hmc::{ParameterVector, SampleStore};
use proptest::prelude::*;

fn arb_store() -> impl Strategy<Value = SampleStore> {
    (1usize..20, 1usize..30, any::<u64>(), 0usize..4).prop_flat_map(|(n, p, seed, chain)| {
        (prop::collection::vec(prop::collection::vec(-1e6f64..1e6, p), n), prop::collection::vec((0.0f64..1.0, any::<bool>()), n)).prop_map(
            move |(rows, acc)| {
                let history: Vec<AcceptRecord> = acc.iter().map(|&(p_accept, accepted)| AcceptRecord { p_accept, accepted }).collect();
                let rate = history.iter().filter(|r| r.accepted).count() as f64 / history.len() as f64;
                SampleStore::new(
                    rows.into_iter().map(|r| ParameterVector::new(r).unwrap()).collect(),
                    StoreMeta {
                        method: "hmc".into(),
                        chain_id: chain,
                        seed,
                        accept_rate: rate,
                        accept_history: history,
                        burnin_accept_probs: vec![1.0, 0.5],
                        config: serde_json::json!({"k": seed % 7}),
                    },
                )
                .unwrap()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_read_round_trip(store in arb_store()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bnns");
        store.write(&path).unwrap();
        prop_assert!(sidecar_path(&path).exists());
        let back = SampleStore::read(&path).unwrap();
        prop_assert_eq!(&back, &store);
        // Writing the read-back store reproduces the file byte for byte.
        let again = dir.path().join("t.bnns");
        back.write(&again).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn slice_keeps_rows(store in arb_store(), a in 0usize..20, b in 0usize..20) {
        let (lo, hi) = (a.min(b).min(store.len()), a.max(b).min(store.len()));
        let s = store.slice(lo..hi);
        prop_assert_eq!(s.len(), hi - lo);
        prop_assert_eq!(&s.samples[..], &store.samples[lo..hi]);
    }
}

#[test]
fn truncated_file_rejected() {
    let store = SampleStore::new(vec![ParameterVector::zeros(4); 3], StoreMeta {
            method: "sgd".into(),
            chain_id: 0,
            seed: 0,
            accept_rate: 1.0,
            accept_history: Vec::new(),
            burnin_accept_probs: Vec::new(),
            config: serde_json::Value::Null,
        }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bnns");
    store.write(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(SampleStore::read(&path).is_err());
}
