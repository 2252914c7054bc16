use minima_hierarchy::io::{read_hierarchy, write_hierarchy};
use minima_hierarchy::{
    cross_check, gen_array, gen_queries, HierarchyConfig, MinHierarchy, RangeClass, SchedulingStrategy,
    WorkloadSpec,
};

#[test]
fn clean_build_has_no_mismatches() {
    let values = gen_array(4096, 1).unwrap();
    let batch = gen_queries(&WorkloadSpec { n: 4096, m: 2000, class: RangeClass::Mixed, seed: 2 }).unwrap();
    for config in [HierarchyConfig::vector_block(8), HierarchyConfig::lane_group(4, 2).with_track_index(true)]
    {
        let h = MinHierarchy::build(values.clone(), config).unwrap();
        for sched in SchedulingStrategy::ALL {
            let report = cross_check(&h, &batch, sched).unwrap();
            assert!(report.is_clean(), "{:?}", report.mismatches.first());
            assert_eq!(report.queries, 2000);
        }
    }
}

#[test]
fn corrupted_minimum_is_reported() {
    let values = gen_array(4096, 1).unwrap();
    let config = HierarchyConfig::vector_block(8).with_track_index(true);
    let h = MinHierarchy::build(values, config).unwrap();

    // level-1 entry 100 summarizes original positions 800..808
    let mut bytes = Vec::new();
    write_hierarchy(&mut bytes, &h).unwrap();
    let header = 5 + 1 + 8 + 4 * 4096 + 8 + 8 * h.layout().level_sizes.len();
    let at = header + 4 * 100;
    bytes[at..at + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
    let corrupted = read_hierarchy(&mut bytes.as_slice(), config).unwrap();

    let batch = gen_queries(&WorkloadSpec { n: 4096, m: 4000, class: RangeClass::Large, seed: 5 }).unwrap();
    let report = cross_check(&corrupted, &batch, SchedulingStrategy::WarpLocalQueue).unwrap();
    assert!(!report.is_clean());
    let first = &report.mismatches[0];
    let q = batch.queries()[first.query_id];
    assert_eq!((q.l, q.r), (first.l, first.r));
    assert!(q.l <= 800 && q.r >= 807, "affected query must cover the corrupted chunk");
    assert_eq!(first.actual.value, -1.0);

    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"mismatches\""));
}
