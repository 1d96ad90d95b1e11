use jsmf::anchors::AnchorSet;
use jsmf::cooccur::{build_cooccurrence, CoocMatrix};
use jsmf::corpus::{curate, load_uci, write_uci, CurationConfig};
use jsmf::metrics::MetricsReport;
use jsmf::pipeline::{run_on_cooccurrence, run_on_corpus, Method, PipelineOptions};
use jsmf::rectify::ConvergenceTrace;
use jsmf::synth::{generate_planted, match_columns, planted_corpus, DocLengthLaw, PlantedModel};

#[test]
fn files_round_trip_through_the_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate_planted(60, 4, 0.1, 12).unwrap();
    let (corpus, model) = planted_corpus(&p, &[0.2; 4], 400, &DocLengthLaw::ShiftedPoisson { min: 3, mean: 40.0 }, 13).unwrap();
    model.write(&dir.path().join("truth")).unwrap();
    assert_eq!(PlantedModel::read(&dir.path().join("truth")).unwrap(), model);

    let docword = dir.path().join("docword.txt");
    let vocab = dir.path().join("vocab.txt");
    write_uci(&corpus, &docword, &vocab).unwrap();
    let loaded = load_uci(&docword, &vocab).unwrap();
    assert_eq!(loaded, corpus);

    let (curated, map) = curate(&loaded, &CurationConfig::new(50)).unwrap();
    assert!(curated.vocab_size() <= 50);
    map.write_json(&dir.path().join("map.json")).unwrap();

    let cooc = build_cooccurrence(&curated).unwrap();
    let cooc_path = dir.path().join("c.bin");
    cooc.write(&cooc_path).unwrap();
    let back = CoocMatrix::read(&cooc_path).unwrap();
    assert_eq!(back.matrix(), cooc.matrix());

    let mut opts = PipelineOptions::new(4, Method::Ap);
    opts.top_m = 10;
    let out = run_on_cooccurrence(back.matrix(), Some(&curated), &opts).unwrap();
    let trace_path = dir.path().join("trace.csv");
    out.trace.as_ref().unwrap().write_csv(&trace_path).unwrap();
    assert_eq!(&ConvergenceTrace::read_csv(&trace_path).unwrap(), out.trace.as_ref().unwrap());

    let anchors_path = dir.path().join("anchors.json");
    out.model.anchors.write_json(&anchors_path, curated.vocabulary()).unwrap();
    let (anchors, labels) = AnchorSet::read_json(&anchors_path).unwrap();
    assert_eq!(anchors.indices, out.model.anchors.indices);
    assert_eq!(labels.len(), 4);

    let json = out.metrics.to_json();
    assert_eq!(MetricsReport::from_json(&json).unwrap(), out.metrics);
}

#[test]
fn rectified_pipeline_tracks_planted_topics_on_a_large_corpus() {
    let p = generate_planted(80, 4, 0.1, 21).unwrap();
    let (corpus, _) = planted_corpus(&p, &[0.3; 4], 4000, &DocLengthLaw::Constant(80), 22).unwrap();
    let mut errors = Vec::new();
    for method in Method::ALL {
        let out = run_on_corpus(&corpus, &PipelineOptions::new(4, method)).unwrap();
        let m = match_columns(&out.model.b, &p.b).unwrap();
        errors.push(m.l1.iter().sum::<f64>() / 4.0);
        let a = out.model.a.as_ref().unwrap();
        assert!((a.sum() - 1.0).abs() < 1e-12);
        for col in out.model.b.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-10);
        }
    }
    // mean ℓ₁ column error stays well below the distance between random columns
    assert!(errors.iter().all(|&e| e < 0.5), "{errors:?}");
}

#[test]
fn metrics_are_computed_against_the_original_statistics() {
    let p = generate_planted(40, 3, 0.1, 31).unwrap();
    let (corpus, _) = planted_corpus(&p, &[0.2; 3], 150, &DocLengthLaw::Constant(20), 32).unwrap();
    let c = build_cooccurrence(&corpus).unwrap().into_matrix();
    let out = run_on_cooccurrence(&c, Some(&corpus), &PipelineOptions::new(3, Method::Ap)).unwrap();
    assert_eq!(out.original, c);
    let a = out.model.a.as_ref().unwrap();
    let direct = jsmf::metrics::approximation_error(&c, &out.model.b, a).unwrap();
    assert_eq!(out.metrics.approximation, direct);
    let against_rectified = jsmf::metrics::approximation_error(&out.rectified, &out.model.b, a).unwrap();
    assert_ne!(out.metrics.approximation, against_rectified);
}
