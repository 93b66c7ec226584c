//! Mining through masking via the public API only.

use num_rational::Ratio;

use kgsynth_core::clients::{MockScript, ScriptEntry, ScriptedEvaluator, ScriptedJudge};
use kgsynth_core::kg::{Entity, EntityId, KnowledgeGraph, Relation};
use kgsynth_core::mining::{count_entity_frequencies, filter_candidates, select_rare_entities, Lexicon, RarityConfig};
use kgsynth_core::synthesis::{
    calibrate_difficulty, longest_valid_path, mask_path, path_to_question, DefaultValidity, PathExtendingRegenerator,
    QaStatus, QuestionConfig, TemplateQuestionWriter, DEFAULT_NODE_CAP,
};

fn corpus() -> Vec<Result<String, String>> {
    let mut docs: Vec<Result<String, String>> = (0..50)
        .map(|i| Ok(format!("patient {i} reported fever and fatigue at the clinic")))
        .collect();
    docs.push(Ok("a single report mentions zorvane".into()));
    docs.push(Err("unreadable".into()));
    docs
}

#[test]
fn rare_entity_to_masked_calibrated_item() {
    let lexicon = Lexicon::new(["fever", "fatigue", "zorvane", "kelmide"]);
    let stats = count_entity_frequencies(corpus(), &lexicon).unwrap();
    assert_eq!(stats.skipped_documents, 1);
    let config = RarityConfig {
        tau_rare: Ratio::new(1, 100),
    };
    let rare: Vec<String> = select_rare_entities(&stats, &config).unwrap().into_iter().map(|r| r.name).collect();
    // Zero-count lexicon names are rarest.
    assert_eq!(rare, ["kelmide", "zorvane"]);

    let judge = ScriptedJudge::new(
        MockScript::from_entries(vec![ScriptEntry::response("kelmide", "DROP"), ScriptEntry::response("*", "KEEP")])
            .player()
            .unwrap(),
    );
    let report = filter_candidates(&rare, &judge);
    assert_eq!(report.kept, ["zorvane"]);

    let mut g = KnowledgeGraph::new();
    for (id, name) in [("e1", "zorvane"), ("e2", "alpha site"), ("e3", "beta cell"), ("e4", "gamma trial")] {
        g.add_entity(Entity::new(id, name, 0.0, 0.01)).unwrap();
    }
    g.add_relation(Relation::new("e1", "binds", "e2")).unwrap();
    g.add_relation(Relation::new("e2", "expressed_in", "e3")).unwrap();
    g.add_relation(Relation::new("e3", "studied_in", "e4").with_clinical_context("refuted")).unwrap();
    g.add_relation(Relation::new("e3", "binds", "e4")).unwrap();

    let sub = g.subgraph_around(&EntityId::new("e1"), 3).unwrap();
    let validity = DefaultValidity::default();
    let path = longest_valid_path(&sub, &validity, DEFAULT_NODE_CAP).unwrap();
    // The repeated predicate and the refuted edge both block the third hop;
    // the two-hop tie goes to the smaller id sequence.
    assert_eq!(path.hop_count(), 2);
    assert_eq!(path.start().as_str(), "e1");

    let writer = TemplateQuestionWriter;
    let item = path_to_question(&path, &sub, &writer, &QuestionConfig::default()).unwrap();
    assert_eq!(item.answer, "beta cell");
    assert!(!item.question.contains("beta cell"));

    let scaffold = mask_path(&path, &sub);
    assert!(!scaffold.leaks_any(sub.entities().map(|e| e.name.as_str())));

    let evaluator = ScriptedEvaluator::new(
        "panel",
        MockScript::from_entries(vec![
            ScriptEntry::response("re:^complexity=0\\n", "0.9"),
            ScriptEntry::response("*", "0.2"),
        ])
        .player()
        .unwrap(),
    );
    let regen = PathExtendingRegenerator {
        subgraph: &sub,
        generator: &writer,
        validity: &validity,
        config: QuestionConfig::default(),
    };
    let out = calibrate_difficulty(item, &[&evaluator], 4, &regen).unwrap();
    assert_eq!(out.item.status, QaStatus::Calibrated);
    assert_eq!((out.rounds, out.item.complexity), (2, 1));
}
