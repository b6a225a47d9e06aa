//! Synthetic confounded-corpus generation.
//!
//! Generated corpora encode the train/test distributional asymmetry the
//! debiasing pipeline targets: in training data, lexically similar triggers
//! correlate with coreference; at test time the correlation can be inverted.
//! Gold labels derive from the underlying event identity (the arguments),
//! never from the trigger lexemes, so a model leaning on trigger matching is
//! measurably wrong under inversion while an argument-aware model is not.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::corpus::{ArgRole, ArgSpan, Corpus, Document, Mention, Split};
use crate::lemma::TRIGGER_GROUPS;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Parameters of the confounded generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfoundSpec {
    /// P(lexically-matching trigger pair | coreferent) in the train/dev
    /// distribution; the non-coreferent class uses the complement.
    pub p_confounder: f64,
    /// Per-pair probability that the correlation is inverted at test time.
    pub flip_rate_test: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Per-role argument vocabulary size.
    pub vocab_per_role: usize,
    /// Per-argument probability of corruption: a coreferent pair gets a
    /// mismatched value, a non-coreferent pair an accidentally matching one.
    /// Nonzero noise creates ambiguous pairs where the trigger shortcut is
    /// tempting, which is what makes the confound bite.
    pub arg_noise: f64,
}

impl Default for ConfoundSpec {
    fn default() -> Self {
        ConfoundSpec {
            p_confounder: 0.9,
            flip_rate_test: 1.0,
            n_train: 5000,
            n_dev: 1000,
            n_test: 1000,
            vocab_per_role: 40,
            arg_noise: 0.1,
        }
    }
}

impl ConfoundSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            ("p_confounder", self.p_confounder),
            ("flip_rate_test", self.flip_rate_test),
            ("arg_noise", self.arg_noise),
        ] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(SynthError::InvalidSpec(format!(
                    "{name} must lie in [0,1], got {p}"
                )));
            }
        }
        if self.vocab_per_role == 0 {
            return Err(SynthError::InvalidSpec(
                "vocab_per_role must be positive".into(),
            ));
        }
        Ok(())
    }
}

const ROLES: [(&str, ArgRole); 4] = [
    ("agent", ArgRole::Participant),
    ("patient", ArgRole::Participant),
    ("loc", ArgRole::Location),
    ("time", ArgRole::Time),
];

fn arg_token(role: &str, idx: usize) -> String {
    format!("{role}{idx}")
}

fn surface_form(rng: &mut ChaCha20Rng, family: usize) -> String {
    let group = TRIGGER_GROUPS[family % TRIGGER_GROUPS.len()];
    group[rng.gen_range(0..group.len())].to_string()
}

/// One mention = one single-sentence document with the template
/// `<AGENT> <TRIGGER> <PATIENT> in <LOC> on <TIME>`.
fn build_doc(
    topic: &str,
    doc_tag: &str,
    trigger: &str,
    args: &[usize; 4],
) -> (Document, Vec<String>) {
    let sentence = vec![
        arg_token(ROLES[0].0, args[0]),
        trigger.to_string(),
        arg_token(ROLES[1].0, args[1]),
        "in".to_string(),
        arg_token(ROLES[2].0, args[2]),
        "on".to_string(),
        arg_token(ROLES[3].0, args[3]),
    ];
    let doc = Document {
        doc_id: format!("{topic}-{doc_tag}"),
        topic_id: topic.to_string(),
        subtopic_id: "s0".to_string(),
        sentences: vec![sentence.clone()],
        source: Some("synthetic".to_string()),
    };
    (doc, sentence)
}

fn mention_for(doc: &Document, mention_tag: &str, cluster: &str) -> Mention {
    Mention {
        mention_id: format!("{}-{mention_tag}", doc.doc_id),
        doc_id: doc.doc_id.clone(),
        sentence_idx: 0,
        trigger_span: (1, 2),
        gold_cluster_id: cluster.to_string(),
        argument_spans: Some(vec![
            ArgSpan { role: ROLES[0].1, span: (0, 1) },
            ArgSpan { role: ROLES[1].1, span: (2, 3) },
            ArgSpan { role: ROLES[2].1, span: (4, 5) },
            ArgSpan { role: ROLES[3].1, span: (6, 7) },
        ]),
    }
}

fn generate_split(
    spec: &ConfoundSpec,
    n_pairs: usize,
    split: Split,
    invertible: bool,
    rng: &mut ChaCha20Rng,
) -> Corpus {
    let mut documents = Vec::with_capacity(2 * n_pairs);
    let mut mentions = Vec::with_capacity(2 * n_pairs);
    let split_tag = match split {
        Split::Train => "tr",
        Split::Dev => "dv",
        Split::Test => "te",
    };
    for i in 0..n_pairs {
        let topic = format!("{split_tag}{i:05}");
        let coref = rng.gen_bool(0.5);

        // Train-distribution conditional; a flipped test pair inverts it.
        let flipped = invertible && rng.gen_bool(spec.flip_rate_test);
        let p_lexsim = if coref == !flipped {
            spec.p_confounder
        } else {
            1.0 - spec.p_confounder
        };
        let lexsim = rng.gen_bool(p_lexsim);

        let fam_a = rng.gen_range(0..TRIGGER_GROUPS.len());
        let trig_a = surface_form(rng, fam_a);
        let trig_b = if lexsim {
            // identical surface: the sharpest form of lexical similarity
            trig_a.clone()
        } else {
            // a distinct family, chosen uniformly among the others
            let offset = rng.gen_range(1..TRIGGER_GROUPS.len());
            surface_form(rng, (fam_a + offset) % TRIGGER_GROUPS.len())
        };

        let mut args_a = [0usize; 4];
        for slot in &mut args_a {
            *slot = rng.gen_range(0..spec.vocab_per_role);
        }
        let mut args_b = args_a;
        for slot in &mut args_b {
            let corrupt = rng.gen_bool(spec.arg_noise);
            // coref pairs share args except where corrupted; non-coref pairs
            // differ except where accidentally matching
            if coref != corrupt {
                continue;
            }
            let offset = rng.gen_range(1..spec.vocab_per_role.max(2));
            *slot = (*slot + offset) % spec.vocab_per_role;
        }

        let (doc_a, _) = build_doc(&topic, "d0", &trig_a, &args_a);
        let (doc_b, _) = build_doc(&topic, "d1", &trig_b, &args_b);
        let (cluster_a, cluster_b) = if coref {
            (format!("{topic}:c0"), format!("{topic}:c0"))
        } else {
            (format!("{topic}:c0"), format!("{topic}:c1"))
        };
        mentions.push(mention_for(&doc_a, "m0", &cluster_a));
        mentions.push(mention_for(&doc_b, "m1", &cluster_b));
        documents.push(doc_a);
        documents.push(doc_b);
    }
    Corpus::new(documents, mentions, split)
}

/// Deterministically generate the three splits. Train and dev follow the
/// confounded distribution; the test split inverts the trigger/label
/// correlation per `flip_rate_test`.
pub fn generate_confounded_corpus(
    spec: &ConfoundSpec,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), SynthError> {
    spec.validate()?;
    // independent streams per split so changing one count never perturbs
    // another split
    let mut rng_train = ChaCha20Rng::seed_from_u64(seed ^ 0x7472_6169_6e00);
    let mut rng_dev = ChaCha20Rng::seed_from_u64(seed ^ 0x6465_7600);
    let mut rng_test = ChaCha20Rng::seed_from_u64(seed ^ 0x7465_7374_00);
    Ok((
        generate_split(spec, spec.n_train, Split::Train, false, &mut rng_train),
        generate_split(spec, spec.n_dev, Split::Dev, false, &mut rng_dev),
        generate_split(spec, spec.n_test, Split::Test, true, &mut rng_test),
    ))
}
