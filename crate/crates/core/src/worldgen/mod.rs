//! Deterministic synthetic fact world: fictitious entities with attribute
//! facts, rendered into question/answer pairs with every answer variant the
//! unlearning objectives and metrics need.

mod lexicon;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use lexicon::{IDK_TEMPLATES, JAILBREAK_PREFIX};

use crate::error::{data_err, input_err, Error, Result};
use crate::seqmodel::{LmExample, TokenId, Vocabulary, BOS_ID, EOS_ID};
use lexicon::{Attribute, ATTRIBUTES, CITY_COUNTRIES};

const SPLIT_STREAM: u64 = 0x5e_ed0f_5911;

pub const N_PERTURBED: usize = 3;
pub const DEFAULT_ALT_COUNT: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub name: String,
    /// attribute key → value
    pub facts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactWorld {
    pub seed: u64,
    /// Attribute keys every entity carries, in rendering order.
    pub attributes: Vec<String>,
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub entity_id: usize,
    pub entity: String,
    pub attribute: String,
    pub value: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub paraphrased_question: String,
    #[serde(default)]
    pub paraphrased_answer: String,
    #[serde(default)]
    pub perturbed_answers: Vec<String>,
    #[serde(default)]
    pub idk_answer: String,
    #[serde(default)]
    pub alt_answers: Vec<String>,
}

/// Every group is a list of examples; groups never share an
/// (entity, attribute) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub forget: Vec<QaExample>,
    pub retain: Vec<QaExample>,
    pub holdout: Vec<QaExample>,
    pub real_level: Vec<QaExample>,
    pub world_level: Vec<QaExample>,
    /// Entities that exist only as biographies; used for negative-pool
    /// training data that shares no fact with the forget set.
    pub celebrity: Vec<QaExample>,
}

/// Index lists into `world.jsonl`, as written to `splits.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SplitIndex {
    forget: Vec<usize>,
    retain: Vec<usize>,
    holdout: Vec<usize>,
    real_level: Vec<usize>,
    world_level: Vec<usize>,
    celebrity: Vec<usize>,
}

/// Seeded entity factory. Replaying the same seed yields the same entity
/// sequence, so splits can spawn extra entities after the world's own.
struct EntityFactory {
    rng: ChaCha8Rng,
    names: Vec<String>,
    next_name: usize,
    attributes: Vec<&'static Attribute>,
    seen: HashSet<Vec<String>>,
}

impl EntityFactory {
    fn new(seed: u64, facts_per_entity: usize) -> Result<Self> {
        if facts_per_entity > ATTRIBUTES.len() {
            return Err(input_err!(
                "attribute lexicon exhausted: {facts_per_entity} facts per entity requested, {} attributes available",
                ATTRIBUTES.len()
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = lexicon::all_names();
        names.shuffle(&mut rng);
        let mut attributes: Vec<&'static Attribute> = ATTRIBUTES.iter().collect();
        attributes.shuffle(&mut rng);
        attributes.truncate(facts_per_entity);
        Ok(EntityFactory {
            rng,
            names,
            next_name: 0,
            attributes,
            seen: HashSet::new(),
        })
    }

    fn spawn(&mut self, id: usize) -> Result<Entity> {
        let name = self
            .names
            .get(self.next_name)
            .cloned()
            .ok_or_else(|| input_err!("entity-name lexicon exhausted after {} names", self.names.len()))?;
        self.next_name += 1;
        for _ in 0..1000 {
            let values: Vec<String> = self
                .attributes
                .iter()
                .map(|a| a.values[self.rng.random_range(0..a.values.len())].to_string())
                .collect();
            if self.seen.insert(values.clone()) {
                let facts = self.attributes.iter().map(|a| a.key.to_string()).zip(values).collect();
                return Ok(Entity { id, name, facts });
            }
        }
        Err(input_err!(
            "attribute value lexicons exhausted: no unused value combination left"
        ))
    }
}

pub fn generate_world(seed: u64, n_entities: usize, facts_per_entity: usize) -> Result<FactWorld> {
    if n_entities < 4 {
        return Err(input_err!("n_entities must be at least 4, got {n_entities}"));
    }
    if facts_per_entity < 2 {
        return Err(input_err!(
            "facts_per_entity must be at least 2, got {facts_per_entity}"
        ));
    }
    let mut factory = EntityFactory::new(seed, facts_per_entity)?;
    let entities = (0..n_entities).map(|i| factory.spawn(i)).collect::<Result<Vec<_>>>()?;
    Ok(FactWorld {
        seed,
        attributes: factory.attributes.iter().map(|a| a.key.to_string()).collect(),
        entities,
    })
}

impl FactWorld {
    /// Fully rendered QA pairs, entity-major in attribute order.
    pub fn examples(&self) -> Result<Vec<QaExample>> {
        entity_examples(&self.entities, &self.attributes, self.seed)
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(json))
    }
}

fn entity_examples(entities: &[Entity], attributes: &[String], seed: u64) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    for e in entities {
        for key in attributes {
            let value = e
                .facts
                .get(key)
                .ok_or_else(|| data_err!("entity {} has no `{key}` fact", e.name))?;
            out.push(render_variants(&bare_example(e.id, &e.name, key, value)?, seed)?);
        }
    }
    Ok(out)
}

fn bare_example(entity_id: usize, entity: &str, key: &str, value: &str) -> Result<QaExample> {
    let attr = lexicon::attribute(key).ok_or_else(|| data_err!("unknown attribute `{key}`"))?;
    Ok(QaExample {
        entity_id,
        entity: entity.to_string(),
        attribute: key.to_string(),
        value: value.to_string(),
        question: lexicon::fill(attr.questions[0], entity, value),
        answer: lexicon::fill(attr.answer, entity, value),
        paraphrased_question: String::new(),
        paraphrased_answer: String::new(),
        perturbed_answers: Vec::new(),
        idk_answer: String::new(),
        alt_answers: Vec::new(),
    })
}

fn example_seed(seed: u64, entity: &str, attribute: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(entity.as_bytes())
        .chain_update([0u8])
        .chain_update(attribute.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Populates paraphrase, perturbed, idk and alternate answers with one
/// alternate answer.
pub fn render_variants(example: &QaExample, seed: u64) -> Result<QaExample> {
    render_variants_with(example, seed, DEFAULT_ALT_COUNT)
}

/// Like [`render_variants`] with `n_alt` alternate answers. Perturbed and
/// alternate answers use distinct wrong values.
pub fn render_variants_with(example: &QaExample, seed: u64, n_alt: usize) -> Result<QaExample> {
    if example.question.is_empty() || example.answer.is_empty() {
        return Err(input_err!("example needs a question and an answer"));
    }
    let attr =
        lexicon::attribute(&example.attribute).ok_or_else(|| data_err!("unknown attribute `{}`", example.attribute))?;
    let mut wrong: Vec<&str> = attr.values.iter().copied().filter(|v| *v != example.value).collect();
    if wrong.len() < N_PERTURBED + n_alt {
        return Err(input_err!(
            "attribute `{}` has {} alternative values, {} needed",
            attr.key,
            wrong.len(),
            N_PERTURBED + n_alt
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(example_seed(seed, &example.entity, &example.attribute));
    wrong.shuffle(&mut rng);
    let e = example.entity.as_str();
    let mut out = example.clone();
    out.paraphrased_question = lexicon::fill(attr.questions[1], e, &example.value);
    out.paraphrased_answer = lexicon::fill(attr.paraphrased_answer, e, &example.value);
    out.perturbed_answers = wrong[..N_PERTURBED]
        .iter()
        .map(|v| lexicon::fill(attr.paraphrased_answer, e, v))
        .collect();
    out.alt_answers = wrong[N_PERTURBED..N_PERTURBED + n_alt]
        .iter()
        .map(|v| lexicon::fill(attr.answer, e, v))
        .collect();
    out.idk_answer = IDK_TEMPLATES[rng.random_range(0..IDK_TEMPLATES.len())].to_string();
    Ok(out)
}

/// Extra entity groups spawned from the world's seed after its own entities.
fn spawn_groups(world: &FactWorld, sizes: &[usize]) -> Result<Vec<Vec<Entity>>> {
    let mut factory = EntityFactory::new(world.seed, world.attributes.len())?;
    for e in &world.entities {
        let replayed = factory.spawn(e.id)?;
        if replayed != *e {
            return Err(input_err!(
                "world does not match its seed; regenerate it with generate_world"
            ));
        }
    }
    let mut next_id = world.entities.len();
    let mut groups = Vec::new();
    for &n in sizes {
        let mut g = Vec::with_capacity(n);
        for _ in 0..n {
            g.push(factory.spawn(next_id)?);
            next_id += 1;
        }
        groups.push(g);
    }
    Ok(groups)
}

pub fn make_splits(world: &FactWorld, forget_fraction: f64) -> Result<SplitSet> {
    if !(forget_fraction > 0.0 && forget_fraction < 1.0) {
        return Err(input_err!("forget_fraction must lie in (0, 1), got {forget_fraction}"));
    }
    let n = world.entities.len();
    let n_forget = (forget_fraction * n as f64).round() as usize;
    if n_forget == 0 {
        return Err(input_err!(
            "forget_fraction {forget_fraction} of {n} entities selects no entity"
        ));
    }
    if n_forget >= n {
        return Err(input_err!("forget_fraction {forget_fraction} leaves no retain entity"));
    }
    let mut order: Vec<usize> = world.entities.iter().map(|e| e.id).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(world.seed ^ SPLIT_STREAM));
    let forget_ids: BTreeSet<usize> = order[..n_forget].iter().copied().collect();
    let (forget_e, retain_e): (Vec<Entity>, Vec<Entity>) =
        world.entities.iter().cloned().partition(|e| forget_ids.contains(&e.id));

    let n_real = (n / 4).max(4);
    let groups = spawn_groups(world, &[n_forget, n_real, n_forget])?;
    let attrs = &world.attributes;
    let world_level = CITY_COUNTRIES
        .iter()
        .enumerate()
        .map(|(i, (city, country))| render_variants(&bare_example(i, city, "country", country)?, world.seed))
        .collect::<Result<Vec<_>>>()?;
    let splits = SplitSet {
        forget: entity_examples(&forget_e, attrs, world.seed)?,
        retain: entity_examples(&retain_e, attrs, world.seed)?,
        holdout: entity_examples(&groups[0], attrs, world.seed)?,
        real_level: entity_examples(&groups[1], attrs, world.seed)?,
        world_level,
        celebrity: entity_examples(&groups[2], attrs, world.seed)?,
    };
    debug_assert!(splits.check_disjoint().is_ok());
    Ok(splits)
}

impl SplitSet {
    fn groups(&self) -> [(&'static str, &Vec<QaExample>); 6] {
        [
            ("forget", &self.forget),
            ("retain", &self.retain),
            ("holdout", &self.holdout),
            ("real_level", &self.real_level),
            ("world_level", &self.world_level),
            ("celebrity", &self.celebrity),
        ]
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (group, examples) in self.groups() {
            for ex in examples {
                if !seen.insert((ex.entity.clone(), ex.attribute.clone())) {
                    return Err(data_err!(
                        "({}, {}) appears twice (second time in {group})",
                        ex.entity,
                        ex.attribute
                    ));
                }
            }
        }
        Ok(())
    }

    /// Word vocabulary covering every string any split can render, plus the
    /// jailbreak prefix.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut texts: Vec<&str> = vec![JAILBREAK_PREFIX];
        texts.extend(IDK_TEMPLATES.iter().copied());
        for (_, examples) in self.groups() {
            for ex in examples {
                texts.extend([
                    ex.question.as_str(),
                    ex.answer.as_str(),
                    ex.paraphrased_question.as_str(),
                    ex.paraphrased_answer.as_str(),
                ]);
                texts.extend(ex.perturbed_answers.iter().map(String::as_str));
                texts.extend(ex.alt_answers.iter().map(String::as_str));
            }
        }
        Vocabulary::from_texts(texts)
    }

    /// Writes `world.jsonl` (one example per line) and `splits.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut lines = String::new();
        let mut index: Vec<Vec<usize>> = Vec::new();
        let mut next = 0;
        for (_, examples) in self.groups() {
            let mut idx = Vec::with_capacity(examples.len());
            for ex in examples {
                lines.push_str(&serde_json::to_string(ex)?);
                lines.push('\n');
                idx.push(next);
                next += 1;
            }
            index.push(idx);
        }
        let [forget, retain, holdout, real_level, world_level, celebrity]: [Vec<usize>; 6] =
            index.try_into().expect("six groups");
        let split_index = SplitIndex {
            forget,
            retain,
            holdout,
            real_level,
            world_level,
            celebrity,
        };
        let wf = dir.join("world.jsonl");
        fs::write(&wf, lines).map_err(|e| Error::io(&wf, e))?;
        let sf = dir.join("splits.json");
        fs::write(&sf, serde_json::to_string_pretty(&split_index)?).map_err(|e| Error::io(&sf, e))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<SplitSet> {
        let wf = dir.join("world.jsonl");
        let text = fs::read_to_string(&wf).map_err(|e| Error::io(&wf, e))?;
        let examples = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<QaExample>, _>>()?;
        let sf = dir.join("splits.json");
        let index: SplitIndex = serde_json::from_str(&fs::read_to_string(&sf).map_err(|e| Error::io(&sf, e))?)?;
        let pick = |idx: &[usize]| -> Result<Vec<QaExample>> {
            idx.iter()
                .map(|&i| {
                    examples
                        .get(i)
                        .cloned()
                        .ok_or_else(|| data_err!("splits.json index {i} out of range"))
                })
                .collect()
        };
        let splits = SplitSet {
            forget: pick(&index.forget)?,
            retain: pick(&index.retain)?,
            holdout: pick(&index.holdout)?,
            real_level: pick(&index.real_level)?,
            world_level: pick(&index.world_level)?,
            celebrity: pick(&index.celebrity)?,
        };
        splits.check_disjoint()?;
        Ok(splits)
    }
}

/// Biography of one entity: its gold answer sentences in attribute order.
pub fn biography(examples: &[QaExample], entity: &str) -> Option<String> {
    let sentences: Vec<&str> = examples
        .iter()
        .filter(|e| e.entity == entity)
        .map(|e| e.answer.as_str())
        .collect();
    (!sentences.is_empty()).then(|| sentences.join(" "))
}

/// All biographies in a group, in first-appearance order of entities.
pub fn biographies(examples: &[QaExample]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    examples
        .iter()
        .filter(|e| seen.insert(e.entity.clone()))
        .filter_map(|e| biography(examples, &e.entity))
        .collect()
}

/// Which answer text of an example to train or score on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerField {
    Gold,
    Paraphrased,
    Idk,
    Alt,
}

impl QaExample {
    pub fn answer_text(&self, field: AnswerField) -> Result<&str> {
        let text = match field {
            AnswerField::Gold => self.answer.as_str(),
            AnswerField::Paraphrased => self.paraphrased_answer.as_str(),
            AnswerField::Idk => self.idk_answer.as_str(),
            AnswerField::Alt => self.alt_answers.first().map(String::as_str).unwrap_or(""),
        };
        if text.is_empty() {
            return Err(data_err!(
                "{field:?} answer missing for ({}, {})",
                self.entity,
                self.attribute
            ));
        }
        Ok(text)
    }
}

/// `BOS` followed by the words of the question.
pub fn encode_prompt(vocab: &Vocabulary, question: &str) -> Result<Vec<TokenId>> {
    let mut ids = vec![BOS_ID];
    ids.extend(vocab.encode(question)?);
    Ok(ids)
}

/// Prompt/answer training example whose targets are the answer words plus EOS.
pub fn qa_example(vocab: &Vocabulary, question: &str, answer: &str) -> Result<LmExample> {
    let prompt = encode_prompt(vocab, question)?;
    let mut target = vocab.encode(answer)?;
    target.push(EOS_ID);
    Ok(LmExample::prompt_answer(&prompt, &target))
}

/// Free-text document example: every token after BOS is a target.
pub fn text_example(vocab: &Vocabulary, text: &str) -> Result<LmExample> {
    let mut tokens = vec![BOS_ID];
    tokens.extend(vocab.encode(text)?);
    tokens.push(EOS_ID);
    Ok(LmExample::new(tokens, 1))
}

/// One epoch of forget batches, each paired with a retain batch of the same
/// size. Forget indices are shuffled per epoch and appear exactly once;
/// retain indices walk one seeded permutation cyclically, continuing across
/// epochs.
pub fn paired_batches(
    n_forget: usize,
    n_retain: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_retain == 0 {
        return Err(input_err!("retain set must be non-empty"));
    }
    if batch_size == 0 {
        return Err(input_err!("batch_size must be at least 1"));
    }
    let mut forget: Vec<usize> = (0..n_forget).collect();
    forget.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64)));
    let mut retain: Vec<usize> = (0..n_retain).collect();
    retain.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15));
    let batches_per_epoch = n_forget.div_ceil(batch_size);
    let mut cursor = epoch * batches_per_epoch * batch_size;
    Ok(forget
        .chunks(batch_size)
        .map(|fb| {
            let rb = (0..fb.len()).map(|k| retain[(cursor + k) % n_retain]).collect();
            cursor += fb.len();
            (fb.to_vec(), rb)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::tokenize_words;

    #[test]
    fn world_is_reproducible_and_counted() {
        let a = generate_world(1, 32, 4).unwrap();
        let b = generate_world(1, 32, 4).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), generate_world(2, 32, 4).unwrap().hash());
        let ex = a.examples().unwrap();
        assert_eq!(ex.len(), 128);
        let pairs: HashSet<_> = ex.iter().map(|e| (e.entity_id, e.attribute.clone())).collect();
        assert_eq!(pairs.len(), 128);
    }

    #[test]
    fn world_rejects_bad_sizes() {
        assert!(generate_world(0, 3, 4).is_err());
        assert!(generate_world(0, 8, 1).is_err());
        let err = generate_world(0, 8, 9).unwrap_err().to_string();
        assert!(err.contains("attribute lexicon"), "{err}");
        let err = generate_world(0, 500, 4).unwrap_err().to_string();
        assert!(err.contains("entity-name lexicon"), "{err}");
    }

    #[test]
    fn entities_never_share_all_values() {
        let w = generate_world(4, 64, 2).unwrap();
        let combos: HashSet<Vec<&String>> = w.entities.iter().map(|e| e.facts.values().collect()).collect();
        assert_eq!(combos.len(), 64);
    }

    #[test]
    fn splits_sizes_and_determinism() {
        let w = generate_world(3, 40, 4).unwrap();
        let s = make_splits(&w, 0.1).unwrap();
        assert_eq!(s.forget.len(), 4 * 4);
        assert_eq!(s.retain.len(), 36 * 4);
        assert_eq!(s.holdout.len(), s.forget.len());
        assert_eq!(s.celebrity.len(), s.forget.len());
        assert_eq!(s.real_level.len(), 10 * 4);
        assert_eq!(s.world_level.len(), CITY_COUNTRIES.len());
        s.check_disjoint().unwrap();
        assert_eq!(s, make_splits(&w, 0.1).unwrap());
        assert!(make_splits(&w, 0.0).is_err());
        assert!(make_splits(&w, 1.0).is_err());
        assert!(make_splits(&w, 0.01).is_err());
    }

    #[test]
    fn tampered_world_rejected() {
        let mut w = generate_world(3, 8, 2).unwrap();
        w.entities[0].name = "nobody".into();
        assert!(make_splits(&w, 0.25).is_err());
    }

    #[test]
    fn variants_follow_value_slot_rules() {
        let w = generate_world(5, 12, 8).unwrap();
        let values: HashSet<&str> = ATTRIBUTES.iter().flat_map(|a| a.values.iter().copied()).collect();
        for ex in w.examples().unwrap() {
            // perturbed answers share the paraphrased template, alternates the gold one
            let pairs = ex
                .perturbed_answers
                .iter()
                .map(|p| (p, &ex.paraphrased_answer))
                .chain(ex.alt_answers.iter().map(|a| (a, &ex.answer)));
            for (wrong, right) in pairs {
                let (w, r) = (tokenize_words(wrong), tokenize_words(right));
                assert_eq!(w.len(), r.len());
                let diffs: Vec<usize> = (0..w.len()).filter(|&i| w[i] != r[i]).collect();
                assert_eq!(diffs.len(), 1, "{wrong} vs {right}");
                assert_eq!(r[diffs[0]], ex.value);
            }
            assert_eq!(ex.perturbed_answers.len(), N_PERTURBED);
            assert!(!ex.perturbed_answers.iter().any(|p| ex.alt_answers.contains(p)));
            assert!(tokenize_words(&ex.paraphrased_answer).contains(&ex.value));
            assert!(IDK_TEMPLATES.contains(&ex.idk_answer.as_str()));
            assert!(tokenize_words(&ex.idk_answer)
                .iter()
                .all(|t| !values.contains(t.as_str())));
        }
    }

    #[test]
    fn render_is_pure_and_validates() {
        let w = generate_world(5, 6, 3).unwrap();
        let ex = &w.examples().unwrap()[0];
        assert_eq!(render_variants(ex, 5).unwrap(), *ex);
        assert!(render_variants_with(ex, 5, 9).is_err());
        let mut bare = ex.clone();
        bare.answer.clear();
        assert!(render_variants(&bare, 5).is_err());
    }

    #[test]
    fn files_round_trip() {
        let w = generate_world(9, 10, 3).unwrap();
        let s = make_splits(&w, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        assert_eq!(SplitSet::read(dir.path()).unwrap(), s);
    }

    #[test]
    fn vocabulary_covers_everything() {
        let w = generate_world(9, 10, 3).unwrap();
        let s = make_splits(&w, 0.2).unwrap();
        let v = s.vocabulary();
        for ex in s.forget.iter().chain(&s.celebrity).chain(&s.world_level) {
            qa_example(&v, &ex.question, &ex.answer).unwrap();
            qa_example(&v, &ex.paraphrased_question, &ex.idk_answer).unwrap();
        }
        encode_prompt(&v, JAILBREAK_PREFIX).unwrap();
        for bio in biographies(&s.celebrity) {
            text_example(&v, &bio).unwrap();
        }
    }

    #[test]
    fn paired_batch_rules() {
        let b = paired_batches(8, 5, 4, 1, 0).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b, paired_batches(8, 5, 4, 1, 0).unwrap());
        for epoch in 0..3 {
            let mut seen: Vec<usize> = paired_batches(10, 3, 4, 7, epoch)
                .unwrap()
                .into_iter()
                .flat_map(|(f, _)| f)
                .collect();
            seen.sort();
            assert_eq!(seen, (0..10).collect::<Vec<_>>());
        }
        let (f, r) = &paired_batches(3, 7, 8, 0, 0).unwrap()[0];
        assert_eq!(f.len(), r.len());
        assert!(paired_batches(3, 0, 2, 0, 0).is_err());
    }

    #[test]
    fn biography_joins_gold_sentences() {
        let w = generate_world(2, 4, 2).unwrap();
        let ex = w.examples().unwrap();
        let name = &w.entities[0].name;
        let bio = biography(&ex, name).unwrap();
        assert_eq!(bio, format!("{} {}", ex[0].answer, ex[1].answer));
        assert!(biography(&ex, "nobody").is_none());
        assert_eq!(biographies(&ex).len(), 4);
    }
}
