//! Deterministic synthetic corpus for end-to-end runs.
//!
//! Every block pairs agent nouns with object nouns at fixed training
//! frequencies, so the expected surprisal ordering of the stimulus
//! conditions is known in advance:
//!
//! - `synth_typicality`: each agent's typical object follows it ten times as
//!   often as its atypical object. The atypical object of one agent is the
//!   typical object of another, so the two conditions share unigram
//!   frequency. A few atypical targets never occur in training and are
//!   excluded as out of vocabulary.
//! - `synth_relatedness`: best completion (10×), related (1×), and an
//!   unrelated object that never follows the agent.
//! - `synth_quantifier`: 2×2 typicality × quantifier, with `most` favouring
//!   the typical object more strongly than `few`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_SEED: u64 = 20240607;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const VERBS: [&str; 4] = ["eats", "likes", "wants", "finds"];
const RESERVED_WORDS: [&str; 6] = ["the", "a", "most", "few", "and", "then"];

const TYPICALITY_AGENTS: usize = 40;
const TYPICALITY_OOV: usize = 4;
const RELATEDNESS_AGENTS: usize = 30;
const QUANTIFIER_AGENTS: usize = 24;
const REPEATS: usize = 3;
const QUANTIFIER_REPEATS: usize = 6;
const FILLERS: usize = 300;

struct Words {
    rng: ChaCha8Rng,
    used: Vec<String>,
}

impl Words {
    fn fresh(&mut self) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..2 {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[self.rng.random_range(0..VOWELS.len())] as char);
            }
            w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
            if !self.used.contains(&w) && !RESERVED_WORDS.contains(&w.as_str()) && !VERBS.contains(&w.as_str()) {
                self.used.push(w.clone());
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

/// Files of the synthetic data set as `(relative path, contents)`.
pub fn generate() -> Vec<(String, String)> {
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(SYNTH_SEED),
        used: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SYNTH_SEED ^ 0x5eed);
    let mut train: Vec<String> = Vec::new();
    let mut stimuli: Vec<String> = Vec::new();

    let say = |rng: &mut ChaCha8Rng, agent: &str, object: &str| {
        let det = if rng.random_bool(0.5) { "the" } else { "a" };
        let verb = VERBS[rng.random_range(0..VERBS.len())];
        format!("{det} {agent} {verb} the {object}")
    };

    // typicality
    let agents = words.many(TYPICALITY_AGENTS);
    let typical = words.many(TYPICALITY_AGENTS);
    let novel = words.many(TYPICALITY_OOV);
    for i in 0..TYPICALITY_AGENTS {
        let atypical = &typical[(i + 1) % TYPICALITY_AGENTS];
        for _ in 0..REPEATS {
            for _ in 0..10 {
                train.push(say(&mut rng, &agents[i], &typical[i]));
            }
            train.push(say(&mut rng, &agents[i], atypical));
        }
        let atypical_target = if i % (TYPICALITY_AGENTS / TYPICALITY_OOV) == 0 {
            &novel[i / (TYPICALITY_AGENTS / TYPICALITY_OOV)]
        } else {
            atypical
        };
        let id = format!("t{:02}", i + 1);
        stimuli.push(format!("synth_typicality\t{id}\tT\tthe {} eats the *{}* .", agents[i], typical[i]));
        stimuli.push(format!("synth_typicality\t{id}\tA\tthe {} eats the *{}* .", agents[i], atypical_target));
    }

    // relatedness
    let agents = words.many(RELATEDNESS_AGENTS);
    let best = words.many(RELATEDNESS_AGENTS);
    let related = words.many(RELATEDNESS_AGENTS);
    for i in 0..RELATEDNESS_AGENTS {
        for _ in 0..REPEATS {
            for _ in 0..10 {
                train.push(say(&mut rng, &agents[i], &best[i]));
            }
            train.push(say(&mut rng, &agents[i], &related[i]));
        }
        let unrelated = &best[(i + RELATEDNESS_AGENTS / 2) % RELATEDNESS_AGENTS];
        let id = format!("r{:02}", i + 1);
        for (cond, obj) in [("BC", &best[i]), ("R", &related[i]), ("U", unrelated)] {
            stimuli.push(format!("synth_relatedness\t{id}\t{cond}\tthe {} likes the *{obj}* .", agents[i]));
        }
    }

    // quantifier
    let agents = words.many(QUANTIFIER_AGENTS);
    let typical = words.many(QUANTIFIER_AGENTS);
    for i in 0..QUANTIFIER_AGENTS {
        let atypical = &typical[(i + 1) % QUANTIFIER_AGENTS];
        for _ in 0..QUANTIFIER_REPEATS {
            for (q, obj, n) in [
                ("most", &typical[i], 10),
                ("most", atypical, 1),
                ("few", &typical[i], 2),
                ("few", atypical, 3),
            ] {
                for _ in 0..n {
                    let verb = VERBS[rng.random_range(0..VERBS.len())];
                    train.push(format!("{q} {} {verb} the {obj}", agents[i]));
                }
            }
        }
        let id = format!("q{:02}", i + 1);
        for (cond, q, obj) in [
            ("typical_most", "most", &typical[i]),
            ("typical_few", "few", &typical[i]),
            ("atypical_most", "most", atypical),
            ("atypical_few", "few", atypical),
        ] {
            stimuli.push(format!("synth_quantifier\t{id}\t{cond}\t{q} {} wants the *{obj}* .", agents[i]));
        }
    }

    // fillers: random object lists that tie the blocks together
    let pool: Vec<&String> = words.used.iter().filter(|w| !novel.contains(w)).collect();
    for _ in 0..FILLERS {
        let n = rng.random_range(3..7);
        let mut s: Vec<&str> = pool.choose_multiple(&mut rng, n).map(|w| w.as_str()).collect();
        s.insert(1, "and");
        s.insert(s.len() - 1, "then");
        train.push(s.join(" "));
    }
    train.shuffle(&mut rng);

    let mut train_text = String::new();
    for s in &train {
        train_text.push_str(s);
        train_text.push('\n');
    }
    let mut stim_text = String::from("# synthetic stimuli; targets marked with asterisks\nexperiment\titem\tcondition\tsentence\n");
    for s in &stimuli {
        stim_text.push_str(s);
        stim_text.push('\n');
    }

    let file = |name: &str, body: &str| (name.to_owned(), body.to_owned());
    vec![
        file("config.toml", CONFIG),
        file("train.txt", &train_text),
        file("stimuli.tsv", &stim_text),
        file(
            "synth_typicality.pattern",
            "# typical objects follow their agent ten times as often in training\nsynth_typicality: T LOWER A\n",
        ),
        file(
            "synth_relatedness.pattern",
            "# best completion 10x, related 1x, unrelated never after the agent\nsynth_relatedness: BC LOWER R\nsynth_relatedness: R LOWER U\nsynth_relatedness: BC LOWER U\n",
        ),
        file(
            "synth_quantifier.design",
            "factor typicality typical atypical\nfactor quantifier most few\ncell typical_most typicality=typical quantifier=most\ncell typical_few typicality=typical quantifier=few\ncell atypical_most typicality=atypical quantifier=most\ncell atypical_few typicality=atypical quantifier=few\ninteraction typicality quantifier\ncontrast typical_most typical_few\n",
        ),
        file(
            "synth_quantifier.pattern",
            "# most favours the typical object more strongly than few\nsynth_quantifier: typical LOWER atypical\nsynth_quantifier: typical_most LOWER typical_few\n",
        ),
    ]
}

const CONFIG: &str = "\
# Desk-scale run on the synthetic corpus.
seed = 7
alpha = 0.05

[paths]
train_corpus = \"train.txt\"
corpus_dir = \".\"
patterns_dir = \".\"

[training]
epochs = 40
learning_rate = 1.0
batch_size = 16
bptt_window = 20
clip_norm = 5.0
heldout_every = 10

[model]
embed_dim = 16
hidden = [32]
max_vocab = 1000
";
