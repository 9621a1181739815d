//! Seeded workloads shared by the benchmarks.

use arcross_core::corpus::ArticleRecord;
use arcross_core::grid::AnswerEntry;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LETTERS: &[char] = &[
    'ا', 'ب', 'ت', 'ج', 'ح', 'د', 'ر', 'س', 'ع', 'ف', 'ق', 'ك', 'ل', 'م', 'ن', 'ه', 'و', 'ي',
];
const MARKS: &[char] = &['\u{064E}', '\u{064F}', '\u{0650}', '\u{0651}', '\u{0652}'];

fn word(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect()
}

/// Space-separated random words, `len` tokens long.
pub fn sentence(seed: u64, len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let n = rng.random_range(2..7);
            word(&mut rng, n)
        })
        .collect()
}

/// Text with diacritics, tatweel and hamza forms sprinkled in.
pub fn marked_text(seed: u64, words: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..words {
        let n = rng.random_range(2..8);
        for c in word(&mut rng, n).chars() {
            out.push(if c == 'ا' && rng.random_bool(0.3) {
                'أ'
            } else {
                c
            });
            if rng.random_bool(0.4) {
                out.push(*MARKS.choose(&mut rng).unwrap());
            }
            if rng.random_bool(0.05) {
                out.push('\u{0640}');
            }
        }
        out.push(' ');
    }
    out
}

/// Articles with a mix of acceptable and rejectable bold keywords.
pub fn articles(seed: u64, count: usize) -> Vec<ArticleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let intro = sentence(rng.random(), rng.random_range(30..120)).join(" ");
            let bold_keywords = (0..rng.random_range(1..4))
                .map(|_| match rng.random_range(0..4) {
                    0 => format!("{} {}", word(&mut rng, 3), word(&mut rng, 3)),
                    1 => format!("{}1", word(&mut rng, 4)),
                    _ => {
                        let n = rng.random_range(2..10);
                        word(&mut rng, n)
                    }
                })
                .collect();
            ArticleRecord {
                id: format!("a{i}"),
                title: format!("a{i}"),
                intro_text: intro,
                bold_keywords,
                category: String::new(),
                url: String::new(),
                view_count: None,
                extra_metadata: Default::default(),
            }
        })
        .collect()
}

const ANSWERS: &[&str] = &[
    "مصر",
    "القاهرة",
    "نهر",
    "النيل",
    "قمر",
    "شمس",
    "بحر",
    "سماء",
    "كتاب",
    "مدرسة",
    "قلم",
    "جبل",
    "صحراء",
    "نخلة",
    "عسل",
    "نحل",
    "ماء",
    "مطر",
    "سحاب",
    "برق",
    "رعد",
    "صقر",
    "حصان",
    "جمل",
    "زيتون",
    "ليمون",
    "مكتبة",
    "سفينة",
    "ميناء",
    "مدينة",
];

/// Selection seed whose 5 and 10 word sets both have a layout.
pub const ANSWER_SEED: u64 = 3;

/// A seeded selection of common answer words.
pub fn answers(seed: u64, count: usize) -> Vec<AnswerEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ANSWERS
        .choose_multiple(&mut rng, count)
        .enumerate()
        .map(|(i, w)| AnswerEntry::new(*w, format!("c{i}")))
        .collect()
}
